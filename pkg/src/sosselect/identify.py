"""Identifiability margins and restricted eigenvalues of a design.

Two families of quantities are computed for a sparse truth
``theta_star`` supported on ``T``:

* projection margins ``delta``: the squared distance between the true mean
  ``X0_T theta_star`` and the span of a competing column set. Scaled
  variants minimize over supersets of T of a given size with one true
  column removed; the identifiability margin minimizes over all small sets
  that miss part of T.
* restricted eigenvalues ``kappa^2(J, c)``: the minimum of ``nu' Sigma nu``
  over unit ``||nu_J||`` and the cone ``|nu_Jc|_1 <= c |nu_J|_1``. This is
  non-convex jointly, so it is estimated by alternating minimization (exact
  convex step in ``nu_Jc`` via accelerated projected gradient, normalized
  gradient steps in ``nu_J``) from many restarts, batched across restarts.
  Certified envelopes accompany every estimate: ``lambda_min(Sigma)`` from
  below, ``lambda_min(Sigma_J)`` (the c = 0 value, also the estimate's
  initialization) from above.

The estimate is an upper bound of the true minimum (it is the value of a
feasible point), so inequality checks that place it on the small side are
seeded with the construction witnessing the corresponding proof; this keeps
those checks one-sided: they cannot fail merely because a restart wandered.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .design import ModelSet, StandardizedDesign, span_basis
from .errors import EnumerationTooLarge, RankDeficient

DELTA_BUDGET = 1_000_000
KAPPA_BUDGET = 10_000

_EIG_CLIP = 0.0  # eigenvalues of gram matrices are >= 0 up to fp noise


@dataclass(frozen=True, eq=False)
class TruthSpec:
    """True support and coefficients (both scales) plus noise variance."""

    support: ModelSet
    beta_star: np.ndarray
    theta_star: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        beta = np.asarray(self.beta_star, dtype=float).ravel()
        theta = np.asarray(self.theta_star, dtype=float).ravel()
        if len(self.support) == 0:
            raise ValueError("true support must be nonempty")
        if beta.shape[0] != len(self.support) or theta.shape[0] != len(self.support):
            raise ValueError("coefficient arrays must align with the support")
        if np.any(beta == 0.0) or np.any(theta == 0.0):
            raise ValueError("support coefficients must be nonzero")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        object.__setattr__(self, "beta_star", beta)
        object.__setattr__(self, "theta_star", theta)

    @classmethod
    def from_beta(cls, design: StandardizedDesign, support, beta_values, sigma2=1.0):
        support = ModelSet.of(support)
        beta = np.asarray(beta_values, dtype=float).ravel()
        theta = beta * design.scales[list(support.indices)]
        return cls(support=support, beta_star=beta, theta_star=theta, sigma2=float(sigma2))

    @property
    def t(self) -> int:
        return len(self.support)

    @property
    def theta_min(self) -> float:
        return float(np.min(np.abs(self.theta_star)))

    def full_theta(self, p: int) -> np.ndarray:
        out = np.zeros(p)
        out[list(self.support.indices)] = self.theta_star
        return out

    def to_json_dict(self) -> dict:
        return {
            "support": list(self.support.indices),
            "beta_star": self.beta_star.tolist(),
            "theta_star": self.theta_star.tolist(),
            "sigma2": self.sigma2,
        }


def _signal(design: StandardizedDesign, truth: TruthSpec) -> np.ndarray:
    return design.columns(truth.support) @ truth.theta_star


def _residual_sq(design: StandardizedDesign, v: np.ndarray, indices) -> float:
    """||v - proj_span(columns)||^2, tolerant to dependent columns."""
    idx = list(indices)
    if not idx:
        return float(v @ v)
    q = span_basis(design.x0[:, idx])
    w = v - q @ (q.T @ v)
    return float(w @ w)


def delta_pair(design: StandardizedDesign, truth: TruthSpec, competitor) -> float:
    """Squared distance from the true mean to the competitor's column span.

    Zero exactly when the competitor's span contains the true mean (e.g.
    any superset of the support). The competitor must be full rank (or
    empty); rank-deficient sets raise :class:`RankDeficient`.
    """
    comp = ModelSet.of(competitor)
    if comp and comp.indices[-1] >= design.p:
        raise ValueError("competitor index out of range")
    if comp:
        from .design import _pivoted_rank

        if _pivoted_rank(design.columns(comp)) < len(comp):
            raise RankDeficient(comp)
    return _residual_sq(design, _signal(design, truth), comp.indices)


def delta_scaled(design: StandardizedDesign, truth: TruthSpec, s: int) -> float:
    """Margin of the hardest one-true-column deletion among supersets of T
    of size at most ``s``.

    Projections onto a span only shrink distances as the span grows, so the
    minimum over sizes <= s is attained at size exactly s; only extensions
    ``E`` of size ``s - t`` are enumerated.
    """
    t = truth.t
    p = design.p
    if not t <= s <= p:
        raise ValueError(f"need t={t} <= s <= p={p}, got s={s}")
    others = [j for j in range(p) if j not in truth.support]
    count = math.comb(len(others), s - t) * t
    if count > DELTA_BUDGET:
        raise EnumerationTooLarge(f"{count} projections exceed budget {DELTA_BUDGET}")
    v = _signal(design, truth)
    best = math.inf
    tset = truth.support.indices
    for extra in itertools.combinations(others, s - t):
        for j in tset:
            keep = [i for i in tset if i != j] + list(extra)
            best = min(best, _residual_sq(design, v, keep))
    return best


def delta_scaled_argmin(design: StandardizedDesign, truth: TruthSpec, s: int):
    """Like :func:`delta_scaled` but also returns the minimizing (j, J)."""
    t = truth.t
    others = [j for j in range(design.p) if j not in truth.support]
    count = math.comb(len(others), s - t) * t
    if count > DELTA_BUDGET:
        raise EnumerationTooLarge(f"{count} projections exceed budget {DELTA_BUDGET}")
    v = _signal(design, truth)
    best = (math.inf, None, None)
    tset = truth.support.indices
    for extra in itertools.combinations(others, s - t):
        for j in tset:
            keep = [i for i in tset if i != j] + list(extra)
            val = _residual_sq(design, v, keep)
            if val < best[0]:
                best = (val, j, tuple(sorted(keep)))
    return best


def delta_identifiability(design: StandardizedDesign, truth: TruthSpec) -> float:
    """Smallest margin against any competing set of size <= t missing truth.

    Also cross-checks the chain ``delta(T, p) <= delta(T)`` (projection
    monotonicity); a violation beyond fp slack means a defect and raises.
    """
    t, p = truth.t, design.p
    total = sum(math.comb(p, k) for k in range(0, t + 1))
    if total > DELTA_BUDGET:
        raise EnumerationTooLarge(f"{total} competitors exceed budget {DELTA_BUDGET}")
    v = _signal(design, truth)
    best = math.inf
    for size in range(0, t + 1):
        for combo in itertools.combinations(range(p), size):
            if ModelSet.of(combo) == truth.support:
                continue
            best = min(best, _residual_sq(design, v, combo))
    d_p = delta_scaled(design, truth, p)
    if d_p > best + 1e-9 * max(1.0, best):
        raise AssertionError(
            f"delta(T,p)={d_p} exceeds delta(T)={best}; projection chain broken"
        )
    return best


@dataclass(frozen=True)
class KappaEstimate:
    """Restricted-eigenvalue estimate with certified envelopes.

    ``value`` estimates ``kappa^2`` from above (it is a feasible objective);
    ``lower_cert <= true kappa^2 <= value`` always, and
    ``true kappa^2 <= upper_cert`` (the cone contains the c = 0 slice).
    """

    value: float
    lower_cert: float
    upper_cert: float
    restarts: int
    converged_fraction: float

    @property
    def kappa(self) -> float:
        return math.sqrt(max(self.value, 0.0))

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "kappa": self.kappa,
            "lower_cert": self.lower_cert,
            "upper_cert": self.upper_cert,
            "restarts": self.restarts,
            "converged_fraction": self.converged_fraction,
        }


def _project_l1_rows(v: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Project each row of v onto the l1 ball of the matching radius."""
    m, q = v.shape
    if q == 0 or m == 0:
        return v
    a = np.abs(v)
    over = a.sum(axis=1) > radii
    if not np.any(over):
        return v
    out = v.copy()
    rows = np.nonzero(over)[0]
    s = -np.sort(-a[rows], axis=1)
    css = np.cumsum(s, axis=1)
    ks = np.arange(1, q + 1)
    keep = s > (css - radii[rows, None]) / ks
    kmax = np.maximum(keep.sum(axis=1), 1)
    tau = (css[np.arange(len(rows)), kmax - 1] - radii[rows]) / kmax
    tau = np.maximum(tau, 0.0)
    out[rows] = np.sign(v[rows]) * np.maximum(a[rows] - tau[:, None], 0.0)
    return out


def _batched_objective(u, v, s_jj, s_oj, s_oo):
    quad_u = np.einsum("ij,ij->i", u @ s_jj, u)
    if v.shape[1] == 0:
        return quad_u
    cross = np.einsum("ij,ij->i", v @ s_oj, u)
    quad_v = np.einsum("ij,ij->i", v @ s_oo, v)
    return quad_u + 2.0 * cross + quad_v


def kappa(
    design: StandardizedDesign,
    j_set,
    c: float,
    *,
    restarts: int = 64,
    extra_starts=None,
    v_iters: int = 40,
    max_outer: int = 50,
) -> KappaEstimate:
    """Estimate ``kappa^2(J, c)`` by batched alternating minimization.

    Restarts initialize the on-J block with random sign patterns and random
    directions (off-J block zero); `extra_starts` adds full-length witness
    vectors whose initial objective is recorded before any optimization, so
    the returned value never exceeds a supplied witness's objective. The
    ``c = 0`` case is an exact eigenvalue problem and skips optimization.
    """
    j_set = ModelSet.of(j_set)
    if not j_set:
        raise ValueError("J must be nonempty")
    if c < 0:
        raise ValueError("cone constant c must be nonnegative")
    jj = list(j_set.indices)
    if jj[-1] >= design.p:
        raise ValueError("J index out of range")
    others = [i for i in range(design.p) if i not in j_set]
    sigma = design.gram
    s_jj = sigma[np.ix_(jj, jj)]
    lam_full = float(max(scipy.linalg.eigvalsh(sigma)[0], _EIG_CLIP))
    evals_j, evecs_j = scipy.linalg.eigh(s_jj)
    lam_j = float(max(evals_j[0], _EIG_CLIP))

    if c == 0.0 or not others:
        return KappaEstimate(
            value=lam_j,
            lower_cert=lam_full,
            upper_cert=lam_j,
            restarts=0,
            converged_fraction=1.0,
        )

    k, q = len(jj), len(others)
    s_oj = sigma[np.ix_(others, jj)]
    s_oo = sigma[np.ix_(others, others)]
    lip_v = 2.0 * float(max(scipy.linalg.eigvalsh(s_oo)[-1], 1e-12))

    rng = np.random.default_rng(97531)
    half = max(restarts // 2, 1)
    signs = rng.choice([-1.0, 1.0], size=(half, k)) / math.sqrt(k)
    gauss = rng.standard_normal((max(restarts - half, 1), k))
    gauss /= np.linalg.norm(gauss, axis=1, keepdims=True)
    u0 = np.vstack([signs, gauss, evecs_j[:, 0][None, :]])
    v0 = np.zeros((u0.shape[0], q))
    if extra_starts:
        eu, ev = [], []
        for nu in extra_starts:
            nu = np.asarray(nu, dtype=float).ravel()
            nj = float(np.linalg.norm(nu[jj]))
            if nj <= 0:
                continue
            eu.append(nu[jj] / nj)
            ev.append(nu[others] / nj)
        if eu:
            eu = np.array(eu)
            ev = _project_l1_rows(
                np.array(ev), c * np.abs(eu).sum(axis=1)
            )  # force feasibility at fp edges
            u0 = np.vstack([u0, eu])
            v0 = np.vstack([v0, ev])

    u, v = u0, v0
    m = u.shape[0]
    best = _batched_objective(u, v, s_jj, s_oj, s_oo)
    prev = best.copy()
    improving = np.ones(m, dtype=bool)
    for _ in range(max_outer):
        # exact convex step in the off-J block (accelerated projected gradient)
        radii = c * np.abs(u).sum(axis=1)
        u_soj = u @ s_oj.T
        z = v.copy()
        t_k = 1.0
        for _ in range(v_iters):
            grad = 2.0 * (u_soj + z @ s_oo)
            w = z - grad / lip_v
            v_new = _project_l1_rows(w, radii)
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_k * t_k))
            z = v_new + ((t_k - 1.0) / t_next) * (v_new - v)
            v, t_k = v_new, t_next
        v = _project_l1_rows(v, radii)

        # normalized gradient steps in the on-J block, with backtracking
        def h(uu):
            val = np.einsum("ij,ij->i", uu @ s_jj, uu)
            val += 2.0 * np.einsum("ij,ij->i", v @ s_oj, uu)
            return val

        eta = np.full(m, 0.5 / max(lam_j, 1e-6))
        hu = h(u)
        for _ in range(4):
            grad_u = 2.0 * (u @ s_jj + v @ s_oj)
            cand = u - eta[:, None] * grad_u
            norms = np.linalg.norm(cand, axis=1, keepdims=True)
            cand = np.where(norms > 1e-12, cand / np.where(norms > 0, norms, 1.0), u)
            hc = h(cand)
            better = hc < hu
            u = np.where(better[:, None], cand, u)
            hu = np.where(better, hc, hu)
            eta = np.where(better, eta, eta * 0.25)
        # u moved: re-fit the off-J block budget before scoring
        v = _project_l1_rows(v, c * np.abs(u).sum(axis=1))

        cur = _batched_objective(u, v, s_jj, s_oj, s_oo)
        best = np.minimum(best, cur)
        improving = (prev - cur) > 1e-10 * np.maximum(prev, 1.0)
        prev = cur
        if not improving.any():
            break

    value = float(best.min())
    value = max(value, lam_full)  # estimate can't undercut the global floor
    return KappaEstimate(
        value=value,
        lower_cert=lam_full,
        upper_cert=lam_j,
        restarts=restarts,
        converged_fraction=float(np.mean(~improving)),
    )


def min_subset_eigen(design: StandardizedDesign, size: int):
    """Smallest eigenvalue over all size-``size`` column subsets.

    Returns (value, subset, full-length eigenvector). Enumeration is guarded
    by the same budget as :func:`kappa_uniform`.
    """
    p = design.p
    size = min(size, p)
    if size < 1:
        raise ValueError("size must be >= 1")
    if math.comb(p, size) > KAPPA_BUDGET:
        raise EnumerationTooLarge(f"C({p},{size}) subsets exceed budget {KAPPA_BUDGET}")
    sigma = design.gram
    best = (math.inf, None, None)
    for combo in itertools.combinations(range(p), size):
        sub = sigma[np.ix_(combo, combo)]
        evals, evecs = scipy.linalg.eigh(sub)
        lam = float(max(evals[0], _EIG_CLIP))
        if lam < best[0]:
            vec = np.zeros(p)
            vec[list(combo)] = evecs[:, 0]
            best = (lam, ModelSet.of(combo), vec)
    return best


def kappa_uniform(
    design: StandardizedDesign,
    s: int,
    c: float,
    *,
    restarts: int = 64,
    extra_starts=None,
) -> KappaEstimate:
    """Estimate ``kappa^2(s, c) = min over |J| = s of kappa^2(J, c)``.

    The quantity is non-increasing in s, so enumerating size exactly s
    covers all smaller sizes. Witness vectors in ``extra_starts`` are routed
    to the subset holding their s largest-magnitude coordinates.
    """
    p = design.p
    s = min(s, p)
    if s < 1:
        raise ValueError("s must be >= 1")
    if math.comb(p, s) > KAPPA_BUDGET:
        raise EnumerationTooLarge(f"C({p},{s}) subsets exceed budget {KAPPA_BUDGET}")
    if c == 0.0:
        lam, _, _ = min_subset_eigen(design, s)
        lam_full = float(max(scipy.linalg.eigvalsh(design.gram)[0], _EIG_CLIP))
        return KappaEstimate(
            value=lam,
            lower_cert=lam_full,
            upper_cert=lam,
            restarts=0,
            converged_fraction=1.0,
        )
    routed: dict = {}
    for nu in extra_starts or ():
        nu = np.asarray(nu, dtype=float).ravel()
        order = np.lexsort((np.arange(p), -np.abs(nu)))
        target = ModelSet.of(order[:s])
        routed.setdefault(target, []).append(nu)
    value = upper = math.inf
    lower = 0.0
    fracs = []
    for combo in itertools.combinations(range(p), s):
        j_set = ModelSet.of(combo)
        est = kappa(design, j_set, c, restarts=restarts, extra_starts=routed.get(j_set))
        fracs.append(est.converged_fraction)
        value = min(value, est.value)
        upper = min(upper, est.upper_cert)
        lower = est.lower_cert  # identical for every subset
    return KappaEstimate(
        value=value,
        lower_cert=lower,
        upper_cert=upper,
        restarts=restarts,
        converged_fraction=float(np.mean(fracs)),
    )


def _prop5_witness(design, truth, kept):
    """Vector with the margin projection's residual coefficients.

    For the minimizing deletion of true column j within a superset J, the
    residual ``X0_T theta - proj`` equals ``X0 nu`` for nu carrying
    theta_star on T and minus the projection coefficients on J minus j; its
    restricted objective links the margin to the restricted eigenvalue.
    """
    v = _signal(design, truth)
    keep = list(kept)
    nu = truth.full_theta(design.p)
    if keep:
        cols = design.x0[:, keep]
        coef, *_ = np.linalg.lstsq(cols, v, rcond=None)
        for pos, idx in enumerate(keep):
            nu[idx] -= coef[pos]
    return nu


@dataclass(frozen=True, eq=False)
class IdentifiabilityReport:
    """Margins, restricted eigenvalues and inequality flags for a truth."""

    truth: TruthSpec
    delta_t: float
    delta_p: float
    delta_scaled: dict
    delta_pairwise: dict
    kappa_support: KappaEstimate
    kappa_uniform_t: KappaEstimate
    flags: dict = field(default_factory=dict)

    @property
    def all_flags_ok(self) -> bool:
        return all(self.flags.values())

    def to_json_dict(self) -> dict:
        return {
            "truth": self.truth.to_json_dict(),
            "delta_identifiability": self.delta_t,
            "delta_full": self.delta_p,
            "delta_scaled": {str(s): v for s, v in sorted(self.delta_scaled.items())},
            "delta_pairwise": [
                {"model": list(m.indices), "value": v}
                for m, v in sorted(self.delta_pairwise.items(), key=lambda kv: kv[0].indices)
            ],
            "kappa_support": self.kappa_support.to_json_dict(),
            "kappa_uniform_t": self.kappa_uniform_t.to_json_dict(),
            "flags": dict(self.flags),
        }


def check_propositions(
    design: StandardizedDesign,
    truth: TruthSpec,
    *,
    restarts: int = 64,
    slack: float = 1e-9,
) -> IdentifiabilityReport:
    """Compute the identifiability report and verify the cross-quantity
    inequalities that tie margins to restricted eigenvalues.

    Flags (all should be True on any design):

    * ``eigenvalue_lower``: every pairwise margin is at least
      ``lambda_min(Sigma over J union T) * ||theta outside J||^2``.
    * ``cone_collapse``: estimated ``kappa^2(s, c)`` is at most
      ``(floor(c)+1) * min-subset-eigenvalue at size (floor(c)+1) s``,
      checked at (s, c) = (t, 3) and (t, 1).
    * ``margin_support`` : ``kappa^2(T,3) * theta_min^2 <= delta(T, t)``.
    * ``margin_uniform``: ``kappa^2(t,3) * theta_min^2 <= 4 delta(T, 4t)``.
    * ``scale_chain``: ``delta(T, p) <= delta(T)``.
    """
    p, t = design.p, truth.t
    v = _signal(design, truth)

    pairwise = {}
    for size in range(0, t + 1):
        for combo in itertools.combinations(range(p), size):
            m = ModelSet.of(combo)
            if m == truth.support:
                continue
            pairwise[m] = _residual_sq(design, v, combo)
    delta_t_val = min(pairwise.values()) if pairwise else float(v @ v)

    scaled = {}
    argmins = {}
    for s in range(t, min(4 * t, p) + 1):
        val, j_rm, kept = delta_scaled_argmin(design, truth, s)
        scaled[s] = val
        argmins[s] = (j_rm, kept)
    delta_p_val = delta_scaled(design, truth, p)

    sigma = design.gram
    flags = {}

    def le(lhs, rhs):
        return bool(lhs <= rhs + slack * max(1.0, abs(rhs)))

    ok = True
    for m, val in pairwise.items():
        union = sorted(set(m.indices) | set(truth.support.indices))
        lam = float(max(scipy.linalg.eigvalsh(sigma[np.ix_(union, union)])[0], 0.0))
        outside = [i for i, j in enumerate(truth.support.indices) if j not in m]
        norm_sq = float(np.sum(truth.theta_star[outside] ** 2))
        if not le(lam * norm_sq, val):
            ok = False
            break
    flags["eigenvalue_lower"] = ok

    # margin witnesses: residual-coefficient vectors of the minimizing deletions
    s_here = min(t, p)
    _, kept = argmins[s_here]
    witness_support = _prop5_witness(design, truth, kept)
    kappa_support = kappa(
        design, truth.support, 3.0, restarts=restarts, extra_starts=[witness_support]
    )
    flags["margin_support"] = le(
        kappa_support.value * truth.theta_min**2, scaled[s_here]
    )

    s4 = min(4 * t, p)
    _, kept4 = argmins[s4]
    witness_uniform = _prop5_witness(design, truth, kept4)
    kappa_unif = kappa_uniform(
        design, t, 3.0, restarts=restarts, extra_starts=[witness_uniform]
    )
    flags["margin_uniform"] = le(
        kappa_unif.value * truth.theta_min**2, 4.0 * scaled[s4]
    )

    ok = True
    for s_chk, c_chk in ((t, 3.0), (t, 1.0)):
        blow = int(math.floor(c_chk)) + 1
        size2 = min(blow * s_chk, p)
        try:
            lam2, _, eigvec = min_subset_eigen(design, size2)
        except EnumerationTooLarge:
            continue
        est = kappa_uniform(
            design, s_chk, c_chk, restarts=restarts, extra_starts=[eigvec]
        )
        if not le(est.value, blow * lam2):
            ok = False
            break
    flags["cone_collapse"] = ok

    flags["scale_chain"] = le(delta_p_val, delta_t_val)

    return IdentifiabilityReport(
        truth=truth,
        delta_t=delta_t_val,
        delta_p=delta_p_val,
        delta_scaled=scaled,
        delta_pairwise=pairwise,
        kappa_support=kappa_support,
        kappa_uniform_t=kappa_unif,
        flags=flags,
    )
