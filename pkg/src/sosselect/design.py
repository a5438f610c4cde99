"""Datasets, standardized designs and least-squares primitives.

All model-selection machinery in this package operates on a *standardized*
design: predictor columns are optionally centered, then divided by their
Euclidean norm so that every column has unit norm, and the response receives
the same centering. Two parametrizations are supported:

* ``practical`` -- an intercept is implicit: columns and response are
  centered before scaling, and the effective sample size is ``n - 1``.
* ``formal`` -- no intercept: data enter as-is and the effective sample
  size is ``n``.

Coefficients live on two scales. ``theta`` denotes coefficients of the
standardized columns, ``beta = theta / scales`` the coefficients of the raw
columns. Residual sums of squares of a model are always computed on the
standardized data; for any column subset they agree with the residual of the
corresponding raw-data fit (with intercept, in practical mode), which is the
link checked by :func:`projection_link_check`.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateResidual,
    RankDeficient,
    TooManyPredictors,
    ZeroNormColumn,
)

# Relative tolerance on pivoted-QR diagonal entries used to call a set of
# columns rank deficient.
RANK_TOL = 1e-10

# Below this RSS the residual is treated as exactly zero (t-stats undefined).
DEGENERATE_RSS = 1e-12

_ZERO_NORM_TOL = 1e-12


class Parametrization(str, enum.Enum):
    """Centering convention of the standardized design."""

    PRACTICAL = "practical"
    FORMAL = "formal"

    def n_effective(self, n: int) -> int:
        """Sample size available to least squares (centering costs one)."""
        return n - 1 if self is Parametrization.PRACTICAL else n

    @classmethod
    def parse(cls, value: "Parametrization | str") -> "Parametrization":
        if isinstance(value, Parametrization):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw observations: predictor matrix ``x`` (n rows) and response ``y``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("need at least one observation and one predictor")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite values in data")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_csv(
        cls,
        path,
        *,
        has_header: bool = True,
        response: "str | int | None" = None,
    ) -> "Dataset":
        """Load a dataset from a delimited text file.

        Parameters
        ----------
        path : str or Path
            CSV file with one row per observation.
        has_header : bool
            Whether the first row holds column names.
        response : str, int or None
            Response column: a header name (requires ``has_header``), a
            0-based column index, or None for the last column.
        """
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
        if not rows:
            raise ValueError(f"{path}: empty file")
        header = None
        if has_header:
            header = [c.strip() for c in rows[0]]
            rows = rows[1:]
            if not rows:
                raise ValueError(f"{path}: header but no data rows")
        ncol = len(rows[0])
        if ncol < 2:
            raise ValueError("need at least one predictor column plus the response")
        if isinstance(response, str):
            if header is None:
                raise ValueError("response given by name but file has no header")
            try:
                ycol = header.index(response)
            except ValueError:
                raise ValueError(f"no column named {response!r} in header {header}") from None
        elif response is None:
            ycol = ncol - 1
        else:
            ycol = int(response)
            if not 0 <= ycol < ncol:
                raise ValueError(f"response column {ycol} out of range for {ncol} columns")
        try:
            data = np.array([[float(c) for c in row] for row in rows])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric cell ({exc})") from None
        if data.shape[1] != ncol:
            raise ValueError(f"{path}: ragged rows")
        y = data[:, ycol]
        x = np.delete(data, ycol, axis=1)
        return cls(x=x, y=y)


@dataclass(frozen=True)
class ModelSet:
    """Immutable set of 0-based column indices, stored sorted."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(j) for j in self.indices)
        if any(j < 0 for j in idx):
            raise ValueError(f"negative column index in {idx}")
        if list(idx) != sorted(set(idx)):
            raise ValueError(f"indices must be strictly increasing: {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: "Iterable[int] | ModelSet") -> "ModelSet":
        """Normalize any iterable of indices (deduplicated, sorted)."""
        if isinstance(indices, ModelSet):
            return indices
        return cls(tuple(sorted(set(int(j) for j in indices))))

    @classmethod
    def empty(cls) -> "ModelSet":
        return cls(())

    @classmethod
    def full(cls, p: int) -> "ModelSet":
        return cls(tuple(range(p)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, j):
        return int(j) in self.indices

    def __bool__(self):
        return bool(self.indices)

    def union(self, other) -> "ModelSet":
        return ModelSet.of(set(self.indices) | set(ModelSet.of(other).indices))

    def minus(self, other) -> "ModelSet":
        drop = set(ModelSet.of(other).indices)
        return ModelSet(tuple(j for j in self.indices if j not in drop))

    def issubset(self, other) -> bool:
        return set(self.indices) <= set(ModelSet.of(other).indices)


@dataclass(frozen=True, eq=False)
class StandardizedDesign:
    """Unit-norm (and possibly centered) design with matching response.

    Attributes
    ----------
    x0 : ndarray, shape (n, p)
        Standardized columns; each has Euclidean norm 1.
    y0 : ndarray, shape (n,)
        Response after the mode's centering.
    scales : ndarray, shape (p,)
        Norms of the (centered) raw columns; ``beta = theta / scales``.
    mode : Parametrization
    """

    x0: np.ndarray
    y0: np.ndarray
    scales: np.ndarray
    mode: Parametrization

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @property
    def p(self) -> int:
        return self.x0.shape[1]

    @property
    def n_effective(self) -> int:
        return self.mode.n_effective(self.n)

    @cached_property
    def gram(self) -> np.ndarray:
        """Gram matrix of the standardized columns (unit diagonal)."""
        return self.x0.T @ self.x0

    def columns(self, model) -> np.ndarray:
        return self.x0[:, list(ModelSet.of(model).indices)]

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "n": self.n,
            "p": self.p,
            "scales": self.scales.tolist(),
            "x0": self.x0.tolist(),
            "y0": self.y0.tolist(),
        }


def standardize(data: Dataset, mode="practical") -> StandardizedDesign:
    """Center (practical mode) and scale a dataset to unit column norms.

    Raises
    ------
    ZeroNormColumn
        If some column has norm < 1e-12 after centering (e.g. a constant
        column in practical mode).
    """
    mode = Parametrization.parse(mode)
    if mode is Parametrization.PRACTICAL:
        xc = data.x - data.x.mean(axis=0)
        y0 = data.y - data.y.mean()
    else:
        xc = data.x.copy()
        y0 = data.y.copy()
    scales = np.linalg.norm(xc, axis=0)
    bad = np.nonzero(scales < _ZERO_NORM_TOL)[0]
    if bad.size:
        raise ZeroNormColumn(int(bad[0]), float(scales[bad[0]]))
    return StandardizedDesign(x0=xc / scales, y0=y0, scales=scales, mode=mode)


def _check_indices(design: StandardizedDesign, model: ModelSet) -> None:
    if model and model.indices[-1] >= design.p:
        raise ValueError(f"column index {model.indices[-1]} out of range for p={design.p}")


def _pivoted_rank(x: np.ndarray, tol: float = RANK_TOL) -> int:
    """Numerical rank from the diagonal of a column-pivoted QR."""
    if x.shape[1] == 0:
        return 0
    r = scipy.linalg.qr(x, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] <= 0.0:
        return 0
    return int(np.sum(d > tol * d[0]))

def _require_full_rank(design: StandardizedDesign, model: ModelSet) -> None:
    cols = design.columns(model)
    if _pivoted_rank(cols) < len(model):
        raise RankDeficient(model)


def span_basis(x: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column span, tolerant to rank deficiency."""
    if x.shape[1] == 0:
        return np.zeros((x.shape[0], 0))
    q, r, _ = scipy.linalg.qr(x, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] <= 0.0:
        return np.zeros((x.shape[0], 0))
    rank = int(np.sum(d > tol * d[0]))
    return q[:, :rank]


def rss(design: StandardizedDesign, model) -> float:
    """Residual sum of squares of the least-squares fit on ``model``.

    The empty model returns ``||y0||^2``. Rank-deficient column sets raise
    :class:`RankDeficient`.
    """
    model = ModelSet.of(model)
    _check_indices(design, model)
    if not model:
        return float(design.y0 @ design.y0)
    _require_full_rank(design, model)
    q = np.linalg.qr(design.columns(model))[0]
    resid = design.y0 - q @ (q.T @ design.y0)
    return float(resid @ resid)


@dataclass(frozen=True, eq=False)
class LsFit:
    """Least-squares fit on a standardized design restricted to ``model``.

    ``t_squared`` holds squared t-statistics aligned with ``model.indices``;
    it is None when the fit was allowed to have a ~0 residual.
    """

    model: ModelSet
    theta_hat: np.ndarray
    beta_hat: np.ndarray
    rss: float
    df_resid: int
    t_squared: "np.ndarray | None"

    def to_json_dict(self) -> dict:
        return {
            "model": list(self.model.indices),
            "theta_hat": self.theta_hat.tolist(),
            "beta_hat": self.beta_hat.tolist(),
            "rss": self.rss,
            "df_resid": self.df_resid,
            "t_squared": None if self.t_squared is None else self.t_squared.tolist(),
        }


def ls_fit(design: StandardizedDesign, model, *, allow_degenerate: bool = False) -> LsFit:
    """Least squares of ``y0`` on the model's standardized columns.

    Squared t-statistics use the mode's residual degrees of freedom
    ``n_effective - |model|``. With ``allow_degenerate`` a ~0 residual yields
    ``t_squared=None`` instead of raising :class:`DegenerateResidual`.

    Raises
    ------
    TooManyPredictors
        If ``|model| >= n_effective`` (no residual degrees of freedom).
    RankDeficient, DegenerateResidual
    """
    model = ModelSet.of(model)
    _check_indices(design, model)
    k = len(model)
    n_eff = design.n_effective
    if k >= n_eff:
        raise TooManyPredictors(f"|model|={k} but n_effective={n_eff}")
    if k == 0:
        r0 = float(design.y0 @ design.y0)
        return LsFit(model, np.zeros(0), np.zeros(0), r0, n_eff, np.zeros(0))
    _require_full_rank(design, model)
    cols = design.columns(model)
    q, rmat = np.linalg.qr(cols)
    qty = q.T @ design.y0
    theta = scipy.linalg.solve_triangular(rmat, qty)
    resid = design.y0 - q @ qty
    rss_val = float(resid @ resid)
    df = n_eff - k
    if rss_val < DEGENERATE_RSS:
        if not allow_degenerate:
            raise DegenerateResidual(f"rss={rss_val:.3e} on model {tuple(model)}")
        t2 = None
    else:
        rinv = scipy.linalg.solve_triangular(rmat, np.eye(k))
        unit_var = np.sum(rinv * rinv, axis=1)  # diag of (X'X)^{-1}
        t2 = theta * theta / (unit_var * (rss_val / df))
    beta = theta / design.scales[list(model.indices)]
    return LsFit(model, theta, beta, rss_val, df, t2)


def projection_link_check(design: StandardizedDesign, model, *, tol: float = 1e-8) -> bool:
    """Verify that standardized-scale residuals match raw-scale residuals.

    For 16 fixed pseudo-random probe vectors v, compares (a) the residual of
    v after projecting onto the raw fitting span (intercept column plus the
    model's columns in practical mode; just the columns in formal mode)
    against (b) the mode's centering of v followed by projection onto the
    standardized columns. Both must agree to ``tol`` relative per probe.
    """
    model = ModelSet.of(model)
    _check_indices(design, model)
    if model:
        _require_full_rank(design, model)
    rng = np.random.default_rng(314159)
    probes = rng.standard_normal((design.n, 16))

    cols = design.columns(model)
    if design.mode is Parametrization.PRACTICAL:
        raw_span = np.hstack([np.ones((design.n, 1)), cols])
        centered = probes - probes.mean(axis=0)
    else:
        raw_span = cols
        centered = probes
    if raw_span.shape[1]:
        qa = np.linalg.qr(raw_span)[0]
        res_a = probes - qa @ (qa.T @ probes)
    else:
        res_a = probes
    if cols.shape[1]:
        qb = np.linalg.qr(cols)[0]
        res_b = centered - qb @ (qb.T @ centered)
    else:
        res_b = centered
    norms = np.linalg.norm(probes, axis=0)
    gaps = np.linalg.norm(res_a - res_b, axis=0)
    return bool(np.all(gaps <= tol * norms))
