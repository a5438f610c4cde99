"""Bundled JSON schema documents for the package's file formats."""

import json
from importlib import resources

_NAMES = ("scenario_config", "summary", "bound_input")


def load_schema(name: str) -> dict:
    """Return the shipped schema document for ``name``.

    Known names: scenario_config, summary, bound_input.
    """
    if name not in _NAMES:
        raise ValueError(f"unknown schema {name!r}; expected one of {_NAMES}")
    ref = resources.files(__name__).joinpath(f"{name}.schema.json")
    with ref.open("r", encoding="utf-8") as fh:
        return json.load(fh)
