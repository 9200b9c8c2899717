"""Variational reconstruction of palaeoclimate grids from site observations."""

__version__ = "0.1.0"

from pathlib import Path as _Path


def fixture_path(name: str = "config.yaml") -> _Path:
    """Path of a file in the bundled 5-cell / 2-site fixture."""
    return _Path(__file__).parent / "data" / "fixture" / name
