"""
Grid, state layout and site observation model.

The state vector holds 13 values per grid cell: annual precipitation
followed by the twelve monthly mean temperatures.  Cells are ordered
row-major by descending latitude then ascending longitude, and the state
is blocked cell-major, so a state ``x`` reshapes to ``(M, 13)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0

N_STATE = 13
N_OBS = 6
P_SLOT = 0
T_SLOTS = slice(1, 13)

# site/observation slot order
OBS_NAMES = ("ALPHA", "MAP", "MAT", "MTWA", "MTCO", "GDD5")
STATE_NAMES = ("P",) + tuple(f"T{k:02d}" for k in range(1, 13))

MONTH_LENGTHS = np.array([31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31], dtype=float)


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a function."""


@dataclass(frozen=True)
class GridSpec:
    """Regular lat/lon grid described by its cell centres.

    Parameters
    ----------
    lats, lons : array_like
        Cell-centre coordinates in degrees, one entry per cell.
    resolution : float
        Cell width in degrees (cells are ``resolution`` x ``resolution``).
    """

    lats: np.ndarray
    lons: np.ndarray
    resolution: float = 2.0

    def __post_init__(self):
        lats = np.asarray(self.lats, dtype=float).reshape(-1)
        lons = np.asarray(self.lons, dtype=float).reshape(-1)
        if lats.shape != lons.shape or lats.size == 0:
            raise ValueError("lats and lons must be non-empty and of equal length")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if np.any(np.abs(lats) > 90) or np.any(lons < -180) or np.any(lons >= 180):
            raise ValueError("cell coordinates out of range")
        order = np.lexsort((lons, -lats))
        if not np.array_equal(order, np.arange(lats.size)):
            raise ValueError("cells must be ordered by descending latitude then ascending longitude")
        keys = set(zip(lats.round(9), lons.round(9)))
        if len(keys) != lats.size:
            raise ValueError("duplicate cell coordinates")
        lats.setflags(write=False)
        lons.setflags(write=False)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)

    @classmethod
    def from_bounds(cls, lat_min, lat_max, lon_min, lon_max, resolution=2.0) -> "GridSpec":
        """Full rectangular grid covering the given bounds."""
        nlat = int(round((lat_max - lat_min) / resolution))
        nlon = int(round((lon_max - lon_min) / resolution))
        if nlat < 1 or nlon < 1:
            raise ValueError("bounds must span at least one cell")
        lat_c = lat_max - resolution * (np.arange(nlat) + 0.5)
        lon_c = lon_min + resolution * (np.arange(nlon) + 0.5)
        la, lo = np.meshgrid(lat_c, lon_c, indexing="ij")
        return cls(la.ravel(), lo.ravel(), resolution)

    @classmethod
    def from_cells(cls, cells: Sequence[tuple], resolution=2.0) -> "GridSpec":
        """Build from an arbitrary list of (lat, lon) centres, sorting them."""
        arr = np.asarray(cells, dtype=float).reshape(-1, 2)
        order = np.lexsort((arr[:, 1], -arr[:, 0]))
        return cls(arr[order, 0], arr[order, 1], resolution)

    @property
    def M(self) -> int:
        return self.lats.size

    @property
    def size(self) -> int:
        return N_STATE * self.M

    @property
    def cells(self) -> list:
        return list(zip(self.lats.tolist(), self.lons.tolist()))

    def bounds(self) -> tuple:
        h = self.resolution / 2
        return (self.lats.min() - h, self.lats.max() + h, self.lons.min() - h, self.lons.max() + h)

    def contains(self, lat, lon) -> bool:
        return site_to_cell(lat, lon, self) is not None


def site_to_cell(lat: float, lon: float, grid: GridSpec) -> Optional[int]:
    """Index of the cell whose closed bounds contain the point.

    Points on a shared edge or corner go to the lowest-index cell.
    Returns None for points outside every cell.
    """
    h = grid.resolution / 2
    inside = (np.abs(grid.lats - lat) <= h + 1e-12) & (np.abs(grid.lons - lon) <= h + 1e-12)
    idx = np.flatnonzero(inside)
    return int(idx[0]) if idx.size else None


def great_circle_angle(p, q) -> float:
    """Central angle in radians between two (lat, lon) points in degrees.

    Haversine form; vectorises over broadcastable coordinate arrays when
    ``p`` and ``q`` are tuples of arrays.
    """
    lat1, lon1 = np.radians(p[0]), np.radians(p[1])
    lat2, lon2 = np.radians(q[0]), np.radians(q[1])
    hav = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    theta = 2 * np.arcsin(np.sqrt(np.clip(hav, 0.0, 1.0)))
    return float(theta) if np.ndim(theta) == 0 else theta


def pairwise_angles(grid: GridSpec) -> np.ndarray:
    """M x M matrix of great-circle angles between cell centres."""
    th = great_circle_angle((grid.lats[:, None], grid.lons[:, None]),
                            (grid.lats[None, :], grid.lons[None, :]))
    th = np.atleast_2d(th)
    th = 0.5 * (th + th.T)
    np.fill_diagonal(th, 0.0)
    return th


def month_separation(i, j):
    """Circular distance in months between month indices 1..12."""
    d = np.abs(np.asarray(i) - np.asarray(j)) % 12
    d = np.minimum(d, 12 - d)
    return int(d) if np.ndim(d) == 0 else d


def as_blocks(x: np.ndarray) -> np.ndarray:
    """View a flat state (length 13M) as an (M, 13) array."""
    x = np.asarray(x)
    if x.ndim != 1 or x.size % N_STATE:
        raise ValueError(f"state length {x.size} is not a multiple of {N_STATE}")
    return x.reshape(-1, N_STATE)


def state_index(cell: int, var: int) -> int:
    return N_STATE * cell + var


@dataclass
class SiteObservationSet:
    """Site reconstructions, one 6-slot record per site.

    ``values`` and ``std_errors`` have shape (N, 6) in the slot order of
    ``OBS_NAMES``; ``present`` masks which slots were reconstructed.  The
    first slot carries the Budyko ratio alpha; ``moisture_index`` keeps the
    equivalent MI for reporting and ``raw_moisture_kind`` records whether
    the site supplied ALPHA or MI.
    """

    site_ids: list
    lats: np.ndarray
    lons: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    present: np.ndarray
    moisture_index: np.ndarray = None
    raw_moisture_kind: list = None
    methods: list = field(default=None)

    def __post_init__(self):
        n = len(self.site_ids)
        self.lats = np.asarray(self.lats, dtype=float).reshape(n)
        self.lons = np.asarray(self.lons, dtype=float).reshape(n)
        self.values = np.asarray(self.values, dtype=float).reshape(n, N_OBS)
        self.std_errors = np.asarray(self.std_errors, dtype=float).reshape(n, N_OBS)
        self.present = np.asarray(self.present, dtype=bool).reshape(n, N_OBS)
        if self.moisture_index is None:
            self.moisture_index = np.full(n, np.nan)
        if self.raw_moisture_kind is None:
            self.raw_moisture_kind = [None] * n
        if self.methods is None:
            self.methods = [None] * n
        se = self.std_errors[self.present]
        if np.any(~np.isfinite(se)) or np.any(se <= 0):
            raise ValueError("present observations need finite, positive standard errors")
        if np.any(~np.isfinite(self.values[self.present])):
            raise ValueError("present observations must be finite")

    @property
    def N(self) -> int:
        return len(self.site_ids)

    @classmethod
    def empty(cls) -> "SiteObservationSet":
        return cls([], [], [], np.zeros((0, N_OBS)), np.ones((0, N_OBS)), np.zeros((0, N_OBS), bool))

    def inverse_variance(self) -> np.ndarray:
        """Flat (6N,) inverse variances with zeros on absent slots."""
        iv = np.zeros_like(self.values)
        iv[self.present] = 1.0 / self.std_errors[self.present] ** 2
        return iv.reshape(-1)

    def cell_indices(self, grid: GridSpec) -> np.ndarray:
        idx = [site_to_cell(la, lo, grid) for la, lo in zip(self.lats, self.lons)]
        if any(i is None for i in idx):
            bad = [s for s, i in zip(self.site_ids, idx) if i is None]
            raise ValueError(f"sites outside the grid: {bad}")
        return np.array(idx, dtype=int)

    def subset(self, keep) -> "SiteObservationSet":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        pick = lambda seq: [seq[i] for i in keep]
        return SiteObservationSet(
            pick(self.site_ids), self.lats[keep], self.lons[keep], self.values[keep],
            self.std_errors[keep], self.present[keep], self.moisture_index[keep],
            pick(self.raw_moisture_kind), pick(self.methods),
        )
