"""Discretization grid and the deterministic, index-addressed noise source.

Everything downstream of this module is a pure function of (Grid, NoiseSpec):
cell increments, boundary Brownian motions and auxiliary draws all pull
normals from disjoint regions of one Philox counter space, so draws commute
and paths can be evaluated in any order (or in parallel) without changing a
single deviate.

Counter layout (Philox4x64, key = (seed, SALT)):

    word 0   path index
    word 1   stream id | channel << 8 | component << 32
    word 2   s-block index (s index >> 2; each block carries 4 lanes)
    word 3   t index

Streams separate the independent noise consumers (cells, s/t-axis boundary
motions, the exact OU sampler's per-level motions, derivative probing);
channels separate different boundary paths sharing a stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError
from .philox import normal_block

_KEY_SALT = np.uint64(0x243F6A8885A308D3)

#: paths per internal evaluation block; fixed so that accumulation order,
#: and therefore every reported float, is independent of the worker count.
PATH_BLOCK = 16384


class Stream(IntEnum):
    """Disjoint regions of the counter space."""

    CELLS = 1
    BOUNDARY_S = 2
    BOUNDARY_T = 3
    OU_LEVELS = 4
    PROBE = 5


class Channel(IntEnum):
    """Named boundary paths within the boundary streams."""

    Z_S0 = 0
    B_0T = 1
    X_S0 = 2
    X_0T = 3
    P_0T = 4
    Q_S0 = 5


@dataclass(frozen=True)
class Grid:
    """Rectangular lattice: nodes (i*ds, j*dt), cells [i,i+1]x[j,j+1]."""

    n_s: int
    n_t: int
    ds: float
    dt: float

    def __post_init__(self):
        if self.n_s < 1 or self.n_t < 1:
            raise ConfigurationError(f"grid needs n_s, n_t >= 1, got {self.n_s}, {self.n_t}")
        if not (self.ds > 0.0) or not (self.dt > 0.0):
            raise ConfigurationError(f"grid needs ds, dt > 0, got ds={self.ds}, dt={self.dt}")

    @property
    def s_extent(self) -> float:
        return self.n_s * self.ds

    @property
    def t_extent(self) -> float:
        return self.n_t * self.dt

    def s_nodes(self) -> np.ndarray:
        return np.arange(self.n_s + 1) * self.ds

    def t_nodes(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt

    def s_index(self, s: float) -> int:
        """Node index of coordinate s; must lie on the grid."""
        i = round(s / self.ds)
        if not (0 <= i <= self.n_s) or abs(i * self.ds - s) > 1e-9 * max(1.0, abs(s)):
            raise ConfigurationError(f"s={s} is not a node of the grid (ds={self.ds})")
        return i

    def t_index(self, t: float) -> int:
        j = round(t / self.dt)
        if not (0 <= j <= self.n_t) or abs(j * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"t={t} is not a node of the grid (dt={self.dt})")
        return j


@dataclass(frozen=True)
class NoiseSpec:
    """Addresses one path's noise: (seed, path_index) plus the dimension m."""

    seed: int
    path_index: int = 0
    m: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError(f"noise dimension m must be >= 1, got {self.m}")
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError("seed must fit in 64 bits")
        if self.path_index < 0:
            raise ConfigurationError("path_index must be nonnegative")


@dataclass
class CellIncrements:
    """Per-cell double increments; values[..., i, j, c] has variance ds*dt."""

    values: np.ndarray
    grid: Grid

    @property
    def m(self) -> int:
        return self.values.shape[-1]


@dataclass
class BoundaryPath:
    """One-parameter boundary data values[..., k, c] at nodes k*step."""

    values: np.ndarray
    step: float
    kind: str = "brownian"

    @classmethod
    def zero(cls, n: int, step: float, dim: int, batch: tuple = ()):
        return cls(np.zeros(batch + (n + 1, dim)), step, kind="zero")

    @classmethod
    def deterministic(cls, values: np.ndarray, step: float):
        return cls(np.asarray(values, dtype=np.float64), step, kind="deterministic")


def _key(seed) -> tuple:
    return (np.uint64(seed), _KEY_SALT)


def normal_grid(seed, path_indices, stream, n_i, n_j, m, channel=0):
    """Standard normals addressed by (path, stream/channel, i, j, component).

    path_indices: int or integer array; output shape is
    ``np.shape(path_indices) + (n_i, n_j, m)``.  The deviate at a given
    address never depends on n_i/n_j/m, so enlarging a grid extends the
    draw rather than reshuffling it.
    """
    paths = np.asarray(path_indices, dtype=np.uint64)
    batch = paths.shape
    n_blocks = (n_i + 3) // 4
    c0 = paths.reshape(batch + (1, 1, 1))
    word1 = (
        np.uint64(int(stream))
        | (np.uint64(channel) << np.uint64(8))
        | (np.arange(m, dtype=np.uint64) << np.uint64(32))
    )
    c1 = word1.reshape((1,) * len(batch) + (1, 1, m))
    c2 = np.arange(n_blocks, dtype=np.uint64).reshape((1,) * len(batch) + (n_blocks, 1, 1))
    c3 = np.arange(n_j, dtype=np.uint64).reshape((1,) * len(batch) + (1, n_j, 1))
    z = normal_block((c0, c1, c2, c3), _key(seed))
    # (..., blocks, j, c, lane) -> (..., blocks, lane, j, c) -> (..., i, j, c)
    z = np.moveaxis(z, -1, -3)
    z = z.reshape(batch + (4 * n_blocks, n_j, m))
    return np.ascontiguousarray(z[..., :n_i, :, :])


def sample_cell_increments(grid: Grid, noise: NoiseSpec) -> CellIncrements:
    """Double increments over every cell: independent N(0, ds*dt) entries."""
    values = sample_cell_increments_batch(grid, noise, batch=None)
    return CellIncrements(values, grid)


def sample_cell_increments_batch(grid: Grid, noise: NoiseSpec, batch) -> np.ndarray:
    """Cell increments for paths noise.path_index .. +batch-1, stacked on axis 0.

    batch=None gives the single path noise.path_index with no batch axis.
    """
    if batch is None:
        paths = noise.path_index
    else:
        paths = noise.path_index + np.arange(batch)
    z = normal_grid(noise.seed, paths, Stream.CELLS, grid.n_s, grid.n_t, noise.m)
    return z * np.sqrt(grid.ds * grid.dt)


def sample_boundary_bm(
    n: int,
    step: float,
    dim: int,
    noise: NoiseSpec,
    channel: int = Channel.Z_S0,
    axis: str = "s",
    kind: str = "brownian",
    batch=None,
) -> BoundaryPath:
    """Brownian path from 0 on n steps of size `step`, one per component.

    Disjoint from cell increments and from paths on other channels/axes by
    counter-space separation.  kind="zero" returns the all-zero path.
    """
    if n < 1:
        raise ConfigurationError(f"boundary path needs n >= 1, got {n}")
    if not (step > 0.0):
        raise ConfigurationError(f"boundary path needs step > 0, got {step}")
    shape = (() if batch is None else (batch,)) + (n + 1, dim)
    if kind == "zero":
        return BoundaryPath(np.zeros(shape), step, kind="zero")
    if kind != "brownian":
        raise ConfigurationError(f"unknown boundary kind {kind!r}")
    values = np.zeros(shape)
    values[..., 1:, :] = np.cumsum(
        boundary_increments(n, step, dim, noise, channel, axis, batch), axis=-2
    )
    return BoundaryPath(values, step, kind="brownian")


def boundary_increments(n, step, dim, noise: NoiseSpec, channel, axis="s", batch=None):
    """The raw N(0, step) increments behind sample_boundary_bm."""
    stream = Stream.BOUNDARY_S if axis == "s" else Stream.BOUNDARY_T
    paths = noise.path_index if batch is None else noise.path_index + np.arange(batch)
    z = normal_grid(noise.seed, paths, stream, n, 1, dim, channel=channel)
    return z[..., :, 0, :] * np.sqrt(step)
