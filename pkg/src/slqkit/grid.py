"""Uniform time grids, Brownian path batches, and process storage.

Conventions used across the package:

* time is discretized on a uniform grid ``t_i = i*h``, ``h = T/N``, with the
  final point pinned to ``T`` exactly;
* all sampled quantities are stored time-major: increments have shape
  ``(N, n_paths)`` and cumulative paths ``(N+1, n_paths)``;
* path batches are reproducible from ``(seed, path_index)`` alone.  Each path
  draws from its own counter-based stream, so generating paths in chunks
  (``path_offset``) yields bit-identical results to one monolithic call.

A batch sampled at ``2N`` steps is *not* a pathwise refinement of the batch
sampled at ``N`` steps with the same seed: streams are consumed per path at
native resolution, and no nesting across step counts is promised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "TimeGrid",
    "BrownianBatch",
    "PathArray",
    "make_grid",
    "sample_brownian",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``N`` steps.

    Attributes
    ----------
    T : float
        Horizon, strictly positive.
    N : int
        Number of steps (``>= 2``).
    h : float
        Step size ``T / N``.
    points : numpy.ndarray
        Grid nodes ``t_0 .. t_N``, shape ``(N+1,)``; ``points[-1] == T``
        exactly.
    """

    T: float
    N: int
    h: float
    points: np.ndarray = field(repr=False)


def make_grid(T: float, N: int) -> TimeGrid:
    """Build the uniform grid with ``N`` steps on ``[0, T]``.

    Parameters
    ----------
    T : float
        Horizon; must be finite and ``> 0``.
    N : int
        Step count; must be an integer ``>= 2``.

    Returns
    -------
    TimeGrid

    Raises
    ------
    InvalidArgumentError
        If ``T`` is not a positive finite real or ``N < 2`` or ``N`` is not
        integral.
    """
    T = float(T)
    if not math.isfinite(T) or T <= 0.0:
        raise InvalidArgumentError(f"horizon T must be finite and > 0, got {T!r}")
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)):
        raise InvalidArgumentError(f"step count N must be an integer, got {N!r}")
    if N < 2:
        raise InvalidArgumentError(f"step count N must be >= 2, got {N}")
    N = int(N)
    h = T / N
    points = h * np.arange(N + 1, dtype=np.float64)
    points[N] = T  # pin the endpoint exactly
    points.setflags(write=False)
    return TimeGrid(T=T, N=N, h=h, points=points)


@dataclass(frozen=True)
class BrownianBatch:
    """A batch of scalar Brownian paths on a :class:`TimeGrid`.

    Attributes
    ----------
    grid : TimeGrid
    n_paths : int
    seed : int
        Seed the batch was drawn from (0 for hand-built batches).
    increments : numpy.ndarray
        Shape ``(N, n_paths)``; ``increments[i]`` is ``W_{t_{i+1}} - W_{t_i}``.
    W : numpy.ndarray
        Shape ``(N+1, n_paths)`` cumulative paths with ``W[0] == 0``.

    The identity ``W[i+1] - W[i] == increments[i]`` holds exactly in floating
    point (increments are canonicalized as differences of the cumulative
    array).
    """

    grid: TimeGrid
    n_paths: int
    seed: int
    increments: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)

    @staticmethod
    def from_increments(grid: TimeGrid, increments: np.ndarray, seed: int = 0) -> "BrownianBatch":
        """Wrap externally supplied increments (e.g. forced test paths).

        ``increments`` must have shape ``(grid.N, n_paths)`` and be finite.
        The cumulative array is rebuilt, and the increments are canonicalized
        to its exact differences.
        """
        inc = np.asarray(increments, dtype=np.float64)
        if inc.ndim != 2 or inc.shape[0] != grid.N:
            raise InvalidArgumentError(
                f"increments must have shape ({grid.N}, n_paths), got {inc.shape}"
            )
        if not np.isfinite(inc).all():
            raise InvalidArgumentError("increments contain non-finite entries")
        n_paths = inc.shape[1]
        W = np.zeros((grid.N + 1, n_paths), dtype=np.float64)
        np.cumsum(inc, axis=0, out=W[1:])
        inc = np.diff(W, axis=0)
        return BrownianBatch(grid=grid, n_paths=n_paths, seed=int(seed), increments=inc, W=W)


def _path_stream(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream for one path, keyed by (seed, path index)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path_index & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_brownian(
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    antithetic: bool = False,
    path_offset: int = 0,
) -> BrownianBatch:
    """Draw ``n_paths`` independent Brownian paths on ``grid``.

    Parameters
    ----------
    grid : TimeGrid
    n_paths : int
        Number of paths, ``>= 1``.  Must be even when ``antithetic`` is set.
    seed : int
        64-bit reproducibility seed.  Path ``p`` is a pure function of
        ``(seed, p)``.
    antithetic : bool, optional
        If set, odd-indexed paths are exact negations of their even-indexed
        partners (``W[:, 2k+1] == -W[:, 2k]``), halving Monte Carlo variance
        for odd functionals.
    path_offset : int, optional
        Global index of the first path in this batch.  Sampling
        ``[offset, offset + n_paths)`` in chunks reproduces the corresponding
        columns of a single monolithic batch bit-for-bit.

    Returns
    -------
    BrownianBatch

    Raises
    ------
    InvalidArgumentError
        On non-positive ``n_paths``, odd ``n_paths`` with ``antithetic``, or
        a misaligned antithetic ``path_offset``.
    """
    if isinstance(n_paths, bool) or not isinstance(n_paths, (int, np.integer)) or n_paths < 1:
        raise InvalidArgumentError(f"n_paths must be a positive integer, got {n_paths!r}")
    if not isinstance(seed, (int, np.integer)):
        raise InvalidArgumentError(f"seed must be an integer, got {seed!r}")
    if path_offset < 0:
        raise InvalidArgumentError(f"path_offset must be >= 0, got {path_offset}")
    if antithetic:
        if n_paths % 2 or path_offset % 2:
            raise InvalidArgumentError(
                "antithetic sampling needs an even n_paths and even path_offset"
            )
    n_paths = int(n_paths)
    N = grid.N
    sqrt_h = math.sqrt(grid.h)
    rows = np.empty((n_paths, N), dtype=np.float64)
    for p in range(n_paths):
        g = path_offset + p
        if antithetic and g % 2:
            rows[p] = -rows[p - 1]
        else:
            rows[p] = _path_stream(seed, g).standard_normal(N)
    rows *= sqrt_h
    W = np.zeros((N + 1, n_paths), dtype=np.float64)
    np.cumsum(rows.T, axis=0, out=W[1:])
    inc = np.diff(W, axis=0)
    return BrownianBatch(grid=grid, n_paths=n_paths, seed=int(seed), increments=inc, W=W)


@dataclass(frozen=True)
class PathArray:
    """Time-indexed batch of matrices, shape ``(N+1, n_paths, rows, cols)``.

    The container used for Riccati solutions, gains, states and controls.
    All entries must be finite.
    """

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise InvalidArgumentError(
                f"PathArray values must be 4-d (time, path, rows, cols), got shape {v.shape}"
            )
        if not np.isfinite(v).all():
            raise InvalidArgumentError("PathArray values contain non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_paths(self) -> int:
        return self.values.shape[1]

    @property
    def rows(self) -> int:
        return self.values.shape[2]

    @property
    def cols(self) -> int:
        return self.values.shape[3]

    @staticmethod
    def from_scalar_field(values: np.ndarray) -> "PathArray":
        """Wrap a ``(N+1, n_paths)`` scalar field as 1x1 matrices."""
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidArgumentError(f"scalar field must be 2-d, got shape {v.shape}")
        return PathArray(v[:, :, None, None])

    def scalar_field(self) -> np.ndarray:
        """View a batch of 1x1 matrices as a ``(N+1, n_paths)`` array."""
        if self.rows != 1 or self.cols != 1:
            raise InvalidArgumentError(
                f"scalar_field() needs 1x1 entries, have {self.rows}x{self.cols}"
            )
        return self.values[:, :, 0, 0]
