"""Problem data for the stochastic linear-quadratic control problem.

A :class:`CoefficientModel` packages the dynamics/cost coefficients

    dx = (A x + B u) dt + (C x + D u) dW,
    J(u) = 1/2 E[ integral of <Qx,x> + <Ru,u> dt  +  <G x(T), x(T)> ]

as *adapted evaluators*: each coefficient is a callable ``(i, W_prefix) ->
matrix`` receiving only the Brownian prefix ``W_0..W_i`` (shape
``(i+1, n_paths)``), so anticipating evaluations are impossible by
construction.  The terminal weight ``G`` receives the full path.

Built-in scenarios:

* :func:`scenario_example1` — the solvable scalar instance with closed-form
  Riccati pair (see :mod:`slqkit.riccati`);
* :func:`scenario_counterexample` — the scalar instance whose optimal gain
  exists pathwise but fails the uniform-in-scenarios regularity bar (its
  diffusion-gain process has exploding pathwise L2 norm as the grid refines);
* :func:`scenario_deterministic` — constant scalar coefficients for ODE-level
  oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError
from .grid import BrownianBatch, TimeGrid, make_grid

__all__ = [
    "CoefficientModel",
    "InitialCondition",
    "ValidationReport",
    "CounterexamplePaths",
    "CounterexampleScenario",
    "validate",
    "scenario_example1",
    "scenario_counterexample",
    "scenario_deterministic",
    "example1_y",
    "counterexample_paths",
    "delta_grid",
    "ZETA_SCALE",
    "Y_SHIFT",
    "Y_UPPER",
]

# pi/(2*sqrt(2)): scale of the stopped integrand and additive constant in Y.
ZETA_SCALE = math.pi / (2.0 * math.sqrt(2.0))
# Y starts at 1 + pi/(2*sqrt(2)) and stays in [1, 1 + pi/sqrt(2)] in the
# continuum; the grid version can overshoot either end by one increment.
Y_SHIFT = 1.0 + ZETA_SCALE
Y_UPPER = 1.0 + 2.0 * ZETA_SCALE


def delta_grid(h: float) -> float:
    """Discretization slack for stopped-envelope checks: ``3 * h**0.4``.

    The stopped integrals can overshoot their continuum envelopes by one
    increment; this empirically calibrated allowance absorbs that on both
    sides of the envelope.
    """
    return 3.0 * float(h) ** 0.4


Evaluator = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientModel:
    """Adapted coefficient data of a scalar-noise linear-quadratic problem.

    Attributes
    ----------
    n, m : int
        State and control dimensions.
    A, C, Q : callable
        ``(i, W_prefix) -> (n, n)`` (or ``(n_paths, n, n)``) evaluators.
    B, D : callable
        ``(i, W_prefix) -> (n, m)`` evaluators.
    R : callable
        ``(i, W_prefix) -> (m, m)`` evaluator.
    G : callable
        ``(W_full) -> (n, n)`` or ``(n_paths, n, n)`` terminal weight.
    kind : str
        One of ``"deterministic"`` (coefficients and G constant in the path),
        ``"markov_in_W"``, ``"path_dependent"``.
    """

    n: int
    m: int
    A: Evaluator = field(repr=False)
    B: Evaluator = field(repr=False)
    C: Evaluator = field(repr=False)
    D: Evaluator = field(repr=False)
    Q: Evaluator = field(repr=False)
    R: Evaluator = field(repr=False)
    G: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    kind: str = "deterministic"

    _SHAPES = {"A": ("n", "n"), "B": ("n", "m"), "C": ("n", "n"),
               "D": ("n", "m"), "Q": ("n", "n"), "R": ("m", "m"),
               "G": ("n", "n")}

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InvalidArgumentError(f"dimensions must be >= 1, got n={self.n}, m={self.m}")
        if self.kind not in ("deterministic", "markov_in_W", "path_dependent"):
            raise InvalidArgumentError(f"unknown model kind {self.kind!r}")

    def _shape_of(self, name: str) -> tuple[int, int]:
        r, c = self._SHAPES[name]
        dims = {"n": self.n, "m": self.m}
        return dims[r], dims[c]

    def coeff(self, name: str, i: int, W_prefix: np.ndarray, n_paths: int) -> np.ndarray:
        """Evaluate coefficient ``name`` at index ``i``, normalized to
        shape ``(n_paths, rows, cols)``."""
        rows, cols = self._shape_of(name)
        raw = np.asarray(getattr(self, name)(i, W_prefix), dtype=np.float64)
        return _normalize_eval(raw, name, n_paths, rows, cols)

    def terminal(self, W_full: np.ndarray, n_paths: int) -> np.ndarray:
        """Evaluate G on the full path, normalized to ``(n_paths, n, n)``."""
        raw = np.asarray(self.G(W_full), dtype=np.float64)
        return _normalize_eval(raw, "G", n_paths, self.n, self.n)


def _normalize_eval(raw: np.ndarray, name: str, n_paths: int, rows: int, cols: int) -> np.ndarray:
    if raw.ndim == 0:
        if (rows, cols) != (1, 1):
            raise InvalidArgumentError(
                f"{name} evaluator returned a scalar but shape ({rows},{cols}) is required"
            )
        raw = raw.reshape(1, 1)
    if raw.ndim == 1 and rows == 1 and cols == 1:
        # per-path scalars for a 1x1 coefficient
        raw = raw.reshape(-1, 1, 1)
    if raw.ndim == 2:
        if raw.shape != (rows, cols):
            raise InvalidArgumentError(
                f"{name} evaluator returned shape {raw.shape}, expected ({rows},{cols})"
            )
        return np.broadcast_to(raw, (n_paths, rows, cols))
    if raw.ndim == 3:
        if raw.shape != (n_paths, rows, cols):
            raise InvalidArgumentError(
                f"{name} evaluator returned shape {raw.shape}, expected "
                f"({n_paths},{rows},{cols})"
            )
        return raw
    raise InvalidArgumentError(f"{name} evaluator returned ndim={raw.ndim} output")


@dataclass(frozen=True)
class InitialCondition:
    """Start pair (s, eta): the grid index of s and the initial state.

    ``eta`` may be a fixed length-``n`` vector or a per-path ``(n_paths, n)``
    array (measurable at the start index).
    """

    start_index: int
    eta: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        if eta.ndim == 0:
            eta = eta.reshape(1)
        if eta.ndim not in (1, 2):
            raise InvalidArgumentError(f"eta must be a vector or (n_paths, n) array, got shape {eta.shape}")
        if not np.isfinite(eta).all():
            raise InvalidArgumentError("eta contains non-finite entries")
        if self.start_index < 0:
            raise InvalidArgumentError(f"start_index must be >= 0, got {self.start_index}")
        object.__setattr__(self, "eta", eta)

    def eta_column(self, n: int, n_paths: int) -> np.ndarray:
        """Initial state as a ``(n_paths, n, 1)`` column batch."""
        eta = self.eta
        if eta.ndim == 1:
            if eta.shape[0] != n:
                raise InvalidArgumentError(f"eta has length {eta.shape[0]}, state dimension is {n}")
            return np.broadcast_to(eta.reshape(1, n, 1), (n_paths, n, 1)).copy()
        if eta.shape != (n_paths, n):
            raise InvalidArgumentError(
                f"per-path eta has shape {eta.shape}, expected ({n_paths}, {n})"
            )
        return eta[:, :, None].copy()


@dataclass(frozen=True)
class ValidationReport:
    """Sampled diagnostics of a model on a batch (finiteness, symmetry,
    coefficient magnitudes, and pathwise square-integral surrogates)."""

    max_asymmetry: dict
    max_abs: dict
    b_sqint_max: float
    c_sqint_max: float
    tol: float
    passed: bool
    failures: list


def validate(model: CoefficientModel, batch: BrownianBatch, tol: float = 1e-8) -> ValidationReport:
    """Sample every coefficient on every grid index of ``batch`` and report
    symmetry/finiteness/magnitude diagnostics.

    Q, R and G evaluations must be symmetric within ``tol``-scale; any
    non-finite evaluation fails.  The report also carries the sampled maxima
    of the pathwise integrals of |B|^2 and |C|^2 (Frobenius), the grid
    surrogates of the square-integrability the problem class assumes.

    Raises
    ------
    InvalidArgumentError
        If an evaluator returns a wrongly shaped result.
    """
    N = batch.grid.N
    h = batch.grid.h
    P = batch.n_paths
    max_asym: dict[str, float] = {}
    max_abs: dict[str, float] = {}
    failures: list[str] = []
    b_sq = np.zeros(P)
    c_sq = np.zeros(P)
    for name in ("A", "B", "C", "D", "Q", "R"):
        worst_abs = 0.0
        worst_asym = 0.0
        for i in range(N + 1):
            vals = model.coeff(name, i, batch.W[: i + 1], P)
            if not np.isfinite(vals).all():
                failures.append(f"{name} non-finite at index {i}")
                break
            worst_abs = max(worst_abs, float(np.abs(vals).max()))
            if name in ("Q", "R"):
                worst_asym = max(worst_asym, float(np.abs(vals - vals.transpose(0, 2, 1)).max()))
            if name == "B" and i < N:
                b_sq += h * np.sum(vals * vals, axis=(1, 2))
            if name == "C" and i < N:
                c_sq += h * np.sum(vals * vals, axis=(1, 2))
        max_abs[name] = worst_abs
        if name in ("Q", "R"):
            max_asym[name] = worst_asym
            if worst_asym > tol * (1.0 + worst_abs):
                failures.append(f"{name} asymmetry {worst_asym:.6g} exceeds tolerance")
    gvals = model.terminal(batch.W, P)
    if not np.isfinite(gvals).all():
        failures.append("G non-finite")
    max_abs["G"] = float(np.abs(gvals).max())
    max_asym["G"] = float(np.abs(gvals - gvals.transpose(0, 2, 1)).max())
    if max_asym["G"] > tol * (1.0 + max_abs["G"]):
        failures.append(f"G asymmetry {max_asym['G']:.6g} exceeds tolerance")
    return ValidationReport(
        max_asymmetry=max_asym,
        max_abs=max_abs,
        b_sqint_max=float(b_sq.max()),
        c_sqint_max=float(c_sq.max()),
        tol=float(tol),
        passed=not failures,
        failures=failures,
    )


def _const(value: float, rows: int = 1, cols: int = 1) -> Evaluator:
    mat = np.full((rows, cols), float(value))
    mat.setflags(write=False)
    return lambda i, W: mat


def example1_y(grid: TimeGrid, W: np.ndarray) -> np.ndarray:
    """The auxiliary process y of the solvable scenario on a path batch.

    ``y_i = 2 + T/2 + sin(W_i) + (1/2) * trapezoid of sin(W) over [0, t_i]``.
    Satisfies ``1 <= y <= 3 + T`` exactly on the grid (the trapezoid average
    of values in [-1, 1] over [0, t_i] is bounded by t_i/2 <= T/2).

    Parameters
    ----------
    grid : TimeGrid
    W : numpy.ndarray
        Path prefix, shape ``(k+1, n_paths)`` for any ``k <= N``.

    Returns
    -------
    numpy.ndarray of the same shape as ``W``.
    """
    s = np.sin(W)
    trap = np.zeros_like(s)
    np.cumsum(0.5 * grid.h * (s[:-1] + s[1:]), axis=0, out=trap[1:])
    return (2.0 + 0.5 * grid.T) + s + 0.5 * trap


def scenario_example1(T: float) -> CoefficientModel:
    """The solvable scalar scenario: A=B=C=Q=0, D=1, R = 1/(2(3+T)),
    G = y(T)^{-1} - R with y from :func:`example1_y`.

    Its Riccati pair has the closed form P = 1/y - R, and the associated
    state weight G stays inside [1/(3+T) - R, 1 - R] on every path.
    """
    if not (math.isfinite(T) and T > 0):
        raise InvalidArgumentError(f"T must be finite and > 0, got {T!r}")
    R = 1.0 / (2.0 * (3.0 + T))

    def G(W: np.ndarray) -> np.ndarray:
        xi = example1_y(make_grid(T, W.shape[0] - 1), W)[-1]
        return (1.0 / xi - R)[:, None, None]

    return CoefficientModel(
        n=1, m=1,
        A=_const(0.0), B=_const(0.0), C=_const(0.0), D=_const(1.0),
        Q=_const(0.0), R=_const(R), G=G, kind="markov_in_W",
    )


@dataclass(frozen=True)
class CounterexamplePaths:
    """Pathwise auxiliary processes of the counterexample scenario.

    Attributes
    ----------
    M : numpy.ndarray
        ``(N+1, n_paths)`` left-point Ito sums of ``(T - t)^{-1/2} dW``.
    tau_index : numpy.ndarray
        ``(n_paths,)`` first grid index where ``|M| > 1`` (``N`` when never).
    zeta : numpy.ndarray
        ``(N+1, n_paths)``; ``zeta_i = (pi/(2 sqrt 2)) (T-t_i)^{-1/2}`` while
        no crossing happened strictly before ``i``, zero after, and
        ``zeta_N = 0`` (the final interval is excluded from the support: the
        integrand is singular at T).
    Y : numpy.ndarray
        ``(N+1, n_paths)``; ``Y_i = sum_{j<i} zeta_j dW_j + 1 + pi/(2 sqrt 2)``.
    Z : numpy.ndarray
        Alias of ``zeta`` (the martingale integrand of Y).
    """

    M: np.ndarray
    tau_index: np.ndarray
    zeta: np.ndarray
    Y: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return self.zeta


def counterexample_paths(grid: TimeGrid, batch: BrownianBatch) -> CounterexamplePaths:
    """Evaluate the counterexample's stopped processes on a batch.

    The stopping rule is the first grid index where the accumulated
    ``(T - t)^{-1/2}`` Ito sum exits (-1, 1); the singular final interval
    ``[t_{N-1}, T]``'s right endpoint is never evaluated.  All quantities are
    adapted: the indicator at index ``i`` only looks at sums up to ``i - 1``.
    """
    if batch.grid.N != grid.N or batch.grid.T != grid.T:
        raise InvalidArgumentError("batch grid does not match the supplied grid")
    N, T, h = grid.N, grid.T, grid.h
    dW = batch.increments
    inv_sqrt = 1.0 / np.sqrt(T - grid.points[:N])  # (N,), finite: t_i < T
    M = np.zeros((N + 1, batch.n_paths))
    np.cumsum(inv_sqrt[:, None] * dW, axis=0, out=M[1:])
    crossed = np.abs(M) > 1.0
    crossed_before = np.zeros_like(crossed)
    np.maximum.accumulate(crossed[:N], axis=0, out=crossed_before[1:])
    tau_index = np.where(crossed.any(axis=0), crossed.argmax(axis=0), N)
    zeta = np.zeros((N + 1, batch.n_paths))
    zeta[:N] = ZETA_SCALE * inv_sqrt[:, None] * ~crossed_before[:N]
    Y = np.full((N + 1, batch.n_paths), Y_SHIFT)
    np.cumsum(zeta[:N] * dW, axis=0, out=Y[1:])
    Y[1:] += Y_SHIFT
    return CounterexamplePaths(M=M, tau_index=tau_index, zeta=zeta, Y=Y)


@dataclass(frozen=True)
class CounterexampleScenario:
    """The counterexample model plus its auxiliary path evaluators."""

    model: CoefficientModel

    def paths(self, grid: TimeGrid, batch: BrownianBatch) -> CounterexamplePaths:
        return counterexample_paths(grid, batch)


def scenario_counterexample(T: float) -> CounterexampleScenario:
    """The scalar scenario with no qualified feedback: A=B=C=Q=0, D=1,
    R = 1/4, and G = Y(T)^{-1} - 1/4 built from the stopped singular
    integrand (see :func:`counterexample_paths`).

    The optimal gain exists on every sampled path, but its pathwise squared
    L2 norm grows without bound as the grid refines — the divergence probe in
    :mod:`slqkit.evaluate` quantifies this.
    """
    if not (math.isfinite(T) and T > 0):
        raise InvalidArgumentError(f"T must be finite and > 0, got {T!r}")

    def G(W: np.ndarray) -> np.ndarray:
        grid = make_grid(T, W.shape[0] - 1)
        fake = BrownianBatch(grid=grid, n_paths=W.shape[1], seed=0,
                             increments=np.diff(W, axis=0), W=W)
        aux = counterexample_paths(grid, fake)
        return (1.0 / aux.Y[-1] - 0.25)[:, None, None]

    model = CoefficientModel(
        n=1, m=1,
        A=_const(0.0), B=_const(0.0), C=_const(0.0), D=_const(1.0),
        Q=_const(0.0), R=_const(0.25), G=G, kind="markov_in_W",
    )
    return CounterexampleScenario(model=model)


def scenario_deterministic(a: float, b: float, c: float, d: float,
                           q: float, r: float, g: float, T: float) -> CoefficientModel:
    """Constant-coefficient scalar model (used by the ODE solvers/oracles)."""
    if not (math.isfinite(T) and T > 0):
        raise InvalidArgumentError(f"T must be finite and > 0, got {T!r}")
    for name, v in (("a", a), ("b", b), ("c", c), ("d", d), ("q", q), ("r", r), ("g", g)):
        if not math.isfinite(float(v)):
            raise InvalidArgumentError(f"coefficient {name} must be finite, got {v!r}")
    gmat = np.array([[float(g)]])
    return CoefficientModel(
        n=1, m=1,
        A=_const(a), B=_const(b), C=_const(c), D=_const(d),
        Q=_const(q), R=_const(r),
        G=lambda W: gmat,
        kind="deterministic",
    )
