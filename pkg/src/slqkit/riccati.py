"""Backward Riccati solvers.

The backward equation solved here, written for the scalar case as

    dP = -(2 A P + 2 C Lam + C^2 P + Q - L^2 K^+) dt + Lam dW,   P(T) = G,
    K = R + D^T P D,   L = B^T P + D^T (P C + Lam),

is handled by four routes:

* :func:`solve_deterministic` — classic backward Runge-Kutta integration of
  the matrix ODE (``Lam = 0``) with pointwise solvability checks;
* :func:`discrete_recursion_oracle` — the *exact* dynamic-programming
  recursion of the Euler-discretized problem, kept as an independent oracle
  for the ODE solver (both discretize the same continuous problem and must
  agree at first order in the step);
* :func:`solve_bsre_regression` — least-squares Monte Carlo backward
  induction for scalar problems whose coefficients are functions of
  ``(t, W_t)``;
* :func:`closed_form_example1` / :func:`closed_form_counterexample` — direct
  evaluation of the two known closed-form solution pairs, used as ground
  truth everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DriverSingularError,
    FiniteEscapeError,
    InvalidArgumentError,
    RegressionSingularError,
    RiccatiSingularError,
)
from .grid import BrownianBatch, PathArray, TimeGrid
from .pinv import pinv, psd_check, range_inclusion
from .problem import (
    CoefficientModel,
    counterexample_paths,
    example1_y,
    scenario_counterexample,
    scenario_example1,
)

__all__ = [
    "RiccatiSolution",
    "RegressionBasis",
    "solve_deterministic",
    "discrete_recursion_oracle",
    "solve_bsre_regression",
    "closed_form_example1",
    "closed_form_counterexample",
]

# Floor on the control weight K inside the regression driver; breaching it
# means the fitted solution left the region where the driver's inverse is
# trustworthy.
EPS_CLAMP = 1e-6
# Solvability tolerance used during deterministic integration (matches the
# pseudoinverse-based predicates' scaling).
SOLVE_TOL = 1e-8


@dataclass(frozen=True)
class RiccatiSolution:
    """A (pathwise) solution pair plus its derived gain ingredients.

    Attributes
    ----------
    grid : TimeGrid
    P, Lambda : PathArray
        ``(N+1, n_paths, n, n)`` symmetric matrices; deterministic solvers
        emit a single path and exact-zero ``Lambda``.
    K, L : PathArray
        ``K_i = R_i + D_i^T P_i D_i`` (``m x m``) and
        ``L_i = B_i^T P_i + D_i^T (P_i C_i + Lambda_i)`` (``m x n``).
    solver_tag : str
        One of ``deterministic_ode``, ``regression_mc``,
        ``closed_form_example1``, ``closed_form_counterexample``.
    """

    grid: TimeGrid
    P: PathArray = field(repr=False)
    Lambda: PathArray = field(repr=False)
    K: PathArray = field(repr=False)
    L: PathArray = field(repr=False)
    solver_tag: str = "deterministic_ode"


@dataclass(frozen=True)
class RegressionBasis:
    """Per-slice polynomial basis for the regression solver: monomials of the
    (standardized) Brownian level up to ``degree``."""

    degree: int = 3

    def __post_init__(self):
        if self.degree < 0:
            raise InvalidArgumentError(f"basis degree must be >= 0, got {self.degree}")


def _derive_KL(model: CoefficientModel, grid: TimeGrid, W: np.ndarray,
               Pv: np.ndarray, Lv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """K_i = R + D^T P D and L_i = B^T P + D^T (P C + Lambda) at every node."""
    n_paths = Pv.shape[1]
    K = np.empty((grid.N + 1, n_paths, model.m, model.m))
    L = np.empty((grid.N + 1, n_paths, model.m, model.n))
    for i in range(grid.N + 1):
        pre = W[: i + 1]
        B = model.coeff("B", i, pre, n_paths)
        C = model.coeff("C", i, pre, n_paths)
        D = model.coeff("D", i, pre, n_paths)
        R = model.coeff("R", i, pre, n_paths)
        Pi = Pv[i]
        K[i] = R + np.einsum("pnm,pnk,pkl->pml", D, Pi, D)
        L[i] = (np.einsum("pnm,pnk->pmk", B, Pi)
                + np.einsum("pnm,pnk->pmk", D, Pi @ C + Lv[i]))
    return K, L


def _zero_prefix(grid: TimeGrid) -> np.ndarray:
    return np.zeros((grid.N + 1, 1))


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.swapaxes(-1, -2))


def solve_deterministic(model: CoefficientModel, grid: TimeGrid) -> RiccatiSolution:
    """Integrate the deterministic backward Riccati ODE on ``grid``.

    Fourth-order Runge-Kutta with four internal substeps per grid cell
    (coefficients held at the cell's left node).  At every stage the
    solvability conditions are enforced: ``K = R + D^T P D`` must be PSD and
    the range of ``L`` must lie in the range of ``K``.

    Raises
    ------
    RiccatiSingularError
        If a solvability condition fails; carries the failure time.
    FiniteEscapeError
        If the solution blows up before reaching ``t = 0``.
    InvalidArgumentError
        If ``model.kind != "deterministic"``.
    """
    if model.kind != "deterministic":
        raise InvalidArgumentError(
            f'solve_deterministic needs kind="deterministic", got {model.kind!r}'
        )
    N = grid.N
    W0 = _zero_prefix(grid)
    n = model.n
    Pv = np.empty((N + 1, 1, n, n))
    Pv[N] = _sym(model.terminal(W0, 1))

    def rhs(P: np.ndarray, coeffs, t: float) -> np.ndarray:
        if not np.isfinite(P).all():
            raise FiniteEscapeError(
                f"Riccati solution blew up near t={t:.6g}", time=t
            )
        A, B, C, D, Q, R = coeffs
        K = R + D.T @ P @ D
        L = B.T @ P + D.T @ (P @ C)
        if not psd_check(K, SOLVE_TOL):
            raise RiccatiSingularError(
                f"control weight lost positive semidefiniteness at t={t:.6g}", time=t
            )
        if not range_inclusion(K, L, SOLVE_TOL):
            raise RiccatiSingularError(
                f"range condition failed at t={t:.6g}", time=t
            )
        Kd = pinv(K).pinv
        return -(P @ A + A.T @ P + C.T @ P @ C + Q - L.T @ (Kd @ L))

    # Overflow inside a stage is expected on escaping instances; it is
    # detected and re-raised as FiniteEscapeError, so silence the warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(N - 1, -1, -1):
            pre = W0[: i + 1]
            coeffs = tuple(
                model.coeff(name, i, pre, 1)[0] for name in ("A", "B", "C", "D", "Q", "R")
            )
            P = Pv[i + 1][0]
            dt = -grid.h / 4.0
            t = grid.points[i + 1]
            for _ in range(4):
                k1 = rhs(P, coeffs, t)
                k2 = rhs(_sym(P + 0.5 * dt * k1), coeffs, t + 0.5 * dt)
                k3 = rhs(_sym(P + 0.5 * dt * k2), coeffs, t + 0.5 * dt)
                k4 = rhs(_sym(P + dt * k3), coeffs, t + dt)
                P = _sym(P + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
                t += dt
                if not np.isfinite(P).all():
                    raise FiniteEscapeError(
                        f"Riccati solution blew up near t={t:.6g}", time=t
                    )
            Pv[i] = P
    Lv = np.zeros_like(Pv)
    K, L = _derive_KL(model, grid, W0, Pv, Lv)
    return RiccatiSolution(grid=grid, P=PathArray(Pv), Lambda=PathArray(Lv),
                           K=PathArray(K), L=PathArray(L), solver_tag="deterministic_ode")


def discrete_recursion_oracle(model: CoefficientModel, grid: TimeGrid) -> RiccatiSolution:
    """Exact dynamic-programming recursion for the Euler-discretized problem.

    One-step quadratic minimization of the discretized cost gives

        Phi = I + h A,
        H   = h R + h^2 B^T P' B + h D^T P' D,
        M   = h (B^T P' Phi + D^T P' C),
        P   = Phi^T P' Phi + h C^T P' C + h Q - M^T H^+ M,

    backward from ``P_N = G``.  Independent of the ODE route; the two agree
    at ``t = 0`` to first order in ``h``.

    Raises
    ------
    RiccatiSingularError
        If ``H`` is not PSD or ``M``'s rows leave its range.
    """
    if model.kind != "deterministic":
        raise InvalidArgumentError(
            f'discrete_recursion_oracle needs kind="deterministic", got {model.kind!r}'
        )
    N, h = grid.N, grid.h
    W0 = _zero_prefix(grid)
    n = model.n
    Pv = np.empty((N + 1, 1, n, n))
    Pv[N] = _sym(model.terminal(W0, 1))
    eye = np.eye(n)
    # As in the ODE route: overflow on escaping instances surfaces as
    # FiniteEscapeError, so the intermediate warnings are silenced.
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(N - 1, -1, -1):
            pre = W0[: i + 1]
            A, B, C, D, Q, R = (
                model.coeff(name, i, pre, 1)[0] for name in ("A", "B", "C", "D", "Q", "R")
            )
            Pn = Pv[i + 1][0]
            Phi = eye + h * A
            H = h * R + h * h * (B.T @ Pn @ B) + h * (D.T @ Pn @ D)
            M = h * (B.T @ Pn @ Phi + D.T @ Pn @ C)
            t = grid.points[i]
            if not (np.isfinite(H).all() and np.isfinite(M).all()):
                raise FiniteEscapeError(
                    f"discrete recursion blew up at t={t:.6g}", time=t
                )
            if not psd_check(H, SOLVE_TOL):
                raise RiccatiSingularError(
                    f"discrete control weight not PSD at t={t:.6g}", time=t
                )
            if not range_inclusion(H, M, SOLVE_TOL):
                raise RiccatiSingularError(
                    f"discrete range condition failed at t={t:.6g}", time=t
                )
            Hd = pinv(H).pinv
            Pv[i] = _sym(Phi.T @ Pn @ Phi + h * (C.T @ Pn @ C) + h * Q - M.T @ (Hd @ M))
            if not np.isfinite(Pv[i]).all():
                raise FiniteEscapeError(f"discrete recursion blew up at t={t:.6g}", time=t)
    Lv = np.zeros_like(Pv)
    K, L = _derive_KL(model, grid, W0, Pv, Lv)
    return RiccatiSolution(grid=grid, P=PathArray(Pv), Lambda=PathArray(Lv),
                           K=PathArray(K), L=PathArray(L), solver_tag="deterministic_ode")


def _design_matrix(w: np.ndarray, degree: int) -> np.ndarray:
    """Standardized monomial design in the Brownian level at one slice.

    Degenerate slices (zero spread, e.g. the initial time) fall back to the
    constant-only design rather than erroring — the conditional expectation
    there *is* the plain mean.
    """
    spread = float(np.std(w))
    if degree == 0 or spread < 1e-12:
        return np.ones((w.shape[0], 1))
    z = (w - float(np.mean(w))) / spread
    cols = [np.ones_like(z)]
    for _ in range(degree):
        cols.append(cols[-1] * z)
    return np.stack(cols, axis=1)


def _fit(X: np.ndarray, y: np.ndarray, step: int) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RegressionSingularError(
            f"regression design matrix rank-deficient at step {step} "
            f"(rank {rank} < {X.shape[1]})",
            step=step,
        )
    return X @ coef


def solve_bsre_regression(
    model: CoefficientModel,
    grid: TimeGrid,
    batch: BrownianBatch,
    basis: RegressionBasis | None = None,
) -> RiccatiSolution:
    """Least-squares Monte Carlo backward induction for the scalar equation.

    At each step ``i`` (backward): the martingale coefficient is fitted by
    regressing the *centered* increment target
    ``(P_{i+1} - m_i(W_i)) * dW_i / h`` on the slice basis, where ``m_i`` is
    the fitted conditional mean of ``P_{i+1}`` — same estimand as the plain
    ``P_{i+1} dW_i / h`` target (the subtracted term is ``W_i``-measurable
    and multiplies a mean-zero increment) with orders of magnitude less
    variance.  The drift is evaluated explicitly at the step-``i+1`` fitted
    solution, and ``P_i`` is the fitted conditional expectation of
    ``P_{i+1} + h * drift``.  The martingale coefficient at the terminal
    index has no forward increment and is stored as exact zero.

    Raises
    ------
    RegressionSingularError
        Rank-deficient design at some interior slice.
    DriverSingularError
        The control weight ``R + D^2 P`` fell below ``1e-6`` somewhere.
    InvalidArgumentError
        Non-scalar model, incompatible batch, or unsupported kind.
    """
    if model.n != 1 or model.m != 1:
        raise InvalidArgumentError(
            f"regression solver handles scalar problems only, got n={model.n}, m={model.m}"
        )
    if model.kind not in ("deterministic", "markov_in_W"):
        raise InvalidArgumentError(
            f'regression solver needs kind in {{"deterministic","markov_in_W"}}, '
            f"got {model.kind!r}"
        )
    if batch.grid.N != grid.N or batch.grid.T != grid.T:
        raise InvalidArgumentError("batch grid does not match the supplied grid")
    if basis is None:
        basis = RegressionBasis()
    N, h = grid.N, grid.h
    W = batch.W
    dW = batch.increments
    n_paths = batch.n_paths
    Pv = np.empty((N + 1, n_paths))
    Lv = np.zeros((N + 1, n_paths))
    Pv[N] = model.terminal(W, n_paths)[:, 0, 0]
    for i in range(N - 1, -1, -1):
        pre = W[: i + 1]
        X = _design_matrix(W[i], basis.degree)
        p_next = Pv[i + 1]
        m_hat = _fit(X, p_next, i)
        lam = _fit(X, (p_next - m_hat) * dW[i] / h, i)
        a, b, c, d, q, r = (
            model.coeff(name, i, pre, n_paths)[:, 0, 0]
            for name in ("A", "B", "C", "D", "Q", "R")
        )
        K = r + d * d * p_next
        if np.any(K < EPS_CLAMP):
            bad = int(np.argmax(K < EPS_CLAMP))
            raise DriverSingularError(
                f"control weight fell below clamp at step {i} "
                f"(path {bad}, K={K[bad]:.3e})",
                step=i,
            )
        L = b * p_next + d * (p_next * c + lam)
        drift = 2.0 * a * p_next + 2.0 * c * lam + c * c * p_next + q - L * L / K
        Pv[i] = _fit(X, p_next + h * drift, i)
        Lv[i] = lam
    Pm = Pv[:, :, None, None]
    Lm = Lv[:, :, None, None]
    K, L = _derive_KL(model, grid, W, Pm, Lm)
    return RiccatiSolution(grid=grid, P=PathArray(Pm), Lambda=PathArray(Lm),
                           K=PathArray(K), L=PathArray(L), solver_tag="regression_mc")


def closed_form_example1(grid: TimeGrid, batch: BrownianBatch) -> RiccatiSolution:
    """Exact solution pair of the solvable scenario on sampled paths:
    ``P = 1/y - R`` and ``Lambda = -cos(W)/y^2`` with ``y`` from
    :func:`slqkit.problem.example1_y`."""
    if batch.grid.N != grid.N or batch.grid.T != grid.T:
        raise InvalidArgumentError("batch grid does not match the supplied grid")
    model = scenario_example1(grid.T)
    R = model.coeff("R", 0, batch.W[:1], 1)[0, 0, 0]
    y = example1_y(grid, batch.W)
    Pv = (1.0 / y - R)[:, :, None, None]
    Lv = (-np.cos(batch.W) / (y * y))[:, :, None, None]
    K, L = _derive_KL(model, grid, batch.W, Pv, Lv)
    return RiccatiSolution(grid=grid, P=PathArray(Pv), Lambda=PathArray(Lv),
                           K=PathArray(K), L=PathArray(L),
                           solver_tag="closed_form_example1")


def closed_form_counterexample(grid: TimeGrid, batch: BrownianBatch) -> RiccatiSolution:
    """Exact solution pair of the counterexample scenario:
    ``P = 1/Y - 1/4`` and ``Lambda = -zeta/Y^2`` from the stopped singular
    integrand (:func:`slqkit.problem.counterexample_paths`)."""
    if batch.grid.N != grid.N or batch.grid.T != grid.T:
        raise InvalidArgumentError("batch grid does not match the supplied grid")
    scenario = scenario_counterexample(grid.T)
    aux = counterexample_paths(grid, batch)
    Pv = (1.0 / aux.Y - 0.25)[:, :, None, None]
    Lv = (-aux.zeta / (aux.Y * aux.Y))[:, :, None, None]
    K, L = _derive_KL(scenario.model, grid, batch.W, Pv, Lv)
    return RiccatiSolution(grid=grid, P=PathArray(Pv), Lambda=PathArray(Lv),
                           K=PathArray(K), L=PathArray(L),
                           solver_tag="closed_form_counterexample")
