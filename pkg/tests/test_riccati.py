"""Tests for the four backward-Riccati solution routes."""

import numpy as np
import pytest

from slqkit.errors import (
    DriverSingularError,
    FiniteEscapeError,
    InvalidArgumentError,
    RegressionSingularError,
    RiccatiSingularError,
)
from slqkit.grid import make_grid, sample_brownian
from slqkit.problem import (
    Y_SHIFT,
    ZETA_SCALE,
    CoefficientModel,
    scenario_counterexample,
    scenario_deterministic,
    scenario_example1,
)
from slqkit.riccati import (
    RegressionBasis,
    closed_form_counterexample,
    closed_form_example1,
    discrete_recursion_oracle,
    solve_bsre_regression,
    solve_deterministic,
)

CLASSICAL = scenario_deterministic(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, T=1.0)


def random_constant_instance(seed, normalized=True):
    """Random constant-coefficient instance with PSD weights.

    ``normalized`` divides the dynamics matrices by ``max(n, m)`` so the
    generator scale stays comparable across dimensions; the raw draw is kept
    reachable for the convergence-order test below.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 4))

    def mat(r, c):
        return rng.uniform(-1.0, 1.0, (r, c))

    A, B, C, D = mat(n, n), mat(n, m), mat(n, n), mat(n, m)

    def psd(k):
        S = rng.uniform(-1.0, 1.0, (k, k))
        M = S @ S.T
        return M / max(1.0, np.abs(M).max())

    Q, G = psd(n), psd(n)
    R = psd(m) * 0.45 + 0.1 * np.eye(m)
    if normalized:
        s = float(max(n, m))
        A, B, C, D = A / s, B / s, C / s, D / s

    def const(M):
        return lambda i, W, M=M: M

    return CoefficientModel(
        n=n, m=m, A=const(A), B=const(B), C=const(C), D=const(D),
        Q=const(Q), R=const(R), G=lambda W, G=G: G, kind="deterministic",
    )


# ---------------------------------------------------------------------------
# Deterministic ODE solver
# ---------------------------------------------------------------------------

def test_ode_classical_instance_matches_closed_form():
    # For (a,b,c,d,q,r,g) = (0,1,0,0,0,1,1) the solution is P(t) = 1/(1+T-t).
    grid = make_grid(1.0, 64)
    sol = solve_deterministic(CLASSICAL, grid)
    P = sol.P.values[:, 0, 0, 0]
    exact = 1.0 / (1.0 + grid.T - grid.points)
    assert abs(P[0] - 0.5) <= 1e-6
    np.testing.assert_allclose(P, exact, rtol=0.0, atol=1e-8)
    # Terminal condition holds exactly and Lambda is exact zero.
    assert P[-1] == 1.0
    np.testing.assert_array_equal(sol.Lambda.values, 0.0)
    assert sol.solver_tag == "deterministic_ode"


def test_ode_derived_gain_ingredients():
    grid = make_grid(1.0, 32)
    sol = solve_deterministic(CLASSICAL, grid)
    P = sol.P.values
    # K = r + d^2 P = 1 and L = b P + d(cP) = P for this instance.
    np.testing.assert_allclose(sol.K.values, 1.0, rtol=0.0, atol=1e-14)
    np.testing.assert_allclose(sol.L.values, P, rtol=0.0, atol=1e-14)


def test_ode_zero_problem():
    model = scenario_deterministic(0, 0, 0, 0, 0, 0, 0, T=1.0)
    sol = solve_deterministic(model, make_grid(1.0, 16))
    np.testing.assert_array_equal(sol.P.values, 0.0)
    np.testing.assert_array_equal(sol.K.values, 0.0)
    np.testing.assert_array_equal(sol.L.values, 0.0)


def test_ode_no_drift_multiplicative_control_case():
    # b = c = 0 with d = 1 makes L = 0, so the driver vanishes: P stays at g.
    model = scenario_deterministic(0, 0, 0, 1, 0, 1, 0.5, T=1.0)
    sol = solve_deterministic(model, make_grid(1.0, 16))
    np.testing.assert_allclose(sol.P.values, 0.5, rtol=0.0, atol=1e-12)
    np.testing.assert_allclose(sol.K.values, 1.5, rtol=0.0, atol=1e-12)
    np.testing.assert_allclose(sol.L.values, 0.0, rtol=0.0, atol=1e-12)


def test_ode_kind_guard():
    with pytest.raises(InvalidArgumentError):
        solve_deterministic(scenario_example1(1.0), make_grid(1.0, 8))


def test_ode_indefinite_weight_raises_with_time():
    model = scenario_deterministic(0, 1, 0, 0, 0, -1.0, 1, T=1.0)
    with pytest.raises(RiccatiSingularError) as exc:
        solve_deterministic(model, make_grid(1.0, 8))
    assert exc.value.time == pytest.approx(1.0)


def test_ode_finite_escape():
    # Unstable drift with no stabilizing control: the backward solution
    # overflows before reaching t = 0 and must surface as FiniteEscapeError,
    # never as a shape/typing error from the solvability predicates.
    model = scenario_deterministic(500, 0, 0, 0, 1, 1, 1, T=1.0)
    with pytest.raises(FiniteEscapeError) as exc:
        solve_deterministic(model, make_grid(1.0, 64))
    assert exc.value.time is not None


# ---------------------------------------------------------------------------
# Discrete dynamic-programming oracle
# ---------------------------------------------------------------------------

def test_oracle_classical_instance_is_exact_flow():
    # For the classical instance the one-step minimization reproduces the
    # exact Moebius flow P <- P/(1 + hP), so the recursion lands on the
    # continuum solution at every node up to roundoff.
    grid = make_grid(1.0, 64)
    sol = discrete_recursion_oracle(CLASSICAL, grid)
    P = sol.P.values[:, 0, 0, 0]
    exact = 1.0 / (1.0 + grid.T - grid.points)
    np.testing.assert_allclose(P, exact, rtol=0.0, atol=1e-12)


def test_oracle_matches_ode_within_first_order_band():
    # Independent discretizations of the same continuous problem must agree
    # at t = 0 within 5h across a seeded sweep of random instances.
    grid = make_grid(1.0, 64)
    allowance = 5.0 * grid.h
    for seed in range(20):
        model = random_constant_instance(seed)
        p_ode = solve_deterministic(model, grid).P.values[0, 0]
        p_dp = discrete_recursion_oracle(model, grid).P.values[0, 0]
        assert np.abs(p_dp - p_ode).max() <= allowance


def test_oracle_ode_gap_halves_with_h():
    # On a raw (unnormalized) draw the agreement constant is large but the
    # order is clean: the t=0 gap halves as N doubles.
    model = random_constant_instance(2, normalized=False)
    gaps = {}
    for N in (64, 128, 256):
        grid = make_grid(1.0, N)
        p_ode = solve_deterministic(model, grid).P.values[0, 0]
        p_dp = discrete_recursion_oracle(model, grid).P.values[0, 0]
        gaps[N] = float(np.abs(p_dp - p_ode).max())
    assert 0.4 <= gaps[128] / gaps[64] <= 0.6
    assert 0.4 <= gaps[256] / gaps[128] <= 0.6


def test_oracle_terminal_and_zero_cases():
    model = scenario_deterministic(0, 0, 0, 0, 0, 0, 0, T=1.0)
    sol = discrete_recursion_oracle(model, make_grid(1.0, 8))
    np.testing.assert_array_equal(sol.P.values, 0.0)
    sol = discrete_recursion_oracle(CLASSICAL, make_grid(1.0, 8))
    assert sol.P.values[-1, 0, 0, 0] == 1.0


def test_oracle_guards_and_errors():
    with pytest.raises(InvalidArgumentError):
        discrete_recursion_oracle(scenario_example1(1.0), make_grid(1.0, 8))
    with pytest.raises(RiccatiSingularError) as exc:
        discrete_recursion_oracle(
            scenario_deterministic(0, 1, 0, 0, 0, -1.0, 1, T=1.0), make_grid(1.0, 8)
        )
    assert exc.value.time == pytest.approx(0.875)
    with pytest.raises(FiniteEscapeError):
        discrete_recursion_oracle(
            scenario_deterministic(500, 0, 0, 0, 1, 1, 1e300, T=1.0), make_grid(1.0, 16)
        )


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def test_closed_form_example1_time_zero_values():
    # W_0 = 0 pins y_0 = 2 + T/2 = 2.5, hence P(0), K(0), L(0) are exact.
    grid = make_grid(1.0, 64)
    batch = sample_brownian(grid, 50, seed=1)
    sol = closed_form_example1(grid, batch)
    np.testing.assert_allclose(sol.P.values[0], 0.275, rtol=0.0, atol=1e-15)
    np.testing.assert_allclose(sol.K.values[0], 0.4, rtol=0.0, atol=1e-15)
    np.testing.assert_allclose(sol.Lambda.values[0], -0.16, rtol=0.0, atol=1e-15)
    np.testing.assert_array_equal(sol.L.values, sol.Lambda.values)
    assert sol.solver_tag == "closed_form_example1"


def test_closed_form_example1_terminal_matches_G_bitwise():
    grid = make_grid(1.0, 32)
    batch = sample_brownian(grid, 100, seed=2)
    sol = closed_form_example1(grid, batch)
    g = scenario_example1(1.0).terminal(batch.W, batch.n_paths)
    np.testing.assert_array_equal(sol.P.values[-1], g)


def test_closed_form_example1_K_is_reciprocal_y():
    # K = R + P = 1/y stays in [1/4, 1] for T = 1.
    grid = make_grid(1.0, 64)
    batch = sample_brownian(grid, 200, seed=1)
    sol = closed_form_example1(grid, batch)
    K = sol.K.values
    assert K.min() >= 0.25 - 1e-12
    assert K.max() <= 1.0 + 1e-12


def test_closed_form_example1_discrete_equation_residual():
    # The closed form solves the *continuous* equation; its discrete residual
    #   res_i = P_{i+1} - P_i - h Lam_i^2 / (R + P_i) - Lam_i dW_i
    # accumulates to a signed sum whose typical size shrinks like sqrt(h).
    medians = {}
    for N in (128, 512):
        grid = make_grid(1.0, N)
        batch = sample_brownian(grid, 2000, seed=1)
        sol = closed_form_example1(grid, batch)
        P = sol.P.values[:, :, 0, 0]
        lam = sol.Lambda.values[:, :, 0, 0]
        res = (P[1:] - P[:-1]
               - grid.h * lam[:-1] ** 2 / (0.125 + P[:-1])
               - lam[:-1] * batch.increments)
        medians[N] = float(np.median(np.abs(res.sum(axis=0))))
    assert medians[512] < medians[128]
    assert 0.35 <= medians[512] / medians[128] <= 0.65


def test_closed_form_counterexample_time_zero_values():
    grid = make_grid(1.0, 64)
    batch = sample_brownian(grid, 50, seed=1)
    sol = closed_form_counterexample(grid, batch)
    np.testing.assert_allclose(sol.P.values[0], 1.0 / Y_SHIFT - 0.25,
                               rtol=0.0, atol=1e-15)
    np.testing.assert_allclose(sol.K.values[0], 1.0 / Y_SHIFT, rtol=0.0, atol=1e-15)
    np.testing.assert_allclose(sol.Lambda.values[0], -ZETA_SCALE / Y_SHIFT**2,
                               rtol=0.0, atol=1e-15)
    assert sol.solver_tag == "closed_form_counterexample"


def test_closed_form_counterexample_terminal_matches_G_bitwise():
    grid = make_grid(1.0, 32)
    batch = sample_brownian(grid, 100, seed=2)
    sol = closed_form_counterexample(grid, batch)
    g = scenario_counterexample(1.0).model.terminal(batch.W, batch.n_paths)
    np.testing.assert_array_equal(sol.P.values[-1], g)


def test_closed_form_grid_mismatch_guard():
    batch = sample_brownian(make_grid(1.0, 16), 4, seed=1)
    with pytest.raises(InvalidArgumentError):
        closed_form_example1(make_grid(1.0, 8), batch)
    with pytest.raises(InvalidArgumentError):
        closed_form_counterexample(make_grid(1.0, 8), batch)


# ---------------------------------------------------------------------------
# Regression solver
# ---------------------------------------------------------------------------

def test_regression_basis_guard():
    with pytest.raises(InvalidArgumentError):
        RegressionBasis(degree=-1)
    assert RegressionBasis().degree == 3


def test_regression_example1_recovers_initial_value():
    grid = make_grid(1.0, 64)
    batch = sample_brownian(grid, 5000, seed=1)
    sol = solve_bsre_regression(scenario_example1(1.0), grid, batch)
    p0 = sol.P.values[0, :, 0, 0]
    # Time-zero fit collapses to a constant (degenerate slice).
    assert p0.max() - p0.min() == 0.0
    # Hard range from the y-bounds, and proximity to the closed form 0.275.
    assert 0.125 <= p0[0] <= 0.875
    assert abs(p0[0] - 0.275) <= 0.05 * 0.275
    # Terminal slice is the exact terminal weight; last martingale
    # coefficient is stored as exact zero.
    g = scenario_example1(1.0).terminal(batch.W, batch.n_paths)
    np.testing.assert_array_equal(sol.P.values[-1], g)
    np.testing.assert_array_equal(sol.Lambda.values[-1], 0.0)
    assert sol.solver_tag == "regression_mc"


def test_regression_deterministic_data_reduces_to_euler():
    # With path-independent data every cross-sectional fit is exact, so the
    # scheme degenerates to the explicit Euler recursion: spread-free slices,
    # near-zero martingale coefficients, first-order agreement with the ODE.
    grid = make_grid(1.0, 32)
    batch = sample_brownian(grid, 200, seed=1)
    sol = solve_bsre_regression(CLASSICAL, grid, batch)
    P = sol.P.values[:, :, 0, 0]
    assert np.ptp(P, axis=1).max() <= 1e-12
    assert np.abs(sol.Lambda.values).max() <= 1e-12
    assert abs(P[0, 0] - 0.5) <= 5.0 * grid.h


def test_regression_degree_zero_runs():
    grid = make_grid(1.0, 32)
    batch = sample_brownian(grid, 500, seed=1)
    sol = solve_bsre_regression(scenario_example1(1.0), grid, batch,
                                RegressionBasis(degree=0))
    assert np.isfinite(sol.P.values).all()
    assert 0.125 <= sol.P.values[0, 0, 0, 0] <= 0.875


def test_regression_guards():
    grid = make_grid(1.0, 8)
    batch = sample_brownian(grid, 10, seed=1)
    two = random_constant_instance(5)  # n=3 draw
    with pytest.raises(InvalidArgumentError):
        solve_bsre_regression(two, grid, batch)
    with pytest.raises(InvalidArgumentError):
        solve_bsre_regression(scenario_example1(1.0), make_grid(1.0, 16), batch)
    path_dep = CoefficientModel(
        n=1, m=1, A=CLASSICAL.A, B=CLASSICAL.B, C=CLASSICAL.C, D=CLASSICAL.D,
        Q=CLASSICAL.Q, R=CLASSICAL.R, G=CLASSICAL.G, kind="path_dependent",
    )
    with pytest.raises(InvalidArgumentError):
        solve_bsre_regression(path_dep, grid, batch)


def test_regression_rank_deficient_design_raises():
    # Two paths cannot identify four basis coefficients.
    grid = make_grid(1.0, 8)
    batch = sample_brownian(grid, 2, seed=1)
    with pytest.raises(RegressionSingularError) as exc:
        solve_bsre_regression(scenario_example1(1.0), grid, batch)
    assert exc.value.step == 7


def test_regression_driver_clamp_breach_raises():
    # r below the clamp with a zero terminal weight leaves K = r < 1e-6 at
    # the first backward step; the solver must refuse rather than divide.
    grid = make_grid(1.0, 8)
    batch = sample_brownian(grid, 50, seed=1)
    model = scenario_deterministic(0, 0, 0, 1, 0, 1e-7, 0, T=1.0)
    with pytest.raises(DriverSingularError) as exc:
        solve_bsre_regression(model, grid, batch)
    assert exc.value.step == 7


def test_regression_counterexample_completes_at_moderate_scale():
    # At (512, 200) with seed 1 the sampled discrete Y stays positive, so the
    # backward induction runs to completion with a finite fitted solution.
    grid = make_grid(1.0, 512)
    batch = sample_brownian(grid, 200, seed=1)
    sol = solve_bsre_regression(scenario_counterexample(1.0).model, grid, batch)
    assert np.isfinite(sol.P.values).all()
    g = scenario_counterexample(1.0).model.terminal(batch.W, batch.n_paths)
    np.testing.assert_array_equal(sol.P.values[-1], g)
