"""Closed-loop cost equals the value form: a first walkthrough.

Solves the tractable scalar problem (state dx = u dW, running cost in u only,
random terminal weight) in closed form, wires the feedback gain, simulates
the closed-loop system, and compares the Monte Carlo cost against the value
quadratic form 1/2 P(0) eta^2 = 0.1375.
"""

import argparse

import numpy as np

from slqkit.evaluate import value_identity_check
from slqkit.feedback import synthesize
from slqkit.grid import make_grid, sample_brownian
from slqkit.problem import InitialCondition, scenario_example1
from slqkit.riccati import closed_form_example1


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=64)
    parser.add_argument("--paths", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    grid = make_grid(1.0, args.steps)
    batch = sample_brownian(grid, args.paths, seed=args.seed)
    model = scenario_example1(1.0)
    sol = closed_form_example1(grid, batch)
    law = synthesize(sol, model)

    print(f"grid: T = {grid.T}, N = {grid.N}, h = {grid.h:.5f}; "
          f"{batch.n_paths} paths, seed {batch.seed}")
    print(f"t = 0 solution values (deterministic since W(0) = 0):")
    print(f"  P(0)     = {sol.P.values[0, 0, 0, 0]:.6f}   (exact 1/2.5 - 1/8)")
    print(f"  K(0)     = {sol.K.values[0, 0, 0, 0]:.6f}")
    print(f"  Theta(0) = {law.theta.values[0, 0, 0, 0]:.6f}")

    init = InitialCondition(0, np.array([1.0]))
    res = value_identity_check(sol, law, model, init, batch)
    d = res.details
    print(f"\nclosed-loop Monte Carlo cost J = {d['closed_loop_cost']:.6f} "
          f"(std error {d['std_error']:.2e})")
    print(f"value form 1/2 P(0) eta^2      = {d['value_quadratic_form']:.6f}")
    print(f"residual {res.residual:.2e} vs tolerance {res.tolerance:.2e} "
          f"(3 standard errors + 0.5 sqrt(h))")
    print("check:", "PASS" if res.passed else "FAIL")


if __name__ == "__main__":
    main()
