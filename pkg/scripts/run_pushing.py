#!/usr/bin/env python3
"""Solve the planar pushing scenarios and summarize contact activity.

Reports the sticking/slipping split along the trajectory (slipping requires
the force to sit on the friction-cone boundary) and, for the obstacle
variant, the closest approach to each obstacle.
"""

import argparse

import numpy as np

from mpcctraj import api, ipm, systems


def summarize(result):
    sol = result.solution
    vidx = result.nlp.var_index
    params = result.problem.extras["params"]
    y = sol.x[vidx.y]
    u = sol.x[vidx.u]
    slip = y[:, :, 0] - y[:, :, 1]
    slipping = np.abs(slip) > 1e-4
    print(f"status={sol.status} objective={sol.objective:.6f} "
          f"iterations={sol.iterations}")
    print(f"terminal state: {np.round(sol.x[vidx.xf], 4)}")
    print(f"collocation points slipping: {int(slipping.sum())} / {slip.size}")
    if slipping.any():
        gap = np.abs(np.abs(u[:, :, 1]) - params.friction * u[:, :, 0])
        print(f"max friction-cone gap while slipping: {gap[slipping].max():.2e}")
    print(f"complementarity residual: {result.complementarity:.2e}")
    for name, dist in result.pair_min_distances.items():
        print(f"closest approach {name}: {dist:.4f} m")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--obstacles", action="store_true",
                        help="use the variant with two static obstacles")
    parser.add_argument("--max-iter", type=int, default=2000)
    args = parser.parse_args()
    name = "pusher_obstacles" if args.obstacles else "pusher"
    result = api.solve_problem(
        systems.make_example(name),
        options=ipm.SolverOptions(max_iter=args.max_iter))
    summarize(result)


if __name__ == "__main__":
    main()
