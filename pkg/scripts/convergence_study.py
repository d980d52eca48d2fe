#!/usr/bin/env python3
"""Grid-refinement study on the scalar decay problem.

Prints the endpoint error |x(1) - 1/e| over a sequence of element counts for
each root family and the observed convergence order between refinements.
"""

import math

import numpy as np

from mpcctraj import collocation as co, ipm
from mpcctraj.problem import ProblemDefinition, ProblemInfo, validate_problem


def endpoint_error(n_elements: int, scheme: co.RootScheme) -> float:
    info = ProblemInfo(1, 0, 0, n_elements=n_elements, t0=0.0, tf=1.0)
    prob = validate_problem(ProblemDefinition(
        info=info, x0=[1.0],
        dynamics=lambda xd, x, y, u, p, t: [xd[0] + x[0]],
        initial_guess=lambda t: ([1.0], [0.0], [], []),
    ))
    nlp = co.transcribe(prob, scheme)
    sol = ipm.solve(nlp)
    assert sol.is_optimal, sol.status
    return abs(sol.x[nlp.var_index.xf][0] - math.exp(-1.0))


def main():
    grids = [5, 10, 20, 40, 80]
    for kind in ("radau", "legendre"):
        for order in (1, 2, 3):
            scheme = co.RootScheme(kind, order)
            errs = [endpoint_error(n, scheme) for n in grids]
            rates = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
            err_s = "  ".join(f"{e:.3e}" for e in errs)
            rate_s = "  ".join(f"{r:.2f}" for r in rates)
            print(f"{kind:<9} order {order}: err [{err_s}]  observed order [{rate_s}]")


if __name__ == "__main__":
    main()
