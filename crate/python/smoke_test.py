"""Smoke test for the Python bindings.

Build and install first:  pip install -e crates/python --no-build-isolation
"""

import math

import gslope


def close(a, b, tol=1e-9):
    return all(abs(x - y) <= tol for x, y in zip(a, b)) and len(a) == len(b)


def main():
    assert close(gslope.prox_sorted_l1([4.0, 3.0], [3.0, 1.0]), [1.5, 1.5])
    assert gslope.eval_sorted_l1([1.0, -3.0, 2.0], [3.0, 2.0, 1.0]) == 14.0

    b = [3.0, 4.0, 0.5]
    out = gslope.prox_group_slope(b, [[0, 1], [2]], [2.0, 1.0])
    assert close(out, [1.8, 2.4, 0.0])

    x, y, beta, support = gslope.make_synthetic(80, 40, 3, 0.1, seed=2)
    assert len(x) == 80 and len(x[0]) == 40 and len(support) == 3

    # Unit-norm columns, one group per feature pair.
    norms = [math.sqrt(sum(r[j] ** 2 for r in x)) for j in range(40)]
    xs = [[r[j] / norms[j] for j in range(40)] for r in x]
    problem = gslope.Problem(xs, y, [2] * 20, sparsity_index=1)
    assert problem.n_groups == 20

    off = problem.solve(screening=False, gap_tol=1e-9)
    on = problem.solve(screening=True, gap_tol=1e-9)
    assert off.converged and on.converged
    assert max(abs(p - q) for p, q in zip(off.beta, on.beta)) < 1e-5
    assert set(on.screened_groups).isdisjoint(on.active_groups)
    stoch = problem.solve(solver="spgd", gap_tol=1e-9, seed=1)
    assert max(abs(p - q) for p, q in zip(off.beta, stoch.beta)) < 1e-4

    obj = problem.objective(on.beta)
    assert abs(obj - problem.decoupled_objective(on.beta)) < 1e-8
    print(on)
    print(f"screened {len(on.screened_groups)}/{problem.n_groups} groups, objective {obj:.6f}")
    print("ok")


if __name__ == "__main__":
    main()
