"""Smoke test for the Python extension.

Build and install with
    pip install --no-build-isolation ./crates/fracpoinc-py
then run
    python python/smoke_test.py
"""

import math

import fracpoinc as fp


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    assert close(fp.gamma(0.5), math.sqrt(math.pi), 1e-13)
    assert close(fp.beta(2.5, 0.7), fp.beta(0.7, 2.5), 1e-14)
    for n in range(2, 5):
        for m in range(1, n):
            lhs = fp.c_flap(n, 0.5, 2.0) * fp.theta(m, n, 0.5, 2.0)
            assert close(lhs, fp.c_flap(n - m, 0.5, 2.0), 1e-10)

    interval = fp.Domain([(-1.0, 1.0)])
    grid = fp.Grid(interval, 1.0 / 128)
    assert grid.node_count == 256
    op = fp.Operator(grid, 0.5, 2.0)
    pair = fp.solve(op)
    assert pair.converged
    assert close(pair.eigenvalue, 1.155274678905589, 1e-8), pair.eigenvalue
    assert min(pair.eigenfunction) >= 0.0
    assert close(op.rayleigh(pair.eigenfunction), pair.eigenvalue, 1e-10)

    descent = fp.solve(fp.Operator(fp.Grid(interval, 1.0 / 32), 0.5, 1.5))
    assert descent.converged and descent.eigenvalue > 0.0

    square = fp.Domain([(0.0, 1.0), (0.0, 1.0)])
    coarse = fp.Operator(fp.Grid(square, 0.25), 0.5, 3.0, kind="regional")
    u = [0.1 * i - 0.5 for i in range(coarse.node_count)]
    assert close(coarse.energy([2.0 * v for v in u]), 8.0 * coarse.energy(u), 1e-12)
    assert len(coarse.gradient(u)) == coarse.node_count
    assert all(w == 0.0 for w in coarse.exterior_weights())

    reports = [
        fp.run_identities(),
        fp.run_picone(2.0, trials=500),
        fp.run_oracle(0.5, h=1.0 / 64),
        fp.run_dilation(interval, 2.0, 0.5, 2.0, 1.0 / 16),
    ]
    for r in reports:
        print(f"{r.experiment_id:<12} {'PASS' if r.passed else 'FAIL'}")
        assert r.passed, r.summary()
        assert r.csv().startswith("experiment_id,param_hash,name,lhs,relation,rhs,pass")

    try:
        fp.Domain([(1.0, 0.0)])
    except ValueError:
        pass
    else:
        raise AssertionError("empty interval accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
