"""Smoke test for the `flr` extension module.

Build and run from the repository root:

    cargo build -p flr-py --features extension-module --release
    cp target/release/libflr.so python/flr.so
    python3 python/smoke_test.py
"""

import json
import math

import flr


def main():
    sample, beta = flr.simulate(decay="P1", slope="beta1", n=300, seed=3)
    assert sample.n == 300 and len(sample) == 300
    assert len(sample.grid) == 100 and len(beta) == 100
    assert sample.centering == "population"

    fit = flr.fit_fpca(sample)
    lam = fit.eigenvalues
    assert all(a >= b for a, b in zip(lam, lam[1:]))
    psi = fit.eigenfunction(0)
    assert abs(sum(v * v for v in psi) / len(psi) - 1.0) < 1e-8

    kv = flr.select_dimension(sample, method="kv", sigma2=0.01)
    uv = flr.select_dimension(sample, method="uv")
    gcv = flr.select_dimension(sample, method="gcv", sigma2=0.01)
    for sel in (kv, uv, gcv):
        assert 1 <= sel.selected_m <= sel.max_dim
        assert len(sel.table) == sel.max_dim
    assert fit.beta_hat(kv.selected_m) == kv.beta_hat

    diff = [a - b for a, b in zip(kv.beta_hat, beta)]
    risk = flr.prediction_error(diff, decay="P1")
    assert 0.0 < risk < 1e-2, risk

    # two constant curves: lambda = (1, 0), beta_1 = 2
    two = flr.Sample([0.0, 0.5], [[1.0, 1.0], [-1.0, -1.0]], [2.0, -2.0], centred=True)
    two_fit = flr.fit_fpca(two)
    assert abs(two_fit.eigenvalues[0] - 1.0) < 1e-10
    assert all(abs(v - 2.0) < 1e-10 for v in two_fit.beta_hat(1))

    slope, _ = flr.rate_fit([(n, 3.0 / n) for n in (200, 500, 1000, 2000)])
    assert abs(slope + 1.0) < 1e-10

    config = {
        "scenarios": [{"decay": "E", "slope": "beta2", "n": 100}],
        "methods": ["kv", "uv"],
        "replicates": 3,
    }
    report = json.loads(flr.run_experiment(json.dumps(config)))
    rows = report["summary"]["rows"]
    assert len(rows) == 2 and all(r["replicate_count"] == 3 for r in rows)
    assert all(math.isfinite(r["mean_risk"]) for r in rows)

    try:
        flr.select_dimension(sample, method="kv")
    except ValueError:
        pass
    else:
        raise AssertionError("kv without sigma2 should fail")
    try:
        flr.simulate(n=3)
    except ValueError:
        pass
    else:
        raise AssertionError("n=3 should fail")

    print(f"flr {flr.__version__}: kv m={kv.selected_m}, uv m={uv.selected_m}, "
          f"gcv m={gcv.selected_m}, risk={risk:.3e}; smoke test passed")


if __name__ == "__main__":
    main()
