#!/usr/bin/env python3
"""End-to-end smoke test for the metabin_py extension module.

Expects a prior `cargo build -p metabin-py`. The cdylib is copied into a
temporary directory under the importable name metabin_py.so, imported, and
exercised: dataset construction, per-study effects, the three pooled
estimators, the population-share solver, seeded simulation, file round
trips and the batch comparison harness.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def locate_library():
    candidates = [
        ROOT / "target" / "debug" / "libmetabin_py.so",
        ROOT / "target" / "release" / "libmetabin_py.so",
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit("libmetabin_py.so not found; run `cargo build -p metabin-py` first")


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def run_checks(mb, tmp):
    alpha = mb.Study("alpha", 10, 10, 5, 15)
    beta = mb.Study("beta", 30, 70, 40, 60)
    ds = mb.Dataset("demo", [alpha, beta])
    assert len(ds) == 2 and ds.n_total == 240
    assert "demo" in repr(ds)
    print("dataset construction ok")

    effects = mb.study_effects(ds, measure="rr")
    assert [e.label for e in effects] == ["alpha", "beta"]
    assert close(effects[0].theta, math.log(2.0))
    assert close(effects[0].point, 2.0)
    assert not effects[0].corrected
    print("per-study effects ok")

    fe = mb.pool_fixed(ds, measure="rr")
    re = mb.pool_random(ds, measure="rr")
    causal = mb.pool_causal(ds, measure="rr")
    assert fe.method == "fixed-effects" and causal.method == "causal"
    assert fe.tau2 is None and re.tau2 > 0
    assert re.ci_high - re.ci_low > fe.ci_high - fe.ci_low
    assert causal.ci_low < causal.point < causal.ci_high
    assert causal.scale == "log" and causal.measure == "rr"
    # Size-proportional weights are the realized study shares.
    assert close(causal.weights[0], 40 / 240)
    assert close(sum(causal.weights), 1.0)
    print("pooled estimates ok")

    # The risk difference collapses: the causal aggregate equals the
    # share-weighted mean of the per-study differences.
    rd = mb.pool_causal(ds, measure="rd")
    manual = (40 / 240) * (10 / 20 - 5 / 20) + (200 / 240) * (30 / 100 - 40 / 100)
    assert close(rd.point, manual)
    print("collapsibility cross-check ok")

    uniform = mb.pool_causal(ds, measure="rd", weights="uniform")
    listed = mb.pool_causal(ds, measure="rd", weights=[0.5, 0.5])
    assert close(uniform.point, listed.point)
    assert any("fixed-weight" in w for w in uniform.warnings)
    print("weight schemes ok")

    pstar = mb.solve_pstar(0.1, 0.9, 0.5, 0.5, 0.9, 0.1)
    assert 0.0 < pstar < 1.0
    mirrored = mb.solve_pstar(0.9, 0.1, 0.5, 0.5, 0.9, 0.1)
    assert pstar == mirrored, "solver must ignore population order"
    print("population-share solver ok")

    sim = mb.simulate_dataset(seed=7, n=500)
    assert sim.n_total == 500 and len(sim) == 2
    again = mb.simulate_dataset(seed=7, n=500)
    assert [s.n11 for s in sim.studies] == [s.n11 for s in again.studies]
    print("seeded simulation ok")

    medians = mb.mismatch_medians(replications=10, seed=0)
    assert set(medians) == {"fixed-effects", "random-effects", "causal"}
    assert set(medians["causal"]) == {"rd", "rr", "or"}
    assert all(math.isfinite(v) for v in medians["causal"].values())
    print("mismatch medians ok")

    csv_path = tmp / "demo.csv"
    ds.write_csv(csv_path)
    back = mb.Dataset.read(csv_path)
    assert [s.label for s in back.studies] == ["alpha", "beta"]
    json_path = tmp / "demo.json"
    ds.write_json(json_path)
    assert mb.Dataset.read(json_path).n_total == 240

    for seed in range(2):
        mb.simulate_dataset(seed=seed).write_csv(tmp / f"sim-{seed}.csv")
    report = mb.compare_directory(tmp)
    assert len(report["records"]) == 9, "3 datasets x 3 measures"
    assert report["skipped"] == []
    assert all(0.0 <= r["jaccard"] <= 1.0 for r in report["records"])
    print("io round trip and batch comparison ok")

    try:
        mb.Dataset("bad", [mb.Study("z", 0, 0, 3, 4)])
    except ValueError as err:
        assert "zero participants" in str(err)
    else:
        raise AssertionError("empty arm not rejected")
    try:
        mb.solve_pstar(1.5, 0.5, 0.5, 0.5, 0.9, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range share not rejected")
    print("validation errors surface as ValueError ok")


def main():
    library = locate_library()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        shutil.copy2(library, tmp / "metabin_py.so")
        sys.path.insert(0, str(tmp))
        import metabin_py as mb

        run_checks(mb, tmp)
    print("smoke test: all checks passed")


if __name__ == "__main__":
    main()
