#!/usr/bin/env python3
"""Smoke test for the ifedavg_py extension module.

Builds expectations small enough to run in seconds:
  cargo build --release -p ifedavg-py
  python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def load_module():
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libifedavg_py.so",
        root / "target" / "debug" / "libifedavg_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the extension first: cargo build --release -p ifedavg-py")
    stage = Path(tempfile.mkdtemp(prefix="ifedavg-py-"))
    shutil.copy(built, stage / "ifedavg_py.so")
    sys.path.insert(0, str(stage))
    import ifedavg_py

    return ifedavg_py


def approx(a, b, tol=1e-12):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    m = load_module()

    # parameter counts: personal layers cost 2D + 2K (or 2D + K + 1 scalar)
    assert m.param_counts(10, 2) == (9794, 24)
    assert m.param_counts(1, 1, scalar_w_out=True)[1] == 4

    # learning-rate schedule: fifty 0.9 steps over the horizon
    approx(m.lr_schedule(0), 0.002)
    approx(m.lr_schedule(40), 0.002 * 0.81)
    approx(m.lr_schedule(999), 0.002 * 0.9**49)

    # element-wise affine map
    assert m.affine_apply([1.0, -1.0], [2.0, 0.5], [1.0, 3.0]) == [4.0, 1.0]
    assert m.affine_apply([0.0, 0.0], 1.0, [0.3, -1.2]) == [0.3, -1.2]

    # metrics against hand values
    approx(m.f1_weighted([0, 0, 1, 1], [0, 1, 1, 1]), (2 * (2 / 3) + 2 * 0.8) / 4)
    approx(m.balanced_accuracy([0, 0, 1, 1], [0, 1, 1, 1]), 0.75)
    scores = [[0.9, 0.1], [0.6, 0.4], [0.65, 0.35], [0.2, 0.8]]
    approx(m.roc_auc_ovo([0, 0, 1, 1], scores), 0.75)

    # class weights rescale to sum to K
    w = m.class_weights([0, 0, 0, 1], 2)
    approx(w[0], 0.5)
    approx(w[1], 1.5)

    # deterministic split: 33% or at least 100, capped at n-1
    train, test = m.split_train_test(137, 8273, 0)
    assert len(test) == 100 and len(train) == 37
    assert m.split_train_test(137, 8273, 0) == (train, test)

    # significance rules on the closed-form single-outlier fixture
    col = [[0.0]] * 5 + [[3.0]]
    flags = m.flag_cells([row[:] for row in col])
    assert [f[0] for f in flags] == [False] * 5 + [True]
    assert m.flag_cells([[0.0]] * 4 + [[3.0]]) == [[False]] * 5

    # a tiny end-to-end detection run (coarse settings, just wiring)
    result = m.run_synthetic(
        clients=3,
        samples=200,
        features=4,
        rounds=3,
        seeds=[8273],
        inject="add_bias client=1 feature=f0 delta=2.0",
    )
    assert result["clients"] == ["client0", "client1", "client2"]
    (mutation,) = result["mutations"]
    assert mutation["mutation"].startswith("add_bias")
    assert mutation["total_seeds"] == 1
    (run,) = result["runs"]
    assert len(run["b_in"]) == 3 and len(run["b_in"][0]) == 4
    assert len(run["scores"]) == 3
    assert all(math.isfinite(s["f1"]) for s in run["scores"])

    print("smoke test ok")


if __name__ == "__main__":
    main()
