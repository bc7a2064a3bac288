"""Smoke test for the spikesort_py extension.

Build first:
    cargo build --release -p spikesort-py --features extension-module
then run from the repository root:
    python3 python/smoke_test.py
"""

import math
import os
import random
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    try:
        import spikesort_py
        return spikesort_py
    except ImportError:
        pass
    built = os.path.join(ROOT, "target", "release", "libspikesort_py.so")
    if not os.path.exists(built):
        sys.exit(f"extension not found; build it first ({built})")
    tmp = tempfile.mkdtemp()
    shutil.copy(built, os.path.join(tmp, "spikesort_py.so"))
    sys.path.insert(0, tmp)
    import spikesort_py
    return spikesort_py


def main():
    ss = load()

    ds = ss.synth(units=3, n=100, noise=0.1, seed=7)
    assert len(ds) == 300 and len(ds.spikes[0]) == 64

    res = ss.fit(ds.spikes, 3, seed=1)
    assert res.c == 3
    assert len(res.projection) == 64 and len(res.projection[0]) == 2
    assert res.objective_history[-1] >= res.objective_history[0] - 1e-9
    acc = ss.accuracy(ds.labels, res.labels)
    assert acc == 100.0, acc

    base = ss.baseline(ds.spikes, 3, seed=1)
    assert res.objective_history[-1] >= base.objective_history[-1] - 1e-9

    report = ss.estimate(ds.spikes, index="ch")
    assert report.chosen == 3, report.scores
    auto, report = ss.auto_sort(ds.spikes, index="gap")
    assert auto.c == report.chosen == 3

    # Two bumps on a weakly noisy trace.
    fs = 24000.0
    rng = random.Random(0)
    trace = [rng.gauss(0.0, 0.02) for _ in range(4000)]
    for t in (1000, 3000):
        for k in range(-10, 11):
            trace[t + k] -= math.exp(-(k / 3.0) ** 2)
    filtered = ss.filter(trace, fs)
    assert len(filtered) == len(trace)
    times = ss.detect(filtered, fs, k_sigma=4.0)
    assert len(times) == 2 and all(abs(a - b) <= 2 for a, b in zip(times, (1000, 3000))), times
    rows, kept = ss.extract(filtered, fs, times)
    assert len(rows) == 2 and kept == times

    try:
        ss.accuracy([0, 1], [0])
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch accepted")

    print(f"ok: accuracy {acc:.2f}, {res!r}, {report!r}")


if __name__ == "__main__":
    main()
