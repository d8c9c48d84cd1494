"""Timing comparison of the compiled and pure-Python kernel backends.

Runs the three kernel-backed operations (boosted-tree training, SVR
training, tree attributions) once per backend in a subprocess, because the
backend is chosen at import time from RF_FORGE_BACKEND. Besides wall time
the workers hash their outputs, so the report also states whether the two
backends produced bit-identical results (they must).

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(a.tobytes() if hasattr(a, "tobytes") else str(a).encode())
    return h.hexdigest()[:16]


def _worker(repeats: int) -> None:
    import numpy as np

    from rfforge import explain, gbdt, svr
    from rfforge._kernels import BACKEND
    from rfforge.synth import default_oil_spec, synth_generate
    from rfforge.transform import apply as tf_apply, fit as tf_fit

    table = synth_generate(default_oil_spec(), 1200, seed=9)
    scaled = tf_apply(tf_fit(table), table)
    tcol = scaled.column_index(scaled.target_name)
    cols = [j for j in range(len(scaled.names)) if j != tcol]
    X = np.ascontiguousarray(scaled.values[:, cols])
    y = np.ascontiguousarray(scaled.values[:, tcol])

    results = {}

    def bench(name, fn):
        best = None
        out = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = fn()
            dt = time.perf_counter() - t0
            best = dt if best is None else min(best, dt)
        results[name] = {"seconds": best, "digest": out}

    params = gbdt.GbdtParams(n_rounds=60)
    model_box = {}

    def run_gbdt():
        model_box["m"] = gbdt.train(X, y, params)
        return _digest(gbdt.predict(model_box["m"], X))

    def run_svr():
        m = svr.train(X[:700], y[:700], svr.SvrParams(max_passes=60))
        return _digest(m.dual_coefficients, np.float64(m.bias),
                       svr.predict(m, X[:700]))

    def run_shap():
        att = explain.tree_shap(model_box["m"], X[:50])
        return _digest(att.values, np.float64(att.base_value))

    bench("gbdt train + predict", run_gbdt)
    bench("svr train + predict", run_svr)
    bench("tree attributions", run_shap)

    print(json.dumps({"backend": BACKEND, "results": results}))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=2,
                    help="timing repetitions per operation; best is kept")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        _worker(args.repeats)
        return 0

    reports = {}
    for backend in ("pure", "fast"):
        env = dict(os.environ, RF_FORGE_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--worker", "--repeats", str(args.repeats)],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            if backend == "fast":
                print("compiled backend unavailable; timings below are pure only")
                print(proc.stderr.strip().splitlines()[-1] if proc.stderr else "")
                continue
            print(proc.stderr, file=sys.stderr)
            return 1
        reports[backend] = json.loads(proc.stdout.splitlines()[-1])

    if not reports:
        return 1
    names = list(reports[next(iter(reports))]["results"])
    print(f"{'operation':<24}{'pure':>10}{'fast':>10}{'speedup':>10}  identical")
    for name in names:
        row = {}
        for backend, rep in reports.items():
            row[backend] = rep["results"][name]
        pure = row.get("pure")
        fast = row.get("fast")
        p = f"{pure['seconds']:.3f}s" if pure else "-"
        f = f"{fast['seconds']:.3f}s" if fast else "-"
        if pure and fast:
            speed = f"{pure['seconds'] / fast['seconds']:.1f}x"
            same = "yes" if pure["digest"] == fast["digest"] else "NO"
        else:
            speed, same = "-", "-"
        print(f"{name:<24}{p:>10}{f:>10}{speed:>10}  {same}")
    if any(
        reports.get("pure") and reports.get("fast")
        and reports["pure"]["results"][n]["digest"] != reports["fast"]["results"][n]["digest"]
        for n in names
    ):
        print("\nbackends disagree; this is a bug", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
