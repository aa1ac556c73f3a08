"""Compare the compiled simplex kernels with the numpy fallback.

Usage: python benchmarks/kernels_bench.py [--repeat N] [--cases threebus ieee14]

Prints per-kernel micro timings on random data and whole-LP solve times on
the extensive forms of the bundled cases, checking that both backends reach
the same objective.
"""

import argparse
import time

import numpy as np

from batteryph.config import case_config_path, load_config, load_study
from batteryph.lp import solve_lp
from batteryph.lp.kernels import get_backend
from batteryph.opf import build_extensive_form

BACKENDS = ("python", "cython")


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def micro(repeat, n=20000, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=n)
    status = rng.integers(0, 4, size=n).astype(np.int8)
    m = n // 4
    xb = rng.uniform(0, 1, m)
    lbb = np.zeros(m)
    ubb = np.where(rng.random(m) < 0.5, 1.0, np.inf)
    alpha = rng.normal(size=m)
    head = np.arange(m, dtype=np.int64)
    rows = []
    for name in BACKENDS:
        k = get_backend(name)
        t_sel = best_of(lambda: [k.select_entering(d, status, 1e-9, False) for _ in range(50)], repeat)
        t_rat = best_of(lambda: [k.ratio_phase2(xb, lbb, ubb, alpha, 1.0, 1e-9, 1e-7, False, head)
                                 for _ in range(50)], repeat)
        rows.append((name, t_sel / 50, t_rat / 50))
    return rows


def whole_solves(cases, repeat):
    rows = []
    for case in cases:
        st = load_study(load_config(case_config_path(case)))
        sub = build_extensive_form(st.network, st.demand, st.config.battery, st.config.cost, st.schedule)
        objs = {}
        for name in BACKENDS:
            k = get_backend(name)
            objs[name] = solve_lp(sub.lp, kernels=k).objective
            t = best_of(lambda: solve_lp(sub.lp, kernels=k), repeat)
            rows.append((case, sub.lp.num_cols, sub.lp.num_rows, name, t))
        if objs["python"] != objs["cython"]:
            print(f"warning: {case} objectives differ: {objs}")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--cases", nargs="*", default=["threebus", "ieee14"])
    args = ap.parse_args()

    print("kernel micro timings (seconds per call)")
    print(f"{'backend':<8} {'select_entering':>16} {'ratio_phase2':>14}")
    micro_rows = micro(args.repeat)
    for name, a, b in micro_rows:
        print(f"{name:<8} {a:16.2e} {b:14.2e}")
    print()
    print("extensive-form solves (best of repeats)")
    print(f"{'case':<10} {'cols':>6} {'rows':>6} {'backend':<8} {'seconds':>8}")
    solves = whole_solves(args.cases, args.repeat)
    for case, n, m, name, t in solves:
        print(f"{case:<10} {n:6d} {m:6d} {name:<8} {t:8.3f}")
    by = {(c, b): t for c, _, _, b, t in solves}
    for case in args.cases:
        print(f"{case}: cython speedup x{by[(case, 'python')] / by[(case, 'cython')]:.2f}")


if __name__ == "__main__":
    main()
