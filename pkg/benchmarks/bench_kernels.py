"""Time the numba kernels against the numpy fallback.

Each path runs in its own interpreter because ``SPL_NUMBA`` is read at
import time.  One warm-up call per workload absorbs JIT compilation, and
the best of ``--repeat`` timed calls is reported.

    python3 benchmarks/bench_kernels.py --n 5000 --repeat 3
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = ("lp", "stream_greedy", "stream_pd_exp", "fair_equal", "fair_stable")


def _child(args):
    import numpy as np

    from spl import USE_NUMBA
    from spl.fairness import compute_fair
    from spl.instance import da_to_plp, generate_synthetic
    from spl.lp import solve_primal
    from spl.online import run_online

    da = generate_synthetic(args.m, args.n, demand_range=(args.n // 40, args.n // 15), seed=args.seed)
    order = np.random.default_rng(args.seed).permutation(args.n)
    plp = da_to_plp(da)
    jobs = {
        "lp": lambda: solve_primal(plp).objective,
        "stream_greedy": lambda: float(run_online(da, order, "greedy").value),
        "stream_pd_exp": lambda: float(run_online(da, order, "pd_exp").value),
        "fair_equal": lambda: float(compute_fair(da, "equal").value),
        "fair_stable": lambda: float(compute_fair(da, "stable_matching").value),
    }
    out = {"numba": USE_NUMBA, "times": {}, "values": {}}
    for name in args.only or WORKLOADS:
        fn = jobs[name]
        out["values"][name] = fn()  # warm-up / compile
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    print(json.dumps(out))


def _spawn(flag, argv):
    env = dict(os.environ, SPL_NUMBA=flag)
    proc = subprocess.run(
        [sys.executable, __file__, "--child", *argv],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, default=10, help="advertisers")
    p.add_argument("--n", type=int, default=5000, help="impressions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--only", nargs="*", choices=WORKLOADS, help="subset of workloads")
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.child:
        _child(args)
        return 0

    fwd = [a for a in (argv if argv is not None else sys.argv[1:]) if a != "--child"]
    fast = _spawn("1", fwd)
    slow = _spawn("0", fwd)
    print(f"m={args.m} n={args.n} seed={args.seed} best of {args.repeat}")
    print(f"{'workload':<16}{'numba s':>12}{'numpy s':>12}{'speedup':>10}  same")
    for name in fast["times"]:
        a, b = fast["times"][name], slow["times"][name]
        same = fast["values"][name] == slow["values"][name]
        print(f"{name:<16}{a:>12.4f}{b:>12.4f}{b / a:>9.1f}x  {'yes' if same else 'NO'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
