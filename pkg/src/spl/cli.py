"""Command-line entry point: ``spl <subcommand> ...``.

Exit status is 0 on success, 1 on a validation or usage error and 2 on an
I/O error.  ``SPL_SEED`` and ``SPL_OUT`` supply defaults for ``--seed``
and the output directory; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench, fairness, lp, online, ptas
from .instance import (
    DaInstance,
    InstanceError,
    LowerBoundParams,
    PlpInstance,
    as_plp,
    dumps,
    generate_lower_bound,
    generate_synthetic,
    load,
    normalize,
    save,
)

log = logging.getLogger("spl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _env_seed() -> int:
    raw = os.environ.get("SPL_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SPL_SEED must be an integer, got {raw!r}") from None


def _out_dir(args) -> Path | None:
    d = getattr(args, "out_dir", None) or os.environ.get("SPL_OUT")
    return Path(d) if d else None


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _resolve_out(args, default_name: str) -> Path | None:
    if getattr(args, "output", None):
        return Path(args.output)
    d = _out_dir(args)
    return d / default_name if d else None


def _eps(value: str) -> float:
    try:
        e = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None
    if not 0.0 < e < 1.0:
        raise argparse.ArgumentTypeError("eps must lie in (0, 1)")
    return e


def _positive_int(value: str) -> int:
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return k


def _load_da(path) -> DaInstance:
    inst = load(path)
    if not isinstance(inst, DaInstance):
        raise UsageError(f"{path}: expected a display-ad instance (advertisers/impressions)")
    return inst


def _add_generator_flags(p) -> None:
    g = p.add_argument_group("generator (used when no instance file is given)")
    g.add_argument("--m", type=_positive_int, help="number of advertisers")
    g.add_argument("--n", type=_positive_int, help="number of impressions")
    g.add_argument("--demand-min", type=_positive_int, default=1, help="smallest demand n(j) (default 1)")
    g.add_argument("--demand-max", type=_positive_int, default=10, help="largest demand n(j) (default 10)")
    g.add_argument("--density", type=float, default=0.3, help="eligibility probability per edge (default 0.3)")
    g.add_argument("--mu", type=float, default=0.0, help="log-normal location of weights (default 0)")
    g.add_argument("--sigma", type=float, default=1.0, help="log-normal scale of weights (default 1)")
    g.add_argument("--gen-seed", type=int, default=None, help="generator seed (default: --seed)")


def _generated(args) -> DaInstance:
    return generate_synthetic(
        args.m, args.n,
        demand_range=(args.demand_min, args.demand_max),
        density=args.density, mu=args.mu, sigma=args.sigma,
        seed=args.seed if args.gen_seed is None else args.gen_seed,
    )


def _instance_or_generated(args) -> DaInstance:
    gen_given = args.m is not None or args.n is not None
    if args.instance and gen_given:
        raise UsageError("give either an instance file or --m/--n, not both")
    if args.instance:
        return _load_da(args.instance)
    if args.m is None or args.n is None:
        raise UsageError("need an instance file or both --m and --n")
    return _generated(args)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    if args.kind == "synthetic":
        if args.m is None or args.n is None:
            raise UsageError("gen synthetic needs --m and --n")
        inst = _generated(args)
    else:
        inst = generate_lower_bound(LowerBoundParams(T=args.T, draws=args.draws, seed=args.seed))
    out = _resolve_out(args, "instance.json")
    if out is None:
        sys.stdout.write(dumps(inst) + "\n")
    else:
        save(inst, out)
        log.info("wrote %s", out)
    return 0


def cmd_lp(args) -> int:
    inst = as_plp(load(args.instance))
    if args.dump:
        Path(args.dump).write_text(lp.dump_lp(inst), encoding="utf-8")
    sol = lp.solve_primal(inst)
    report = lp.verify_duality(inst, sol, lp.TOL)
    if args.json:
        obj = sol.to_dict()
        obj["duality"] = report.to_dict()
        _write_json(obj, _resolve_out(args, "lp.json"))
        return 0
    print(f"objective {sol.objective!r}")
    print(f"dual_objective {sol.dual_objective!r}")
    print(f"iterations {sol.iterations}")
    print(f"duality_gap {report.gap!r}")
    for rid, b in sol.beta_map().items():
        print(f"beta {rid} {float(b)!r}")
    return 0


def cmd_run(args) -> int:
    inst = load(args.instance)
    seed = args.seed
    if isinstance(inst, PlpInstance):
        if args.algo != "dualbase":
            raise UsageError(f"{args.algo} needs a display-ad instance; general instances support dualbase only")
        plp = normalize(inst)
        order = bench.random_order(plp.n_agents, seed)
        prices, alloc = ptas.run_dualbase(plp, order, args.eps, seed, args.training_policy, args.shrink)
        diag = ptas.diagnose_sample(
            normalize(plp.scale_capacity(1.0 / ptas.shrink_factor(args.eps))) if args.shrink else plp,
            order, args.eps, prices,
        )
        record = ptas.run_record(prices, alloc, diag)
        record.update({"algorithm": "dualbase", "seed": seed, "eps": args.eps})
    else:
        order = bench.random_order(inst.n_impressions, seed)
        if args.algo == "hybrid":
            alloc = online.run_hybrid(inst, order, args.eps, seed, args.hybrid_schedule, args.half_life)
        elif args.algo == "dualbase":
            alloc = online.run_dualbase(inst, order, args.eps, seed, args.training_policy, args.shrink)
        else:
            alloc = online.run_online(inst, order, args.algo)
        record = alloc.to_dict()
        record["seed"] = seed
        if args.algo in ("hybrid", "dualbase"):
            record["eps"] = args.eps
    _write_json(record, _resolve_out(args, f"run_{args.algo}.json"))
    return 0


def cmd_fair(args) -> int:
    da = _load_da(args.instance)
    fa = fairness.compute_fair(da, args.policy)
    out = _resolve_out(args, f"fair_{args.policy}.json")
    if args.json or out is not None:
        _write_json(fa.to_dict(da), out)
    else:
        print(f"value {fa.value!r}")
        for a, v in zip(da.advertiser_ids, fa.v):
            print(f"v {a} {float(v)!r}")
    return 0


def cmd_bench(args) -> int:
    da = _instance_or_generated(args)
    res = bench.run_experiment(
        da, args.algos, args.trials, args.eps, args.seed,
        jobs=args.jobs, fair_policy=args.fair_policy, training_policy=args.training_policy,
        shrink=args.shrink, hybrid_schedule=args.hybrid_schedule, timing=args.timing,
        log=log.info,
    )
    d = _out_dir(args)
    csv_path = Path(args.output) if args.output else (d / "bench.csv" if d else None)
    if csv_path is None:
        bench.write_csv(res.reports, sys.stdout)
    else:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        bench.emit_csv(res.reports, csv_path)
        runs = csv_path.parent / "runs"
        summary = {
            "lp_value": res.lp_value,
            "lp_gap": res.lp_gap,
            "fair_value": res.fair_value,
            "summary": {a: vars(s) for a, s in res.summary().items()},
        }
        _write_json(summary, runs / "summary.json")
    sys.stderr.write(res.table() + "\n")
    return 0


def cmd_diag(args) -> int:
    inst = normalize(as_plp(load(args.instance)))
    order = bench.random_order(inst.n_agents, args.seed)
    prices = ptas.train(inst, order, args.eps, args.seed)
    diag = ptas.diagnose_sample(inst, order, args.eps, prices)
    obj = diag.to_dict()
    obj.update({"eps": args.eps, "seed": args.seed, "sample_size": ptas.sample_size(inst.n_agents, args.eps)})
    _write_json(obj, _resolve_out(args, "diag.json"))
    return 0


def cmd_lbdemo(args) -> int:
    rep = bench.lower_bound_demo(args.T, args.seed, args.reps)
    _write_json(rep.to_dict(), _resolve_out(args, f"lbdemo_T{args.T}.json"))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: $SPL_SEED or 0)")
    common.add_argument("--out-dir", default=None, help="output directory (default: $SPL_OUT; stdout if unset)")
    common.add_argument("-o", "--output", default=None, help="output file (overrides --out-dir)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="spl", description="Online stochastic packing and display-ad allocation simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser, metavar="COMMAND")

    g = sub.add_parser("gen", parents=[common], help="generate an instance file")
    g.add_argument("--kind", choices=("synthetic", "lower-bound"), default="synthetic", help="instance family")
    _add_generator_flags(g)
    g.add_argument("--T", type=int, default=2, help="lower-bound parameter T >= 2 (default 2)")
    g.add_argument("--draws", type=int, default=0, help="lower-bound agent count (default 0)")
    g.set_defaults(func=cmd_gen)

    q = sub.add_parser("lp", parents=[common], help="solve the packing LP and print optimum and duals")
    q.add_argument("instance", help="instance JSON (general or display-ad)")
    q.add_argument("--json", action="store_true", help="emit the full solution as JSON")
    q.add_argument("--dump", default=None, help="also write the LP in CPLEX LP text form to this path")
    q.set_defaults(func=cmd_lp)

    r = sub.add_parser("run", parents=[common], help="run one algorithm on one random order")
    r.add_argument("instance", help="instance JSON")
    r.add_argument("--algo", required=True, choices=("greedy", "pd_avg", "pd_exp", "hybrid", "dualbase"), help="algorithm")
    r.add_argument("--eps", type=_eps, default=0.01, help="training fraction (default 0.01)")
    r.add_argument("--training-policy", choices=("skip", "online"), default="skip", help="what DualBase does with sampled agents")
    r.add_argument("--shrink", action="store_true", help="DualBase: shrink capacities by 1/(1+3(eps+eps^2)) before training")
    r.add_argument("--hybrid-schedule", choices=online.SCHEDULES, default="linear", help="HYBRID alpha schedule")
    r.add_argument("--half-life", type=float, default=None, help="HYBRID exponential half-life in impressions")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fair", parents=[common], help="compute the shortest fair allocation")
    f.add_argument("instance", help="display-ad instance JSON")
    f.add_argument("--policy", choices=fairness.POLICIES, default="equal", help="sharing policy (default equal)")
    f.add_argument("--json", action="store_true", help="emit the allocation as JSON")
    f.set_defaults(func=cmd_fair)

    b = sub.add_parser("bench", parents=[common], help="run the experiment protocol and write CSV")
    b.add_argument("instance", nargs="?", default=None, help="display-ad instance JSON (or use generator flags)")
    _add_generator_flags(b)
    b.add_argument("--algos", default=",".join(bench.ALGORITHMS), help="comma-separated algorithms (default all)")
    b.add_argument("--eps", type=_eps, default=0.01, help="training fraction (default 0.01)")
    b.add_argument("--trials", type=_positive_int, default=1, help="number of random orders (default 1)")
    b.add_argument("--jobs", type=_positive_int, default=1, help="parallel trials (default 1)")
    b.add_argument("--fair-policy", choices=fairness.POLICIES, default="equal", help="sharing policy of the reference allocation")
    b.add_argument("--training-policy", choices=("skip", "online"), default="skip", help="what DualBase does with sampled impressions")
    b.add_argument("--shrink", action="store_true", help="DualBase: shrink capacities before training")
    b.add_argument("--hybrid-schedule", choices=online.SCHEDULES, default="linear", help="HYBRID alpha schedule")
    b.add_argument("--timing", action="store_true", help="record wall_ms (otherwise 0, keeping output reproducible)")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("diag", parents=[common], help="sample-concentration diagnostics for one random sample")
    d.add_argument("instance", help="instance JSON")
    d.add_argument("--eps", type=float, default=0.1, help="sample fraction in (0, 1) (default 0.1)")
    d.set_defaults(func=cmd_diag)

    lb = sub.add_parser("lbdemo", parents=[common], help="fixed thresholds versus hindsight on the hard instance")
    lb.add_argument("--T", type=int, choices=(2, 3, 4), default=2, help="instance parameter (default 2)")
    lb.add_argument("--reps", type=_positive_int, default=20_000, help="sampled count vectors when not enumerable")
    lb.set_defaults(func=cmd_lbdemo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.seed is None:
            args.seed = _env_seed()
        return args.func(args)
    except (UsageError, InstanceError, ValueError, KeyError) as exc:
        print(f"spl: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"spl: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
