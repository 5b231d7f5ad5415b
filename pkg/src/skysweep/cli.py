"""Command-line front end.

Exit codes: 0 on success, 1 for domain errors (bad data, infeasible
requests, model/instance mismatches), 2 for usage errors.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from . import baselines
from . import evaluate as ev
from . import instancegen as geninst
from . import network as net
from . import policy as pol
from . import training
from .env import solution_to_json, solution_value
from .errors import SkysweepError, UsageError
from .milp import export_milp, write_lp
from .validator import validate_solution


def _cmd_generate(args):
    gen_cfg = geninst.GenConfig(grid_side=args.grid_rows, grid_cols=args.grid_cols,
                                prune_keep_fraction=args.keep_fraction,
                                perturb_magnitude=args.perturb, seed=args.seed)
    try:
        attrs = geninst.parse_variant(args.variant) if args.variant else None
    except ValueError as exc:
        raise UsageError(str(exc))
    sample_cfg = geninst.SampleConfig(attributes=attrs,
                                      multi_depot=attrs.multi_depot if attrs else False)
    rng = np.random.default_rng(args.seed)
    instances = [geninst.generate_instance(gen_cfg, sample_cfg, rng)
                 for _ in range(args.count)]
    if args.count == 1 and not args.out.endswith(os.sep) and args.out.endswith(".json"):
        with open(args.out, "w") as fh:
            fh.write(geninst.instance_to_json(instances[0]))
        print(args.out)
    else:
        os.makedirs(args.out, exist_ok=True)
        for i, inst in enumerate(instances):
            path = os.path.join(args.out, f"instance_{i:04d}.json")
            with open(path, "w") as fh:
                fh.write(geninst.instance_to_json(inst))
        print(f"wrote {args.count} instances to {args.out}")
    return 0


def _cmd_transform(args):
    with open(args.network) as fh:
        road = net.road_from_json(fh.read())
    depots = args.depot if args.depot else None
    tn = net.transform(road, depots=depots)
    with open(args.out, "w") as fh:
        fh.write(net.transformed_to_json(tn))
    print(f"{tn.n_nodes} nodes ({tn.n_junctions} junctions, {tn.n_sites} sites)")
    return 0


def _cmd_ingest(args):
    with open(args.nodes) as fh:
        node_text = fh.read()
    with open(args.links) as fh:
        link_text = fh.read()
    road = net.ingest_tntp(node_text, link_text, value_seed=args.value_seed)
    with open(args.out, "w") as fh:
        fh.write(net.road_to_json(road))
    print(f"{len(road.node_ids)} nodes, {len(road.links)} links")
    return 0


def _load_instance(path):
    with open(path) as fh:
        return geninst.instance_from_json(fh.read())


def _cmd_solve(args):
    inst = _load_instance(args.instance)
    if args.method == "greedy":
        solution = baselines.greedy_heuristic(inst)
    elif args.method == "random":
        solution = baselines.random_policy_rollout(
            inst, np.random.default_rng(args.seed))
    elif args.method == "oracle":
        solution = baselines.exact_oracle(inst)
    elif args.method == "policy":
        if not args.checkpoint:
            raise UsageError("--checkpoint is required with --method policy")
        params = pol.load_checkpoint(args.checkpoint)
        with ad.no_grad():
            sols, _ = pol.run_rollouts([inst], params, 1, mode="greedy")
        solution = sols[0][0]
    else:  # pragma: no cover - argparse choices guard this
        raise UsageError(f"unknown method {args.method!r}")
    report = validate_solution(inst, solution)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(solution_to_json(solution))
    print(f"value={solution.total_value:.6f} feasible={report.feasible}")
    for violation in report.violations:
        print(f"  violation: {violation}", file=sys.stderr)
    return 0 if report.feasible else 1


def _train_config(args):
    return training.TrainConfig(
        epochs=args.epochs, iters_per_epoch=args.iters,
        batch_size=args.batch_size, group_size=args.group_size,
        lr=args.lr, seed=args.seed, multi_depot=args.multi_depot,
        checkpoint_every=args.checkpoint_every, out_dir=args.out_dir)


def _cmd_train(args):
    cfg = _train_config(args)
    _, metrics = training.train(cfg)
    if metrics:
        last = metrics[-1]
        print(f"epoch {last['epoch']}: mean_reward={last['mean_reward']:.4f}")
    print(os.path.join(args.out_dir, "policy.npz"))
    return 0


def _cmd_finetune(args):
    params = pol.load_checkpoint(args.checkpoint)
    cfg = _train_config(args)
    _, metrics = training.finetune_md(params, cfg)
    if metrics:
        last = metrics[-1]
        print(f"epoch {last['epoch']}: mean_reward={last['mean_reward']:.4f}")
    print(os.path.join(args.out_dir, "policy.npz"))
    return 0


def _cmd_eval(args):
    names = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not names:
        raise UsageError("--methods must list at least one method")
    methods = {}
    for name in names:
        if name == "policy":
            if not args.checkpoint:
                raise UsageError("--checkpoint is required to evaluate policy")
            methods[name] = ev.policy_method(pol.load_checkpoint(args.checkpoint))
        elif name == "greedy":
            methods[name] = ev.greedy_method()
        elif name == "random":
            methods[name] = ev.random_method(args.seed)
        elif name == "oracle":
            methods[name] = ev.oracle_method()
        else:
            raise UsageError(f"unknown method {name!r}")
    reference = args.reference or names[0]
    sets = {}
    for fname in sorted(os.listdir(args.instance_dir)):
        if not fname.endswith(".json"):
            continue
        inst = _load_instance(os.path.join(args.instance_dir, fname))
        sets.setdefault(inst.attrs.code(), []).append(inst)
    if not sets:
        raise UsageError(f"no instance JSON files in {args.instance_dir}")
    records = ev.evaluate(sets, methods, reference)
    if args.out_csv:
        ev.write_gap_csv(records, args.out_csv)
    if args.out_json:
        ev.write_gap_json(records, args.out_json)
    for r in records:
        print(f"{r.variant:10s} {r.method:8s} value={r.value:8.4f} "
              f"gap={ev.format_gap(r.gap):>7s}% time={r.time_s:.4f}s")
    return 0


def _cmd_export_milp(args):
    inst = _load_instance(args.instance)
    model = export_milp(inst)
    with open(args.out, "w") as fh:
        fh.write(write_lp(model))
    print(f"{len(model.binaries)} binaries, {len(model.rows)} rows")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skysweep",
        description="Drone survey routing over damaged road networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample synthetic instances")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", default=None,
                   help="attribute code, e.g. basic, or, tw, md, or-tw-md")
    p.add_argument("--grid-rows", type=int, default=4)
    p.add_argument("--grid-cols", type=int, default=None)
    p.add_argument("--keep-fraction", type=float, default=0.7)
    p.add_argument("--perturb", type=float, default=0.3)
    p.add_argument("--out", required=True,
                   help="output .json file (count=1) or directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("transform", help="road network -> survey graph")
    p.add_argument("--network", required=True, help="road-network JSON file")
    p.add_argument("--depot", type=int, action="append",
                   help="junction id to use as a depot (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("ingest", help="parse TNTP node/link files")
    p.add_argument("--nodes", required=True)
    p.add_argument("--links", required=True)
    p.add_argument("--value-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", required=True,
                   choices=("greedy", "random", "oracle", "policy"))
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write solution JSON here")
    p.set_defaults(func=_cmd_solve)

    for name, helptext in (("train", "train a routing policy"),
                           ("finetune", "adapt a policy to multi-depot")):
        p = sub.add_parser(name, help=helptext)
        if name == "finetune":
            p.add_argument("--checkpoint", required=True)
        p.add_argument("--epochs", type=int, default=6)
        p.add_argument("--iters", type=int, default=60)
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--group-size", type=int, default=8)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--multi-depot", action="store_true")
        p.add_argument("--checkpoint-every", type=int, default=0)
        p.add_argument("--out-dir", required=True)
        p.set_defaults(func=_cmd_train if name == "train" else _cmd_finetune)

    p = sub.add_parser("eval", help="compare methods over instance sets")
    p.add_argument("--instance-dir", required=True)
    p.add_argument("--methods", default="greedy,random",
                   help="comma list from greedy,random,oracle,policy")
    p.add_argument("--reference", default=None,
                   help="method anchoring the gaps (default: first listed)")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-milp", help="write the LP formulation")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_milp)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SkysweepError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
