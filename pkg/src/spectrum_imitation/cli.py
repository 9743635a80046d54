"""Command-line entry point: ``run``, ``sweep``, ``cluster`` and ``gtable``."""

import argparse
import sys
from dataclasses import replace

from .contention import grab_table
from .experiment import run_experiment, sweep
from .graph import GraphFormatError, build_cluster_graph, components, read_edge_list
from .scenario import ScenarioError, parse_scenario, validate


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _load(args):
    s = parse_scenario(args.scenario)
    overrides = {"seed": args.seed}
    for attr in ("periods", "delay", "mode"):
        if getattr(args, attr, None) is not None:
            overrides[attr] = getattr(args, attr)
    if getattr(args, "meanfield", False):
        overrides["meanfield"] = True
    s = replace(s, **overrides)
    validate(s)
    return s


def cmd_run(args):
    row = run_experiment(_load(args), args.out)
    print(f"system throughput {row['system_throughput']:.4f} Mbps, jain {row['jain']:.4f}, "
          f"poi {row['poi']:.4f}, equilibrium {'yes' if row['equilibrium_passed'] else 'no'}")
    return 0


def cmd_sweep(args):
    rows = sweep(_load(args), args.out, users=args.users, delays=args.delays, seeds=args.seeds,
                 workers=args.workers)
    print(f"{len(rows)} runs written to {args.out}")
    return 0


def cmd_cluster(args):
    graph = read_edge_list(args.graph)
    cg = build_cluster_graph(graph)
    print(f"users {graph.n_users} clusters {cg.n_clusters} components {len(components(graph))}")
    for k, members in enumerate(cg.members):
        nbrs = " ".join(str(j) for j in sorted(cg.communicating(k)))
        print(f"cluster {k} size {len(members)} members {' '.join(map(str, sorted(members)))} neighbors {nbrs or '-'}")
    return 0


def cmd_gtable(args):
    print("k,g,k_g")
    for k, g, kg in grab_table(args.lambda_max, args.kmax):
        print(f"{k},{g:.12g},{kg:.12g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="spectrum-imitation", description="Imitation-based spectrum sharing simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("scenario", help="scenario file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", required=True, type=_u64, help="master seed")
        sp.add_argument("--periods", type=int)
        sp.add_argument("--delay", type=int)
        sp.add_argument("--mode", choices=("hom", "het"))
        sp.add_argument("--meanfield", action="store_true", help="also write the mean-field trajectory")

    r = sub.add_parser("run", help="run one scenario")
    scenario_args(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="grid over user counts, delays and seeds")
    scenario_args(s)
    s.add_argument("--users", type=_int_list)
    s.add_argument("--delays", type=_int_list)
    s.add_argument("--seeds", type=_int_list)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("cluster", help="print the cluster graph of an edge-list file")
    c.add_argument("graph")
    c.set_defaults(func=cmd_cluster)

    g = sub.add_parser("gtable", help="print the channel-grab probability table")
    g.add_argument("--lambda-max", type=int, required=True)
    g.add_argument("--kmax", type=int, required=True)
    g.set_defaults(func=cmd_gtable)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, GraphFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
