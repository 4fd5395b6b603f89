"""Command line: ``dyngossip {gen,simulate,offline,gather,derandomize,lowerbound}``.

Exit status is 0 on success, 1 on a usage or input error and 2 when the
input breaks a model contract (infeasible schedule, disconnected graph,
sequence too short).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import io
from .adversary import CSV_FIELDS, StrongAdversary, batch_experiments, lower_bound_experiment
from .generators import GeneratorSpec, generate_sequence
from .model import GossipError, new_distribution, run_online, run_schedule
from .offline import (GossipParams, derandomize_seed_set, flood_windows, gather_all, gather_flood_gossip,
                      log_to_json)
from .strategies import make_strategy

GEN_MODELS = {"gnp": "gnp_repair", "path": "path", "star": "star_rotating", "static": "static",
              "recorded": "recorded"}
ALGOS = ("uniform", "rr", "rarest")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DYNGOSSIP_THREADS", "1")))
    except ValueError:
        return 1


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_gen(a) -> None:
    if a.kind == "distribution":
        if a.k is None:
            raise UsageError("--k is required for a distribution")
        spec = ("bernoulli", a.p) if a.dist == "bernoulli" else "one_token_per_node"
        _write(a.out, io.dumps(io.matrix_to_dict(new_distribution(a.n, a.k, spec, a.seed))))
        return
    graph = None
    if a.model == "static":
        if a.graph is None:
            raise UsageError("--graph EDGES.json is required for the static model")
        graph = io.load_sequence(a.graph).graph(1)
    spec = GeneratorSpec(GEN_MODELS[a.model], a.n, a.seed, p=a.p, graph=graph, file=a.graph)
    seq = generate_sequence(spec, a.rounds)
    _write(a.out, io.dumps(io.sequence_to_dict(seq)))


def cmd_simulate(a) -> None:
    init = io.load_matrix(a.init) if a.init else new_distribution(a.n, a.k, ("bernoulli", a.p), a.seed)
    strat = make_strategy(a.algo, init.n, init.k, a.seed)
    tr = run_online(strat, StrongAdversary(), init, a.max_rounds)
    _write(a.out, io.dumps(io.transcript_to_dict(tr)))
    if a.csv:
        _write(a.csv, io.metrics_csv(tr.metrics()))


def cmd_offline(a) -> None:
    seq = io.load_sequence(a.seq)
    init = io.load_matrix(a.init)
    mode = "derandomized" if a.derandomize else "random"
    params = GossipParams.for_size(init.n, init.k, mode)
    res = gather_flood_gossip(seq, init, params, a.seed)
    run_schedule(init, seq, res.schedule)
    _write(a.out, io.dumps(io.schedule_to_dict(res.schedule)))
    if a.log:
        _write(a.log, log_to_json(res.log) + "\n")


def cmd_gather(a) -> None:
    seq = io.load_sequence(a.seq)
    init = io.load_matrix(a.init)
    sched = gather_all(seq, init, a.target, a.start, a.rounds)
    _write(a.out, io.dumps(io.schedule_to_dict(sched)))


def cmd_derandomize(a) -> None:
    seq = io.load_sequence(a.seq)
    params = GossipParams.for_size(seq.n, a.k, "derandomized")
    res = derandomize_seed_set(seq, flood_windows(params, a.k), params.s)
    _write(a.out, io.dumps(res.to_dict()))


def cmd_lowerbound(a) -> None:
    if a.trials <= 1:
        rec = lower_bound_experiment(a.n, a.k, a.algo, a.seed, a.max_rounds)
        _write(a.out, rec.to_json() + "\n")
        return
    recs = batch_experiments(a.n, a.k, a.algo, range(a.seed, a.seed + a.trials), a.max_rounds, _threads())
    rows = [r.csv_row() for r in recs]
    import io as _io
    buf = _io.StringIO()
    w = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(a.csv or a.out, buf.getvalue())


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dyngossip", description="k-gossip on dynamic networks")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a graph sequence or a token distribution")
    g.add_argument("--kind", choices=("sequence", "distribution"), default="sequence")
    g.add_argument("--model", choices=sorted(GEN_MODELS), default="gnp")
    g.add_argument("--dist", choices=("bernoulli", "single"), default="bernoulli")
    g.add_argument("--p", type=float, default=None)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int)
    g.add_argument("--rounds", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--graph", help="sequence file whose first graph is used by --model static")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("simulate", help="online run against the strong adversary")
    s.add_argument("--n", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--p", type=float, default=0.75)
    s.add_argument("--init")
    s.add_argument("--algo", choices=ALGOS, default="rr")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-rounds", type=int, default=1000)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("offline", help="gather-and-flood schedule for a recorded sequence")
    o.add_argument("--seq", required=True)
    o.add_argument("--init", required=True)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--derandomize", action="store_true")
    o.add_argument("--out")
    o.add_argument("--log")
    o.set_defaults(func=cmd_offline)

    ga = sub.add_parser("gather", help="schedule bringing every token to one node")
    ga.add_argument("--seq", required=True)
    ga.add_argument("--init", required=True)
    ga.add_argument("--target", type=int, required=True)
    ga.add_argument("--start", type=int, default=1)
    ga.add_argument("--rounds", type=int)
    ga.add_argument("--out")
    ga.set_defaults(func=cmd_gather)

    d = sub.add_parser("derandomize", help="seed set by conditional expectations")
    d.add_argument("--seq", required=True)
    d.add_argument("--k", type=int, required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_derandomize)

    lb = sub.add_parser("lowerbound", help="strong-adversary experiment from a Bernoulli(3/4) start")
    lb.add_argument("--n", type=int, required=True)
    lb.add_argument("--k", type=int, required=True)
    lb.add_argument("--algo", choices=ALGOS, default="rr")
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--trials", type=int, default=1)
    lb.add_argument("--max-rounds", type=int)
    lb.add_argument("--out")
    lb.add_argument("--csv")
    lb.set_defaults(func=cmd_lowerbound)
    return p


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if args.command == "gen" and args.p is None:
            args.p = 0.1 if args.kind == "sequence" else 0.75
        if args.command == "simulate" and not args.init and (args.n is None or args.k is None):
            raise UsageError("simulate needs --init or both --n and --k")
        args.func(args)
    except UsageError as exc:
        print(f"dyngossip: error: {exc}", file=sys.stderr)
        return 1
    except (GossipError, IndexError) as exc:
        print(f"dyngossip: contract violation: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"dyngossip: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())
