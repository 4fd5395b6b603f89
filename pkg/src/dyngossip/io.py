"""JSON and CSV formats for distributions, sequences, schedules and metrics.

All JSON is written with sorted keys and fixed separators so equal values give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import EMPTY, CommGraph, GraphSequence, RoundMetrics, Schedule, TokenMatrix, Transcript

METRIC_FIELDS = ("round", "useful_exchanges", "token_gains", "missing_total")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _read(path_or_text) -> dict:
    if isinstance(path_or_text, dict):
        return path_or_text
    p = Path(path_or_text)
    return json.loads(p.read_text())


def _write(path, text: str) -> None:
    Path(path).write_text(text)


# token matrix: {"n", "k", "holders": [[token ids] per node]}

def matrix_to_dict(m: TokenMatrix) -> dict:
    return {"n": m.n, "k": m.k, "holders": m.to_holders()}


def matrix_from_dict(d: dict) -> TokenMatrix:
    return TokenMatrix.from_holders(int(d["n"]), int(d["k"]), d["holders"])


def save_matrix(m: TokenMatrix, path) -> None:
    _write(path, dumps(matrix_to_dict(m)))


def load_matrix(path) -> TokenMatrix:
    return matrix_from_dict(_read(path))


# graph sequence: {"n", "rounds": [[[u, v], ...] per round], "extend": "cycle" | "error"}

def sequence_to_dict(seq: GraphSequence, rounds: int | None = None) -> dict:
    graphs = seq.recorded(rounds)
    extend = seq.extend if seq.length is not None and rounds in (None, seq.length) else "error"
    return {"n": seq.n, "extend": extend, "rounds": [g.edges.tolist() for g in graphs]}


def sequence_from_dict(d: dict) -> GraphSequence:
    n = int(d["n"])
    graphs = [CommGraph(n, (tuple(e) for e in edges)) for edges in d["rounds"]]
    return GraphSequence.from_graphs(graphs, extend=d.get("extend", "error"), n=n)


def save_sequence(seq: GraphSequence, path, rounds: int | None = None) -> None:
    _write(path, dumps(sequence_to_dict(seq, rounds)))


def load_sequence(path) -> GraphSequence:
    return sequence_from_dict(_read(path))


# schedule: {"rounds": [{node: token or null}]}; every node appears, EMPTY is null

def schedule_to_dict(s: Schedule) -> dict:
    return {"rounds": [{str(v): (None if t == EMPTY else int(t)) for v, t in enumerate(row.tolist())}
                       for row in s]}


def schedule_from_dict(d: dict, n: int | None = None) -> Schedule:
    rows = d["rounds"]
    if n is None:
        n = max((int(v) + 1 for row in rows for v in row), default=0)
    out = Schedule()
    for row in rows:
        b = np.full(n, EMPTY, dtype=np.int64)
        for v, t in row.items():
            b[int(v)] = EMPTY if t is None else int(t)
        out.append(b)
    return out


def save_schedule(s: Schedule, path) -> None:
    _write(path, dumps(schedule_to_dict(s)))


def load_schedule(path, n: int | None = None) -> Schedule:
    return schedule_from_dict(_read(path), n)


# metrics CSV

def metrics_csv(metrics: Iterable[RoundMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for i, m in enumerate(metrics, 1):
        w.writerow([i, m.useful_exchanges, m.token_gains, m.missing_total])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict[str, int]]:
    return [{k: int(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def transcript_to_dict(tr: Transcript) -> dict:
    return {
        "initial": matrix_to_dict(tr.initial),
        "final": matrix_to_dict(tr.final),
        "rounds": [{"broadcast": [None if t == EMPTY else int(t) for t in rec.bcast.tolist()],
                    "edges": rec.graph.edges.tolist(),
                    "useful_exchanges": rec.metrics.useful_exchanges,
                    "token_gains": rec.metrics.token_gains,
                    "missing_total": rec.metrics.missing_total} for rec in tr.rounds],
    }


def transcript_from_dict(d: dict) -> Transcript:
    from .model import RoundRecord, execute_round
    init = matrix_from_dict(d["initial"])
    state = init
    records = []
    for rd in d["rounds"]:
        b = np.array([EMPTY if t is None else t for t in rd["broadcast"]], dtype=np.int64)
        g = CommGraph(init.n, (tuple(e) for e in rd["edges"]))
        state, m = execute_round(state, b, g)
        records.append(RoundRecord(b, g, m))
    final = matrix_from_dict(d["final"])
    if final != state:
        raise ValueError("transcript final state does not match its replay")
    return Transcript(init, records, final)
