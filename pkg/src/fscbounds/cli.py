"""Command-line front end.

Subcommands:
  ub              dual upper bound for a channel / Q-graph / test dist
  lb              achievable rate of a graph-based encoder
  sweep           epsilon sweep producing CSV rows (upper + lower bounds)
  enumerate       count (optionally print) valid Q-graphs
  verify-bellman  residual-check a (rho, h) certificate against an MDP dump
  transform       emit the unifilar reformulation of a finite-memory channel
  dump            parse and echo a channel file (bit-exact round trip)

Exit codes: 0 success, 1 usage error, 2 numeric failure (with a
machine-readable reason on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import analytic, channel, dualbound, lowerbound, mdp, qgraph, testdist
from .errors import FscBoundsError

CSV_HEADER = "epsilon,ub,lb,gap,qgraph_id,runtime_ms"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


@dataclass
class SweepRow:
    epsilon: float
    ub: float
    lb: float | None
    qgraph_id: str
    runtime_ms: int

    @property
    def gap(self) -> float | None:
        return None if self.lb is None else self.ub - self.lb

    def csv(self) -> str:
        lb = "" if self.lb is None else repr(self.lb)
        gap = "" if self.gap is None else repr(self.gap)
        return f"{self.epsilon!r},{self.ub!r},{lb},{gap},{self.qgraph_id},{self.runtime_ms}"


def _load_channel_arg(args) -> channel.ChannelKernel:
    if getattr(args, "channel", None):
        return channel.load_channel(args.channel)
    if getattr(args, "builtin", None):
        return channel.builtin(args.builtin, getattr(args, "epsilon", None))
    raise SystemExit(1)


def _load_qgraph_arg(args, nY: int) -> qgraph.QGraph:
    name = args.qgraph
    try:
        return qgraph.registry_qgraph(name, nY)
    except FscBoundsError:
        return qgraph.load_qgraph(name)


def _state_tag(lab) -> str:
    bel = ",".join(f"{v:.6g}" for v in lab.belief)
    return f"(beta=[{bel}],q={lab.q + 1})"


def _print_ub_result(T, result, as_json: bool):
    rows = [[float(v) for v in row] for row in T.t]
    if as_json:
        doc = {
            "rho_upper_bits": result.rho,
            "multichain": result.multichain,
            "test_dist": rows,
            "states": [
                {
                    "belief": list(lab.belief),
                    "q": lab.q + 1,
                    "policy_x": int(result.solution.policy[i]),
                    "h": float(result.solution.h[i]),
                }
                for i, lab in enumerate(result.labels)
            ],
            "solver": result.solution.method,
            "bellman_residual": result.solution.residual,
        }
        if result.per_initial_gain:
            doc["per_initial_gain"] = {
                _state_tag(lab): v for lab, v in result.per_initial_gain.items()
            }
        print(json.dumps(doc, indent=1))
        return
    print(f"rho_upper_bits: {result.rho!r}")
    print(f"solver: {result.solution.method} (residual {result.solution.residual:.3e})")
    print(f"multichain: {str(result.multichain).lower()}")
    print("test_dist:")
    for q, row in enumerate(rows):
        print(f"  q={q + 1}: " + " ".join(repr(v) for v in row))
    print("policy / h:")
    for i, lab in enumerate(result.labels):
        print(
            f"  {_state_tag(lab)}: x={int(result.solution.policy[i])}"
            f"  h={result.solution.h[i]!r}"
        )
    if result.per_initial_gain:
        print("per_initial_gain:")
        for lab, v in result.per_initial_gain.items():
            print(f"  {_state_tag(lab)}: {v!r}")


def _cmd_ub(args) -> int:
    ch = _load_channel_arg(args)
    g = _load_qgraph_arg(args, ch.nY)
    if args.testdist:
        T = testdist.load_testdist(g, args.testdist)
        result = dualbound.upper_bound(ch, g, T)
    else:
        opts = dualbound.OptimizeOptions(starts=args.starts, seed=args.seed)
        T, result = dualbound.optimize_test_distribution(ch, g, opts)
    if args.dump_mdp:
        m, _ = dualbound.build_finite_dual_mdp(ch, g, T)
        with open(args.dump_mdp, "w", encoding="utf-8") as fh:
            fh.write(mdp.dump_mdp(m))
    _print_ub_result(T, result, args.json)
    return 0


def _cmd_lb(args) -> int:
    ch = _load_channel_arg(args)
    cls = channel.classify(ch)
    if cls.is_finite_memory:
        ch = channel.transform_to_unifilar(ch, cls).channel
    g = _load_qgraph_arg(args, ch.nY)
    enc = lowerbound.load_encoder(g, ch.nS, ch.nX, args.encoder)
    report = lowerbound.check_bcjr_invariance(ch, enc, tol=args.tol)
    rate = lowerbound.achievable_rate(ch, enc, bcjr_tol=args.tol)
    if args.json:
        print(
            json.dumps(
                {
                    "rate_bits": rate,
                    "bcjr_max_violation": report.max_violation,
                    "bcjr_passed": report.passed,
                },
                indent=1,
            )
        )
    else:
        print(f"rate_bits: {rate!r}")
        print(
            f"bcjr: max_violation={report.max_violation:.3e} "
            f"tol={report.tol:.1e} passed={str(report.passed).lower()}"
        )
    return 0


def _sweep_point(job) -> SweepRow:
    kind, eps, seed, starts = job
    t0 = time.perf_counter()
    if kind == "nost":
        ch = channel.builtin("NOST", eps)
        g = qgraph.markov_qgraph(1, 2)
        opts = dualbound.OptimizeOptions(starts=starts, seed=seed)
        _, result = dualbound.optimize_test_distribution(ch, g, opts)
        tr = channel.transform_to_unifilar(ch)
        enc = analytic.nost_encoder(eps)
        lb = lowerbound.achievable_rate(tr.channel, enc)
        gid = "markov-1"
    else:
        ch = channel.builtin("NISING", eps)
        g = qgraph.registry_qgraph("appendix-d4")
        opts = dualbound.OptimizeOptions(starts=starts, seed=seed)
        _, result = dualbound.optimize_test_distribution(ch, g, opts)
        tr = channel.transform_to_unifilar(ch)
        enc, rep = lowerbound.search_encoder(tr.channel, g, seed=seed)
        lb = rep.rate if rep.bcjr_ok else None
        gid = "appendix-d4"
    ms = int(round(1000.0 * (time.perf_counter() - t0)))
    return SweepRow(epsilon=eps, ub=result.rho, lb=lb, qgraph_id=gid, runtime_ms=ms)


def _cmd_sweep(args) -> int:
    kind = args.builtin.lower()
    if kind not in ("nost", "nising"):
        raise SystemExit(1)
    eps_values = np.linspace(args.eps_from, args.eps_to, args.steps)
    jobs = [(kind, float(e), args.seed, args.starts) for e in eps_values]
    if args.workers > 1:
        import multiprocessing

        with multiprocessing.Pool(args.workers) as pool:
            rows = pool.map(_sweep_point, jobs)
    else:
        rows = [_sweep_point(j) for j in jobs]
    lines = [CSV_HEADER] + [row.csv() for row in rows]
    text = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_enumerate(args) -> int:
    if args.print_tables:
        count = 0
        for g in qgraph.enumerate_valid(args.nodes, args.ny, canonical=args.canonical):
            count += 1
            sys.stdout.write(qgraph.dump_qgraph(g) + "\n")
        print(count)
        return 0
    count = qgraph.count_valid(
        args.nodes, args.ny, canonical=args.canonical, workers=args.workers
    )
    print(count)
    return 0


def _cmd_verify_bellman(args) -> int:
    m = mdp.load_mdp(args.mdp_dump)
    with open(args.h, "r", encoding="utf-8") as fh:
        h = np.asarray([float(v) for v in fh.read().split()])
    report = mdp.verify_bellman(m, args.rho, h, args.tol)
    doc = {
        "max_residual": report.max_residual,
        "tol": report.tol,
        "passed": report.passed,
        "argmax_actions": report.argmax_actions,
        "ties": report.ties,
    }
    print(json.dumps(doc, indent=1))
    if not report.passed:
        sys.stderr.write(
            json.dumps({"error": "BellmanResidual", "max_residual": report.max_residual})
            + "\n"
        )
        return 2
    return 0


def _cmd_transform(args) -> int:
    ch = _load_channel_arg(args)
    tr = channel.transform_to_unifilar(ch)
    doc = json.loads(channel.dump_channel(tr.channel))
    doc["state_labels"] = [
        {"inputs": list(xs), "outputs": list(ys)} for xs, ys in tr.window_labels
    ]
    print(json.dumps(doc, indent=1))
    return 0


def _cmd_dump(args) -> int:
    ch = channel.load_channel(args.channel)
    print(channel.dump_channel(ch))
    return 0


def _add_channel_args(p: argparse.ArgumentParser):
    p.add_argument("--channel", help="channel JSON file")
    p.add_argument("--builtin", help="built-in channel name (nost, nising, ising, post, bsc)")
    p.add_argument("--epsilon", type=float, default=None, help="builtin parameter")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="fscbounds", description=__doc__.strip().splitlines()[0])
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ub", parents=[], help="dual upper bound")
    _add_channel_args(p)
    p.add_argument("--qgraph", required=True, help="registry name or file")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--testdist", help="test distribution file (rows of probabilities)")
    group.add_argument("--optimize", action="store_true",
                       help="optimise the test distribution (default when no file given)")
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-mdp", help="write the assembled MDP as JSON")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_ub)

    p = sub.add_parser("lb", help="achievable rate of a graph-based encoder")
    _add_channel_args(p)
    p.add_argument("--qgraph", required=True)
    p.add_argument("--encoder", required=True, help="encoder file: a row of P(x|.) per (s,q)")
    p.add_argument("--tol", type=float, default=lowerbound.BCJR_TOL)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_lb)

    p = sub.add_parser("sweep", help="epsilon sweep with CSV output")
    p.add_argument("--builtin", required=True, choices=["nost", "nising"])
    p.add_argument("--eps-from", type=float, required=True)
    p.add_argument("--eps-to", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--csv", help="output path (default stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("enumerate", help="count valid Q-graphs")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--canonical", action="store_true",
                   help="count orbits under node relabeling instead of labeled tables")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--print-tables", action="store_true",
                   help="stream every table (small sizes only)")
    p.set_defaults(func=_cmd_enumerate)

    p = sub.add_parser("verify-bellman", help="check a (rho, h) certificate")
    p.add_argument("--mdp-dump", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--h", required=True, help="file of nZ reals")
    p.add_argument("--tol", type=float, required=True)
    p.set_defaults(func=_cmd_verify_bellman)

    p = sub.add_parser("transform", help="finite-memory to unifilar reformulation")
    _add_channel_args(p)
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("dump", help="parse and echo a channel file")
    p.add_argument("--channel", required=True)
    p.set_defaults(func=_cmd_dump)

    return root


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except FileNotFoundError as e:
        sys.stderr.write(json.dumps({"error": "FileNotFound", "message": str(e)}) + "\n")
        return 1
    except FscBoundsError as e:
        sys.stderr.write(
            json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n"
        )
        return 2
    except np.linalg.LinAlgError as e:
        sys.stderr.write(json.dumps({"error": "LinAlgError", "message": str(e)}) + "\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
