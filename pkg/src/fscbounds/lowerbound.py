"""Achievable-rate lower bounds for unifilar channels from graph-based
encoders.

An encoder P(x | s, q) together with a Q-graph induces a Markov chain
on (state, node) pairs. When the encoder is belief-invariant, meaning
the posterior over the channel state after each step depends on the
history only through the graph node (checked numerically against the
stationary distribution), the single-letter rate I(X, S; Y | Q) under
the stationary law is an achievable feedback rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import closed_classes, period_of_component, stationary_power, successors_from_matrix
from .channel import ChannelKernel, classify
from .errors import (
    BcjrViolated,
    DimensionMismatch,
    NotStochastic,
    NotUnifilar,
    PeriodicClass,
)
from .info import entropy_bits
from .qgraph import QGraph

BCJR_TOL = 1e-9
ROW_TOL = 1e-12


@dataclass(frozen=True)
class GraphEncoder:
    """Input distribution table p[s][q][x] = P(x | s, q) on a Q-graph."""

    graph: QGraph
    p: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.p, dtype=float))
        if arr.ndim != 3 or arr.shape[1] != self.graph.nQ:
            raise DimensionMismatch(
                f"encoder shape {arr.shape} does not look like (nS, nQ, nX)"
            )
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise NotStochastic(("encoder",), float("nan"))
        sums = arr.sum(axis=2)
        worst = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
        if abs(sums[worst] - 1.0) > ROW_TOL:
            raise NotStochastic(tuple(int(i) for i in worst), float(sums[worst] - 1.0))
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)


@dataclass
class SQChain:
    """Chain over (state, node) pairs: transition matrix, stationary
    distribution on the closed class containing the start pair, and the
    class structure report."""

    nS: int
    nQ: int
    P: np.ndarray
    pi: np.ndarray             # over all (s, q), zero off the start class
    start: tuple[int, int]
    start_class: list[int] | None
    start_class_period: int | None
    classes: list[list[int]]

    def idx(self, s: int, q: int) -> int:
        return s * self.nQ + q

    def pi_sq(self) -> np.ndarray:
        return self.pi.reshape(self.nS, self.nQ)


@dataclass(frozen=True)
class BcjrReport:
    max_violation: float
    tol: float
    passed: bool
    entries: list  # (q, y, q_next, violation)


def _unifilar_tables(ch: ChannelKernel):
    cls = classify(ch)
    if not cls.is_unifilar:
        raise NotUnifilar(
            "lower bound requires a unifilar channel; reformulate finite-memory "
            "channels first"
        )
    return ch.output_law(), cls.f


def build_sq_chain(
    ch: ChannelKernel, enc: GraphEncoder, s0: int = 0, q0: int = 0
) -> SQChain:
    """Explicit (state, node) transition matrix under channel and
    encoder, with the stationary distribution of the closed class that
    contains (s0, q0), found by damped power iteration to a 1e-14
    one-step residual."""
    out, f = _unifilar_tables(ch)
    nS, nQ, nX, nY = ch.nS, enc.graph.nQ, ch.nX, ch.nY
    if enc.p.shape != (nS, nQ, nX):
        raise DimensionMismatch(
            f"encoder shape {enc.p.shape} != ({nS}, {nQ}, {nX})"
        )
    if enc.graph.nY != nY:
        raise DimensionMismatch("graph output alphabet differs from the channel's")
    n = nS * nQ
    P = np.zeros((n, n))
    phi = enc.graph.phi
    for s in range(nS):
        for q in range(nQ):
            z = s * nQ + q
            for x in range(nX):
                px = enc.p[s, q, x]
                if px == 0.0:
                    continue
                for y in range(nY):
                    pr = px * out[s, x, y]
                    if pr == 0.0:
                        continue
                    z_next = int(f[x, y, s]) * nQ + int(phi[q, y])
                    P[z, z_next] += pr

    succ = successors_from_matrix(P)
    classes = closed_classes(succ)
    zstart = s0 * nQ + q0
    start_class = None
    for cls_states in classes:
        if zstart in cls_states:
            start_class = cls_states
            break
    pi = np.zeros(n)
    period = None
    if start_class is not None:
        sub = P[np.ix_(start_class, start_class)]
        pi_sub = stationary_power(sub, tol=1e-14)
        pi[start_class] = pi_sub
        period = period_of_component(succ, start_class)
    return SQChain(
        nS=nS, nQ=nQ, P=P, pi=pi, start=(s0, q0),
        start_class=start_class, start_class_period=period, classes=classes,
    )


def check_bcjr_invariance(
    ch: ChannelKernel,
    enc: GraphEncoder,
    tol: float = BCJR_TOL,
    s0: int = 0,
    q0: int = 0,
    chain: SQChain | None = None,
) -> BcjrReport:
    """Belief-invariance test: for every node q with stationary mass and
    every output y with positive probability, the one-step posterior over
    the next channel state must equal the stationary conditional at the
    successor node phi(q, y)."""
    out, f = _unifilar_tables(ch)
    if chain is None:
        chain = build_sq_chain(ch, enc, s0=s0, q0=q0)
    nS, nQ, nX, nY = chain.nS, chain.nQ, ch.nX, ch.nY
    pi_sq = chain.pi_sq()
    pi_q = pi_sq.sum(axis=0)
    phi = enc.graph.phi

    entries = []
    max_violation = 0.0
    for q in range(nQ):
        if pi_q[q] <= 0.0:
            continue
        cond_q = pi_sq[:, q] / pi_q[q]
        for y in range(nY):
            post = np.zeros(nS)
            den = 0.0
            for s in range(nS):
                for x in range(nX):
                    w = cond_q[s] * enc.p[s, q, x] * out[s, x, y]
                    if w == 0.0:
                        continue
                    post[int(f[x, y, s])] += w
                    den += w
            if den <= 0.0:
                continue
            post /= den
            q_next = int(phi[q, y])
            if pi_q[q_next] <= 0.0:
                continue
            target = pi_sq[:, q_next] / pi_q[q_next]
            v = float(np.abs(post - target).max())
            entries.append((q, y, q_next, v))
            max_violation = max(max_violation, v)
    return BcjrReport(
        max_violation=max_violation, tol=tol, passed=bool(max_violation <= tol),
        entries=entries,
    )


def _rate_from_chain(ch: ChannelKernel, enc: GraphEncoder, chain: SQChain) -> float:
    """I(X, S; Y | Q) in bits under the chain's stationary law."""
    out, _ = _unifilar_tables(ch)
    nS, nQ = chain.nS, chain.nQ
    pi_sq = chain.pi_sq()
    pi_q = pi_sq.sum(axis=0)
    rate = 0.0
    for q in range(nQ):
        if pi_q[q] <= 0.0:
            continue
        cond_q = pi_sq[:, q] / pi_q[q]
        joint = cond_q[:, None] * enc.p[:, q, :]     # (s, x)
        p_y = np.einsum("sx,sxy->y", joint, out)
        h_y = entropy_bits(p_y)
        h_y_given = float(np.sum(joint * np.stack(
            [[entropy_bits(out[s, x]) for x in range(ch.nX)] for s in range(nS)]
        )))
        rate += pi_q[q] * (h_y - h_y_given)
    return rate


def achievable_rate(
    ch: ChannelKernel,
    enc: GraphEncoder,
    s0: int = 0,
    q0: int = 0,
    bcjr_tol: float = BCJR_TOL,
) -> float:
    """Achievable feedback rate of a belief-invariant graph encoder.

    Requires (s0, q0) to sit inside an aperiodic closed communicating
    class of the induced chain, and the encoder to pass the invariance
    check at ``bcjr_tol``.
    """
    chain = build_sq_chain(ch, enc, s0=s0, q0=q0)
    if chain.start_class is None:
        raise PeriodicClass(
            f"start pair (s0={s0}, q0={q0}) is not inside a closed communicating class"
        )
    if chain.start_class_period != 1:
        raise PeriodicClass(
            f"closed class of (s0={s0}, q0={q0}) has period {chain.start_class_period}"
        )
    report = check_bcjr_invariance(ch, enc, tol=bcjr_tol, chain=chain)
    if not report.passed:
        raise BcjrViolated(
            f"belief invariance violated by {report.max_violation:.3e} (tol {bcjr_tol:.1e})"
        )
    return _rate_from_chain(ch, enc, chain)


# ---------------------------------------------------------------------------
# Best-effort encoder search. There is no known closed-form algorithm for
# maximising the rate under the invariance constraint; this alternates
# coordinate rate-ascent passes with an increasing penalty on the
# invariance violation (pressure toward the fixed point of the posterior
# recursion). Output is only a certified lower bound when the returned
# report passes the invariance check.
# ---------------------------------------------------------------------------

@dataclass
class EncoderSearchReport:
    rate: float
    violation: float
    bcjr_ok: bool
    start_index: int


def _encoder_from_logits(graph: QGraph, nS: int, nX: int, logits: np.ndarray) -> GraphEncoder:
    full = np.concatenate([logits.reshape(nS, graph.nQ, nX - 1),
                           np.zeros((nS, graph.nQ, 1))], axis=2)
    full -= full.max(axis=2, keepdims=True)
    p = np.exp(full)
    p /= p.sum(axis=2, keepdims=True)
    return GraphEncoder(graph=graph, p=p)


def search_encoder(
    ch: ChannelKernel,
    graph: QGraph,
    starts: int = 4,
    sweeps: int = 12,
    seed: int = 0,
    s0: int = 0,
    q0: int = 0,
    bcjr_tol: float = BCJR_TOL,
) -> tuple[GraphEncoder, EncoderSearchReport]:
    from .dualbound import _golden_min

    _unifilar_tables(ch)  # fail fast on non-unifilar channels
    nS, nX = ch.nS, ch.nX
    n_par = nS * graph.nQ * (nX - 1)
    rng = np.random.default_rng(seed)
    start_points = [np.zeros(n_par)]
    for _ in range(max(0, starts - 1)):
        start_points.append(rng.normal(scale=1.0, size=n_par))

    def score(logits: np.ndarray, penalty: float) -> tuple[float, float, float]:
        enc = _encoder_from_logits(graph, nS, nX, logits)
        chain = build_sq_chain(ch, enc, s0=s0, q0=q0)
        if chain.start_class is None or chain.start_class_period != 1:
            return -np.inf, -np.inf, np.inf
        report = check_bcjr_invariance(ch, enc, tol=bcjr_tol, chain=chain)
        rate = _rate_from_chain(ch, enc, chain)
        return rate - penalty * report.max_violation, rate, report.max_violation

    best = None
    for idx, x in enumerate(start_points):
        x = x.copy()
        cur, rate, viol = score(x, 10.0)
        for sweep in range(sweeps):
            penalty = 10.0 * (4.0 ** sweep)
            for i in range(n_par):
                def along(v, i=i):
                    trial = x.copy()
                    trial[i] = v
                    return -score(trial, penalty)[0]

                v, fv = _golden_min(along, x[i] - 4.0, x[i] + 4.0, 1e-7)
                if -fv > cur:
                    x[i] = v
                    cur = -fv
            cur, rate, viol = score(x, penalty)
        key = (not (viol <= bcjr_tol), -rate, idx)
        if best is None or key < best[0]:
            best = (key, x, rate, viol, idx)

    _, x, rate, viol, idx = best
    enc = _encoder_from_logits(graph, nS, nX, x)
    return enc, EncoderSearchReport(
        rate=rate, violation=viol, bcjr_ok=bool(viol <= bcjr_tol), start_index=idx
    )


# Text format: one row of |X| probabilities per (s, q) pair, s-major.

def dump_encoder(enc: GraphEncoder) -> str:
    nS = enc.p.shape[0]
    lines = []
    for s in range(nS):
        for q in range(enc.graph.nQ):
            lines.append(" ".join(repr(float(v)) for v in enc.p[s, q]))
    return "\n".join(lines) + "\n"


def parse_encoder(graph: QGraph, nS: int, nX: int, text: str) -> GraphEncoder:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if len(rows) != nS * graph.nQ:
        raise DimensionMismatch(
            f"expected {nS * graph.nQ} encoder rows, found {len(rows)}"
        )
    p = np.asarray([[float(v) for v in row] for row in rows])
    if p.shape[1] != nX:
        raise DimensionMismatch(f"encoder rows have {p.shape[1]} entries, expected {nX}")
    return GraphEncoder(graph=graph, p=p.reshape(nS, graph.nQ, nX))


def load_encoder(graph: QGraph, nS: int, nX: int, path) -> GraphEncoder:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_encoder(graph, nS, nX, fh.read())
