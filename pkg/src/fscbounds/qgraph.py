"""Q-graphs: deterministic output-driven node maps over a channel's
output alphabet, plus exhaustive enumeration of the valid ones.

A Q-graph assigns each node exactly one successor per output symbol.
It is *valid* when the underlying digraph (edge labels ignored,
parallel edges collapsed) is strongly connected and aperiodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .chains import (
    is_strongly_connected_succ,
    period_of_component,
    strongly_connected_components,
)
from .errors import BudgetExceeded, IndexOutOfRange, UnknownName

ENUM_BUDGET = 5_000_000          # streaming enumeration: total tables
SCAN_BUDGET = 200_000_000        # vectorised counting: collapsed digraphs
MARKOV_NODE_CAP = 4096


def _frozen_int_array(a) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.int64))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QGraph:
    """Node count, output alphabet size, and the successor table
    phi[q][y] (0-based node indices)."""

    nQ: int
    nY: int
    phi: np.ndarray

    def __post_init__(self):
        phi = _frozen_int_array(self.phi)
        if phi.shape != (self.nQ, self.nY):
            raise IndexOutOfRange(f"phi shape {phi.shape} != ({self.nQ}, {self.nY})")
        if phi.size and (phi.min() < 0 or phi.max() >= self.nQ):
            raise IndexOutOfRange("phi entries must be node indices")
        object.__setattr__(self, "phi", phi)

    def successors(self) -> list[list[int]]:
        """Collapsed adjacency lists (labels ignored, multi-edges merged)."""
        return [sorted(set(int(v) for v in row)) for row in self.phi]


@dataclass(frozen=True)
class ValidityReport:
    strongly_connected: bool
    period: int
    aperiodic: bool

    @property
    def valid(self) -> bool:
        return self.strongly_connected and self.aperiodic


def markov_qgraph(k: int, nY: int, node_cap: int = MARKOV_NODE_CAP) -> QGraph:
    """Graph whose nodes are the last k outputs; shifting in a new output
    moves along the matching edge. nY**k nodes."""
    if k < 1:
        raise IndexOutOfRange("memory order k must be >= 1")
    nQ = nY**k
    if nQ > node_cap:
        raise BudgetExceeded(f"nY**k = {nQ} exceeds the node cap {node_cap}")
    base = nY ** (k - 1)
    phi = np.empty((nQ, nY), dtype=np.int64)
    for q in range(nQ):
        for y in range(nY):
            phi[q, y] = (q % base) * nY + y
    return QGraph(nQ=nQ, nY=nY, phi=phi)


def walk(g: QGraph, q0: int, outputs) -> int:
    """Fold phi over an output sequence starting from q0."""
    if not (0 <= q0 < g.nQ):
        raise IndexOutOfRange(f"start node {q0} outside [0, {g.nQ})")
    q = int(q0)
    for y in outputs:
        if not (0 <= y < g.nY):
            raise IndexOutOfRange(f"output symbol {y} outside [0, {g.nY})")
        q = int(g.phi[q, y])
    return q


def validate(g: QGraph) -> ValidityReport:
    """Strong connectivity (Tarjan) and aperiodicity (gcd of cycle
    lengths via BFS level arithmetic) of the collapsed digraph."""
    succ = g.successors()
    comps = strongly_connected_components(succ)
    sc = len(comps) == 1
    if sc:
        period = period_of_component(succ, comps[0])
    else:
        # Period of the whole graph is only meaningful per component;
        # report the gcd over components that contain a cycle.
        period = 0
        for comp in comps:
            p = period_of_component(succ, comp)
            period = math.gcd(period, p)
    return ValidityReport(strongly_connected=sc, period=period, aperiodic=(period == 1))


def canonical_form(g: QGraph) -> tuple:
    """Lexicographically smallest phi table over all node relabelings.

    Small graphs only (factorial in nQ); used for deduplication.
    """
    best = None
    nodes = range(g.nQ)
    for perm in _permutations(list(nodes)):
        inv = [0] * g.nQ
        for i, p in enumerate(perm):
            inv[p] = i
        # Relabeled graph: node i was perm[i]; phi'(i, y) = inv[phi(perm[i], y)]
        table = tuple(tuple(inv[int(g.phi[perm[i], y])] for y in range(g.nY)) for i in range(g.nQ))
        if best is None or table < best:
            best = table
    return best


def _permutations(items):
    if len(items) <= 1:
        yield list(items)
        return
    for i in range(len(items)):
        rest = items[:i] + items[i + 1 :]
        for tail in _permutations(rest):
            yield [items[i]] + tail


def enumerate_valid(nQ: int, nY: int, canonical: bool = False, budget: int = ENUM_BUDGET):
    """Yield every valid phi table in lexicographic order.

    With ``canonical=True`` only the lexicographically smallest member of
    each relabeling orbit is yielded. Guarded by a table-count budget.
    """
    total = nQ ** (nQ * nY)
    if total > budget:
        raise BudgetExceeded(
            f"{nQ}**({nQ}*{nY}) = {total} tables exceeds the budget {budget}"
        )
    for flat in product(range(nQ), repeat=nQ * nY):
        phi = np.asarray(flat, dtype=np.int64).reshape(nQ, nY)
        g = QGraph(nQ=nQ, nY=nY, phi=phi)
        if not validate(g).valid:
            continue
        if canonical and canonical_form(g) != tuple(map(tuple, phi.tolist())):
            continue
        yield g


# ---------------------------------------------------------------------------
# Fast counting.
#
# Validity only depends on the collapsed digraph, so instead of scanning all
# nQ**(nQ*nY) labeled tables we scan collapsed out-neighbourhoods: each node
# independently picks a nonempty successor set of size <= nY, and the number
# of labeled tables realising a set of size k is the number of surjections
# from the nY edge labels onto the k targets. Strong connectivity plus
# aperiodicity is exactly primitivity of the boolean adjacency matrix, which
# for nQ nodes is settled by checking that A**m is all-ones for any
# m >= (nQ-1)**2 + 1 (Wielandt); we use the next power of two and compute it
# by repeated boolean squaring on bitmask rows, vectorised over chunks.
# ---------------------------------------------------------------------------

def _surjections(n_labels: int, k_targets: int) -> int:
    return sum(
        (-1) ** j * math.comb(k_targets, j) * (k_targets - j) ** n_labels
        for j in range(k_targets + 1)
    )


def _out_set_options(nQ: int, nY: int):
    """All candidate out-neighbourhoods as (bitmask, weight) pairs, where
    weight counts the labeled tables realising that set at one node."""
    masks, weights = [], []
    for k in range(1, min(nY, nQ) + 1):
        w = _surjections(nY, k)
        if w == 0:
            continue
        for combo in combinations(range(nQ), k):
            m = 0
            for v in combo:
                m |= 1 << v
            masks.append(m)
            weights.append(w)
    return np.asarray(masks, dtype=np.int64), np.asarray(weights, dtype=np.int64)


def _primitive_mask_rows(rows: np.ndarray, nQ: int) -> np.ndarray:
    """Vectorised primitivity test.

    ``rows`` has shape (batch, nQ); rows[i, q] is the successor bitmask of
    node q in digraph i. Returns a boolean vector: adjacency**m all-ones
    for m a power of two past the Wielandt bound.
    """
    full = (1 << nQ) - 1
    m = (nQ - 1) ** 2 + 1
    steps = max(1, math.ceil(math.log2(m)))
    cur = rows
    for _ in range(steps):
        nxt = np.zeros_like(cur)
        for j in range(nQ):
            hasj = ((cur >> j) & 1).astype(bool)
            nxt |= np.where(hasj, cur[:, j][:, None], 0)
        cur = nxt
    return (cur == full).all(axis=1)


def _count_scan(nQ: int, nY: int, part: int = 0, n_parts: int = 1, chunk: int = 1 << 20):
    """Weighted count of valid labeled tables over one partition of the
    collapsed-digraph space (partitioned by flat index range)."""
    masks, weights = _out_set_options(nQ, nY)
    n_opt = len(masks)
    total = n_opt**nQ
    lo = total * part // n_parts
    hi = total * (part + 1) // n_parts
    grand = 0
    for start in range(lo, hi, chunk):
        stop = min(start + chunk, hi)
        idx = np.arange(start, stop, dtype=np.int64)
        rows = np.empty((idx.size, nQ), dtype=np.int64)
        w = np.ones(idx.size, dtype=np.int64)
        rem = idx
        for q in range(nQ):
            digit = rem % n_opt
            rem = rem // n_opt
            rows[:, q] = masks[digit]
            w *= weights[digit]
        ok = _primitive_mask_rows(rows, nQ)
        grand += int(w[ok].sum())
    return grand


def _count_scan_job(args):
    return _count_scan(*args)


def count_valid_labeled(nQ: int, nY: int, workers: int = 1, budget: int = SCAN_BUDGET) -> int:
    """Number of valid phi tables, counted as labeled tables."""
    if nQ == 1:
        return 1
    masks, _ = _out_set_options(nQ, nY)
    if len(masks) ** nQ > budget:
        raise BudgetExceeded(
            f"{len(masks)}**{nQ} collapsed digraphs exceed the scan budget {budget}"
        )
    if workers <= 1:
        return _count_scan(nQ, nY)
    import multiprocessing

    n_parts = workers * 4
    jobs = [(nQ, nY, p, n_parts) for p in range(n_parts)]
    with multiprocessing.Pool(workers) as pool:
        parts = pool.map(_count_scan_job, jobs)
    return sum(parts)


def _equivariant_fixed_count(nQ: int, nY: int, perm: tuple[int, ...], chunk: int = 1 << 18) -> int:
    """Number of valid tables commuting with a node permutation.

    A table commutes with perm iff each phi(., y) is equivariant, i.e.
    determined by its values on one representative per perm-cycle, with
    the representative's image lying in a cycle whose length divides the
    representative's cycle length.
    """
    # Cycle decomposition.
    seen = [False] * nQ
    cycles = []
    for q in range(nQ):
        if seen[q]:
            continue
        c = [q]
        seen[q] = True
        v = perm[q]
        while v != q:
            c.append(v)
            seen[v] = True
            v = perm[v]
        cycles.append(c)
    cyc_len_of = {}
    for c in cycles:
        for v in c:
            cyc_len_of[v] = len(c)

    # Per (cycle, label) the admissible images of the representative.
    choices = []
    for c in cycles:
        admissible = [v for v in range(nQ) if len(c) % cyc_len_of[v] == 0]
        choices.append(admissible)

    slot_choices = choices * nY  # one slot per (cycle, y), y-major blocks
    sizes = [len(cs) for cs in slot_choices]
    total = 1
    for s in sizes:
        total *= s
    if total == 0:
        return 0

    count = 0
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        idx = np.arange(start, stop, dtype=np.int64)
        phi = np.zeros((idx.size, nQ, nY), dtype=np.int64)
        rem = idx
        for slot, cs in enumerate(slot_choices):
            digit = rem % len(cs)
            rem = rem // len(cs)
            y = slot // len(cycles)
            c = cycles[slot % len(cycles)]
            img = np.asarray(cs, dtype=np.int64)[digit]
            # Propagate the representative's image around the cycle.
            q = c[0]
            for _ in range(len(c)):
                phi[:, q, y] = img
                q = perm[q]
                img = np.asarray([perm[v] for v in range(nQ)], dtype=np.int64)[img]
        rows = np.zeros((idx.size, nQ), dtype=np.int64)
        for y in range(nY):
            rows |= np.int64(1) << phi[:, :, y]
        ok = _primitive_mask_rows(rows, nQ)
        count += int(ok.sum())
    return count


def count_valid_canonical(nQ: int, nY: int, workers: int = 1, budget: int = SCAN_BUDGET) -> int:
    """Number of valid tables up to node relabeling (orbit count via
    Burnside's lemma: average, over all node permutations, of the number
    of valid tables each permutation fixes)."""
    if nQ == 1:
        return 1
    total = count_valid_labeled(nQ, nY, workers=workers, budget=budget)
    for perm in _permutations(list(range(nQ))):
        tperm = tuple(perm)
        if tperm == tuple(range(nQ)):
            continue
        total += _equivariant_fixed_count(nQ, nY, tperm)
    return total // math.factorial(nQ)


def count_valid(nQ: int, nY: int, canonical: bool = False, workers: int = 1) -> int:
    if canonical:
        return count_valid_canonical(nQ, nY, workers=workers)
    return count_valid_labeled(nQ, nY, workers=workers)


# ---------------------------------------------------------------------------
# Text format: first line "nQ nY", then nQ lines of nY successor indices.
# Files and CLI output use 1-based node indices; the library is 0-based.
# ---------------------------------------------------------------------------

def dump_qgraph(g: QGraph) -> str:
    lines = [f"{g.nQ} {g.nY}"]
    for q in range(g.nQ):
        lines.append(" ".join(str(int(g.phi[q, y]) + 1) for y in range(g.nY)))
    return "\n".join(lines) + "\n"


def parse_qgraph(text: str) -> QGraph:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not rows:
        raise IndexOutOfRange("empty Q-graph file")
    nQ, nY = int(rows[0][0]), int(rows[0][1])
    if len(rows) != nQ + 1:
        raise IndexOutOfRange(f"expected {nQ} successor lines, found {len(rows) - 1}")
    phi = np.empty((nQ, nY), dtype=np.int64)
    for q in range(nQ):
        vals = [int(v) for v in rows[q + 1]]
        if len(vals) != nY:
            raise IndexOutOfRange(f"line {q + 2} has {len(vals)} entries, expected {nY}")
        phi[q] = [v - 1 for v in vals]
    return QGraph(nQ=nQ, nY=nY, phi=phi)


def load_qgraph(path) -> QGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_qgraph(fh.read())


# Built-in registry. "appendix-d4" is a hand-picked 4-node graph suited to
# noisy intersymbol-interference channels; the successor vectors are
# phi(., y=0) = [2,1,1,1] and phi(., y=1) = [3,3,4,3] in 1-based notation.
_D4_PHI = np.array([[1, 2], [0, 2], [0, 3], [0, 2]], dtype=np.int64)


def registry_qgraph(name: str, nY: int = 2) -> QGraph:
    key = name.lower()
    if key == "markov-1":
        return markov_qgraph(1, nY)
    if key == "markov-2":
        return markov_qgraph(2, nY)
    if key == "appendix-d4":
        if nY != 2:
            raise UnknownName("appendix-d4 is defined for binary output alphabets")
        return QGraph(nQ=4, nY=2, phi=_D4_PHI)
    raise UnknownName(f"unknown Q-graph name {name!r}")
