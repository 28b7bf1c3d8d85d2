"""Per-node output test distributions T(y | q) riding on a Q-graph.

The bound's per-step reward is a KL divergence against T(. | q), which
diverges when T puts zero mass on a reachable output, so entries are
floored at DELTA: any strictly positive T yields a valid bound, and the
floor keeps rewards finite without affecting optimisation in practice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFinite, NotStochastic
from .qgraph import QGraph, walk

DELTA = 1e-12
ROW_TOL = 1e-12


@dataclass(frozen=True)
class GraphTestDist:
    """Row-stochastic table t[q][y] = T(y | q) attached to a Q-graph."""

    graph: QGraph
    t: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.t, dtype=float))
        if arr.shape != (self.graph.nQ, self.graph.nY):
            raise DimensionMismatch(
                f"test distribution shape {arr.shape} != ({self.graph.nQ}, {self.graph.nY})"
            )
        if not np.all(np.isfinite(arr)):
            raise NonFinite("test distribution contains non-finite entries")
        # 1e-15 slack so a clamp-then-renormalise construction cannot land
        # an entry a rounding error below the floor.
        if np.any(arr < DELTA - 1e-15):
            q, y = np.argwhere(arr < DELTA - 1e-15)[0]
            raise NotStochastic((int(q), int(y)), float(arr[q, y] - DELTA))
        for q in range(self.graph.nQ):
            deficit = arr[q].sum() - 1.0
            if abs(deficit) > ROW_TOL:
                raise NotStochastic((q,), deficit)
        arr.setflags(write=False)
        object.__setattr__(self, "t", arr)


def uniform(graph: QGraph) -> GraphTestDist:
    """T(y | q) = 1/nY everywhere; the optimiser's neutral start."""
    t = np.full((graph.nQ, graph.nY), 1.0 / graph.nY)
    return GraphTestDist(graph=graph, t=t)


def from_params(graph: QGraph, params) -> GraphTestDist:
    """Map nQ*(nY-1) unconstrained reals to row distributions.

    Row q uses normalised exponentials of (params[q, :], 0); the pinned
    last logit makes the map a bijection onto the open simplex, with the
    all-zero vector landing on uniform. Entries are clamped to DELTA and
    renormalised afterwards.
    """
    p = np.asarray(params, dtype=float).reshape(graph.nQ, graph.nY - 1)
    if not np.all(np.isfinite(p)):
        raise NonFinite("parameter vector contains non-finite entries")
    logits = np.concatenate([p, np.zeros((graph.nQ, 1))], axis=1)
    logits -= logits.max(axis=1, keepdims=True)
    t = np.exp(logits)
    t /= t.sum(axis=1, keepdims=True)
    t = np.clip(t, DELTA, None)
    t /= t.sum(axis=1, keepdims=True)
    return GraphTestDist(graph=graph, t=t)


def to_params(dist: GraphTestDist) -> np.ndarray:
    """Inverse of from_params on the open simplex: log(t_y / t_last)."""
    t = dist.t
    return np.log(t[:, :-1] / t[:, -1:])


def sequence_probability(dist: GraphTestDist, q0: int, outputs) -> float:
    """Probability of an output sequence: the product of T(y_t | q_{t-1})
    along the node path walked from q0."""
    prob = 1.0
    q = q0
    for y in outputs:
        prob *= float(dist.t[q, y])
        q = walk(dist.graph, q, [y])
    return prob


# Text format: nQ rows of nY probabilities (whitespace separated); the
# attached graph is supplied separately.

def dump_testdist(dist: GraphTestDist) -> str:
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in dist.t) + "\n"


def parse_testdist(graph: QGraph, text: str) -> GraphTestDist:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if len(rows) != graph.nQ:
        raise DimensionMismatch(f"expected {graph.nQ} rows, found {len(rows)}")
    t = np.asarray([[float(v) for v in row] for row in rows])
    return GraphTestDist(graph=graph, t=t)


def load_testdist(graph: QGraph, path) -> GraphTestDist:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_testdist(graph, fh.read())
