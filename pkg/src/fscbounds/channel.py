"""Finite-state channel kernels: validation, built-in families,
classification, and the finite-memory-to-unifilar reformulation.

A channel is the conditional law P(s_next, y | x, s) stored as a dense
tensor indexed [s][x][y][s_next]. Inputs are validated, never silently
renormalised.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .chains import is_strongly_connected_succ
from .errors import (
    DimensionMismatch,
    EpsilonOutOfRange,
    NotFiniteMemory,
    NotStochastic,
    UnknownName,
)

STOCHASTIC_TOL = 1e-12

BUILTIN_NAMES = ("NOST", "NISING", "ISING", "POST", "BSC")


def _frozen_array(a) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(a, dtype=float))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ChannelKernel:
    """P(s_next, y | x, s) with alphabet sizes nX, nY, nS.

    ``kernel`` has shape (nS, nX, nY, nS); every (s, x) slice sums to one.
    Immutable; safe to share across threads.
    """

    nX: int
    nY: int
    nS: int
    kernel: np.ndarray

    def output_law(self) -> np.ndarray:
        """P(y | x, s) as an array of shape (nS, nX, nY)."""
        return self.kernel.sum(axis=3)


@dataclass(frozen=True)
class ChannelClass:
    """Structural class of a channel's state evolution.

    kind is one of "unifilar", "finite-memory", "general".

    Unifilar: ``f`` maps (x, y, s) to the deterministic next state,
    shape (nX, nY, nS).

    Finite-memory: the state depends only on a trailing window of k1
    inputs and k2 outputs (window lengths, each ending at the current
    symbol). ``state_map`` has shape (nX**k1 * nY**k2, nS) and gives
    P(state | window); windows are indexed x-part major, most recent
    symbol last. Only k1, k2 <= 1 are ever inferred from a kernel;
    deeper windows must be declared by the caller.
    """

    kind: str
    f: np.ndarray | None = None
    k1: int | None = None
    k2: int | None = None
    state_map: np.ndarray | None = None

    @property
    def is_unifilar(self) -> bool:
        return self.kind == "unifilar"

    @property
    def is_finite_memory(self) -> bool:
        return self.kind == "finite-memory"


@dataclass(frozen=True)
class BuiltinSpec:
    """Name plus parameter for one of the built-in channel families."""

    name: str
    epsilon: float | None = None


@dataclass(frozen=True)
class TransformedChannel:
    """Unifilar reformulation of a finite-memory channel.

    ``window_labels[s]`` is the (inputs_tuple, outputs_tuple) window that
    new state s stands for, and ``beliefs[s]`` is the distribution of the
    original channel state given that window.
    """

    channel: ChannelKernel
    window_labels: list
    beliefs: np.ndarray


def validate_kernel(raw, nX: int, nY: int, nS: int, tol: float = STOCHASTIC_TOL) -> ChannelKernel:
    """Check shape, nonnegativity and row-stochasticity; wrap into a kernel.

    Rows failing the sum-to-one test are rejected (NotStochastic), never
    renormalised, so a defective file cannot silently change the channel.
    """
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (nS, nX, nY, nS):
        raise DimensionMismatch(
            f"kernel shape {arr.shape} does not match (nS,nX,nY,nS)=({nS},{nX},{nY},{nS})"
        )
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        bad = np.argwhere(~((arr >= 0) & np.isfinite(arr)))[0]
        raise NotStochastic(tuple(int(i) for i in bad), float("nan"))
    sums = arr.sum(axis=(2, 3))
    for s in range(nS):
        for x in range(nX):
            deficit = sums[s, x] - 1.0
            if abs(deficit) > tol:
                raise NotStochastic((s, x), deficit)
    return ChannelKernel(nX=nX, nY=nY, nS=nS, kernel=_frozen_array(arr))


def _bsc_law(eps: float) -> np.ndarray:
    return np.array([[1.0 - eps, eps], [eps, 1.0 - eps]])


def builtin(spec: BuiltinSpec | str, epsilon: float | None = None) -> ChannelKernel:
    """Construct one of the built-in binary channels.

    NOST(eps):   output follows a Z topology (parameter 0.5) in state 0
                 and an S topology (parameter 0.5) in state 1; the next
                 state is the output passed through a BSC(eps).
    NIsing(eps): y equals the input or the state with probability 0.5
                 each; the next state is the input through a BSC(eps).
    Ising:       NIsing(0); the state is the previous input.
    POST:        NOST(0); the state is the previous output.
    BSC(p):      memoryless crossover-p channel, single state.
    """
    if isinstance(spec, str):
        spec = BuiltinSpec(spec, epsilon)
    name = spec.name.upper().replace("-", "")
    eps = spec.epsilon
    if name not in BUILTIN_NAMES:
        raise UnknownName(f"unknown builtin channel {spec.name!r}")
    if name in ("ISING", "POST"):
        if eps not in (None, 0, 0.0):
            raise EpsilonOutOfRange(f"{spec.name} takes no epsilon parameter")
        eps = 0.0
    else:
        if eps is None:
            raise EpsilonOutOfRange(f"{spec.name} requires an epsilon parameter")
        if not (0.0 <= eps <= 1.0) or not np.isfinite(eps):
            raise EpsilonOutOfRange(f"epsilon={eps} outside [0, 1]")

    if name == "BSC":
        kernel = np.zeros((1, 2, 2, 1))
        for x in range(2):
            kernel[0, x, x, 0] = 1.0 - eps
            kernel[0, x, 1 - x, 0] = eps
        return validate_kernel(kernel, 2, 2, 1)

    if name in ("NOST", "POST"):
        # Output law per state: Z topology in state 0, S topology in state 1.
        out = np.zeros((2, 2, 2))
        out[0, 0] = [1.0, 0.0]
        out[0, 1] = [0.5, 0.5]
        out[1, 0] = [0.5, 0.5]
        out[1, 1] = [0.0, 1.0]
        evolve = _bsc_law(eps)  # P(s_next | y)
        kernel = np.einsum("sxy,yt->sxyt", out, evolve)
        return validate_kernel(kernel, 2, 2, 2)

    # NISING / ISING
    out = np.zeros((2, 2, 2))
    for s in range(2):
        for x in range(2):
            out[s, x, x] += 0.5
            out[s, x, s] += 0.5
    evolve = _bsc_law(eps)  # P(s_next | x)
    kernel = np.einsum("sxy,xt->sxyt", out, evolve)
    return validate_kernel(kernel, 2, 2, 2)


def _detect_factored_evolution(ch: ChannelKernel, tol: float) -> ChannelClass | None:
    """Finite-memory detection: does P(s_next | s, x, y) not depend on s?

    Returns a finite-memory class with the window shrunk to the symbols
    the factor actually depends on, or None when no such factorisation
    holds within ``tol``.
    """
    K = ch.kernel
    out = ch.output_law()
    evolve = np.full((ch.nX, ch.nY, ch.nS), np.nan)
    for x in range(ch.nX):
        for y in range(ch.nY):
            rows = [K[s, x, y] / out[s, x, y] for s in range(ch.nS) if out[s, x, y] > tol]
            if not rows:
                continue
            ref = rows[0]
            if any(np.abs(r - ref).max() > tol for r in rows[1:]):
                return None
            evolve[x, y] = ref
    defined = ~np.isnan(evolve[:, :, 0])
    if not defined.any():
        return None

    def _varies(axis: int) -> bool:
        n_other = ch.nY if axis == 0 else ch.nX
        n_this = ch.nX if axis == 0 else ch.nY
        for other in range(n_other):
            rows = []
            for this in range(n_this):
                x, y = (this, other) if axis == 0 else (other, this)
                if defined[x, y]:
                    rows.append(evolve[x, y])
            for r in rows[1:]:
                if np.abs(r - rows[0]).max() > tol:
                    return True
        return False

    k1 = 1 if _varies(0) else 0
    k2 = 1 if _varies(1) else 0
    if k1 == 0 and k2 == 0:
        k2 = 1  # keep one window symbol so the window shift stays defined

    n_win = ch.nX**k1 * ch.nY**k2
    state_map = np.zeros((n_win, ch.nS))
    for w, (xs, ys) in enumerate(window_tuples(ch.nX, ch.nY, k1, k2)):
        rows = []
        for x in range(ch.nX):
            for y in range(ch.nY):
                if not defined[x, y]:
                    continue
                if k1 and xs[-1] != x:
                    continue
                if k2 and ys[-1] != y:
                    continue
                rows.append(evolve[x, y])
        # Windows never realised keep a uniform placeholder; they are
        # unreachable in operation but the transformed kernel must still
        # carry valid rows for them.
        state_map[w] = np.mean(rows, axis=0) if rows else np.full(ch.nS, 1.0 / ch.nS)
    return ChannelClass(kind="finite-memory", k1=k1, k2=k2, state_map=state_map)


def classify(ch: ChannelKernel, tol: float = 1e-9) -> ChannelClass:
    """Decide unifilar / finite-memory / general.

    Unifilar wins when, for every (s, x, y) carrying output mass, all of
    the next-state mass sits on a single state. Finite-memory detection
    is deliberately limited to evolutions that factor as P(s_next | x, y);
    deeper memory cannot be inferred from the kernel tensor alone and
    must be declared explicitly through a state_map.
    """
    K = ch.kernel
    out = ch.output_law()

    f = np.zeros((ch.nX, ch.nY, ch.nS), dtype=int)
    unifilar = True
    for s in range(ch.nS):
        for x in range(ch.nX):
            for y in range(ch.nY):
                if out[s, x, y] <= tol:
                    continue  # unreachable triple, next state stays 0
                cond = K[s, x, y] / out[s, x, y]
                top = int(np.argmax(cond))
                if cond[top] < 1.0 - tol:
                    unifilar = False
                    break
                f[x, y, s] = top
            if not unifilar:
                break
        if not unifilar:
            break
    if unifilar:
        return ChannelClass(kind="unifilar", f=f)

    fm = _detect_factored_evolution(ch, tol)
    if fm is not None:
        return fm
    return ChannelClass(kind="general")


def window_tuples(nX: int, nY: int, k1: int, k2: int):
    """All (inputs, outputs) windows in index order (x-part major,
    most recent symbol last within each part)."""
    def _tuples(base, length):
        out = [()]
        for _ in range(length):
            out = [t + (v,) for t in out for v in range(base)]
        return out

    return [(xs, ys) for xs in _tuples(nX, k1) for ys in _tuples(nY, k2)]


def window_index(nX: int, nY: int, k1: int, k2: int, xs: tuple, ys: tuple) -> int:
    idx = 0
    for v in xs:
        idx = idx * nX + v
    for v in ys:
        idx = idx * nY + v
    return idx


def transform_to_unifilar(
    ch: ChannelKernel, cls: ChannelClass | None = None, tol: float = 1e-9
) -> TransformedChannel:
    """Reformulate a finite-memory channel as a unifilar one.

    The new state is the trailing (k1 inputs, k2 outputs) window; its
    output law is the original law averaged over P(state | window), and
    the next window is the deterministic shift-in of (x, y). The state
    count is nX**k1 * nY**k2, which grows quickly with the window
    lengths; callers declaring deep windows should expect the blow-up.
    """
    if cls is None:
        # Detect the factorisation directly: channels with deterministic
        # evolutions (POST) classify unifilar yet still transform.
        cls = _detect_factored_evolution(ch, tol)
        if cls is None:
            raise NotFiniteMemory("state evolution does not factor through (x, y)")
    if not cls.is_finite_memory:
        raise NotFiniteMemory(f"channel classified as {cls.kind!r}")
    if cls.state_map is None or cls.k1 is None or cls.k2 is None:
        raise NotFiniteMemory("finite-memory class is missing its state_map")

    k1, k2 = cls.k1, cls.k2
    labels = window_tuples(ch.nX, ch.nY, k1, k2)
    n_new = len(labels)
    out = ch.output_law()  # P(y | x, s)
    beliefs = np.asarray(cls.state_map, dtype=float)
    if beliefs.shape != (n_new, ch.nS):
        raise NotFiniteMemory(
            f"state_map shape {beliefs.shape} does not match ({n_new}, {ch.nS})"
        )

    new_out = np.einsum("ws,sxy->wxy", beliefs, out)

    kernel = np.zeros((n_new, ch.nX, ch.nY, n_new))
    for w, (xs, ys) in enumerate(labels):
        for x in range(ch.nX):
            for y in range(ch.nY):
                nxt_xs = (xs + (x,))[len(xs) + 1 - k1 :] if k1 else ()
                nxt_ys = (ys + (y,))[len(ys) + 1 - k2 :] if k2 else ()
                w_next = window_index(ch.nX, ch.nY, k1, k2, nxt_xs, nxt_ys)
                kernel[w, x, y, w_next] = new_out[w, x, y]
    new_ch = validate_kernel(kernel, ch.nX, ch.nY, n_new)
    return TransformedChannel(channel=new_ch, window_labels=labels, beliefs=beliefs)


def is_strongly_connected(ch: ChannelKernel, tol: float = 0.0) -> bool:
    """Strong connectivity of the state digraph with edges s -> s_next
    whenever some input gives the move positive probability (the union
    over inputs realises the existential input distribution in the
    definition)."""
    move = ch.kernel.sum(axis=2).max(axis=1)  # (nS, nS): max over x of P(s_next | x, s)
    succ = [list(np.flatnonzero(move[s] > tol)) for s in range(ch.nS)]
    return is_strongly_connected_succ(succ)


# ---------------------------------------------------------------------------
# Channel file format: self-describing JSON with either an explicit kernel
# (flat row-major [s][x][y][s_next] array) or a builtin/epsilon shortcut.
# Parsing uses Python's correctly-rounded decimal-to-float conversion and
# dumps echo values with shortest round-trip repr, so load(dump(ch)) is
# bit-exact.
# ---------------------------------------------------------------------------

def dump_channel(ch: ChannelKernel) -> str:
    doc = {
        "nX": ch.nX,
        "nY": ch.nY,
        "nS": ch.nS,
        "kernel": [float(v) for v in ch.kernel.ravel()],
    }
    return json.dumps(doc, indent=1)


def parse_channel(text: str) -> ChannelKernel:
    doc = json.loads(text)
    if "builtin" in doc:
        return builtin(BuiltinSpec(doc["builtin"], doc.get("epsilon")))
    try:
        nX, nY, nS = int(doc["nX"]), int(doc["nY"]), int(doc["nS"])
        flat = doc["kernel"]
    except KeyError as e:
        raise DimensionMismatch(f"channel file missing field {e}") from None
    if len(flat) != nS * nX * nY * nS:
        raise DimensionMismatch(
            f"kernel has {len(flat)} entries, expected {nS * nX * nY * nS}"
        )
    arr = np.asarray(flat, dtype=float).reshape(nS, nX, nY, nS)
    return validate_kernel(arr, nX, nY, nS)


def load_channel(path) -> ChannelKernel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_channel(fh.read())
