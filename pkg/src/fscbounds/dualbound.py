"""Duality upper bound on feedback capacity as a finite average-reward
MDP.

For a channel, a Q-graph, and a per-node output test distribution T,
the MDP state is (belief over channel states, graph node), the action
is the channel input, the disturbance is the channel output, and the
per-step reward is the relative entropy of the predicted output law
against T(. | node). The optimal average reward upper-bounds the
feedback capacity for any strictly positive T.

For unifilar and finite-memory channels the reachable beliefs form a
finite set, so the MDP is exactly finite; general channels get a
quantised-belief approximation that is clearly flagged as such.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelKernel, classify, transform_to_unifilar
from .errors import (
    MultichainDetected,
    NotConverged,
    NotFiniteClass,
    StateBudgetExceeded,
    UnreachableOutput,
)
from .info import xlog2
from .mdp import (
    FiniteMdp,
    MdpSolution,
    class_gains,
    policy_iteration,
    value_iteration,
)
from .qgraph import QGraph
from .testdist import GraphTestDist, from_params

BELIEF_TOL = 1e-12


@dataclass(frozen=True)
class DualState:
    """One MDP state: a belief over the original channel states and a
    graph node. ``s`` is the underlying finite-state index (channel
    state for unifilar channels, window index after the finite-memory
    reformulation) when the state space is exactly finite."""

    belief: tuple
    q: int
    s: int | None = None


@dataclass
class UpperBoundResult:
    """rho is a valid upper bound (bits per channel use) on feedback
    capacity for the test distribution used. When the solved policy
    induces more than one recurrent class, per_initial_gain maps each
    initial state to the worst gain among classes reachable from it and
    rho is the minimum over initial states."""

    rho: float
    solution: MdpSolution
    test_dist: GraphTestDist
    labels: list[DualState]
    multichain: bool = False
    per_initial_gain: dict | None = None


def validate_belief(beta, nS: int) -> np.ndarray:
    b = np.asarray(beta, dtype=float)
    if b.shape != (nS,):
        raise UnreachableOutput(f"belief shape {b.shape} != ({nS},)")
    if np.any(b < -BELIEF_TOL) or abs(b.sum() - 1.0) > BELIEF_TOL:
        raise UnreachableOutput("belief is not a probability vector")
    return b


def belief_update(ch: ChannelKernel, beta, x: int, y: int) -> np.ndarray:
    """Posterior over the next channel state after playing input x and
    observing output y, starting from belief beta."""
    b = validate_belief(beta, ch.nS)
    numer = b @ ch.kernel[:, x, y, :]
    denom = float(numer.sum())
    if denom <= 0.0:
        raise UnreachableOutput(f"output {y} has probability zero under this belief and input {x}")
    return numer / denom


def disturbance_dist(ch: ChannelKernel, beta, x: int) -> np.ndarray:
    """Predicted output law sum_s beta(s) P(y | x, s)."""
    b = validate_belief(beta, ch.nS)
    return b @ ch.output_law()[:, x, :]


def reward(ch: ChannelKernel, T: GraphTestDist, state: DualState, x: int) -> float:
    """Per-step reward in bits: D(predicted output law || T(. | q))."""
    p = disturbance_dist(ch, np.asarray(state.belief, dtype=float), x)
    t = T.t[state.q]
    return float(np.sum(xlog2(p)) - np.sum(p * np.log2(t)))


@dataclass
class DualMdpStructure:
    """Everything about the dual MDP except the reward, which is the
    only part that depends on T. Cached so an optimiser can re-solve
    the same channel/graph pair under many test distributions."""

    labels: list[DualState]
    q_of_state: np.ndarray
    dist: np.ndarray          # (nZ, nU, nY) disturbance law
    F: np.ndarray             # (nZ, nU, nY) next state
    base: np.ndarray          # (nZ, nU): sum_y p log2 p
    nY: int

    def reward_matrix(self, T: GraphTestDist) -> np.ndarray:
        logt = np.log2(T.t)  # entries are floored away from zero
        return self.base - np.einsum("zuy,zy->zu", self.dist, logt[self.q_of_state])

    def to_mdp(self, T: GraphTestDist) -> FiniteMdp:
        nZ, nU, nW = self.dist.shape
        return FiniteMdp(nZ=nZ, nU=nU, nW=nW, Pw=self.dist, F=self.F, g=self.reward_matrix(T))


def _finite_core(ch: ChannelKernel):
    """Unifilar core of the channel: (core kernel, next-state table,
    belief vector per core state over the original states)."""
    cls = classify(ch)
    if cls.is_unifilar:
        return ch, cls.f, np.eye(ch.nS)
    if cls.is_finite_memory:
        tr = transform_to_unifilar(ch, cls)
        core_cls = classify(tr.channel)
        return tr.channel, core_cls.f, tr.beliefs
    raise NotFiniteClass(
        "channel is neither unifilar nor finite-memory; "
        "use build_quantized_belief_mdp for an approximate bound"
    )


def build_dual_structure(ch: ChannelKernel, graph: QGraph) -> DualMdpStructure:
    if graph.nY != ch.nY:
        raise NotFiniteClass(
            f"graph output alphabet {graph.nY} != channel output alphabet {ch.nY}"
        )
    core, f, beliefs = _finite_core(ch)
    nS, nQ, nX, nY = core.nS, graph.nQ, core.nX, core.nY
    out = core.output_law()  # (nS, nX, nY)
    nZ = nS * nQ

    labels = [
        DualState(belief=tuple(float(v) for v in beliefs[s]), q=q, s=s)
        for s in range(nS)
        for q in range(nQ)
    ]
    q_of_state = np.array([lab.q for lab in labels], dtype=np.int64)

    dist = np.empty((nZ, nX, nY))
    F = np.empty((nZ, nX, nY), dtype=np.int64)
    for s in range(nS):
        for q in range(nQ):
            z = s * nQ + q
            dist[z] = out[s]
            for x in range(nX):
                for y in range(nY):
                    F[z, x, y] = int(f[x, y, s]) * nQ + int(graph.phi[q, y])
    base = xlog2(dist).sum(axis=2)
    return DualMdpStructure(
        labels=labels, q_of_state=q_of_state, dist=dist, F=F, base=base, nY=nY
    )


def build_finite_dual_mdp(
    ch: ChannelKernel, graph: QGraph, T: GraphTestDist
) -> tuple[FiniteMdp, list[DualState]]:
    """Exact finite dual MDP for unifilar or finite-memory channels.

    States are every (core state, node) pair, where core states carry
    indicator beliefs for unifilar channels and window beliefs after the
    finite-memory reformulation; this seeds every initial condition of
    the bound's min over starting pairs.
    """
    structure = build_dual_structure(ch, graph)
    return structure.to_mdp(T), structure.labels


def _solve_robust(mdp: FiniteMdp, initial_policy=None) -> tuple[MdpSolution, bool]:
    """Policy iteration first; on a multichain policy fall back to
    damped relative value iteration (taking its last iterate if the
    span target is unreachable). Returns (solution, fell_back)."""
    try:
        return policy_iteration(mdp, initial_policy=initial_policy), False
    except MultichainDetected:
        pass
    try:
        return value_iteration(mdp), True
    except NotConverged as e:
        return e.partial, True


def _finish_result(
    mdp: FiniteMdp,
    sol: MdpSolution,
    fell_back: bool,
    T: GraphTestDist,
    labels: list[DualState],
) -> UpperBoundResult:
    if not fell_back:
        return UpperBoundResult(rho=sol.rho, solution=sol, test_dist=T, labels=labels)
    classes, gains, per_state = class_gains(mdp, sol.policy)
    if len(classes) == 1:
        return UpperBoundResult(rho=sol.rho, solution=sol, test_dist=T, labels=labels)
    per_initial = {labels[z]: float(per_state[z]) for z in range(mdp.nZ)}
    return UpperBoundResult(
        rho=float(per_state.min()),
        solution=sol,
        test_dist=T,
        labels=labels,
        multichain=True,
        per_initial_gain=per_initial,
    )


def upper_bound(ch: ChannelKernel, graph: QGraph, T: GraphTestDist) -> UpperBoundResult:
    """Solve the dual MDP for a fixed test distribution.

    The result is a valid capacity upper bound whatever T is; tightness
    is the optimiser's job.
    """
    structure = build_dual_structure(ch, graph)
    mdp = structure.to_mdp(T)
    sol, fell_back = _solve_robust(mdp)
    return _finish_result(mdp, sol, fell_back, T, structure.labels)


# ---------------------------------------------------------------------------
# Outer minimisation over the test distribution.
# ---------------------------------------------------------------------------

@dataclass
class OptimizeOptions:
    """Multi-start coordinate descent with golden-section line searches
    on the unconstrained simplex parameterisation. rho(T) is piecewise
    smooth (policy switches) and gradient-free local search is reliable
    on it; whatever point the search stops at is still a valid bound."""

    starts: int = 8
    seed: int = 0
    start_scale: float = 2.0
    rho_tol: float = 1e-9
    param_tol: float = 1e-9
    half_width: float = 6.0
    max_sweeps: int = 60
    workers: int = 1


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fun, a: float, b: float, tol: float) -> tuple[float, float]:
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


class _DescentState:
    """One optimiser start: coordinates plus a warm-start policy, so
    successive solves of nearby test distributions reuse the incumbent
    policy and typically finish in one policy-iteration sweep."""

    def __init__(self, structure: DualMdpStructure, graph: QGraph, x0: np.ndarray):
        self.structure = structure
        self.graph = graph
        self.x = x0.astype(float).copy()
        self.policy = None

    def objective(self, x: np.ndarray) -> float:
        T = from_params(self.graph, x)
        mdp = self.structure.to_mdp(T)
        sol, fell_back = _solve_robust(mdp, initial_policy=self.policy)
        if fell_back:
            classes, gains, per_state = class_gains(mdp, sol.policy)
            self.policy = None
            return float(per_state.min()) if len(classes) > 1 else sol.rho
        self.policy = sol.policy
        return sol.rho

    def run(self, opts: OptimizeOptions) -> tuple[np.ndarray, float]:
        best = self.objective(self.x)
        for _ in range(opts.max_sweeps):
            before = best
            for i in range(self.x.size):
                xi = self.x[i]

                def along(v, i=i):
                    trial = self.x.copy()
                    trial[i] = v
                    return self.objective(trial)

                v, fv = _golden_min(
                    along, xi - opts.half_width, xi + opts.half_width, opts.param_tol
                )
                if fv < best:
                    best = fv
                    self.x[i] = v
            if before - best < opts.rho_tol:
                break
        return self.x, best


def optimize_test_distribution(
    ch: ChannelKernel, graph: QGraph, options: OptimizeOptions | None = None
) -> tuple[GraphTestDist, UpperBoundResult]:
    """Minimise the dual bound over graph-based test distributions.

    Start 0 is the uniform distribution; the remaining starts are seeded
    from a deterministic RNG. The best start wins, ties broken by start
    index, so runs are reproducible for a fixed seed.
    """
    opts = options or OptimizeOptions()
    structure = build_dual_structure(ch, graph)
    n_par = graph.nQ * (graph.nY - 1)
    rng = np.random.default_rng(opts.seed)
    starts = [np.zeros(n_par)]
    for _ in range(max(0, opts.starts - 1)):
        starts.append(rng.normal(scale=opts.start_scale, size=n_par))

    def run_one(idx_x):
        idx, x0 = idx_x
        state = _DescentState(structure, graph, x0)
        x, val = state.run(opts)
        return idx, x, val

    jobs = list(enumerate(starts))
    if opts.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=opts.workers) as ex:
            outcomes = list(ex.map(run_one, jobs))
    else:
        outcomes = [run_one(j) for j in jobs]

    outcomes.sort(key=lambda r: (r[2], r[0]))
    _, best_x, _ = outcomes[0]
    T = from_params(graph, best_x)
    result = upper_bound(ch, graph, T)
    return T, result


# ---------------------------------------------------------------------------
# Quantised-belief construction for general channels. APPROXIMATE: the
# nearest-lattice projection of updated beliefs can break the upper-bound
# guarantee, so results from this path are always labeled as approximate
# and never mixed with the exact construction.
# ---------------------------------------------------------------------------

@dataclass
class QuantizedDualMdp:
    mdp: FiniteMdp
    labels: list[DualState]
    resolution: int
    max_projection_error: float
    approximate: bool = True


def _project_to_lattice(beta: np.ndarray, m: int) -> tuple:
    """Nearest lattice point with denominators m (largest-remainder
    rounding, which minimises the L1 projection distance)."""
    scaled = beta * m
    base = np.floor(scaled).astype(int)
    short = m - int(base.sum())
    rema = scaled - base
    order = np.argsort(-rema, kind="stable")
    base[order[:short]] += 1
    return tuple(int(v) for v in base)


def build_quantized_belief_mdp(
    ch: ChannelKernel,
    graph: QGraph,
    T: GraphTestDist,
    resolution: int,
    max_states: int = 50_000,
) -> QuantizedDualMdp:
    """Explore beliefs reachable from every (indicator, node) start,
    snapping each updated belief to a simplex lattice with ``resolution``
    points per axis. For unifilar channels every reachable belief is a
    vertex, the projection is exact, and the construction coincides with
    the exact finite one."""
    if resolution < 2:
        raise StateBudgetExceeded("resolution must be at least 2 grid points")
    if graph.nY != ch.nY:
        raise NotFiniteClass(
            f"graph output alphabet {graph.nY} != channel output alphabet {ch.nY}"
        )
    m = resolution - 1
    out = ch.output_law()

    index: dict[tuple, int] = {}
    order: list[tuple[tuple, int]] = []

    def key_of(bkey: tuple, q: int) -> int:
        k = (bkey, q)
        if k not in index:
            if len(order) >= max_states:
                raise StateBudgetExceeded(
                    f"reachable quantised states exceeded the cap {max_states}"
                )
            index[k] = len(order)
            order.append(k)
        return index[k]

    for s in range(ch.nS):
        bkey = tuple(m if i == s else 0 for i in range(ch.nS))
        for q in range(graph.nQ):
            key_of(bkey, q)

    max_err = 0.0
    transitions: list[list[list[tuple[int, float]]]] = []
    frontier = 0
    while frontier < len(order):
        bkey, q = order[frontier]
        beta = np.asarray(bkey, dtype=float) / m
        row = []
        for x in range(ch.nX):
            dist = beta @ out[:, x, :]
            moves = []
            for y in range(ch.nY):
                p = float(dist[y])
                if p <= 0.0:
                    moves.append((frontier, 0.0))  # dead branch, weight zero
                    continue
                nxt = belief_update(ch, beta, x, y)
                nkey = _project_to_lattice(nxt, m)
                max_err = max(max_err, float(np.abs(nxt - np.asarray(nkey) / m).sum()))
                moves.append((key_of(nkey, int(graph.phi[q, y])), p))
            row.append(moves)
        transitions.append(row)
        frontier += 1

    nZ = len(order)
    Pw = np.zeros((nZ, ch.nX, ch.nY))
    F = np.zeros((nZ, ch.nX, ch.nY), dtype=np.int64)
    g = np.zeros((nZ, ch.nX))
    logt = np.log2(T.t)
    labels = []
    for z, (bkey, q) in enumerate(order):
        beta = np.asarray(bkey, dtype=float) / m
        labels.append(DualState(belief=tuple(float(v) for v in beta), q=q, s=None))
        for x in range(ch.nX):
            dist = beta @ out[:, x, :]
            Pw[z, x] = dist
            g[z, x] = float(np.sum(xlog2(dist)) - np.sum(dist * logt[q]))
            for y in range(ch.nY):
                F[z, x, y] = transitions[z][x][y][0]
    mdp = FiniteMdp(nZ=nZ, nU=ch.nX, nW=ch.nY, Pw=Pw, F=F, g=g)
    return QuantizedDualMdp(
        mdp=mdp, labels=labels, resolution=resolution, max_projection_error=max_err
    )
