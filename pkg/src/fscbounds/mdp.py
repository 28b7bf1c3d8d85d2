"""Finite average-reward MDPs: relative value iteration, policy
iteration, policy evaluation, and certificate verification.

The model: state z, action u, disturbance w ~ Pw(. | z, u), next state
z' = F(z, u, w), reward g(z, u). The optimal long-run average reward
rho* is characterised by the fixed point

    rho + h(z) = max_u [ g(z, u) + sum_w Pw(w | z, u) h(F(z, u, w)) ]

and any (rho, h) satisfying it within a tolerance certifies rho* to the
same tolerance, which is how solver output is checked here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .chains import closed_classes, reachable_from, stationary_solve, successors_from_matrix
from .errors import (
    DimensionMismatch,
    MultichainDetected,
    NotConverged,
    NotStochastic,
)

VI_TOL = 1e-10
VI_MAX_ITER = 1_000_000
VI_DAMPING = 0.5
PI_MAX_ITER = 1000
PI_IMPROVE_TOL = 1e-12


@dataclass(frozen=True)
class FiniteMdp:
    """Explicit finite MDP with tabulated disturbance law, transition
    function and reward."""

    nZ: int
    nU: int
    nW: int
    Pw: np.ndarray  # (nZ, nU, nW), rows over w sum to 1
    F: np.ndarray   # (nZ, nU, nW) -> next state index
    g: np.ndarray   # (nZ, nU)

    def __post_init__(self):
        Pw = np.ascontiguousarray(np.asarray(self.Pw, dtype=float))
        F = np.ascontiguousarray(np.asarray(self.F, dtype=np.int64))
        g = np.ascontiguousarray(np.asarray(self.g, dtype=float))
        shape = (self.nZ, self.nU, self.nW)
        if Pw.shape != shape or F.shape != shape or g.shape != (self.nZ, self.nU):
            raise DimensionMismatch(
                f"Pw {Pw.shape}, F {F.shape}, g {g.shape} inconsistent with "
                f"(nZ,nU,nW)=({self.nZ},{self.nU},{self.nW})"
            )
        if np.any(Pw < 0) or not np.all(np.isfinite(Pw)):
            raise NotStochastic(("Pw",), float("nan"))
        sums = Pw.sum(axis=2)
        worst = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
        if abs(sums[worst] - 1.0) > 1e-12:
            raise NotStochastic(tuple(int(i) for i in worst), float(sums[worst] - 1.0))
        if F.min() < 0 or F.max() >= self.nZ:
            raise DimensionMismatch("F entries must be state indices")
        if not np.all(np.isfinite(g)):
            raise DimensionMismatch("rewards must be finite")
        for name, arr in (("Pw", Pw), ("F", F), ("g", g)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass
class MdpSolution:
    """Gain rho (reward units per step), relative values h with
    h[0] = 0, and a deterministic policy, plus the certified Bellman
    residual of the triple."""

    rho: float
    h: np.ndarray
    policy: np.ndarray
    method: str
    residual: float
    iterations: int
    bracket: tuple[float, float] | None = None


@dataclass(frozen=True)
class BellmanReport:
    residuals: np.ndarray
    max_residual: float
    tol: float
    passed: bool
    argmax_actions: list
    ties: list


def _q_values(mdp: FiniteMdp, h: np.ndarray) -> np.ndarray:
    """Q(z, u) = g(z, u) + E[h(next)] as an (nZ, nU) array."""
    return mdp.g + np.einsum("zuw,zuw->zu", mdp.Pw, h[mdp.F])


def _bellman_apply(mdp: FiniteMdp, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = _q_values(mdp, V)
    return q.max(axis=1), q.argmax(axis=1)


def value_iteration(
    mdp: FiniteMdp,
    tol: float = VI_TOL,
    max_iter: int = VI_MAX_ITER,
    damping: float = VI_DAMPING,
) -> MdpSolution:
    """Relative value iteration with span-seminorm stopping.

    Iterates a damped Bellman operator, V <- (1-tau) V + tau T(V); the
    damping adds self-loops, which removes periodicity without changing
    rho* or h (the action-independent (1-tau) h(z) term commutes with
    the max). At every sweep the per-state differences (T V - V) bracket
    rho*, so stopping when their span drops below ``tol`` certifies rho
    (taken as the bracket midpoint) to within tol/2. The reference state
    is z=0: h = V - V[0].
    """
    tau = damping
    V = np.zeros(mdp.nZ)
    lo = hi = 0.0
    for it in range(1, max_iter + 1):
        TV, policy = _bellman_apply(mdp, V)
        diff = TV - V
        lo, hi = float(diff.min()), float(diff.max())
        if hi - lo < tol:
            h = V - V[0]
            rho = 0.5 * (lo + hi)
            res = float(np.abs(diff - rho).max())
            return MdpSolution(
                rho=rho, h=h, policy=policy, method="value-iteration",
                residual=res, iterations=it, bracket=(lo, hi),
            )
        V = V + tau * diff
        V -= V[0]
    TV, policy = _bellman_apply(mdp, V)
    diff = TV - V
    lo, hi = float(diff.min()), float(diff.max())
    mid = 0.5 * (lo + hi)
    partial = MdpSolution(
        rho=mid, h=V - V[0], policy=policy, method="value-iteration",
        residual=float(np.abs(diff - mid).max()),
        iterations=max_iter, bracket=(lo, hi),
    )
    raise NotConverged(
        f"span {hi - lo:.3e} after {max_iter} iterations (target {tol:.1e})",
        lo=lo, hi=hi, partial=partial,
    )


def induced_chain(mdp: FiniteMdp, policy) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and reward vector of the chain a deterministic
    policy induces."""
    policy = np.asarray(policy, dtype=np.int64)
    P = np.zeros((mdp.nZ, mdp.nZ))
    gpi = np.empty(mdp.nZ)
    for z in range(mdp.nZ):
        u = int(policy[z])
        gpi[z] = mdp.g[z, u]
        for w in range(mdp.nW):
            P[z, mdp.F[z, u, w]] += mdp.Pw[z, u, w]
    return P, gpi


def _evaluate_unichain(P: np.ndarray, gpi: np.ndarray) -> tuple[float, np.ndarray]:
    """Solve rho + h = g + P h with h[0] = 0 (nonsingular for unichain)."""
    n = P.shape[0]
    A = np.empty((n, n))
    A[:, 0] = 1.0
    A[:, 1:] = (np.eye(n) - P)[:, 1:]
    sol = np.linalg.solve(A, gpi)
    rho = float(sol[0])
    h = np.concatenate([[0.0], sol[1:]])
    return rho, h


def policy_iteration(mdp: FiniteMdp, max_iter: int = PI_MAX_ITER, initial_policy=None) -> MdpSolution:
    """Howard policy iteration with exact linear policy evaluation.

    Every evaluated policy must induce a unichain (single closed
    recurrent class); otherwise MultichainDetected is raised carrying
    the offending policy so the caller can fall back to per-class gain
    analysis. Improvement uses lowest-action-index tie-breaking and
    keeps the incumbent action unless another improves by more than a
    small absolute margin, which makes runs deterministic.
    """
    if initial_policy is None:
        policy = mdp.g.argmax(axis=1)
    else:
        policy = np.asarray(initial_policy, dtype=np.int64).copy()
    for it in range(1, max_iter + 1):
        P, gpi = induced_chain(mdp, policy)
        succ = successors_from_matrix(P)
        classes = closed_classes(succ)
        if len(classes) != 1:
            raise MultichainDetected(
                f"policy induces {len(classes)} closed recurrent classes",
                policy=policy.copy(),
            )
        rho, h = _evaluate_unichain(P, gpi)
        q = _q_values(mdp, h)
        best = q.max(axis=1)
        incumbent = q[np.arange(mdp.nZ), policy]
        if float((best - incumbent).max()) <= PI_IMPROVE_TOL:
            res = float(np.abs(rho + h - best).max())
            return MdpSolution(
                rho=rho, h=h, policy=policy, method="policy-iteration",
                residual=res, iterations=it,
            )
        improve = (best - incumbent) > PI_IMPROVE_TOL
        greedy = q.argmax(axis=1)
        policy = np.where(improve, greedy, policy)
    raise NotConverged(f"policy iteration did not settle in {max_iter} sweeps")


def evaluate_policy(mdp: FiniteMdp, policy) -> float:
    """Long-run average reward of a fixed policy: the stationary
    distribution of its induced chain weighted by the per-state reward.
    A lower bound on rho* for any policy."""
    P, gpi = induced_chain(mdp, policy)
    succ = successors_from_matrix(P)
    classes = closed_classes(succ)
    if len(classes) != 1:
        raise MultichainDetected(
            f"policy induces {len(classes)} closed recurrent classes",
            policy=np.asarray(policy, dtype=np.int64),
        )
    cls = classes[0]
    pi = stationary_solve(P[np.ix_(cls, cls)])
    return float(pi @ gpi[cls])


def class_gains(mdp: FiniteMdp, policy) -> tuple[list[list[int]], list[float], np.ndarray]:
    """Recurrent classes of the induced chain, the gain of each, and for
    every state the minimum gain among classes it can reach (the
    adversarial-initial-state value of the policy)."""
    P, gpi = induced_chain(mdp, policy)
    succ = successors_from_matrix(P)
    classes = closed_classes(succ)
    gains = []
    for cls in classes:
        pi = stationary_solve(P[np.ix_(cls, cls)])
        gains.append(float(pi @ gpi[cls]))
    per_state = np.empty(mdp.nZ)
    for z in range(mdp.nZ):
        reach = reachable_from(succ, z)
        vals = [gains[i] for i, cls in enumerate(classes) if reach.intersection(cls)]
        per_state[z] = min(vals)
    return classes, gains, per_state


def verify_bellman(mdp: FiniteMdp, rho: float, h, tol: float) -> BellmanReport:
    """Residual check of a certificate (rho, h).

    residual(z) = rho + h(z) - max_u Q(z, u); passes when every residual
    is within tol. The report also lists, per state, the maximising
    action and any actions tying with it within tol.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (mdp.nZ,):
        raise DimensionMismatch(f"h has shape {h.shape}, expected ({mdp.nZ},)")
    q = _q_values(mdp, h)
    best = q.max(axis=1)
    residuals = rho + h - best
    argmax = [int(q[z].argmax()) for z in range(mdp.nZ)]
    ties = [
        [int(u) for u in np.flatnonzero(best[z] - q[z] <= tol)]
        for z in range(mdp.nZ)
    ]
    max_res = float(np.abs(residuals).max())
    return BellmanReport(
        residuals=residuals,
        max_residual=max_res,
        tol=tol,
        passed=bool(max_res <= tol),
        argmax_actions=argmax,
        ties=ties,
    )


# JSON dump format for the CLI's verify-bellman round trip.

def dump_mdp(mdp: FiniteMdp) -> str:
    return json.dumps(
        {
            "nZ": mdp.nZ,
            "nU": mdp.nU,
            "nW": mdp.nW,
            "Pw": [float(v) for v in mdp.Pw.ravel()],
            "F": [int(v) for v in mdp.F.ravel()],
            "g": [float(v) for v in mdp.g.ravel()],
        },
        indent=1,
    )


def parse_mdp(text: str) -> FiniteMdp:
    doc = json.loads(text)
    nZ, nU, nW = int(doc["nZ"]), int(doc["nU"]), int(doc["nW"])
    Pw = np.asarray(doc["Pw"], dtype=float).reshape(nZ, nU, nW)
    F = np.asarray(doc["F"], dtype=np.int64).reshape(nZ, nU, nW)
    g = np.asarray(doc["g"], dtype=float).reshape(nZ, nU)
    return FiniteMdp(nZ=nZ, nU=nU, nW=nW, Pw=Pw, F=F, g=g)


def load_mdp(path) -> FiniteMdp:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mdp(fh.read())
