"""Directed-graph and Markov-chain structure analysis.

Shared by the Q-graph validator (strong connectivity, period), the MDP
solvers (unichain checks, stationary distributions) and the lower-bound
state/node chain.
"""

from __future__ import annotations

import math

import numpy as np


def strongly_connected_components(succ: list[list[int]]) -> list[list[int]]:
    """Tarjan's algorithm, iterative. ``succ[u]`` lists successors of u.

    Returns components in reverse topological order of the condensation.
    """
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            u, pi = work[-1]
            if pi == 0:
                index[u] = low[u] = counter
                counter += 1
                stack.append(u)
                on_stack[u] = True
            advanced = False
            for i in range(pi, len(succ[u])):
                v = succ[u][i]
                if index[v] == -1:
                    work[-1] = (u, i + 1)
                    work.append((v, 0))
                    advanced = True
                    break
                if on_stack[v]:
                    low[u] = min(low[u], index[v])
            if advanced:
                continue
            work.pop()
            if low[u] == index[u]:
                comp = []
                while True:
                    v = stack.pop()
                    on_stack[v] = False
                    comp.append(v)
                    if v == u:
                        break
                comps.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[u])
    return comps


def is_strongly_connected_succ(succ: list[list[int]]) -> bool:
    return len(strongly_connected_components(succ)) == 1


def period_of_component(succ: list[list[int]], comp: list[int]) -> int:
    """gcd of directed cycle lengths inside a strongly connected component.

    BFS level arithmetic: for every intra-component edge u->v the value
    level(u)+1-level(v) is a cycle-length difference; the gcd of all of
    them equals the period.
    """
    members = set(comp)
    level = {comp[0]: 0}
    order = [comp[0]]
    head = 0
    g = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v in succ[u]:
            if v not in members:
                continue
            if v not in level:
                level[v] = level[u] + 1
                order.append(v)
            else:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g) if g != 0 else 0


def closed_classes(succ: list[list[int]]) -> list[list[int]]:
    """Closed communicating classes (recurrent classes of a finite chain).

    A strongly connected component is closed when no edge leaves it.
    """
    comps = strongly_connected_components(succ)
    out = []
    for comp in comps:
        members = set(comp)
        if all(v in members for u in comp for v in succ[u]):
            out.append(sorted(comp))
    return out


def successors_from_matrix(P: np.ndarray, tol: float = 0.0) -> list[list[int]]:
    """Adjacency lists of the support of a transition matrix."""
    return [list(np.flatnonzero(P[i] > tol)) for i in range(P.shape[0])]


def reachable_from(succ: list[list[int]], start: int) -> set[int]:
    seen = {start}
    frontier = [start]
    while frontier:
        u = frontier.pop()
        for v in succ[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return seen


def stationary_power(P: np.ndarray, tol: float = 1e-14, max_iter: int = 2_000_000) -> np.ndarray:
    """Stationary distribution of an irreducible chain by power
    iteration, run until the one-step residual |pi P - pi| drops below
    ``tol``. Iterates the half-lazy chain (I + P)/2, which has the same
    stationary vector but converges for periodic chains too."""
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        step = pi @ P
        if np.abs(step - pi).max() < tol:
            return pi
        pi = 0.5 * (pi + step)
        pi /= pi.sum()
    raise RuntimeError("power iteration did not reach the requested residual")


def stationary_solve(P: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible chain by a direct linear
    solve of pi (P - I) = 0 with the normalisation sum(pi) = 1."""
    n = P.shape[0]
    A = (P.T - np.eye(n))
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()
