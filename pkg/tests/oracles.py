"""Brute-force reference implementations, independent of the package's graph code.

They enumerate exhaustively and lean on networkx for SCCs, so they are only
usable on tiny models.
"""

import itertools
from fractions import Fraction

import networkx as nx


def _succ(M, e, q, a):
    return [t for t, p in M.delta[e][q][a].items() if p > 0]


def parity_region_bruteforce(M, e=0):
    """States from which some pure memoryless strategy wins parity with probability 1 in M[e].

    Pure memoryless strategies suffice for this question on a single MDP; a
    strategy wins from q with probability 1 iff every bottom SCC reachable
    from q has an even least priority.
    """
    n = M.n_states
    region = set()
    for choice in itertools.product(*(M.enabled[q] for q in range(n))):
        g = nx.DiGraph()
        g.add_nodes_from(range(n))
        for q in range(n):
            g.add_edges_from((q, t) for t in _succ(M, e, q, choice[q]))
        cond = nx.condensation(g)
        good_bottom = {}
        for c in cond.nodes:
            if cond.out_degree(c) == 0:
                members = cond.nodes[c]["members"]
                good_bottom[c] = min(M.priority[q] for q in members) % 2 == 0
        for q in range(n):
            if q in region:
                continue
            c = cond.graph["mapping"][q]
            reach = nx.descendants(cond, c) | {c}
            if all(good_bottom[b] for b in reach if b in good_bottom):
                region.add(q)
    return frozenset(region)


def mecs_bruteforce(M, e=0):
    """Maximal end components of M[e] by enumerating every set of state-action pairs."""
    pairs = [(q, a) for q in range(M.n_states) for a in M.enabled[q]]
    ecs = []
    for r in range(1, len(pairs) + 1):
        for subset in itertools.combinations(pairs, r):
            states = {q for q, _ in subset}
            if any(t not in states for q, a in subset for t in _succ(M, e, q, a)):
                continue
            g = nx.DiGraph()
            g.add_nodes_from(states)
            g.add_edges_from((q, t) for q, a in subset for t in _succ(M, e, q, a))
            if nx.is_strongly_connected(g):
                ecs.append(frozenset(subset))
    return [d for d in ecs if not any(d < other for other in ecs)]


def fixed_p_values(M, e, N, p, targets):
    """Reachability values of the (state, memory) chain induced by p, by dense exact Gaussian elimination.

    ``targets`` is a set of states (all memory values count).
    """
    nodes = [(q, i) for q in range(M.n_states) for i in range(N)]
    index = {v: k for k, v in enumerate(nodes)}
    succ = {v: {} for v in nodes}
    for q, i in nodes:
        for a in M.enabled[q]:
            for j in range(N):
                w = p.get((q, i, a, j), 0)
                for t, pr in M.delta[e][q][a].items():
                    if w and pr:
                        succ[(q, i)][(t, j)] = succ[(q, i)].get((t, j), 0) + w * pr
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    g.add_edges_from((v, w) for v in nodes for w in succ[v])
    goal = {v for v in nodes if v[0] in targets}
    can = set(goal)
    for v in goal:
        can |= nx.ancestors(g, v)
    n = len(nodes)
    A = [[Fraction(0)] * (n + 1) for _ in range(n)]
    for v in nodes:
        k = index[v]
        A[k][k] = Fraction(1)
        if v in goal:
            A[k][n] = Fraction(1)
        elif v in can:
            for w, pr in succ[v].items():
                A[k][index[w]] -= pr
    for col in range(n):
        piv = next(r for r in range(col, n) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col] / A[col][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return {v: A[index[v]][n] / A[index[v]][index[v]] for v in nodes}
