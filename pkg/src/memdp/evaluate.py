"""Exact evaluation and seeded simulation of finite-memory strategies.

A strategy and one environment induce a Markov chain on (state, memory)
pairs.  A run's parity outcome is decided by the bottom SCC it ends in, so
the winning probability is the probability of reaching a bottom SCC whose
least priority is even.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .errors import SingularSystem
from .graph import strongly_connected_components
from .model import MEMDP, EnvSet
from .strategy import FactoredStrategy, StrategyAutomaton, expand

EXACT_BLOCK_LIMIT = 10**4
FLOAT_RESIDUAL = 1e-9

Node = Tuple[int, int]


@dataclass
class ProductChain:
    """Reachable part of the chain induced by a strategy in one environment."""

    env: int
    nodes: List[Node]
    succ: Dict[Node, Dict[Node, Fraction]]
    bsccs: List[List[Node]] = field(default_factory=list)
    winning: Dict[Node, bool] = field(default_factory=dict)  # decided nodes only
    order: List[List[Node]] = field(default_factory=list)  # SCCs, successors first


def product_chain(M: MEMDP, e: int, sigma: StrategyAutomaton, starts: Iterable[Node]) -> ProductChain:
    succ: Dict[Node, Dict[Node, Fraction]] = {}
    stack = list(starts)
    nodes = []
    while stack:
        node = stack.pop()
        if node in succ:
            continue
        q, m = node
        row: Dict[Node, Fraction] = {}
        for a, pa in sigma.act(m, q).items():
            if pa == 0:
                continue
            for q2, pq in M.dist(e, q, a).items():
                for m2, pm in sigma.next_memory(m, q, a, q2).items():
                    if pm == 0:
                        continue
                    key = (q2, m2)
                    row[key] = row.get(key, Fraction(0)) + pa * pq * pm
        succ[node] = row
        nodes.append(node)
        stack.extend(k for k in row if k not in succ)
    chain = ProductChain(e, sorted(nodes), succ)
    comps = strongly_connected_components(chain.nodes, lambda v: sorted(succ[v]))
    chain.order = comps
    for comp in comps:
        members = set(comp)
        if all(w in members for v in comp for w in succ[v]):
            chain.bsccs.append(sorted(comp))
            win = min(M.priority[q] for q, _ in comp) % 2 == 0
            for v in comp:
                chain.winning[v] = win
    return chain


def solve_sparse_exact(rows: List[Dict[int, Fraction]], rhs: List[Fraction]) -> List[Fraction]:
    """Gaussian elimination without pivoting on a sparse square system.

    Intended for ``I - P`` blocks of transient states, whose leading
    principal minors are all nonzero.
    """
    n = len(rows)
    rows = [dict(r) for r in rows]
    rhs = list(rhs)
    cols: List[set] = [set() for _ in range(n)]
    for i, row in enumerate(rows):
        for c in row:
            cols[c].add(i)
    for k in range(n):
        piv = rows[k].get(k, 0)
        if piv == 0:
            raise SingularSystem(f"zero pivot at row {k}")
        for i in sorted(cols[k]):
            if i <= k:
                continue
            f = rows[i][k] / piv
            for c, v in rows[k].items():
                nv = rows[i].get(c, 0) - f * v
                if nv == 0:
                    if c in rows[i]:
                        del rows[i][c]
                        cols[c].discard(i)
                else:
                    if c not in rows[i]:
                        cols[c].add(i)
                    rows[i][c] = nv
            rhs[i] -= f * rhs[k]
    x = [Fraction(0)] * n
    for k in range(n - 1, -1, -1):
        s = rhs[k] - sum((v * x[c] for c, v in rows[k].items() if c > k), Fraction(0))
        x[k] = s / rows[k][k]
    return x


def _solve_float(rows, rhs) -> List[float]:
    from scipy.sparse import csr_matrix
    from scipy.sparse.linalg import spsolve

    n = len(rows)
    data, ri, ci = [], [], []
    for i, row in enumerate(rows):
        for c, v in row.items():
            ri.append(i)
            ci.append(c)
            data.append(float(v))
    A = csr_matrix((data, (ri, ci)), shape=(n, n))
    b = np.array([float(v) for v in rhs])
    x = spsolve(A, b)
    residual = float(np.max(np.abs(A @ x - b))) if n else 0.0
    if residual >= FLOAT_RESIDUAL:
        raise SingularSystem(f"float solve residual {residual:.3g} too large")
    return [float(v) for v in x]


def chain_values(chain: ProductChain, exact_limit: int = EXACT_BLOCK_LIMIT) -> Tuple[Dict[Node, Fraction], bool]:
    """Probability of reaching a winning bottom SCC from every node.

    SCCs are solved one block at a time in reverse topological order.
    Returns the values and whether any block needed the float fallback.
    """
    value: Dict[Node, Union[Fraction, float]] = {}
    approximate = False
    for comp in chain.order:
        if comp[0] in chain.winning:
            for v in comp:
                value[v] = Fraction(1) if chain.winning[v] else Fraction(0)
            continue
        index = {v: i for i, v in enumerate(comp)}
        rows, rhs = [], []
        for v in comp:
            row = {index[v]: Fraction(1)}
            b = Fraction(0)
            for w, p in chain.succ[v].items():
                j = index.get(w)
                if j is None:
                    b += p * value[w]
                else:
                    row[j] = row.get(j, Fraction(0)) - p
            rows.append({c: x for c, x in row.items() if x != 0})
            rhs.append(b)
        if len(comp) == 1:
            xs = [rhs[0] / rows[0][0]]
        elif len(comp) <= exact_limit:
            xs = solve_sparse_exact(rows, rhs)
        else:
            xs = _solve_float(rows, rhs)
            approximate = True
        for v, x in zip(comp, xs):
            value[v] = x
    return value, approximate


@dataclass
class EvalResult:
    """Winning probability per environment id plus product-chain statistics."""

    values: Dict[int, Union[Fraction, float]]
    bscc_count: Dict[int, int]
    winning_bscc_count: Dict[int, int]
    product_size: Dict[int, int]
    approximate: bool = False

    def min_value(self):
        return min(self.values.values())

    def to_json(self, model: MEMDP) -> dict:
        def fmt(v):
            return str(v) if isinstance(v, Fraction) else repr(v)

        return {
            "values": {model.envs[e]: fmt(v) for e, v in sorted(self.values.items())},
            "bscc_count": {model.envs[e]: c for e, c in sorted(self.bscc_count.items())},
            "winning_bscc_count": {model.envs[e]: c for e, c in sorted(self.winning_bscc_count.items())},
            "product_size": {model.envs[e]: c for e, c in sorted(self.product_size.items())},
            "approximate": self.approximate,
        }


def as_automaton(M: MEMDP, K: EnvSet, sigma, q0: int, cap=None) -> StrategyAutomaton:
    if isinstance(sigma, FactoredStrategy):
        return expand(sigma, M, K, q0, cap)
    return sigma


def evaluate_exact(M: MEMDP, K=None, sigma=None, q0: Optional[int] = None, cap=None) -> EvalResult:
    """Exact parity value of ``sigma`` from ``q0`` in every environment of ``K``."""
    K = M.env_set(K)
    q0 = M.initial if q0 is None else q0
    sigma = as_automaton(M, K, sigma, q0, cap)
    values, bsccs, wins, sizes = {}, {}, {}, {}
    approximate = False
    for e in K:
        chain = product_chain(M, e, sigma, [(q0, sigma.initial)])
        vals, approx = chain_values(chain)
        approximate |= approx
        values[e] = vals[(q0, sigma.initial)]
        bsccs[e] = len(chain.bsccs)
        wins[e] = sum(1 for b in chain.bsccs if chain.winning[b[0]])
        sizes[e] = len(chain.nodes)
    return EvalResult(values, bsccs, wins, sizes, approximate)


# simulation -----------------------------------------------------------------


@dataclass
class SimulationResult:
    runs: int
    wins: int
    losses: int
    undecided: int
    rows: List[Tuple[int, str, int, str]]

    @property
    def win_fraction(self) -> float:
        return self.wins / self.runs if self.runs else 0.0

    @property
    def undecided_fraction(self) -> float:
        return self.undecided / self.runs if self.runs else 0.0

    def to_json(self) -> dict:
        return {
            "runs": self.runs,
            "wins": self.wins,
            "losses": self.losses,
            "undecided": self.undecided,
            "win_fraction": self.win_fraction,
            "lose_fraction": self.losses / self.runs if self.runs else 0.0,
            "undecided_fraction": self.undecided_fraction,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run_id", "outcome", "steps", "final_state"])
        w.writerows(self.rows)
        return buf.getvalue()


def run_rng(seed: int, run: int) -> np.random.Generator:
    """Independent PCG64 stream for one run, derived from (seed, run index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run,))))


def _sample(rng: np.random.Generator, dist: List[Tuple[object, float]]):
    u = rng.random()
    acc = 0.0
    for item, p in dist:
        acc += p
        if u < acc:
            return item
    return dist[-1][0]


def simulate(
    M: MEMDP,
    e,
    sigma,
    q0: Optional[int] = None,
    runs: int = 1000,
    horizon: int = 1000,
    seed: int = 0,
    cap=None,
) -> SimulationResult:
    """Sample ``runs`` trajectories in environment ``e`` (id or name).

    A run stops as soon as it enters a bottom SCC of the product chain and
    is then classified win or lose; runs still transient after ``horizon``
    steps are undecided.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    e = M.env_id(e) if isinstance(e, str) else e
    q0 = M.initial if q0 is None else q0
    K = EnvSet.single(e, M.n_envs)
    sigma = as_automaton(M, K, sigma, q0, cap)
    start = (q0, sigma.initial)
    chain = product_chain(M, e, sigma, [start])
    table = {v: [(w, float(p)) for w, p in sorted(row.items())] for v, row in chain.succ.items()}
    wins = losses = undecided = 0
    rows = []
    for r in range(runs):
        rng = run_rng(seed, r)
        node = start
        steps = 0
        while node not in chain.winning and steps < horizon:
            node = _sample(rng, table[node])
            steps += 1
        if node in chain.winning:
            outcome = "win" if chain.winning[node] else "lose"
        else:
            outcome = "undecided"
        if outcome == "win":
            wins += 1
        elif outcome == "lose":
            losses += 1
        else:
            undecided += 1
        rows.append((r, outcome, steps, M.states[node[0]]))
    return SimulationResult(runs, wins, losses, undecided, rows)
