"""Constraint systems for randomized finite-memory strategies and the capped-memory gap solver.

A strategy with memory ``0..N-1`` is described by variables
``p[q, i, a, j]``: the probability, in state ``q`` with memory ``i``, of
playing ``a`` and moving to memory ``j``.  The same p-variables serve every
environment; each environment gets its own value variables ``x[e, q, i]``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import MemoryBudgetExceeded
from .evaluate import evaluate_exact, run_rng, solve_sparse_exact
from .graph import strongly_connected_components
from .limit_sure import LimitSureSolver, synthesize_ls_strategy
from .model import MEMDP, EnvSet, Parity, encode_objective, format_prob
from .strategy import StrategyAutomaton

TINY_LIMIT = 64

XVar = Tuple[int, int, int]  # (env, state, memory)
PVar = Tuple[int, int, int, int]  # (state, memory, action, memory')
PAssignment = Dict[PVar, Fraction]


@dataclass(frozen=True)
class Constraint:
    """``sum(coef * prod(vars)) <op> rhs`` with ``op`` one of ``=``, ``>=``, ``<=``, ``>``."""

    terms: Tuple[Tuple[Fraction, Tuple[object, ...]], ...]
    op: str
    rhs: Fraction


@dataclass
class ConstraintSystem:
    model: MEMDP
    envs: List[int]
    memory: int
    targets: Dict[int, frozenset]  # env -> set of (state, memory)
    q0: int
    alpha: Fraction
    eps: Fraction
    x_vars: List[XVar]
    p_vars: List[PVar]
    constraints: List[Constraint]
    qno: Optional[Dict[int, frozenset]] = None

    def p_vars_at(self, q: int, i: int) -> List[PVar]:
        return [v for v in self.p_vars if v[0] == q and v[1] == i]

    def x_name(self, v: XVar) -> str:
        e, q, i = v
        return _symbol(f"x_{self.model.envs[e]}_{self.model.states[q]}_{i}")

    def p_name(self, v: PVar) -> str:
        q, i, a, j = v
        return _symbol(f"p_{self.model.states[q]}_{i}_{self.model.actions[a]}_{j}")

    def name(self, v) -> str:
        return self.x_name(v[1:]) if v[0] == "x" else self.p_name(v[1:])

    def to_smtlib(self) -> str:
        """SMT-LIB 2 script in QF_NRA; declarations and assertions in a fixed order."""
        lines = ["(set-logic QF_NRA)"]
        lines += [f"(declare-const {self.x_name(v)} Real)" for v in self.x_vars]
        lines += [f"(declare-const {self.p_name(v)} Real)" for v in self.p_vars]
        for c in self.constraints:
            lines.append(f"(assert ({c.op} {self._expr(c.terms)} {_num(c.rhs)}))")
        lines.append("(check-sat)")
        return "\n".join(lines) + "\n"

    def _expr(self, terms) -> str:
        parts = []
        for coef, vs in terms:
            names = [self.name(v) for v in vs]
            if coef != 1 or not names:
                names = [_num(coef)] + names
            parts.append(names[0] if len(names) == 1 else f"(* {' '.join(names)})")
        if not parts:
            return "0"
        return parts[0] if len(parts) == 1 else f"(+ {' '.join(parts)})"


_SIMPLE = re.compile(r"^[A-Za-z~!@$%^&*_+=<>.?/\-][A-Za-z0-9~!@$%^&*_+=<>.?/\-]*$")


def _symbol(name: str) -> str:
    return name if _SIMPLE.match(name) else "|" + name.replace("|", "_").replace("\\", "_") + "|"


def _num(x: Fraction) -> str:
    x = Fraction(x)
    body = f"{abs(x.numerator)}.0" if x.denominator == 1 else f"(/ {abs(x.numerator)} {x.denominator})"
    return f"(- {body})" if x < 0 else body


def _normalize_targets(M: MEMDP, envs, targets, N: int) -> Dict[int, frozenset]:
    """Accept one set for all environments or a map env -> set; entries are states or (state, memory)."""
    if isinstance(targets, Mapping):
        per_env = {(M.env_id(k) if isinstance(k, str) else k): v for k, v in targets.items()}
    else:
        per_env = {e: targets for e in envs}
    out = {}
    for e in envs:
        pairs = set()
        for t in per_env.get(e, ()):
            if isinstance(t, tuple):
                pairs.add(t)
            else:
                pairs.update((t, i) for i in range(N))
        out[e] = frozenset(pairs)
    return out


def build_gap_constraints(
    M: MEMDP,
    targets,
    N: int,
    alpha,
    eps,
    support: Optional[Iterable[PVar]] = None,
    qno=None,
    q0: Optional[int] = None,
    envs: Optional[EnvSet] = None,
) -> ConstraintSystem:
    """Reachability constraint system shared by all environments, with threshold rows ``x[e, q0, 0] >= alpha - eps``."""
    if N < 1:
        raise ValueError("memory size must be at least 1")
    env_list = list(M.env_set(envs))
    q0 = M.initial if q0 is None else q0
    alpha, eps = Fraction(alpha), Fraction(eps)
    T = _normalize_targets(M, env_list, targets, N)
    Z = _normalize_targets(M, env_list, qno, N) if qno is not None else None
    x_vars = [(e, q, i) for e in env_list for q in range(M.n_states) for i in range(N)]
    p_vars = [(q, i, a, j) for q in range(M.n_states) for i in range(N) for a in M.enabled[q] for j in range(N)]
    one = Fraction(1)
    cons: List[Constraint] = []
    for q in range(M.n_states):
        for i in range(N):
            row = tuple((one, (("p", q, i, a, j),)) for a in M.enabled[q] for j in range(N))
            cons.append(Constraint(row, "=", one))
    for v in p_vars:
        cons.append(Constraint(((one, (("p",) + v,)),), ">=", Fraction(0)))
        cons.append(Constraint(((one, (("p",) + v,)),), "<=", one))
    for v in x_vars:
        cons.append(Constraint(((one, (("x",) + v,)),), ">=", Fraction(0)))
        cons.append(Constraint(((one, (("x",) + v,)),), "<=", one))
    for e in env_list:
        for q in range(M.n_states):
            for i in range(N):
                xv = ("x", e, q, i)
                if (q, i) in T[e]:
                    cons.append(Constraint(((one, (xv,)),), "=", one))
                    continue
                if Z is not None and (q, i) in Z[e]:
                    cons.append(Constraint(((one, (xv,)),), "=", Fraction(0)))
                    continue
                terms = [(one, (xv,))]
                for a in M.enabled[q]:
                    for j in range(N):
                        for q2, pr in M.dist(e, q, a).items():
                            terms.append((-pr, (("p", q, i, a, j), ("x", e, q2, j))))
                cons.append(Constraint(tuple(terms), "=", Fraction(0)))
    for e in env_list:
        cons.append(Constraint(((one, (("x", e, q0, 0),)),), ">=", alpha - eps))
    if support is not None:
        S = set(support)
        for v in p_vars:
            term = ((one, (("p",) + v,)),)
            cons.append(Constraint(term, ">", Fraction(0)) if v in S else Constraint(term, "=", Fraction(0)))
    return ConstraintSystem(M, env_list, N, T, q0, alpha, eps, x_vars, p_vars, cons, Z)


# evaluation for a fixed p ----------------------------------------------------


def _induced_chain(M: MEMDP, e: int, N: int, p: PAssignment):
    succ: Dict[Tuple[int, int], Dict[Tuple[int, int], Fraction]] = {}
    for q in range(M.n_states):
        for i in range(N):
            row: Dict[Tuple[int, int], Fraction] = {}
            for a in M.enabled[q]:
                for j in range(N):
                    w = p.get((q, i, a, j), 0)
                    if not w:
                        continue
                    for q2, pr in M.dist(e, q, a).items():
                        row[(q2, j)] = row.get((q2, j), Fraction(0)) + w * pr
            succ[(q, i)] = row
    return succ


def _reach_values(succ, targets, zeros) -> Dict:
    """Exact reachability probabilities, solved SCC by SCC (successors first)."""
    value = {}
    nodes = sorted(succ)
    order = strongly_connected_components(nodes, lambda v: sorted(succ[v]) if v not in targets and v not in zeros else ())
    for comp in order:
        unknown = []
        for v in comp:
            if v in targets:
                value[v] = Fraction(1)
            elif v in zeros:
                value[v] = Fraction(0)
            else:
                unknown.append(v)
        if not unknown:
            continue
        index = {v: k for k, v in enumerate(unknown)}
        rows, rhs = [], []
        for v in unknown:
            row = {index[v]: Fraction(1)}
            b = Fraction(0)
            for w, pr in succ[v].items():
                k = index.get(w)
                if k is None:
                    b += pr * value[w]
                else:
                    row[k] = row.get(k, Fraction(0)) - pr
            rows.append({c: x for c, x in row.items() if x != 0})
            rhs.append(b)
        for v, x in zip(unknown, solve_sparse_exact(rows, rhs)):
            value[v] = x
    return value


def _cannot_reach(succ, targets) -> frozenset:
    preds: Dict = {}
    for v, row in succ.items():
        for w in row:
            preds.setdefault(w, []).append(v)
    seen = set(targets)
    stack = list(targets)
    while stack:
        w = stack.pop()
        for v in preds.get(w, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return frozenset(v for v in succ if v not in seen)


def evaluate_constraints_for_fixed_p(system: ConstraintSystem, p: PAssignment) -> Dict[XVar, Fraction]:
    """Unique solution of the value equations once p is fixed.

    States that cannot reach the targets under p get value 0 (unless the
    system carries its own zero sets, which are then trusted).  Raises
    ``SingularSystem`` when the supplied zero sets leave the system without
    a unique solution.
    """
    M, N = system.model, system.memory
    for q in range(M.n_states):
        for i in range(N):
            total = sum((p.get(v, 0) for v in system.p_vars_at(q, i)), Fraction(0))
            if total != 1:
                raise ValueError(f"p at ({M.states[q]}, {i}) sums to {total}")
    out = {}
    for e in system.envs:
        succ = _induced_chain(M, e, N, p)
        targets = system.targets[e]
        zeros = system.qno[e] if system.qno is not None else _cannot_reach(succ, targets)
        vals = _reach_values(succ, targets, zeros)
        for (q, i), x in vals.items():
            out[(e, q, i)] = x
    return out


def p_strategy_automaton(M: MEMDP, N: int, p: PAssignment) -> StrategyAutomaton:
    """Strategy automaton playing p: the action marginal, then the memory move conditioned on the action."""
    output, action_update = {}, {}
    for q in range(M.n_states):
        for i in range(N):
            marg: Dict[int, Fraction] = {}
            for a in M.enabled[q]:
                for j in range(N):
                    w = p.get((q, i, a, j), 0)
                    if w:
                        marg[a] = marg.get(a, Fraction(0)) + w
            output[(i, q)] = marg
            for a, pa in marg.items():
                action_update[(i, q, a)] = {
                    j: p[(q, i, a, j)] / pa for j in range(N) if p.get((q, i, a, j), 0)
                }
    return StrategyAutomaton(N, 0, output, action_update=action_update)


# gap solver -------------------------------------------------------------------


@dataclass
class Yes:
    strategy: StrategyAutomaton
    values: Dict[int, Fraction]
    p: Optional[PAssignment] = None
    memory: int = 1
    method: str = ""

    def to_json(self, model: MEMDP) -> dict:
        out = {
            "answer": "yes",
            "method": self.method,
            "memory": self.memory,
            "values": {model.envs[e]: str(v) for e, v in sorted(self.values.items())},
            "strategy": self.strategy.to_json(model),
        }
        if self.p is not None:
            out["p"] = [
                {
                    "state": model.states[q],
                    "memory": i,
                    "action": model.actions[a],
                    "next_memory": j,
                    "prob": format_prob(w),
                }
                for (q, i, a, j), w in sorted(self.p.items())
                if w
            ]
        return out


@dataclass
class NoWithinBudget:
    memory_cap: int
    effort: Dict[str, int] = field(default_factory=dict)

    def to_json(self, model: MEMDP) -> dict:
        return {"answer": "no-within-budget", "memory_cap": self.memory_cap, "effort": self.effort}


GapAnswer = Union[Yes, NoWithinBudget]


class _Evaluator:
    """Parity value of a p-strategy from (q0, 0) in every environment, in floats or exactly."""

    def __init__(self, M: MEMDP, envs: List[int], N: int, q0: int):
        self.M, self.envs, self.N, self.q0 = M, envs, N, q0
        self.nodes = [(q, i) for q in range(M.n_states) for i in range(N)]
        self.index = {v: k for k, v in enumerate(self.nodes)}
        self.pvars = [(q, i, a, j) for q in range(M.n_states) for i in range(N) for a in M.enabled[q] for j in range(N)]
        # per env: (pvar position, from node, to node, probability)
        self.edges = {}
        for e in envs:
            rows = []
            for k, (q, i, a, j) in enumerate(self.pvars):
                for q2, pr in M.dist(e, q, a).items():
                    rows.append((k, self.index[(q, i)], self.index[(q2, j)], float(pr)))
            self.edges[e] = rows

    def winning_bottoms(self, support_mask, e) -> Tuple[set, set]:
        """Nodes in winning and in losing bottom SCCs for the given support."""
        succ = {v: set() for v in range(len(self.nodes))}
        for k, u, w, _ in self.edges[e]:
            if support_mask[k]:
                succ[u].add(w)
        win, lose = set(), set()
        for comp in strongly_connected_components(range(len(self.nodes)), lambda v: sorted(succ[v])):
            members = set(comp)
            if all(w in members for v in comp for w in succ[v]):
                good = min(self.M.priority[self.nodes[v][0]] for v in comp) % 2 == 0
                (win if good else lose).update(comp)
        return win, lose

    def float_values(self, vec: np.ndarray) -> float:
        mask = vec > 0
        start = self.index[(self.q0, 0)]
        worst = 1.0
        n = len(self.nodes)
        for e in self.envs:
            win, lose = self.winning_bottoms(mask, e)
            P = np.zeros((n, n))
            for k, u, w, pr in self.edges[e]:
                if mask[k]:
                    P[u, w] += vec[k] * pr
            A = np.eye(n) - P
            b = np.zeros(n)
            for v in win:
                A[v, :] = 0
                A[v, v] = 1
                b[v] = 1
            for v in lose:
                A[v, :] = 0
                A[v, v] = 1
            # nodes that cannot reach a winning bottom SCC are fixed to 0
            reach = set(win)
            changed = True
            while changed:
                changed = False
                for k, u, w, _ in self.edges[e]:
                    if mask[k] and w in reach and u not in reach:
                        reach.add(u)
                        changed = True
            for v in range(n):
                if v not in reach and v not in lose:
                    A[v, :] = 0
                    A[v, v] = 1
            try:
                x = np.linalg.solve(A, b)
            except np.linalg.LinAlgError:
                return 0.0
            worst = min(worst, float(x[start]))
        return worst

    def exact(self, p: PAssignment) -> Dict[int, Fraction]:
        sigma = p_strategy_automaton(self.M, self.N, p)
        return evaluate_exact(self.M, EnvSet.of(self.envs, self.M.n_envs), sigma, self.q0).values


def _rationalize(vec: np.ndarray, groups: List[List[int]], pvars, denominator: int = 1000) -> PAssignment:
    p: PAssignment = {}
    for g in groups:
        ws = [Fraction(float(vec[k])).limit_denominator(denominator) if vec[k] > 1e-4 else Fraction(0) for k in g]
        total = sum(ws)
        if total == 0:
            ws = [Fraction(1, len(g))] * len(g)
            total = Fraction(1)
        for k, w in zip(g, ws):
            if w:
                p[pvars[k]] = w / total
    return p


def _local_search(ev: _Evaluator, groups, rng, vec, allowed, iterations: int) -> Tuple[np.ndarray, float, int]:
    """Move probability mass between two entries of one group, keeping improvements; halve the step on failure."""
    best = ev.float_values(vec)
    evals = 1
    step = 0.5
    movable = [[k for k in g if allowed[k]] for g in groups]
    movable = [g for g in movable if len(g) > 1]
    if not movable:
        return vec, best, evals
    stall = 0
    for _ in range(iterations):
        g = movable[rng.integers(len(movable))]
        src, dst = rng.choice(g, size=2, replace=False)
        amount = min(step, vec[src])
        if amount <= 0:
            stall += 1
        else:
            cand = vec.copy()
            cand[src] -= amount
            cand[dst] += amount
            val = ev.float_values(cand)
            evals += 1
            if val > best + 1e-12:
                vec, best = cand, val
                stall = 0
            else:
                stall += 1
        if stall >= 2 * len(movable) + 4:
            step /= 2
            stall = 0
            if step < 1e-4:
                break
    return vec, best, evals


def solve_gap(
    M: MEMDP,
    obj=None,
    alpha=Fraction(1),
    eps=Fraction(1, 100),
    mem_cap: int = 1,
    budget: int = 20,
    seed: int = 0,
    envs: Optional[EnvSet] = None,
    use_limit_sure: bool = True,
) -> GapAnswer:
    """Search for a strategy with value at least ``alpha - eps`` in every environment.

    ``budget`` is the number of random restarts of the local search per
    memory size.  A Yes answer is always certified by exact evaluation; a
    NoWithinBudget answer only says that nothing was found with at most
    ``mem_cap`` memory states.
    """
    alpha, eps = Fraction(alpha), Fraction(eps)
    if not 0 < alpha <= 1 or eps <= 0 or mem_cap < 1:
        raise ValueError("need 0 < alpha <= 1, eps > 0 and mem_cap >= 1")
    goal = alpha - eps
    Menc = encode_objective(M, obj or Parity())
    K = Menc.env_set(envs)
    env_list = list(K)
    q0 = Menc.initial
    effort = {"supports": 0, "restarts": 0, "evaluations": 0, "certifications": 0}

    if use_limit_sure and goal < 1:
        solver = LimitSureSolver(Menc)
        if q0 in solver.region(K):
            try:
                sigma = synthesize_ls_strategy(Menc, K, 1 - goal, q0, cap=mem_cap, solver=solver)
            except MemoryBudgetExceeded:
                pass
            else:
                res = evaluate_exact(Menc, K, sigma, q0)
                effort["certifications"] += 1
                if not res.approximate and res.min_value() >= goal:
                    return Yes(sigma, res.values, None, sigma.memory_size, "limit-sure")

    for N in range(1, mem_cap + 1):
        ev = _Evaluator(Menc, env_list, N, q0)
        groups: List[List[int]] = []
        pos = 0
        for q in range(Menc.n_states):
            for i in range(N):
                size = len(Menc.enabled[q]) * N
                groups.append(list(range(pos, pos + size)))
                pos += size
        n_p = pos

        def certify(p):
            effort["certifications"] += 1
            vals = ev.exact(p)
            if min(vals.values()) >= goal:
                return Yes(p_strategy_automaton(Menc, N, p), vals, p, N, "search")
            return None

        tiny = (Menc.n_states * N) ** 2 * len(Menc.actions) <= TINY_LIMIT
        rng = run_rng(seed, N)
        if tiny:
            choices = [[mask for mask in range(1, 1 << len(g))] for g in groups]
            for combo in itertools.product(*choices):
                effort["supports"] += 1
                allowed = np.zeros(n_p, dtype=bool)
                vec = np.zeros(n_p)
                for g, mask in zip(groups, combo):
                    members = [k for b, k in enumerate(g) if mask >> b & 1]
                    allowed[members] = True
                    vec[members] = 1.0 / len(members)
                p = _rationalize(vec, groups, ev.pvars)
                found = certify(p)
                if found:
                    return found
                vec, _, evals = _local_search(ev, groups, rng, vec, allowed, 200)
                effort["evaluations"] += evals
                found = certify(_rationalize(vec, groups, ev.pvars))
                if found:
                    return found
            continue
        allowed = np.ones(n_p, dtype=bool)
        for r in range(budget):
            effort["restarts"] += 1
            rr = run_rng(seed, 1000 * N + r + 1)
            vec = np.zeros(n_p)
            for g in groups:
                vec[g] = rr.dirichlet(np.ones(len(g)))
            vec, val, evals = _local_search(ev, groups, rr, vec, allowed, 400)
            effort["evaluations"] += evals
            if val + 1e-6 < float(goal):
                continue
            found = certify(_rationalize(vec, groups, ev.pvars))
            if found:
                return found
            for denom in (100, 10**4, 10**6):
                found = certify(_rationalize(vec, groups, ev.pvars, denom))
                if found:
                    return found
    return NoWithinBudget(mem_cap, effort)
