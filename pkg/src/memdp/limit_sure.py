"""Limit-sure winning in MEMDPs and epsilon-optimal strategy synthesis.

Per knowledge set K (two or more environments) the solver:

1. redirects knowledge-shrinking transitions to win/lose sinks using the
   regions of the smaller knowledge sets;
2. finds the maximal common end components (end components of the union
   MDP) and, for each one whose distributions differ across K, splits K by
   a distinguishing transition; a component winning for both halves is a
   place where the environment can be learnt by sampling, so all its
   actions are sent to the win sink;
3. for every environment e, computes the states winning almost surely in
   e while staying inside the region of K without e;
4. returns the almost-sure reachability region of the union of those sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple

from .almost_sure import AlmostSureSolver, AlmostSureStrategy, RevealedModel, to_revealed_form
from .bounds import ln_upper, sample_count
from .errors import MemoryBudgetExceeded, NotLimitSureWinning, RevealedFormRequired
from .graph import (
    EndComponent,
    almost_sure_parity,
    almost_sure_reach,
    arena_mecs,
    bottom_components,
    build_arena,
    pairs_arena,
)
from .model import MEMDP, EnvSet, Reach, Region, encode_objective
from .strategy import FactoredStrategy, StrategyAutomaton, expand

RUN_LENGTH_LIMIT = 10**6


@dataclass(frozen=True)
class DistinguishingPartition:
    """A transition whose probability differs across K and the split of K it induces."""

    source: int
    action: int
    target: int
    pivot: int
    first: EnvSet  # environments agreeing with the pivot
    second: EnvSet

    @property
    def transition(self) -> Tuple[int, int, int]:
        return (self.source, self.action, self.target)

    def describe(self, model: MEMDP) -> dict:
        return {
            "transition": [model.states[self.source], model.actions[self.action], model.states[self.target]],
            "pivot": model.envs[self.pivot],
            "blocks": [[model.envs[e] for e in self.first], [model.envs[e] for e in self.second]],
        }


@dataclass(frozen=True)
class SamplingPlan:
    partition: DistinguishingPartition
    sample_count: int
    eta: Fraction
    pivot_prob: Fraction

    def choose_first(self, hits: int) -> bool:
        """Decide the pivot's block when the observed frequency is within eta/2 of its probability."""
        return abs(Fraction(hits, self.sample_count) - self.pivot_prob) < self.eta / 2


def min_probability_gap(M: MEMDP, K: Optional[EnvSet] = None) -> Optional[Fraction]:
    """Smallest nonzero difference between two environments' probabilities of one transition."""
    K = K or M.all_envs()
    best = None
    for q in range(M.n_states):
        for a in M.enabled[q]:
            for q2 in M.union_support(K, q, a):
                vals = sorted({M.prob(e, q, a, q2) for e in K})
                for x, y in zip(vals, vals[1:]):
                    if best is None or y - x < best:
                        best = y - x
    return best


def is_revealed(M: MEMDP, K: EnvSet, sinks) -> bool:
    for q in range(M.n_states):
        for a in M.enabled[q]:
            for q2 in M.union_support(K, q, a):
                know = M.knowledge(K, q, a, q2)
                if know.mask != K.mask and q2 not in sinks:
                    return False
    return True


def common_ecs_revealed(R, K: Optional[EnvSet] = None) -> List[EndComponent]:
    """Maximal common end components of a revealed model: the end components of its union MDP."""
    if isinstance(R, RevealedModel):
        model, sinks = R.model, R.sinks
        K = K or R.scope
    else:
        model = R
        K = K or model.all_envs()
        sinks = frozenset()
    if not is_revealed(model, K, sinks):
        raise RevealedFormRequired("model has a revealing transition that does not enter a sink")
    return [EndComponent(d, K) for d in arena_mecs(build_arena(model, K))]


def distinguishing_partition(M: MEMDP, K: EnvSet, D) -> Optional[DistinguishingPartition]:
    """Lexicographically smallest (state, action, successor) of ``D`` whose probability differs in K."""
    pairs = D.pairs if isinstance(D, EndComponent) else D
    pivot = K.first()
    for q in sorted(pairs):
        for a in sorted(pairs[q]):
            for q2 in sorted(M.union_support(K, q, a)):
                ref = M.prob(pivot, q, a, q2)
                same = [e for e in K if M.prob(e, q, a, q2) == ref]
                if len(same) < len(K):
                    first = EnvSet.of(same, K.size)
                    second = EnvSet(K.mask & ~first.mask, K.size)
                    return DistinguishingPartition(q, a, q2, pivot, first, second)
    return None


@dataclass
class LimitSureLevel:
    envs: EnvSet
    revealed: RevealedModel
    components: List[EndComponent]
    partitions: List[Tuple[EndComponent, DistinguishingPartition, bool]]
    winning_components: List[Tuple[EndComponent, DistinguishingPartition]]
    collapsed: MEMDP  # revealed model with winning distinguishing components sent to the win sink
    safe_targets: Dict[int, FrozenSet[int]]  # env -> region of K without env, plus the win sink
    as_sets: Dict[int, FrozenSet[int]]  # env -> almost-sure states inside safe_targets[env]
    as_choice: Dict[int, Dict[int, int]]
    recurrent: Dict[int, FrozenSet[int]]
    union_target: FrozenSet[int]
    reach_solver: AlmostSureSolver
    region: FrozenSet[int]  # original states only
    component_of: Dict[int, int] = field(default_factory=dict)  # state -> index in winning_components


class LimitSureSolver:
    """Limit-sure parity regions of one model for every knowledge set, computed lazily.

    Environments are never merged by support here: that reduction is only
    known to be sound for almost-sure winning.
    """

    def __init__(self, M: MEMDP):
        self.model = M
        self._regions: Dict[int, FrozenSet[int]] = {}
        self._levels: Dict[int, LimitSureLevel] = {}
        self._single: Dict[int, Tuple[FrozenSet[int], Dict[int, int]]] = {}

    def single(self, e: int):
        if e not in self._single:
            M = self.model
            self._single[e] = almost_sure_parity(build_arena(M, EnvSet.single(e, M.n_envs)), M.priority)
        return self._single[e]

    def region(self, K: Optional[EnvSet] = None) -> FrozenSet[int]:
        K = K or self.model.all_envs()
        if K.mask not in self._regions:
            if len(K) == 1:
                self._regions[K.mask] = self.single(K.first())[0]
            else:
                self._regions[K.mask] = self.level(K).region
        return self._regions[K.mask]

    def solve(self, K: Optional[EnvSet] = None) -> Region:
        K = K or self.model.all_envs()
        return Region(self.region(K), K, "limit-sure")

    def level(self, K: EnvSet) -> LimitSureLevel:
        if K.mask in self._levels:
            return self._levels[K.mask]
        M = self.model
        revealed = to_revealed_form(M, K, lambda Kt, q: q in self.region(Kt))
        R, win = revealed.model, revealed.win
        comps = [EndComponent(d, K) for d in arena_mecs(build_arena(R, K))]

        partitions = []
        winners = []
        for D in comps:
            part = distinguishing_partition(R, K, D)
            if part is None:
                continue
            good = D.states <= self.region(part.first) and D.states <= self.region(part.second)
            partitions.append((D, part, good))
            if good:
                winners.append((D, part))

        delta = [list(env) for env in R.delta]
        for D, _ in winners:
            for q in D.states:
                for e in range(R.n_envs):
                    delta[e][q] = {a: {win: Fraction(1)} for a in R.enabled[q]}
        collapsed = R.replace(delta=tuple(tuple(env) for env in delta))

        safe_targets, as_sets, as_choice, recurrent = {}, {}, {}, {}
        for e in K:
            rest = EnvSet(K.mask & ~(1 << e), K.size)
            T = self.region(rest) | {win}
            safe_targets[e] = T
            arena = build_arena(collapsed, EnvSet.single(e, R.n_envs), T, K)
            states, choice = almost_sure_parity(arena, collapsed.priority)
            as_sets[e] = states
            as_choice[e] = choice
            succ = {q: arena[q][choice[q]] for q in choice}
            recurrent[e] = frozenset(
                q for comp in bottom_components(sorted(succ), lambda q: sorted(succ[q])) for q in comp
            )
        union_target = frozenset().union(*as_sets.values())
        reach_model = encode_objective(collapsed, Reach(union_target))
        reach_solver = AlmostSureSolver(reach_model)
        region = reach_solver.region(K) - revealed.sinks

        level = LimitSureLevel(
            K,
            revealed,
            comps,
            partitions,
            winners,
            collapsed,
            safe_targets,
            as_sets,
            as_choice,
            recurrent,
            union_target,
            reach_solver,
            region,
        )
        for i, (D, _) in enumerate(winners):
            for q in D.states:
                level.component_of[q] = i
        self._levels[K.mask] = level
        return level

    def fallible_depth(self, K: EnvSet, _memo=None) -> int:
        """Longest chain of phases that can fail (sampling decisions, bounded runs) along one play."""
        memo = {} if _memo is None else _memo
        if K.mask in memo:
            return memo[K.mask]
        if len(K) == 1:
            memo[K.mask] = 0
            return 0
        level = self.level(K)
        depth = 0
        for t, _ in level.revealed.log:
            depth = max(depth, self.fallible_depth(t.knowledge, memo))
        for _, part in level.winning_components:
            for block in (part.first, part.second):
                depth = max(depth, 1 + self.fallible_depth(block, memo))
        for e in K:
            if level.as_sets[e] - level.recurrent[e]:
                depth = max(depth, 1 + self.fallible_depth(EnvSet(K.mask & ~(1 << e), K.size), memo))
        memo[K.mask] = depth
        return depth


def ls_parity(M: MEMDP, K: Optional[EnvSet] = None, solver: Optional[LimitSureSolver] = None) -> Region:
    """Limit-sure winning region for the parity objective given by ``M``'s priorities."""
    solver = solver or LimitSureSolver(M)
    return solver.solve(M.env_set(K))


def run_length(
    M: MEMDP, e: int, choice: Dict[int, int], states, recurrent, eps: Fraction, limit: int = RUN_LENGTH_LIMIT
) -> int:
    """Steps after which the chain of ``choice`` in environment ``e`` has entered ``recurrent``
    with probability at least ``1 - eps`` from every state.

    The horizon is found by iterating the non-absorption probabilities in
    floating point against a slightly tightened threshold.  The fallback
    bound ``k * d`` with ``(1 - nu^d)^k <= eps`` (``d`` the longest shortest
    path to ``recurrent``, ``nu`` the smallest probability used) caps it.
    """
    transient = sorted(q for q in states if q not in recurrent)
    if not transient:
        return 1
    rows = {q: [(t, float(p)) for t, p in M.dist(e, q, choice[q]).items()] for q in transient}
    nu = min(p for q in transient for p in M.dist(e, q, choice[q]).values())
    d = len(transient)
    x = float(nu) ** d
    if x >= 1:
        k = 1
    elif x == 0:
        k = limit + 1
    else:
        k = math.ceil(float(ln_upper(1 / eps)) / -math.log1p(-x)) + 1
    cap = k * d
    target = float(eps) * (1 - 1e-9)
    miss = {q: 1.0 for q in transient}
    steps = 0
    while steps < min(cap, limit):
        steps += 1
        miss = {q: sum(p * miss.get(t, 0.0) for t, p in rows[q]) for q in transient}
        if max(miss.values()) <= target:
            return steps
    if cap > limit:
        raise MemoryBudgetExceeded(limit)
    return cap


class LimitSureStrategy(FactoredStrategy):
    """Pure finite-memory strategy winning with probability at least ``1 - eps`` from the region.

    Memory tuples:
      ("off",)                               knowledge lost or outside the region
      ("as", inner)                          the state is almost-sure winning: play the almost-sure strategy
      ("reach", mask, inner)                 almost-sure reach of the run targets; ``inner`` is its memory
      ("run", mask, env, steps)              follow the witness of ``env`` for a bounded number of steps
      ("commit", mask, env)                  in a recurrent set of that witness: follow it forever
      ("sample", mask, index, count, hits)   sample the distinguishing transition of a component
    """

    def __init__(self, solver: LimitSureSolver, K: EnvSet, eps):
        self.solver = solver
        self.model = solver.model
        self.eps = Fraction(eps)
        depth = max(1, solver.fallible_depth(K))
        self.step_eps = self.eps / depth
        self.top = K
        self.eta = min_probability_gap(self.model, K)
        self._plans: Dict[Tuple[int, int], SamplingPlan] = {}
        self._returns: Dict[Tuple[int, int], Dict[int, int]] = {}
        self._runs: Dict[Tuple[int, int], int] = {}
        self._inner: Dict[int, AlmostSureStrategy] = {}
        self.almost_sure = AlmostSureStrategy(AlmostSureSolver(self.model))

    # per-level helpers

    def _level(self, mask: int) -> LimitSureLevel:
        return self.solver.level(EnvSet(mask, self.model.n_envs))

    def plan(self, mask: int, idx: int) -> SamplingPlan:
        key = (mask, idx)
        if key not in self._plans:
            level = self._level(mask)
            D, part = level.winning_components[idx]
            R = level.revealed.model
            self._plans[key] = SamplingPlan(
                part,
                sample_count(self.step_eps, self.eta),
                self.eta,
                R.prob(part.pivot, part.source, part.action, part.target),
            )
            arena = pairs_arena(build_arena(R, level.envs), D.pairs)
            _, back = almost_sure_reach(arena, [part.source])
            back[part.source] = part.action
            self._returns[key] = back
        return self._plans[key]

    def run_steps(self, mask: int, e: int) -> int:
        key = (mask, e)
        if key not in self._runs:
            level = self._level(mask)
            self._runs[key] = run_length(
                level.collapsed, e, level.as_choice[e], level.as_sets[e], level.recurrent[e], self.step_eps
            )
        return self._runs[key]

    def inner(self, mask: int) -> AlmostSureStrategy:
        if mask not in self._inner:
            self._inner[mask] = AlmostSureStrategy(self._level(mask).reach_solver)
        return self._inner[mask]

    # phases

    def enter(self, K: Optional[EnvSet], q: int):
        if K is None:
            return ("off",)
        if q in self.almost_sure.solver.region(K):
            return ("as", self.almost_sure.enter(K, q))
        if len(K) == 1:
            return ("off",)
        level = self.solver.level(K)
        if q not in level.region:
            return ("off",)
        if q in level.component_of:
            idx = level.component_of[q]
            self.plan(K.mask, idx)
            return ("sample", K.mask, idx, 0, 0)
        if q in level.union_target:
            for e in K:
                if q in level.as_sets[e]:
                    return self._start_run(K.mask, e, q)
        inner = self.inner(K.mask)
        return ("reach", K.mask, inner.enter(K, q))

    def _start_run(self, mask: int, e: int, q: int):
        if q in self._level(mask).recurrent[e]:
            return ("commit", mask, e)
        return ("run", mask, e, 0)

    def initial_memory(self, q0: int):
        return self.enter(self.top, q0)

    def choose(self, mem, q: int) -> int:
        kind = mem[0]
        a = None
        if kind == "as":
            return self.almost_sure.choose(mem[1], q)
        if kind == "reach":
            a = self.inner(mem[1]).choose(mem[2], q)
        elif kind in ("run", "commit"):
            a = self._level(mem[1]).as_choice[mem[2]].get(q)
        elif kind == "sample":
            self.plan(mem[1], mem[2])
            a = self._returns[(mem[1], mem[2])].get(q)
        return self.model.enabled[q][0] if a is None else a

    def advance(self, mem, q: int, a: int, q2: int):
        kind = mem[0]
        if kind == "off":
            return mem
        if kind == "as":
            return ("as", self.almost_sure.advance(mem[1], q, a, q2))
        n = self.model.n_envs
        K = EnvSet(mem[1], n)
        known = self.model.knowledge(K, q, a, q2)
        if known is None or known.mask != K.mask:
            return self.enter(known, q2)
        if kind == "commit":
            return mem
        level = self.solver.level(K)
        if kind == "sample":
            _, mask, idx, count, hits = mem
            plan = self.plan(mask, idx)
            part = plan.partition
            if q == part.source and a == part.action:
                count += 1
                hits += q2 == part.target
                if count >= plan.sample_count:
                    block = part.first if plan.choose_first(hits) else part.second
                    return self.enter(block, q2)
            return ("sample", mask, idx, count, hits)
        if q2 in level.component_of:
            return self.enter(K, q2)
        if kind == "reach":
            if q2 in level.union_target:
                return self.enter(K, q2)
            return ("reach", mem[1], self.inner(mem[1]).advance(mem[2], q, a, q2))
        # run phase
        _, mask, e, steps = mem
        if q2 in level.recurrent[e]:
            return ("commit", mask, e)
        steps += 1
        if steps >= self.run_steps(mask, e):
            return self.enter(EnvSet(mask & ~(1 << e), n), q2)
        return ("run", mask, e, steps)

    def label(self, mem) -> str:
        if mem[0] == "off":
            return "off"
        if mem[0] == "as":
            return "as/" + self.almost_sure.label(mem[1])
        envs = ",".join(self.model.envs[e] for e in EnvSet(mem[1], self.model.n_envs))
        kind = mem[0]
        if kind == "reach":
            return f"reach[{envs}]/{self.inner(mem[1]).label(mem[2])}"
        if kind == "sample":
            return f"sample[{envs}]:{mem[2]}#{mem[3]}/{mem[4]}"
        env = self.model.envs[mem[2]]
        if kind == "commit":
            return f"commit[{envs}]:{env}"
        return f"run[{envs}]:{env}#{mem[3]}"


def synthesize_ls_strategy(
    M: MEMDP,
    K: Optional[EnvSet] = None,
    eps=Fraction(1, 10),
    q0: Optional[int] = None,
    cap: Optional[int] = None,
    solver: Optional[LimitSureSolver] = None,
) -> StrategyAutomaton:
    """Flat pure strategy winning with probability at least ``1 - eps`` from ``q0`` in every environment of ``K``."""
    K = M.env_set(K)
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie strictly between 0 and 1")
    q0 = M.initial if q0 is None else q0
    solver = solver or LimitSureSolver(M)
    if q0 not in solver.region(K):
        raise NotLimitSureWinning(M.states[q0])
    return expand(LimitSureStrategy(solver, K, eps), M, K, q0, cap)
