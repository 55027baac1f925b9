"""Almost-sure winning in MEMDPs.

The solver works per knowledge set (the environments still consistent with
the history).  Transitions that shrink the knowledge are redirected to a
win or lose sink according to a recursive solve on the smaller set; on the
resulting model the region is the greatest set from which play can stay
inside the intersection of the per-environment almost-sure regions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

from .errors import NotAlmostSureWinning
from .graph import (
    almost_sure_parity,
    bottom_components,
    build_arena,
    safe_region,
)
from .model import LOSE, MEMDP, WIN, EnvSet, Region, add_sinks, dedup_envset
from .strategy import FactoredStrategy, StrategyAutomaton, expand


@dataclass(frozen=True, order=True)
class KnowledgeTransition:
    """A transition together with the environments in which it is possible."""

    source: int
    action: int
    target: int
    knowledge: EnvSet

    def describe(self, model: MEMDP) -> dict:
        return {
            "from": model.states[self.source],
            "action": model.actions[self.action],
            "to": model.states[self.target],
            "knowledge": [model.envs[e] for e in self.knowledge],
        }


@dataclass
class RevealedModel:
    """Model with win/lose sinks where every knowledge-shrinking transition hits a sink."""

    model: MEMDP
    scope: EnvSet
    log: List[Tuple[KnowledgeTransition, bool]]
    win: int
    lose: int

    @property
    def sinks(self) -> FrozenSet[int]:
        return frozenset((self.win, self.lose))


def revealing_transitions(M: MEMDP, K: Optional[EnvSet] = None) -> List[KnowledgeTransition]:
    """Transitions possible in some environment of ``K`` but not in all of them."""
    K = K or M.all_envs()
    out = []
    for q in range(M.n_states):
        for a in M.enabled[q]:
            for q2 in sorted(M.union_support(K, q, a)):
                know = M.knowledge(K, q, a, q2)
                if know.mask != K.mask:
                    out.append(KnowledgeTransition(q, a, q2, know))
    return out


def to_revealed_form(M: MEMDP, K: Optional[EnvSet], classify: Callable[[EnvSet, int], bool]) -> RevealedModel:
    """Redirect every revealing transition to the win sink when ``classify(knowledge, target)``
    holds and to the lose sink otherwise.  Environments outside ``K`` are left untouched."""
    K = K or M.all_envs()
    R, win, lose = add_sinks(M)
    log = []
    delta = [list(env) for env in R.delta]
    touched = set()
    for t in revealing_transitions(M, K):
        if t.source in (win, lose):
            continue
        good = bool(classify(t.knowledge, t.target))
        log.append((t, good))
        sink = win if good else lose
        for e in t.knowledge:
            key = (e, t.source)
            if key not in touched:
                delta[e][t.source] = {a: dict(d) for a, d in delta[e][t.source].items()}
                touched.add(key)
            d = delta[e][t.source][t.action]
            mass = d.pop(t.target)
            d[sink] = d.get(sink, 0) + mass
    for e, q in touched:
        delta[e][q] = {a: dict(sorted(d.items())) for a, d in delta[e][q].items()}
    model = R.replace(delta=tuple(tuple(env) for env in delta))
    return RevealedModel(model, K, log, win, lose)


@dataclass
class AlmostSureLevel:
    """Solution data for one knowledge set with at least two support families."""

    envs: EnvSet
    revealed: RevealedModel
    region: FrozenSet[int]  # fixpoint on the revealed model, sinks included
    choice: Dict[int, Dict[int, int]] = field(default_factory=dict)  # env -> memoryless witness on region
    recurrent: Dict[int, FrozenSet[int]] = field(default_factory=dict)  # env -> states in bottom SCCs
    rounds: int = 0


class AlmostSureSolver:
    """Almost-sure parity regions of one model for every knowledge set, computed lazily.

    The model's priority map is the objective; encode reachability or
    safety first with ``encode_objective``.
    """

    def __init__(self, M: MEMDP):
        self.model = M
        self._regions: Dict[int, FrozenSet[int]] = {}
        self._levels: Dict[int, AlmostSureLevel] = {}
        self._single: Dict[int, Tuple[FrozenSet[int], Dict[int, int]]] = {}

    def canonical(self, K: Optional[EnvSet]) -> EnvSet:
        return dedup_envset(self.model, K or self.model.all_envs())

    def single(self, e: int) -> Tuple[FrozenSet[int], Dict[int, int]]:
        if e not in self._single:
            M = self.model
            self._single[e] = almost_sure_parity(build_arena(M, EnvSet.single(e, M.n_envs)), M.priority)
        return self._single[e]

    def region(self, K: Optional[EnvSet] = None) -> FrozenSet[int]:
        K = self.canonical(K)
        if K.mask not in self._regions:
            if len(K) == 1:
                self._regions[K.mask] = self.single(K.first())[0]
            else:
                level = self.level(K)
                self._regions[K.mask] = level.region - level.revealed.sinks
        return self._regions[K.mask]

    def level(self, K: EnvSet) -> AlmostSureLevel:
        K = self.canonical(K)
        if K.mask in self._levels:
            return self._levels[K.mask]
        revealed = to_revealed_form(self.model, K, lambda Kt, q: q in self.region(Kt))
        R = revealed.model
        cur = frozenset(range(R.n_states))
        rounds = 0
        while True:
            rounds += 1
            P = cur
            for e in K:
                arena = build_arena(R, EnvSet.single(e, R.n_envs), cur, K)
                P = P & almost_sure_parity(arena, R.priority)[0]
            safe, _ = safe_region(build_arena(R, K, cur, K), P)
            assert safe <= cur
            if safe == cur:
                break
            cur = safe
        level = AlmostSureLevel(K, revealed, cur, rounds=rounds)
        for e in K:
            arena = build_arena(R, EnvSet.single(e, R.n_envs), cur, K)
            _, choice = almost_sure_parity(arena, R.priority)
            level.choice[e] = choice
            succ = {q: arena[q][choice[q]] for q in choice}
            level.recurrent[e] = frozenset(
                q for comp in bottom_components(sorted(succ), lambda q: sorted(succ[q])) for q in comp
            )
        self._levels[K.mask] = level
        return level

    def solve(self, K: Optional[EnvSet] = None) -> Region:
        K = K or self.model.all_envs()
        return Region(self.region(K), K, "almost-sure")


def as_parity(M: MEMDP, K: Optional[EnvSet] = None, solver: Optional[AlmostSureSolver] = None) -> Region:
    """Almost-sure winning region for the parity objective given by ``M``'s priorities."""
    solver = solver or AlmostSureSolver(M)
    return solver.solve(M.env_set(K))


def as_safety(M: MEMDP, K: Optional[EnvSet], allowed) -> Region:
    """States from which some strategy never leaves ``allowed`` in any environment of ``K``."""
    K = M.env_set(K)
    allowed = frozenset(allowed)
    memo: Dict[int, FrozenSet[int]] = {}

    def solve(Kt: EnvSet) -> FrozenSet[int]:
        if Kt.mask not in memo:
            revealed = to_revealed_form(M, Kt, lambda Ks, q: q in solve(Ks))
            R = revealed.model
            W, _ = safe_region(build_arena(R, Kt, None, Kt), allowed | {revealed.win})
            memo[Kt.mask] = W - revealed.sinks
        return memo[Kt.mask]

    return Region(solve(K), K, "almost-sure-safety")


class AlmostSureStrategy(FactoredStrategy):
    """Pure strategy winning almost surely from every state of the region.

    Memory tuples:
      ("off",)                       knowledge lost or outside the region
      ("one", mask)                  a single support family left: memoryless play
      ("rr", mask, index, steps)     round robin, following the witness of the index-th environment
      ("commit", mask, index)        reached a recurrent state of that witness; follow it forever
    """

    def __init__(self, solver: AlmostSureSolver):
        self.solver = solver
        self.model = solver.model

    def reps(self, mask: int) -> List[int]:
        return list(self.solver.canonical(EnvSet(mask, self.model.n_envs)))

    def enter(self, K: Optional[EnvSet], q: int):
        if K is None:
            return ("off",)
        if q not in self.solver.region(K):
            return ("off",)
        if len(self.solver.canonical(K)) == 1:
            return ("one", K.mask)
        return ("rr", K.mask, 0, 0)

    def initial_memory(self, q0: int):
        return self.enter(self.model.all_envs(), q0)

    def choose(self, mem, q: int) -> int:
        kind = mem[0]
        if kind == "one":
            e = self.reps(mem[1])[0]
            choice = self.solver.single(e)[1]
        elif kind in ("rr", "commit"):
            level = self.solver.level(EnvSet(mem[1], self.model.n_envs))
            choice = level.choice[self.reps(mem[1])[mem[2]]]
        else:
            choice = {}
        a = choice.get(q)
        return self.model.enabled[q][0] if a is None else a

    def advance(self, mem, q: int, a: int, q2: int):
        if mem[0] == "off":
            return mem
        K = EnvSet(mem[1], self.model.n_envs)
        known = self.model.knowledge(K, q, a, q2)
        if known is None or known.mask != K.mask:
            return self.enter(known, q2)
        if mem[0] != "rr":
            return mem
        _, mask, idx, steps = mem
        level = self.solver.level(K)
        reps = self.reps(mask)
        steps += 1
        if steps < len(level.region):
            return ("rr", mask, idx, steps)
        if q2 in level.recurrent[reps[idx]]:
            return ("commit", mask, idx)
        return ("rr", mask, (idx + 1) % len(reps), 0)

    def label(self, mem) -> str:
        if mem[0] == "off":
            return "off"
        envs = ",".join(self.model.envs[e] for e in EnvSet(mem[1], self.model.n_envs))
        if mem[0] == "one":
            return f"one[{envs}]"
        env = self.model.envs[self.reps(mem[1])[mem[2]]]
        if mem[0] == "commit":
            return f"commit[{envs}]:{env}"
        return f"rr[{envs}]:{env}#{mem[3]}"


def synthesize_as_strategy(
    M: MEMDP,
    K: Optional[EnvSet] = None,
    q0: Optional[int] = None,
    cap: Optional[int] = None,
    solver: Optional[AlmostSureSolver] = None,
) -> StrategyAutomaton:
    """Flat pure strategy winning almost surely from ``q0`` in every environment of ``K``."""
    K = M.env_set(K)
    q0 = M.initial if q0 is None else q0
    solver = solver or AlmostSureSolver(M)
    if q0 not in solver.region(K):
        raise NotAlmostSureWinning(M.states[q0])
    strat = AlmostSureStrategy(solver)
    if K.mask != M.all_envs().mask:
        strat.initial_memory = lambda q: strat.enter(K, q)
    return expand(strat, M, K, q0, cap)


__all__ = [
    "KnowledgeTransition",
    "RevealedModel",
    "revealing_transitions",
    "to_revealed_form",
    "AlmostSureSolver",
    "AlmostSureStrategy",
    "as_parity",
    "as_safety",
    "synthesize_as_strategy",
    "WIN",
    "LOSE",
]
