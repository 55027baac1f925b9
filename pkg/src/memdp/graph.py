"""Graph algorithms on the support structure of single-environment MDPs.

Most routines work on an *arena*: a dict ``state -> {action: successors}``
where successors is a frozenset of state ids.  Arenas are built from a MEMDP
by choosing which environments define the successor sets and which ones
decide whether an action stays inside a given state set.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Tuple

from .model import MEMDP, EnvSet, Parity, encode_objective

Arena = Dict[int, Dict[int, FrozenSet[int]]]


@dataclass(frozen=True)
class EndComponent:
    """State-action pairs closed and strongly connected in every environment of ``scope``."""

    pairs: Dict[int, FrozenSet[int]]
    scope: Optional[EnvSet] = None

    @property
    def states(self) -> FrozenSet[int]:
        return frozenset(self.pairs)

    def pair_set(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset((q, a) for q, acts in self.pairs.items() for a in acts)

    def __eq__(self, other):
        if not isinstance(other, EndComponent):
            return NotImplemented
        return self.pair_set() == other.pair_set() and self.scope == other.scope

    def __hash__(self):
        return hash((self.pair_set(), self.scope))

    def __len__(self):
        return len(self.pairs)

    def describe(self, model: MEMDP) -> Dict[str, List[str]]:
        return {model.states[q]: [model.actions[a] for a in sorted(acts)] for q, acts in sorted(self.pairs.items())}


@dataclass
class MemorylessStrategy:
    """Action distribution per state; states without an entry are outside the strategy's domain."""

    choice: Dict[int, Dict[int, Fraction]] = field(default_factory=dict)

    @classmethod
    def pure(cls, actions: Dict[int, int]) -> "MemorylessStrategy":
        return cls({q: {a: Fraction(1)} for q, a in actions.items()})

    def action(self, q: int) -> int:
        """The action of a pure strategy at ``q``."""
        (a,) = self.choice[q]
        return a

    def __contains__(self, q):
        return q in self.choice


# arenas ---------------------------------------------------------------------


def build_arena(
    M: MEMDP,
    support_envs: EnvSet,
    states: Optional[Iterable[int]] = None,
    filter_envs: Optional[EnvSet] = None,
) -> Arena:
    """Arena over ``states`` with successors taken as the union of supports over ``support_envs``.

    An action is kept only if its supports in every environment of
    ``filter_envs`` (default: ``support_envs``) stay inside ``states``.
    States can end up with no action at all; they are dead ends.
    """
    filter_envs = filter_envs or support_envs
    region = frozenset(range(M.n_states)) if states is None else frozenset(states)
    arena: Arena = {}
    for q in sorted(region):
        row = {}
        for a in M.enabled[q]:
            if all(M.support(e, q, a) <= region for e in filter_envs):
                row[a] = M.union_support(support_envs, q, a)
        arena[q] = row
    return arena


def sub_arena(arena: Arena, states: Iterable[int]) -> Arena:
    """Restrict an arena to ``states``, dropping actions that leave it."""
    region = frozenset(states)
    return {q: {a: s for a, s in arena[q].items() if s <= region} for q in sorted(region)}


def pairs_arena(arena: Arena, pairs: Dict[int, FrozenSet[int]]) -> Arena:
    return {q: {a: arena[q][a] for a in sorted(acts)} for q, acts in sorted(pairs.items())}


# strongly connected components -------------------------------------------


def strongly_connected_components(nodes: Iterable, successors: Callable[[object], Iterable]) -> List[List]:
    """Tarjan's algorithm without recursion.

    Components come out in reverse topological order: every edge leaving a
    component points to a component listed earlier.
    """
    index: Dict = {}
    low: Dict = {}
    on_stack = set()
    stack: List = []
    result: List[List] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(successors(root)))]
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(successors(w))))
                    advanced = True
                    break
                if w in on_stack and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[v] < low[parent]:
                    low[parent] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                result.append(comp)
    return result


def bottom_components(nodes: Iterable, successors: Callable) -> List[List]:
    """SCCs with no edge leaving them."""
    out = []
    for comp in strongly_connected_components(nodes, successors):
        members = set(comp)
        if all(w in members for v in comp for w in successors(v)):
            out.append(comp)
    return out


# end components -------------------------------------------------------------


def arena_mecs(arena: Arena) -> List[Dict[int, FrozenSet[int]]]:
    """Maximal end components of an arena by repeated SCC pruning."""
    actions = {q: dict(row) for q, row in arena.items()}
    work = [frozenset(arena)]
    found = []
    while work:
        part = set(work.pop())
        while True:
            # drop actions leaving the part, then states left without actions
            changed = True
            while changed:
                changed = False
                for q in list(part):
                    row = actions[q]
                    for a in [a for a, s in row.items() if not s <= part]:
                        del row[a]
                    if not row:
                        part.discard(q)
                        changed = True
            if not part:
                break
            comps = strongly_connected_components(
                sorted(part), lambda q: sorted({t for s in actions[q].values() for t in s})
            )
            if len(comps) == 1:
                found.append({q: frozenset(actions[q]) for q in sorted(part)})
                break
            work.extend(frozenset(c) for c in comps)
            break
    found.sort(key=lambda d: min(d))
    return found


def mec_decomposition(M: MEMDP, env=0) -> List[EndComponent]:
    """Maximal end components of one environment of ``M`` (``env`` is an id or a name)."""
    e = M.env_id(env) if isinstance(env, str) else env
    scope = EnvSet.single(e, M.n_envs)
    return [EndComponent(d, scope) for d in arena_mecs(build_arena(M, scope))]


def ec_is_winning(D, priority) -> bool:
    """An end component wins the parity objective iff its least priority is even."""
    states = D.states if isinstance(D, EndComponent) else D
    return min(priority[q] for q in states) % 2 == 0


# almost-sure reachability, safety and parity ---------------------------------


def positive_reach(arena: Arena, region: FrozenSet[int], targets: FrozenSet[int]) -> Dict[int, int]:
    """Backward BFS ranks: states of ``region`` that reach ``targets`` with positive probability
    using only actions whose successors stay in ``region``."""
    preds: Dict[int, List[Tuple[int, int]]] = {}
    for q in region:
        for a, succ in arena[q].items():
            if succ <= region:
                for t in succ:
                    preds.setdefault(t, []).append((q, a))
    rank = {t: 0 for t in targets if t in region}
    queue = deque(sorted(rank))
    while queue:
        t = queue.popleft()
        for q, _ in preds.get(t, ()):
            if q not in rank:
                rank[q] = rank[t] + 1
                queue.append(q)
    return rank


def almost_sure_reach(arena: Arena, targets: Iterable[int]) -> Tuple[FrozenSet[int], Dict[int, int]]:
    """States reaching ``targets`` with probability 1 and a pure memoryless witness.

    The witness is defined on the region minus the targets; it picks an
    action that stays in the region and can decrease the BFS rank, smallest
    action id among those reaching the lowest rank.
    """
    targets = frozenset(t for t in targets if t in arena)
    region = frozenset(arena)
    while True:
        rank = positive_reach(arena, region, targets)
        new = frozenset(rank)
        if new == region:
            break
        region = new
    choice = {}
    for q in sorted(region - targets):
        best = None
        for a, succ in sorted(arena[q].items()):
            if not succ <= region:
                continue
            r = min(rank[t] for t in succ)
            if r < rank[q] and (best is None or r < best[0]):
                best = (r, a)
        choice[q] = best[1]
    return region, choice


def safe_region(arena: Arena, allowed: Iterable[int]) -> Tuple[FrozenSet[int], Dict[int, int]]:
    """Largest subset of ``allowed`` in which play can stay forever, with a witness."""
    region = set(q for q in allowed if q in arena)
    changed = True
    while changed:
        changed = False
        for q in sorted(region):
            if not any(s <= region for s in arena[q].values()):
                region.discard(q)
                changed = True
    region = frozenset(region)
    choice = {q: min(a for a, s in arena[q].items() if s <= region) for q in region}
    return region, choice


def winning_end_components(arena: Arena, priority) -> List[Tuple[int, Dict[int, FrozenSet[int]]]]:
    """Disjoint end components whose least priority is even, tagged with that priority.

    For every even d, take the maximal end components among states of
    priority at least d that contain a state of priority d.  Components
    meeting an earlier one are skipped: they are almost-surely attracted to
    it anyway.
    """
    evens = sorted({priority[q] for q in arena if priority[q] % 2 == 0})
    taken = set()
    out = []
    for d in evens:
        level = sub_arena(arena, [q for q in arena if priority[q] >= d])
        for mec in arena_mecs(level):
            if not any(priority[q] == d for q in mec):
                continue
            if taken.intersection(mec):
                continue
            taken.update(mec)
            out.append((d, mec))
    return out


def almost_sure_parity(arena: Arena, priority) -> Tuple[FrozenSet[int], Dict[int, int]]:
    """Almost-sure parity region of an arena and a pure memoryless witness on it."""
    choice: Dict[int, int] = {}
    ec_states = set()
    for d, mec in winning_end_components(arena, priority):
        local = pairs_arena(arena, mec)
        pivot = min(q for q in mec if priority[q] == d)
        _, inner = almost_sure_reach(local, [pivot])
        choice.update(inner)
        choice[pivot] = min(mec[pivot])
        ec_states.update(mec)
    region, outer = almost_sure_reach(arena, ec_states)
    choice.update(outer)
    return region, {q: choice[q] for q in sorted(region)}


def almost_sure_mdp(M: MEMDP, obj=None, env=0) -> Tuple[FrozenSet[int], MemorylessStrategy]:
    """Almost-sure winning region of one environment of ``M`` and a pure memoryless witness."""
    obj = obj or Parity()
    e = M.env_id(env) if isinstance(env, str) else env
    encoded = encode_objective(M, obj)
    arena = build_arena(encoded, EnvSet.single(e, M.n_envs))
    region, choice = almost_sure_parity(arena, encoded.priority)
    return region, MemorylessStrategy.pure(choice)
