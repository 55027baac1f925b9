"""Finite-memory strategies.

``StrategyAutomaton`` is the flat Moore-style form used for evaluation and
serialization.  Synthesis routines produce a ``FactoredStrategy`` (memory is
any hashable phase descriptor) which ``expand`` turns into a flat automaton
by exploring only the (memory, state) pairs reachable from a start state.
"""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Hashable, List, Optional, Tuple

from .errors import MemoryBudgetExceeded
from .model import MEMDP, EnvSet, format_prob

DEFAULT_MEMORY_CAP = 10**6
ONE = Fraction(1)


def memory_cap_default() -> int:
    raw = os.environ.get("MEMDP_MEMORY_CAP")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return DEFAULT_MEMORY_CAP


@dataclass
class StrategyAutomaton:
    """Memory states ``0..memory_size-1``; randomized output and (possibly randomized) update.

    ``output[(m, q)]`` is a distribution over actions.  ``update[(m, q, a, q2)]``
    is a distribution over next memory states; when a key is missing,
    ``action_update[(m, q, a)]`` is used instead (updates that ignore the
    successor), and failing that the memory stays put.
    """

    memory_size: int
    initial: int
    output: Dict[Tuple[int, int], Dict[int, Fraction]]
    update: Dict[Tuple[int, int, int, int], Dict[int, Fraction]] = field(default_factory=dict)
    action_update: Dict[Tuple[int, int, int], Dict[int, Fraction]] = field(default_factory=dict)
    labels: Optional[List[str]] = None

    def act(self, m: int, q: int) -> Dict[int, Fraction]:
        return self.output[(m, q)]

    def next_memory(self, m: int, q: int, a: int, q2: int) -> Dict[int, Fraction]:
        d = self.update.get((m, q, a, q2))
        if d is None:
            d = self.action_update.get((m, q, a), {m: ONE})
        return d

    def is_pure(self) -> bool:
        return all(len(d) == 1 for d in self.output.values())

    def is_deterministic(self) -> bool:
        return all(len(d) == 1 for d in self.update.values()) and all(
            len(d) == 1 for d in self.action_update.values()
        )

    def to_json(self, model: MEMDP) -> dict:
        def dist(d, names=None):
            return {(names[k] if names else str(k)): format_prob(p) for k, p in sorted(d.items())}

        out = {
            "memory_size": self.memory_size,
            "initial": self.initial,
            "pure": self.is_pure(),
            "output": [
                {"memory": m, "state": model.states[q], "actions": dist(d, model.actions)}
                for (m, q), d in sorted(self.output.items())
            ],
            "update": [
                {
                    "memory": m,
                    "state": model.states[q],
                    "action": model.actions[a],
                    "next_state": model.states[q2],
                    "next_memory": dist(d),
                }
                for (m, q, a, q2), d in sorted(self.update.items())
            ],
        }
        if self.action_update:
            out["action_update"] = [
                {"memory": m, "state": model.states[q], "action": model.actions[a], "next_memory": dist(d)}
                for (m, q, a), d in sorted(self.action_update.items())
            ]
        if self.labels is not None:
            out["labels"] = self.labels
        return out


def memoryless_automaton(choice: Dict[int, Dict[int, Fraction]]) -> StrategyAutomaton:
    """One-memory-state automaton from a memoryless choice table."""
    return StrategyAutomaton(1, 0, {(0, q): dict(d) for q, d in choice.items()})


class FactoredStrategy:
    """Pure strategy whose memory is a hashable phase descriptor.

    Subclasses implement ``initial_memory``, ``choose`` and ``advance``.
    """

    def initial_memory(self, q0: int) -> Hashable:
        raise NotImplementedError

    def choose(self, mem: Hashable, q: int) -> int:
        raise NotImplementedError

    def advance(self, mem: Hashable, q: int, a: int, q2: int) -> Hashable:
        raise NotImplementedError

    def label(self, mem: Hashable) -> str:
        return repr(mem)


def expand(
    strategy: FactoredStrategy, model: MEMDP, envs: Optional[EnvSet], q0: int, cap: Optional[int] = None
) -> StrategyAutomaton:
    """Flatten the part of a factored strategy reachable from ``q0`` in any environment of ``envs``."""
    cap = memory_cap_default() if cap is None else cap
    envs = envs or model.all_envs()
    mem_id: Dict[Hashable, int] = {}
    labels: List[str] = []

    def intern(mem):
        i = mem_id.get(mem)
        if i is None:
            i = len(mem_id)
            if i >= cap:
                raise MemoryBudgetExceeded(cap)
            mem_id[mem] = i
            labels.append(strategy.label(mem))
        return i

    start = strategy.initial_memory(q0)
    intern(start)
    output = {}
    update = {}
    seen = {(start, q0)}
    queue = deque([(start, q0)])
    while queue:
        mem, q = queue.popleft()
        m = mem_id[mem]
        a = strategy.choose(mem, q)
        output[(m, q)] = {a: ONE}
        for q2 in sorted(model.union_support(envs, q, a)):
            mem2 = strategy.advance(mem, q, a, q2)
            update[(m, q, a, q2)] = {intern(mem2): ONE}
            if (mem2, q2) not in seen:
                seen.add((mem2, q2))
                queue.append((mem2, q2))
    return StrategyAutomaton(len(mem_id), 0, output, update, labels=labels)
