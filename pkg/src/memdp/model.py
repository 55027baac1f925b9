"""Multiple-environment MDPs: data types, validation and model transformations.

States, actions and environments are interned to dense integer ids in
declaration order.  Probabilities are ``fractions.Fraction`` values so that
equality tests between environments are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple

from .errors import (
    DistributionNotNormalized,
    EmptyActionSet,
    InvalidModel,
    MissingTransition,
    NegativeProbability,
    NotClosed,
    UnknownAction,
    UnknownState,
)

WIN = "__q_win"
LOSE = "__q_lose"
SINK_ACTION = "__sink"
RESERVED_STATES = frozenset({WIN, LOSE})
RESERVED_ACTIONS = frozenset({SINK_ACTION})

MODEL_KEYS = ("states", "actions", "enabled", "environments", "priority", "initial")

Dist = Dict[int, Fraction]


def parse_prob(raw) -> Fraction:
    """Parse ``"1/3"``, ``"1"``, ``"0.25"`` or an int into an exact fraction."""
    if isinstance(raw, bool):
        raise InvalidModel(f"probability must be a string or integer, got {raw!r}")
    if isinstance(raw, int):
        return Fraction(raw)
    if isinstance(raw, str):
        try:
            return Fraction(raw.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidModel(f"cannot parse probability {raw!r}") from exc
    raise InvalidModel(f"probability must be a string or integer, got {raw!r}")


def format_prob(p: Fraction) -> str:
    return str(p.numerator) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"


@dataclass(frozen=True, order=True)
class EnvSet:
    """Nonempty subset of a model's environments, stored as a bitmask."""

    mask: int
    size: int

    def __post_init__(self):
        if self.size < 1 or self.mask <= 0 or self.mask >= (1 << self.size):
            raise ValueError(f"invalid environment set mask={self.mask} size={self.size}")

    @classmethod
    def full(cls, size: int) -> "EnvSet":
        return cls((1 << size) - 1, size)

    @classmethod
    def single(cls, env: int, size: int) -> "EnvSet":
        return cls(1 << env, size)

    @classmethod
    def of(cls, envs: Iterable[int], size: int) -> "EnvSet":
        mask = 0
        for e in envs:
            if not 0 <= e < size:
                raise ValueError(f"environment id {e} out of range")
            mask |= 1 << e
        return cls(mask, size)

    def __iter__(self) -> Iterator[int]:
        m, e = self.mask, 0
        while m:
            if m & 1:
                yield e
            m >>= 1
            e += 1

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __contains__(self, env) -> bool:
        return isinstance(env, int) and 0 <= env < self.size and bool(self.mask >> env & 1)

    def first(self) -> int:
        return (self.mask & -self.mask).bit_length() - 1

    def without(self, env: int) -> Optional["EnvSet"]:
        m = self.mask & ~(1 << env)
        return EnvSet(m, self.size) if m else None

    def issubset(self, other: "EnvSet") -> bool:
        return self.mask & ~other.mask == 0

    def intersect(self, other: "EnvSet") -> Optional["EnvSet"]:
        m = self.mask & other.mask
        return EnvSet(m, self.size) if m else None

    def union(self, other: "EnvSet") -> "EnvSet":
        return EnvSet(self.mask | other.mask, self.size)

    def __repr__(self):
        return f"EnvSet({sorted(self)})"


@dataclass(frozen=True)
class Parity:
    """Parity objective using the model's own priority map."""

    tag = "parity"


@dataclass(frozen=True)
class Reach:
    targets: FrozenSet[int]
    tag = "reach"


@dataclass(frozen=True)
class Safe:
    allowed: FrozenSet[int]
    tag = "safe"


Objective = object  # one of Parity, Reach, Safe


@dataclass(frozen=True)
class Region:
    """Winning region: a set of state ids, the environments it refers to and a label."""

    states: FrozenSet[int]
    context: EnvSet
    objective: str

    def __contains__(self, q):
        return q in self.states

    def __iter__(self):
        return iter(sorted(self.states))

    def __len__(self):
        return len(self.states)

    def names(self, model: "MEMDP") -> List[str]:
        return [model.states[q] for q in sorted(self.states)]


@dataclass(frozen=True, eq=False)
class MEMDP:
    """Shared states and actions with one transition function per environment.

    ``delta[e][q][a]`` is the distribution (successor id -> probability) of
    enabled action ``a`` at state ``q`` in environment ``e``.  Instances are
    treated as immutable.
    """

    states: Tuple[str, ...]
    actions: Tuple[str, ...]
    enabled: Tuple[Tuple[int, ...], ...]
    envs: Tuple[str, ...]
    delta: Tuple[Tuple[Dict[int, Dist], ...], ...]
    priority: Tuple[int, ...]
    initial: int
    _supports: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        sup = tuple(
            tuple({a: frozenset(d) for a, d in row.items()} for row in env_delta) for env_delta in self.delta
        )
        object.__setattr__(self, "_supports", sup)

    def __eq__(self, other):
        if not isinstance(other, MEMDP):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.enabled == other.enabled
            and self.envs == other.envs
            and self.delta == other.delta
            and self.priority == other.priority
            and self.initial == other.initial
        )

    __hash__ = None

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def all_envs(self) -> EnvSet:
        return EnvSet.full(len(self.envs))

    def env_set(self, envs: Optional[Iterable] = None) -> EnvSet:
        """Build an EnvSet from env ids or names (``None`` means all)."""
        if envs is None:
            return self.all_envs()
        if isinstance(envs, EnvSet):
            return envs
        return EnvSet.of((self.env_id(e) if isinstance(e, str) else e for e in envs), len(self.envs))

    def state_id(self, name: str) -> int:
        try:
            return self.states.index(name)
        except ValueError:
            raise UnknownState(name) from None

    def action_id(self, name: str) -> int:
        try:
            return self.actions.index(name)
        except ValueError:
            raise UnknownAction(name) from None

    def env_id(self, name: str) -> int:
        try:
            return self.envs.index(name)
        except ValueError:
            raise InvalidModel(f"unknown environment {name!r}") from None

    def dist(self, e: int, q: int, a: int) -> Dist:
        return self.delta[e][q][a]

    def support(self, e: int, q: int, a: int) -> FrozenSet[int]:
        return self._supports[e][q][a]

    def prob(self, e: int, q: int, a: int, q2: int) -> Fraction:
        return self.delta[e][q][a].get(q2, Fraction(0))

    def union_support(self, K: EnvSet, q: int, a: int) -> FrozenSet[int]:
        out = frozenset()
        for e in K:
            out |= self._supports[e][q][a]
        return out

    def knowledge(self, K: EnvSet, q: int, a: int, q2: int) -> Optional[EnvSet]:
        """Environments of ``K`` in which ``(q, a, q2)`` has positive probability."""
        mask = 0
        for e in K:
            if q2 in self._supports[e][q][a]:
                mask |= 1 << e
        return EnvSet(mask, K.size) if mask else None

    def min_positive_prob(self) -> Fraction:
        return min(p for env in self.delta for row in env for d in row.values() for p in d.values())

    def state_names(self, ids: Iterable[int]) -> List[str]:
        return [self.states[q] for q in sorted(ids)]

    def to_json(self) -> dict:
        """Serialize to the JSON model format (inverse of ``validate``)."""
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "enabled": {self.states[q]: [self.actions[a] for a in acts] for q, acts in enumerate(self.enabled)},
            "environments": {
                env: {
                    self.states[q]: {
                        self.actions[a]: {self.states[t]: format_prob(p) for t, p in sorted(d.items())}
                        for a, d in sorted(row.items())
                    }
                    for q, row in enumerate(self.delta[e])
                }
                for e, env in enumerate(self.envs)
            },
            "priority": {s: self.priority[q] for q, s in enumerate(self.states)},
            "initial": self.states[self.initial],
        }

    # derived models ---------------------------------------------------------

    def replace(self, **changes) -> "MEMDP":
        fields = dict(
            states=self.states,
            actions=self.actions,
            enabled=self.enabled,
            envs=self.envs,
            delta=self.delta,
            priority=self.priority,
            initial=self.initial,
        )
        fields.update(changes)
        return MEMDP(**fields)

    def restrict_envs(self, K: EnvSet) -> "MEMDP":
        """Sub-model keeping only the environments in ``K``."""
        keep = list(K)
        return self.replace(envs=tuple(self.envs[e] for e in keep), delta=tuple(self.delta[e] for e in keep))


def validate(raw: Mapping, *, allow_reserved: bool = False) -> MEMDP:
    """Check a parsed JSON model description and build a MEMDP from it."""
    if not isinstance(raw, Mapping):
        raise InvalidModel("model description must be a JSON object")
    unknown = set(raw) - set(MODEL_KEYS)
    if unknown:
        raise InvalidModel(f"unknown keys: {sorted(unknown)}")
    missing = [k for k in MODEL_KEYS if k not in raw]
    if missing:
        raise InvalidModel(f"missing keys: {missing}")

    states = list(raw["states"])
    actions = list(raw["actions"])
    for kind, names in (("state", states), ("action", actions)):
        if not names:
            raise InvalidModel(f"no {kind}s declared")
        if any(not isinstance(n, str) for n in names):
            raise InvalidModel(f"{kind} names must be strings")
        if len(set(names)) != len(names):
            raise InvalidModel(f"duplicate {kind} names")
    if not allow_reserved:
        bad = RESERVED_STATES.intersection(states)
        if bad:
            raise InvalidModel(f"reserved state names used: {sorted(bad)}")
        bad = RESERVED_ACTIONS.intersection(actions)
        if bad:
            raise InvalidModel(f"reserved action names used: {sorted(bad)}")
    sid = {s: i for i, s in enumerate(states)}
    aid = {a: i for i, a in enumerate(actions)}

    def state_ref(name, where):
        if name not in sid:
            raise UnknownState(name, where)
        return sid[name]

    def action_ref(name, where):
        if name not in aid:
            raise UnknownAction(name, where)
        return aid[name]

    enabled_raw = raw["enabled"]
    if not isinstance(enabled_raw, Mapping):
        raise InvalidModel("'enabled' must map states to action lists")
    for s in enabled_raw:
        state_ref(s, "enabled")
    enabled = []
    for s in states:
        acts = enabled_raw.get(s, [])
        if not acts:
            raise EmptyActionSet(s)
        ids = sorted({action_ref(a, f"enabled[{s}]") for a in acts})
        enabled.append(tuple(ids))

    envs_raw = raw["environments"]
    if not isinstance(envs_raw, Mapping) or not envs_raw:
        raise InvalidModel("'environments' must be a nonempty object")
    env_names = list(envs_raw)
    delta = []
    for env in env_names:
        table = envs_raw[env]
        if not isinstance(table, Mapping):
            raise InvalidModel(f"environment {env} must map states to actions")
        for s in table:
            state_ref(s, f"environment {env}")
        rows = []
        for q, s in enumerate(states):
            srow = table.get(s, {})
            for a_name in srow:
                a = action_ref(a_name, f"environment {env}, state {s}")
                if a not in enabled[q]:
                    raise UnknownAction(a_name, f"environment {env}, state {s} (action not enabled)")
            row = {}
            for a in enabled[q]:
                a_name = actions[a]
                if a_name not in srow:
                    raise MissingTransition(env, s, a_name)
                d = {}
                total = Fraction(0)
                for t_name, p_raw in srow[a_name].items():
                    t = state_ref(t_name, f"environment {env}, ({s}, {a_name})")
                    p = parse_prob(p_raw)
                    if p < 0:
                        raise NegativeProbability(env, s, a_name, t_name, p)
                    total += p
                    if p > 0:
                        d[t] = d.get(t, Fraction(0)) + p
                if total != 1:
                    raise DistributionNotNormalized(env, s, a_name, total)
                row[a] = dict(sorted(d.items()))
            rows.append(row)
        delta.append(tuple(rows))

    prio_raw = raw["priority"]
    if not isinstance(prio_raw, Mapping):
        raise InvalidModel("'priority' must map states to integers")
    for s in prio_raw:
        state_ref(s, "priority")
    priority = []
    for s in states:
        if s not in prio_raw:
            raise InvalidModel(f"missing priority for state {s}")
        p = prio_raw[s]
        if isinstance(p, bool) or not isinstance(p, int) or p < 0:
            raise InvalidModel(f"priority of {s} must be a nonnegative integer")
        priority.append(p)

    initial = state_ref(raw["initial"], "initial")
    return MEMDP(
        states=tuple(states),
        actions=tuple(actions),
        enabled=tuple(enabled),
        envs=tuple(env_names),
        delta=tuple(delta),
        priority=tuple(priority),
        initial=initial,
    )


def union_mdp(M: MEMDP, K: Optional[EnvSet] = None) -> MEMDP:
    """Single-environment model: uniform over the union of supports across ``K``."""
    K = K or M.all_envs()
    rows = []
    for q in range(M.n_states):
        row = {}
        for a in M.enabled[q]:
            sup = sorted(M.union_support(K, q, a))
            row[a] = {t: Fraction(1, len(sup)) for t in sup}
        rows.append(row)
    name = "+".join(M.envs[e] for e in K)
    return M.replace(envs=(name,), delta=(tuple(rows),))


def closed_actions(M: MEMDP, K: EnvSet, region, q: int) -> List[int]:
    """Actions at ``q`` whose supports in every environment of ``K`` lie in ``region``."""
    return [a for a in M.enabled[q] if all(M.support(e, q, a) <= region for e in K)]


def restrict(M: MEMDP, region: Iterable, K: Optional[EnvSet] = None) -> MEMDP:
    """Sub-model induced by a state set (ids or names), keeping only actions that stay inside.

    Raises ``NotClosed`` when some state of the set has no such action.
    """
    K = K or M.all_envs()
    ids = sorted({M.state_id(s) if isinstance(s, str) else s for s in region})
    keep = frozenset(ids)
    if not keep:
        raise InvalidModel("cannot restrict to an empty state set")
    new_id = {q: i for i, q in enumerate(ids)}
    enabled = []
    for q in ids:
        acts = closed_actions(M, K, keep, q)
        if not acts:
            raise NotClosed(M.states[q])
        enabled.append(tuple(acts))
    delta = []
    for e in K:
        rows = []
        for q, acts in zip(ids, enabled):
            rows.append({a: {new_id[t]: p for t, p in M.dist(e, q, a).items()} for a in acts})
        delta.append(tuple(rows))
    initial = new_id.get(M.initial, 0)
    return MEMDP(
        states=tuple(M.states[q] for q in ids),
        actions=M.actions,
        enabled=tuple(enabled),
        envs=tuple(M.envs[e] for e in K),
        delta=tuple(delta),
        priority=tuple(M.priority[q] for q in ids),
        initial=initial,
    )


def support_family(M: MEMDP, e: int) -> tuple:
    return tuple(tuple(M.support(e, q, a) for a in M.enabled[q]) for q in range(M.n_states))


def dedup_envset(M: MEMDP, K: EnvSet) -> EnvSet:
    """Keep the first environment of ``K`` for every distinct support family."""
    seen = set()
    keep = []
    for e in K:
        fam = support_family(M, e)
        if fam not in seen:
            seen.add(fam)
            keep.append(e)
    return EnvSet.of(keep, K.size)


def dedup_environments(M: MEMDP) -> Tuple[MEMDP, Dict[str, str]]:
    """Drop environments whose support family repeats an earlier one.

    Returns the reduced model and a map from every environment name to the
    name of its kept representative.  Only almost-sure analyses are invariant
    under this reduction.
    """
    rep_of = {}
    first_with = {}
    for e in range(M.n_envs):
        fam = support_family(M, e)
        first_with.setdefault(fam, e)
        rep_of[M.envs[e]] = M.envs[first_with[fam]]
    kept = sorted(set(first_with.values()))
    return M.restrict_envs(EnvSet.of(kept, M.n_envs)), rep_of


def _self_loops(M: MEMDP, states) -> Tuple[Tuple[Dict[int, Dist], ...], ...]:
    delta = []
    for env_delta in M.delta:
        rows = list(env_delta)
        for q in states:
            rows[q] = {a: {q: Fraction(1)} for a in M.enabled[q]}
        delta.append(tuple(rows))
    return tuple(delta)


def encode_objective(M: MEMDP, obj) -> MEMDP:
    """Rewrite reachability/safety as a parity objective using absorbing states."""
    if isinstance(obj, Parity):
        return M
    if isinstance(obj, Reach):
        T = frozenset(obj.targets)
        _check_states(M, T)
        prio = tuple(0 if q in T else 1 for q in range(M.n_states))
        return M.replace(delta=_self_loops(M, T), priority=prio)
    if isinstance(obj, Safe):
        T = frozenset(obj.allowed)
        _check_states(M, T)
        outside = [q for q in range(M.n_states) if q not in T]
        prio = tuple(0 if q in T else 1 for q in range(M.n_states))
        return M.replace(delta=_self_loops(M, outside), priority=prio)
    raise TypeError(f"unsupported objective {obj!r}")


def _check_states(M: MEMDP, states):
    for q in states:
        if not isinstance(q, int) or not 0 <= q < M.n_states:
            raise UnknownState(str(q), "objective")


def add_sinks(M: MEMDP) -> Tuple[MEMDP, int, int]:
    """Return a model containing the win/lose sinks plus their ids.

    Existing sinks are reused, so applying this twice is harmless.
    """
    if WIN in M.states and LOSE in M.states:
        return M, M.states.index(WIN), M.states.index(LOSE)
    actions = M.actions if SINK_ACTION in M.actions else M.actions + (SINK_ACTION,)
    loop = actions.index(SINK_ACTION)
    win, lose = M.n_states, M.n_states + 1
    delta = tuple(env + ({loop: {win: Fraction(1)}}, {loop: {lose: Fraction(1)}}) for env in M.delta)
    return (
        MEMDP(
            states=M.states + (WIN, LOSE),
            actions=actions,
            enabled=M.enabled + ((loop,), (loop,)),
            envs=M.envs,
            delta=delta,
            priority=M.priority + (0, 1),
            initial=M.initial,
        ),
        win,
        lose,
    )
