"""Seeded random model generators for property and acceptance tests."""

import random
from fractions import Fraction

from memdp.model import format_prob, validate

SPLITS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
ALT_SPLITS = (Fraction(1, 5), Fraction(2, 5), Fraction(3, 5), Fraction(4, 5), Fraction(1, 3), Fraction(2, 3))


def _dist(targets, split):
    targets = sorted(targets)
    if len(targets) == 1:
        return {targets[0]: Fraction(1)}
    return {targets[0]: split, targets[1]: 1 - split}


def random_raw(
    rng: random.Random,
    n_states: int,
    n_actions: int = 2,
    n_envs: int = 1,
    n_priorities: int = 3,
    acyclic: bool = False,
    variant_prob: float = 0.3,
    splits=SPLITS,
) -> dict:
    """Random MEMDP description with supports of size at most two.

    With ``acyclic`` the last two states are absorbing and every other state
    only moves to states of higher index.
    """
    states = [f"s{i}" for i in range(n_states)]
    actions = [f"a{i}" for i in range(n_actions)]
    sinks = set(range(n_states - 2, n_states)) if acyclic and n_states >= 3 else set()

    def succ_pool(q):
        if q in sinks:
            return [q]
        if acyclic:
            return list(range(q + 1, n_states)) or [q]
        return list(range(n_states))

    def pick_support(q):
        pool = succ_pool(q)
        size = 1 if len(pool) == 1 else rng.choice((1, 2, 2))
        return frozenset(rng.sample(pool, size))

    enabled = {}
    for q in range(n_states):
        k = rng.randint(1, n_actions)
        enabled[q] = sorted(rng.sample(range(n_actions), k))
    envs = {}
    base = {(q, a): (pick_support(q), rng.choice(splits)) for q in range(n_states) for a in enabled[q]}
    for e in range(n_envs):
        table = {}
        for q in range(n_states):
            row = {}
            for a in enabled[q]:
                sup, split = base[(q, a)]
                if e > 0 and q not in sinks:
                    if rng.random() < variant_prob:
                        sup = pick_support(q)
                    if rng.random() < variant_prob:
                        split = rng.choice(splits)
                d = _dist(sup, split)
                row[actions[a]] = {states[t]: format_prob(p) for t, p in d.items()}
            table[states[q]] = row
        envs[f"e{e + 1}"] = table
    priority = {s: rng.randrange(n_priorities) for s in states}
    return {
        "states": states,
        "actions": actions,
        "enabled": {states[q]: [actions[a] for a in acts] for q, acts in enabled.items()},
        "environments": envs,
        "priority": priority,
        "initial": states[0],
    }


def random_model(seed: int, **kw):
    return validate(random_raw(random.Random(seed), **kw))


def random_sizes(seed: int, max_states: int, max_envs: int, max_actions: int = 2):
    rng = random.Random(seed * 7919 + 13)
    return dict(
        n_states=rng.randint(2, max_states),
        n_envs=rng.randint(1, max_envs),
        n_actions=rng.randint(1, max_actions),
    )


def entry_pattern(M):
    """For every transition entry, which environment pairs agree on its probability."""
    out = {}
    for q in range(M.n_states):
        for a in M.enabled[q]:
            targets = set()
            for e in range(M.n_envs):
                targets |= M.support(e, q, a)
            for t in targets:
                vals = [M.prob(e, q, a, t) for e in range(M.n_envs)]
                out[(q, a, t)] = tuple(vals[i] == vals[j] for i in range(len(vals)) for j in range(len(vals)))
    return out


def support_pattern(M):
    return tuple(tuple(tuple(M.support(e, q, a) for a in M.enabled[q]) for q in range(M.n_states)) for e in range(M.n_envs))


def perturb(M, rng: random.Random, keep_pattern: bool, attempts: int = 20):
    """Model with the same supports and new probabilities.

    Probabilities of two-element supports are remapped through a random
    injective map of the split values; with ``keep_pattern`` the map is
    retried until the cross-environment equality pattern is unchanged
    (``None`` when no attempt succeeds).
    """
    from memdp.model import MEMDP

    used = sorted({d[min(d)] for env in M.delta for row in env for d in row.values() if len(d) == 2})
    for _ in range(attempts):
        images = rng.sample(ALT_SPLITS, len(used)) if len(used) <= len(ALT_SPLITS) else None
        if images is None:
            return None
        g = dict(zip(used, images))
        delta = []
        for env in M.delta:
            rows = []
            for row in env:
                new = {}
                for a, d in row.items():
                    if len(d) == 2:
                        lo, hi = sorted(d)
                        x = g[d[lo]]
                        new[a] = {lo: x, hi: 1 - x}
                    else:
                        new[a] = dict(d)
                rows.append(new)
            delta.append(tuple(rows))
        P = MEMDP(M.states, M.actions, M.enabled, M.envs, tuple(delta), M.priority, M.initial)
        if not keep_pattern or entry_pattern(P) == entry_pattern(M):
            return P
    return None
