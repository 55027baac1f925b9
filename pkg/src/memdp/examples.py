"""Generators for the reference models used in docs, tests and the CLI.

Each generator returns a raw JSON-style description; ``build`` validates it.
"""

from __future__ import annotations

from fractions import Fraction

from .model import MEMDP, format_prob, validate


def _p(x) -> str:
    return format_prob(Fraction(x))


def _card_game(n: int, hub_dist, winning_guess) -> dict:
    if n < 2:
        raise ValueError("card families need at least 2 cards")
    cards = [str(i) for i in range(1, n + 1)]
    guesses = [f"guess{c}" for c in cards]
    states = ["0"] + cards + ["win", "lose"]
    actions = ["sample", "back"] + guesses + ["stay"]
    enabled = {"0": ["sample"] + guesses, "win": ["stay"], "lose": ["stay"]}
    for c in cards:
        enabled[c] = ["back"]
    envs = {}
    for i in range(1, n + 1):
        table = {"0": {"sample": hub_dist(i)}}
        for x, g in zip(cards, guesses):
            table["0"][g] = {"win": "1"} if winning_guess(i, int(x)) else {"lose": "1"}
        for c in cards:
            table[c] = {"back": {"0": "1"}}
        table["win"] = {"stay": {"win": "1"}}
        table["lose"] = {"stay": {"lose": "1"}}
        envs[f"e{i}"] = table
    priority = {s: 1 for s in states}
    priority["win"] = 0
    return {
        "states": states,
        "actions": actions,
        "enabled": enabled,
        "environments": envs,
        "priority": priority,
        "initial": "0",
    }


def missing_card(n: int) -> dict:
    """Deck of ``n`` cards with card i missing in environment e_i; sampling shows a present card."""

    def hub(i):
        return {str(c): _p(Fraction(1, n - 1)) for c in range(1, n + 1) if c != i}

    return _card_game(n, hub, lambda i, x: x == i)


def duplicate_card(n: int) -> dict:
    """Deck of ``n + 1`` cards where card i appears twice in environment e_i."""

    def hub(i):
        return {str(c): _p(Fraction(2 if c == i else 1, n + 1)) for c in range(1, n + 1)}

    return _card_game(n, hub, lambda i, x: x == i)


def fig3() -> dict:
    """Two environments that differ only in probabilities at q1 and in which of a/b leads to q3."""
    return {
        "states": ["q1", "q2", "q3", "q4"],
        "actions": ["a", "b", "c"],
        "enabled": {"q1": ["c"], "q2": ["a", "b", "c"], "q3": ["a"], "q4": ["a"]},
        "environments": {
            "e1": {
                "q1": {"c": {"q1": "2/3", "q2": "1/3"}},
                "q2": {"a": {"q3": "1"}, "b": {"q4": "1"}, "c": {"q1": "1"}},
                "q3": {"a": {"q3": "1"}},
                "q4": {"a": {"q4": "1"}},
            },
            "e2": {
                "q1": {"c": {"q1": "1/3", "q2": "2/3"}},
                "q2": {"a": {"q4": "1"}, "b": {"q3": "1"}, "c": {"q1": "1"}},
                "q3": {"a": {"q3": "1"}},
                "q4": {"a": {"q4": "1"}},
            },
        },
        "priority": {"q1": 1, "q2": 1, "q3": 0, "q4": 1},
        "initial": "q1",
    }


def fig4() -> dict:
    """Two loops whose exits are revealing: the first is safe in e2 only, the second wins only in e2."""
    same = {
        "q1": {"a": {"q2": "1"}},
        "q3": {"a": {"q4": "1"}},
        "q5": {"a": {"q5": "1"}},
        "q6": {"a": {"q6": "1"}},
    }
    e1 = dict(same)
    e1["q2"] = {"a": {"q1": "1/2", "q5": "1/2"}, "b": {"q3": "1"}}
    e1["q4"] = {"a": {"q3": "1/2", "q6": "1/2"}}
    e2 = dict(same)
    e2["q2"] = {"a": {"q1": "1"}, "b": {"q3": "1"}}
    e2["q4"] = {"a": {"q3": "1"}}
    return {
        "states": ["q1", "q2", "q3", "q4", "q5", "q6"],
        "actions": ["a", "b"],
        "enabled": {"q1": ["a"], "q2": ["a", "b"], "q3": ["a"], "q4": ["a"], "q5": ["a"], "q6": ["a"]},
        "environments": {"e1": e1, "e2": e2},
        "priority": {"q1": 1, "q2": 1, "q3": 0, "q4": 0, "q5": 0, "q6": 1},
        "initial": "q1",
    }


def fig5() -> dict:
    """Model with one winning and one losing non-distinguishing common end component."""

    def uniform(*targets):
        return {t: _p(Fraction(1, len(targets))) for t in targets}

    common = {
        "q1": {"a": uniform("q2", "q3")},
        "q3": {"a": uniform("q3", "q4")},
        "q5": {"a": {"q6": "1"}},
        "q6": {"a": {"q5": "1"}},
    }
    e1 = dict(common)
    e1["q2"] = {"a": uniform("q1", "q2"), "b": uniform("q2", "q3")}
    e1["q4"] = {"a": uniform("q3", "q4"), "b": uniform("q4", "q5", "q6")}
    e2 = dict(common)
    e2["q2"] = {"a": uniform("q1", "q2"), "b": {"q2": "1"}}
    e2["q4"] = {"a": uniform("q3", "q4"), "b": uniform("q5", "q6")}
    return {
        "states": ["q1", "q2", "q3", "q4", "q5", "q6"],
        "actions": ["a", "b"],
        "enabled": {"q1": ["a"], "q2": ["a", "b"], "q3": ["a"], "q4": ["a", "b"], "q5": ["a"], "q6": ["a"]},
        "environments": {"e1": e1, "e2": e2},
        "priority": {"q1": 1, "q2": 1, "q3": 0, "q4": 0, "q5": 1, "q6": 1},
        "initial": "q1",
    }


def _one_step(dists: dict) -> dict:
    actions = sorted({a for table in dists.values() for a in table})
    envs = {}
    for env, table in dists.items():
        envs[env] = {
            "s": table,
            "win": {"stay": {"win": "1"}},
            "lose": {"stay": {"lose": "1"}},
        }
    return {
        "states": ["s", "win", "lose"],
        "actions": actions + ["stay"],
        "enabled": {"s": actions, "win": ["stay"], "lose": ["stay"]},
        "environments": envs,
        "priority": {"s": 1, "win": 0, "lose": 1},
        "initial": "s",
    }


def one_shot() -> dict:
    """Single environment, one move: action a wins with probability 3/5."""
    return _one_step({"e1": {"a": {"win": "3/5", "lose": "2/5"}}})


def pennies() -> dict:
    """Two environments, one move: a wins only in e1, b only in e2."""
    return _one_step({
        "e1": {"a": {"win": "1"}, "b": {"lose": "1"}},
        "e2": {"a": {"lose": "1"}, "b": {"win": "1"}},
    })


FAMILIES = {
    "missing-card": missing_card,
    "duplicate-card": duplicate_card,
    "fig3": fig3,
    "fig4": fig4,
    "fig5": fig5,
    "one-shot": one_shot,
    "pennies": pennies,
}


def generate(family: str, cards: int = 3) -> dict:
    if family not in FAMILIES:
        raise ValueError(f"unknown example family {family!r}")
    if family in ("missing-card", "duplicate-card"):
        return FAMILIES[family](cards)
    return FAMILIES[family]()


def build(family: str, cards: int = 3) -> MEMDP:
    return validate(generate(family, cards))
