"""Common end components of arbitrary MEMDPs, the purge reduction and the memory-bound constants."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .bounds import ceil_fraction, ln_upper, log10_int
from .errors import NoDistinguishingTransition
from .graph import EndComponent, almost_sure_parity, arena_mecs, build_arena, pairs_arena
from .limit_sure import min_probability_gap
from .model import LOSE, MEMDP, WIN, EnvSet

STAY = "__stay"

TRIVIAL = "trivial"
DISTINGUISHING = "distinguishing"
ND_WINNING = "nondistinguishing-winning"
ND_LOSING = "nondistinguishing-losing"


def mcecs_general(M: MEMDP, K: Optional[EnvSet] = None) -> List[EndComponent]:
    """Maximal end components common to every environment of ``K``.

    A candidate is split into the maximal end components of one
    environment until it is a single end component in all of them.
    """
    K = M.env_set(K)
    envs = list(K)
    full = build_arena(M, K)
    per_env = {e: build_arena(M, EnvSet.single(e, M.n_envs)) for e in envs}
    work = [{q: frozenset(row) for q, row in full.items() if row}]
    found = []
    while work:
        cand = work.pop()
        if not cand:
            continue
        split = None
        for e in envs:
            mecs = arena_mecs(pairs_arena(per_env[e], cand))
            if len(mecs) != 1 or mecs[0] != cand:
                split = mecs
                break
        if split is None:
            found.append(cand)
        else:
            work.extend(split)
    found.sort(key=lambda d: min(d))
    return [EndComponent(d, K) for d in found]


def is_distinguishing(M: MEMDP, D: EndComponent, K: Optional[EnvSet] = None) -> bool:
    K = K or D.scope or M.all_envs()
    envs = list(K)
    return any(M.dist(e, q, a) != M.dist(envs[0], q, a) for q, acts in D.pairs.items() for a in acts for e in envs[1:])


def component_wins(M: MEMDP, D: EndComponent, env: int = 0) -> bool:
    """Whether play can stay in ``D`` and win: some end component inside it has an even least priority."""
    arena = pairs_arena(build_arena(M, EnvSet.single(env, M.n_envs)), D.pairs)
    return bool(almost_sure_parity(arena, M.priority)[0])


def classify_mcec(M: MEMDP, D: EndComponent, K: Optional[EnvSet] = None) -> str:
    """One of ``trivial``, ``distinguishing``, ``nondistinguishing-winning``, ``nondistinguishing-losing``."""
    K = K or D.scope or M.all_envs()
    if len(D.pairs) == 1:
        return TRIVIAL
    if is_distinguishing(M, D, K):
        return DISTINGUISHING
    return ND_WINNING if component_wins(M, D, K.first()) else ND_LOSING


@dataclass
class PurgeResult:
    model: MEMDP
    state_map: Dict[int, int]  # original state id -> purged state id
    collapsed: List[Tuple[EndComponent, bool]]
    collapsed_state: Dict[int, int]  # index in collapsed -> purged state id

    def map_names(self, original: MEMDP) -> Dict[str, str]:
        return {original.states[q]: self.model.states[t] for q, t in sorted(self.state_map.items())}


def _fresh(name: str, taken) -> str:
    while name in taken:
        name += "'"
    return name


def purge(M: MEMDP, K: Optional[EnvSet] = None) -> PurgeResult:
    """Collapse every non-distinguishing maximal common end component into one state.

    A collapsed component gets a ``__stay`` action to the win or lose sink
    and one frontier action per state-action pair leaving it; all
    transitions into the component are redirected to its new state.
    """
    K = M.env_set(K)
    comps = mcecs_general(M, K)
    collapse = []
    for D in comps:
        if not is_distinguishing(M, D, K):
            collapse.append((D, component_wins(M, D, K.first())))
    owner = {q: i for i, (D, _) in enumerate(collapse) for q in D.states}

    names: List[str] = []
    state_map: Dict[int, int] = {}
    for q in range(M.n_states):
        if q not in owner:
            state_map[q] = len(names)
            names.append(M.states[q])
    taken = set(M.states)
    collapsed_state = {}
    for i, (D, _) in enumerate(collapse):
        name = _fresh("s_D{" + ",".join(M.states[q] for q in sorted(D.states)) + "}", taken)
        taken.add(name)
        collapsed_state[i] = len(names)
        for q in D.states:
            state_map[q] = len(names)
        names.append(name)
    win, lose = len(names), len(names) + 1
    names += [_fresh(WIN, taken), _fresh(LOSE, taken)]

    actions = list(M.actions)
    action_id = {a: i for i, a in enumerate(actions)}

    def act(name):
        if name not in action_id:
            action_id[name] = len(actions)
            actions.append(name)
        return action_id[name]

    stay = act(_fresh(STAY, set(M.actions)))
    envs = list(K)
    enabled: List[List[int]] = [[] for _ in names]
    delta: List[List[dict]] = [[{} for _ in names] for _ in envs]

    def image(e, q, a):
        out: Dict[int, Fraction] = {}
        for t, p in M.dist(e, q, a).items():
            t2 = state_map[t]
            out[t2] = out.get(t2, Fraction(0)) + p
        return dict(sorted(out.items()))

    for q in range(M.n_states):
        if q in owner:
            continue
        s = state_map[q]
        enabled[s] = list(M.enabled[q])
        for k, e in enumerate(envs):
            delta[k][s] = {a: image(e, q, a) for a in M.enabled[q]}
    for i, (D, good) in enumerate(collapse):
        s = collapsed_state[i]
        row_acts = [stay]
        rows = [{stay: {win if good else lose: Fraction(1)}} for _ in envs]
        for q in sorted(D.states):
            for a in M.enabled[q]:
                if a in D.pairs[q]:
                    continue
                f = act(f"__F_{M.states[q]}_{M.actions[a]}")
                row_acts.append(f)
                for k, e in enumerate(envs):
                    rows[k][f] = image(e, q, a)
        enabled[s] = sorted(row_acts)
        for k in range(len(envs)):
            delta[k][s] = rows[k]
    for sink in (win, lose):
        enabled[sink] = [stay]
        for k in range(len(envs)):
            delta[k][sink] = {stay: {sink: Fraction(1)}}

    priority = [0] * len(names)
    for q in range(M.n_states):
        if q not in owner:
            priority[state_map[q]] = M.priority[q]
    for i, (D, _) in enumerate(collapse):
        priority[collapsed_state[i]] = min(M.priority[q] for q in D.states)
    priority[win], priority[lose] = 0, 1

    model = MEMDP(
        states=tuple(names),
        actions=tuple(actions),
        enabled=tuple(tuple(sorted(a)) for a in enabled),
        envs=tuple(M.envs[e] for e in envs),
        delta=tuple(tuple(rows) for rows in delta),
        priority=tuple(priority),
        initial=state_map[M.initial],
    )
    return PurgeResult(model, state_map, collapse, collapsed_state)


# memory-bound constants ------------------------------------------------------


@dataclass(frozen=True)
class MemoryBound:
    """The integer ``base ** exponent * factor``, kept symbolic because it is usually astronomical."""

    base: int
    exponent: int
    factor: int

    def log10(self) -> float:
        return self.exponent * log10_int(self.base) + log10_int(self.factor)

    def value(self, max_digits: int = 100_000) -> int:
        if self.log10() > max_digits:
            raise OverflowError(f"memory bound has about {self.log10():.3g} decimal digits")
        return self.base**self.exponent * self.factor

    def __str__(self):
        return f"{self.base}^{self.exponent} * {self.factor}"


@dataclass(frozen=True)
class SynthesisConstants:
    eta: Fraction
    nu: Fraction
    n0: int
    n: int
    N: MemoryBound
    sampling_memory: int  # ceil(8 (ln(1/eps) / gap^2)^2) with the raw probability gap

    def to_json(self) -> dict:
        return {
            "eta": str(self.eta),
            "nu": str(self.nu),
            "n0": str(self.n0),
            "n": str(self.n),
            "N": {
                "base": self.N.base,
                "exponent": str(self.N.exponent),
                "factor": str(self.N.factor),
                "log10": self.N.log10(),
            },
            "sampling_memory": str(self.sampling_memory),
        }


def memory_bound(M: MEMDP, eps) -> SynthesisConstants:
    """Constants bounding the memory sufficient for an eps-optimal strategy."""
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie strictly between 0 and 1")
    gap = min_probability_gap(M)
    if gap is None:
        raise NoDistinguishingTransition("all environments assign identical probabilities")
    eta = gap / 4
    nu = M.min_positive_prob()
    nq, na, ne = M.n_states, len(M.actions), M.n_envs
    n0 = ceil_fraction(8 * Fraction(nq * na) ** 3 / (eps * eta**2))
    n = ceil_fraction(2 * (1 / nu) ** (2 * nq) * max(Fraction(n0), ln_upper(16 / eps)))
    factor = na * ceil_fraction(8 * (ln_upper(8 / eps) / eta**2) ** 2)
    N = MemoryBound(2 * nq, n * (ne + 1), factor)
    sampling = ceil_fraction(8 * (ln_upper(1 / eps) / gap**2) ** 2)
    return SynthesisConstants(eta, nu, n0, n, N, sampling)
