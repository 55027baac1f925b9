"""Acceptance suite: one test (or group) per criterion, summarized at the end of the run."""

import json
import random
import time
from fractions import Fraction

import pytest

from generators import perturb, random_model, random_sizes
from memdp import (
    AlmostSureSolver,
    NoWithinBudget,
    Reach,
    Yes,
    as_parity,
    build_gap_constraints,
    encode_objective,
    evaluate_constraints_for_fixed_p,
    evaluate_exact,
    ls_parity,
    mcecs_general,
    p_strategy_automaton,
    purge,
    sample_count,
    solve_gap,
    synthesize_as_strategy,
    synthesize_ls_strategy,
)
from memdp.cli import main
from memdp.examples import build, generate
from memdp.model import LOSE, WIN
from memdp.quantitative import is_distinguishing
from memdp.strategy import memoryless_automaton
from oracles import parity_region_bruteforce


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out)


@pytest.fixture
def model_file(tmp_path):
    def write(family, cards=3):
        path = tmp_path / f"{family}-{cards}.json"
        path.write_text(json.dumps(generate(family, cards)))
        return path

    return write


# 1, 2 ------------------------------------------------------------------------


@pytest.mark.criterion(1, "fig3 example: q1 limit-sure but not almost-sure, < 1 s")
def test_fig3_ground_truth(capsys, model_file):
    path = model_file("fig3")
    start = time.perf_counter()
    code_as, res_as = run_cli(capsys, "check-as", path)
    code_ls, res_ls = run_cli(capsys, "check-ls", path)
    elapsed = time.perf_counter() - start
    assert code_as == code_ls == 0
    assert "q1" not in res_as["winning"]
    assert "q1" in res_ls["winning"]
    assert elapsed < 1.0


@pytest.mark.criterion(2, "fig4 example: same split for q1, (q2,a,q5) revealed with knowledge {e1}, < 1 s")
def test_fig4_ground_truth(capsys, model_file):
    path = model_file("fig4")
    start = time.perf_counter()
    _, res_as = run_cli(capsys, "check-as", path)
    _, res_ls = run_cli(capsys, "check-ls", path)
    elapsed = time.perf_counter() - start
    assert "q1" not in res_as["winning"]
    assert "q1" in res_ls["winning"]
    marked = {(t["from"], t["action"], t["to"]): t["knowledge"] for t in res_as["revealed_log"]}
    assert marked[("q2", "a", "q5")] == ["e1"]
    assert elapsed < 1.0


# 3 ---------------------------------------------------------------------------


@pytest.mark.criterion(3, "card families: missing-card hub AS, duplicate-card hub LS minus AS, < 10 s each")
@pytest.mark.parametrize("n", [3, 4, 5])
def test_missing_card_hub_almost_sure(n):
    M = build("missing-card", n)
    start = time.perf_counter()
    region = as_parity(M)
    assert M.state_id("0") in region
    assert time.perf_counter() - start < 10


@pytest.mark.criterion(3, "card families: missing-card hub AS, duplicate-card hub LS minus AS, < 10 s each")
@pytest.mark.parametrize("n", [3, 4])
def test_duplicate_card_hub_limit_sure_only(n):
    M = build("duplicate-card", n)
    start = time.perf_counter()
    hub = M.state_id("0")
    assert hub in ls_parity(M)
    assert hub not in as_parity(M)
    assert time.perf_counter() - start < 10


# 4 ---------------------------------------------------------------------------


def regression_corpus():
    named = [build("fig3"), build("fig4"), build("fig5"), build("one-shot"), build("pennies")]
    named += [build("missing-card", n) for n in (3, 4, 5)] + [build("duplicate-card", 3)]
    return named + [random_model(5000 + s, **random_sizes(s, 5, 3)) for s in range(30)]


@pytest.mark.criterion(4, "strategy certification: AS value exactly 1, LS value >= 1-eps, < 60 s")
def test_strategy_certification():
    start = time.perf_counter()
    certified = 0
    for M in regression_corpus():
        solver = AlmostSureSolver(M)
        for q in sorted(solver.region()):
            sigma = synthesize_as_strategy(M, None, q, solver=solver)
            res = evaluate_exact(M, None, sigma, q)
            assert not res.approximate
            assert all(v == 1 for v in res.values.values()), (M.states[q], res.values)
            certified += 1
    assert certified > 50
    for M in (build("fig3"), build("fig4"), build("duplicate-card", 3)):
        for eps in (Fraction(1, 4), Fraction(1, 10)):
            res = evaluate_exact(M, None, synthesize_ls_strategy(M, None, eps))
            assert all(v >= 1 - eps for v in res.values.values()), (eps, res.values)
    assert time.perf_counter() - start < 60


# 5, 6, 7 ---------------------------------------------------------------------


@pytest.mark.criterion(5, "single environment: as_parity = ls_parity = brute force on 200 random MDPs")
def test_single_environment_oracle():
    mismatches = []
    for s in range(200):
        M = random_model(s, **random_sizes(s, 5, 1))
        expected = parity_region_bruteforce(M)
        if not (as_parity(M).states == ls_parity(M).states == expected):
            mismatches.append(s)
    assert mismatches == []


@pytest.mark.criterion(6, "acyclic models: as_parity = ls_parity on 200 random MEMDPs")
def test_acyclic_coincidence():
    mismatches = []
    for s in range(200):
        M = random_model(1000 + s, acyclic=True, **random_sizes(s, 8, 3))
        if as_parity(M).states != ls_parity(M).states:
            mismatches.append(s)
    assert mismatches == []


@pytest.mark.criterion(7, "support invariance of as_parity and pattern invariance of ls_parity, 100 models")
def test_support_invariance():
    as_mismatch, ls_mismatch = [], []
    checked_as = checked_ls = 0
    s = 0
    while checked_as < 100 or checked_ls < 100:
        M = random_model(2000 + s, **random_sizes(s, 6, 3))
        rng = random.Random(s)
        s += 1
        if checked_as < 100:
            P = perturb(M, rng, keep_pattern=False)
            checked_as += 1
            if as_parity(M).states != as_parity(P).states:
                as_mismatch.append(s)
        Q = perturb(M, rng, keep_pattern=True)
        if Q is not None and checked_ls < 100:
            checked_ls += 1
            if ls_parity(M).states != ls_parity(Q).states:
                ls_mismatch.append(s)
    assert as_mismatch == [] and ls_mismatch == []


# 8 ---------------------------------------------------------------------------


@pytest.mark.criterion(8, "purge: fig5 transitions and only trivial non-distinguishing MCECs afterwards")
def test_purge_fig5():
    M = build("fig5")
    out = purge(M)
    P = out.model
    names = out.map_names(M)
    sD, sD2 = names["q3"], names["q5"]
    assert names["q4"] == sD and names["q6"] == sD2 and sD != sD2
    F = P.action_id("__F_q4_b")
    d1 = P.dist(P.env_id("e1"), P.state_id(sD), F)
    d2 = P.dist(P.env_id("e2"), P.state_id(sD), F)
    assert d1 == {P.state_id(sD): Fraction(1, 3), P.state_id(sD2): Fraction(2, 3)}
    assert d2 == {P.state_id(sD2): Fraction(1)}
    stay = P.action_id("__stay")
    for e in range(P.n_envs):
        assert P.dist(e, P.state_id(sD), stay) == {P.state_id(WIN): 1}
        assert P.dist(e, P.state_id(sD2), stay) == {P.state_id(LOSE): 1}


@pytest.mark.criterion(8, "purge: fig5 transitions and only trivial non-distinguishing MCECs afterwards")
def test_purge_random_models():
    offenders = []
    for s in range(100):
        M = random_model(3000 + s, **random_sizes(s, 6, 3))
        P = purge(M).model
        sinks = {P.state_id(WIN), P.state_id(LOSE)}
        for D in mcecs_general(P):
            if not is_distinguishing(P, D) and not D.states <= sinks:
                offenders.append(s)
    assert offenders == []


# 9 ---------------------------------------------------------------------------


def random_p(M, N, rng):
    p = {}
    for q in range(M.n_states):
        for i in range(N):
            options = [(a, j) for a in M.enabled[q] for j in range(N)]
            chosen = rng.sample(options, rng.randint(1, len(options)))
            weights = [rng.randint(1, 4) for _ in chosen]
            for (a, j), w in zip(chosen, weights):
                p[(q, i, a, j)] = Fraction(w, sum(weights))
    return p


@pytest.mark.criterion(9, "fixed-p constraint values equal exact strategy evaluation, 100 triples")
def test_constraints_match_evaluator():
    mismatches = []
    for s in range(100):
        rng = random.Random(s)
        M = random_model(4000 + s, **random_sizes(s, 5, 3))
        targets = frozenset(rng.sample(range(M.n_states), rng.randint(1, 2)))
        enc = encode_objective(M, Reach(targets))
        N = rng.randint(1, 3)
        p = random_p(enc, N, rng)
        x = evaluate_constraints_for_fixed_p(build_gap_constraints(enc, targets, N, 1, Fraction(1, 2)), p)
        sigma = p_strategy_automaton(enc, N, p)
        for q0 in range(enc.n_states):
            res = evaluate_exact(enc, None, sigma, q0)
            for e, v in res.values.items():
                if not isinstance(v, Fraction) or x[(e, q0, 0)] != v:
                    mismatches.append((s, e, q0))
    assert mismatches == []


# 10 --------------------------------------------------------------------------


@pytest.mark.criterion(10, "gap solver: one-shot Yes, pennies randomized Yes and NoWithinBudget, < 5 s each")
def test_gap_one_shot():
    M = build("one-shot")
    start = time.perf_counter()
    ans = solve_gap(M, alpha=Fraction(3, 5), eps=Fraction(1, 100), seed=7)
    assert isinstance(ans, Yes)
    assert ans.values == {0: Fraction(3, 5)}
    assert evaluate_exact(M, None, ans.strategy).values == {0: Fraction(3, 5)}
    assert time.perf_counter() - start < 5


@pytest.mark.criterion(10, "gap solver: one-shot Yes, pennies randomized Yes and NoWithinBudget, < 5 s each")
def test_gap_pennies_randomized():
    M = build("pennies")
    s = M.state_id("s")
    for a in M.enabled[s]:
        pure = memoryless_automaton({q: {a if q == s else M.enabled[q][0]: Fraction(1)} for q in range(M.n_states)})
        assert evaluate_exact(M, None, pure).min_value() == 0
    start = time.perf_counter()
    ans = solve_gap(M, alpha=Fraction(1, 2), eps=Fraction(1, 20), mem_cap=1, seed=7)
    assert isinstance(ans, Yes)
    assert not ans.strategy.is_pure()
    res = evaluate_exact(M, None, ans.strategy)
    assert min(res.values.values()) >= Fraction(9, 20)
    assert time.perf_counter() - start < 5


@pytest.mark.criterion(10, "gap solver: one-shot Yes, pennies randomized Yes and NoWithinBudget, < 5 s each")
def test_gap_pennies_no():
    M = build("pennies")
    start = time.perf_counter()
    ans = solve_gap(M, alpha=Fraction(4, 5), eps=Fraction(1, 20), mem_cap=1, seed=7)
    assert isinstance(ans, NoWithinBudget)
    assert time.perf_counter() - start < 5


# 11 --------------------------------------------------------------------------


@pytest.mark.criterion(11, "sampling constant N(1/20, 1/3) = 54")
def test_sampling_constant():
    assert sample_count(Fraction(1, 20), Fraction(1, 3)) == 54
