from fractions import Fraction

import pytest

from memdp import EnvSet, MemoryBudgetExceeded, evaluate_exact, simulate, synthesize_as_strategy
from memdp.almost_sure import AlmostSureSolver, AlmostSureStrategy
from memdp.errors import SingularSystem
from memdp.evaluate import chain_values, product_chain, solve_sparse_exact
from memdp.examples import build
from memdp.strategy import StrategyAutomaton, expand, memoryless_automaton

E1 = EnvSet.single(0, 2)


def fig3_play(at_q2):
    """Memoryless strategy on the fig3 example with the given action distribution at q2."""
    M = build("fig3")
    choice = {q: {M.enabled[q][0]: Fraction(1)} for q in range(M.n_states)}
    choice[M.state_id("q2")] = {M.action_id(a): Fraction(w) for a, w in at_q2.items()}
    return M, memoryless_automaton(choice)


class TestEvaluateExact:
    def test_c_forever(self):
        M, sigma = fig3_play({"c": 1})
        res = evaluate_exact(M, E1, sigma)
        assert res.values == {0: 0}
        assert res.bscc_count == {0: 1} and res.winning_bscc_count == {0: 0}

    def test_a_at_q2(self):
        M, sigma = fig3_play({"a": 1})
        assert evaluate_exact(M, E1, sigma).values == {0: 1}

    def test_mixed(self):
        M, sigma = fig3_play({"a": Fraction(1, 2), "b": Fraction(1, 2)})
        res = evaluate_exact(M, E1, sigma)
        assert res.values == {0: Fraction(1, 2)}
        assert evaluate_exact(M, None, sigma).values == {0: Fraction(1, 2), 1: Fraction(1, 2)}

    def test_json(self):
        M, sigma = fig3_play({"a": 1})
        out = evaluate_exact(M, None, sigma).to_json(M)
        assert out["values"] == {"e1": "1", "e2": "0"}
        assert out["approximate"] is False

    def test_float_fallback_agrees(self):
        M, sigma = fig3_play({"a": Fraction(1, 3), "c": Fraction(2, 3)})
        chain = product_chain(M, 0, sigma, [(M.initial, 0)])
        exact, approx = chain_values(chain)
        floats, approx_f = chain_values(chain, exact_limit=0)
        assert not approx and approx_f
        for v in exact:
            assert float(exact[v]) == pytest.approx(floats[v], abs=1e-9)

    def test_memory_cap(self):
        M = build("missing-card", 3)
        with pytest.raises(MemoryBudgetExceeded):
            expand(AlmostSureStrategy(AlmostSureSolver(M)), M, M.all_envs(), M.initial, cap=2)

    def test_stochastic_memory(self):
        # memory flips a fair coin once, then plays a (memory 1) or b (memory 2) forever
        M = build("fig3")
        q1, q2 = M.state_id("q1"), M.state_id("q2")
        c, a, b = M.action_id("c"), M.action_id("a"), M.action_id("b")
        output = {}
        for m in range(3):
            for q in range(M.n_states):
                act = c if q in (q1,) or (q == q2 and m == 0) else M.enabled[q][0]
                if q == q2 and m:
                    act = a if m == 1 else b
                output[(m, q)] = {act: Fraction(1)}
        update = {(0, q1, c, q2): {1: Fraction(1, 2), 2: Fraction(1, 2)}}
        sigma = StrategyAutomaton(3, 0, output, update)
        assert not sigma.is_deterministic()
        assert evaluate_exact(M, None, sigma).values == {0: Fraction(1, 2), 1: Fraction(1, 2)}


class TestSparseSolver:
    def test_solves(self):
        rows = [{0: Fraction(2), 1: Fraction(1)}, {0: Fraction(1), 1: Fraction(3)}]
        assert solve_sparse_exact(rows, [Fraction(3), Fraction(5)]) == [Fraction(4, 5), Fraction(7, 5)]

    def test_singular(self):
        rows = [{0: Fraction(1), 1: Fraction(1)}, {0: Fraction(2), 1: Fraction(2)}]
        with pytest.raises(SingularSystem):
            solve_sparse_exact(rows, [Fraction(1), Fraction(2)])


class TestSimulate:
    def one_shot(self):
        M = build("one-shot")
        return M, memoryless_automaton({q: {M.enabled[q][0]: Fraction(1)} for q in range(M.n_states)})

    def test_c_forever_never_wins(self):
        M, sigma = fig3_play({"c": 1})
        res = simulate(M, "e1", sigma, runs=1000, seed=0)
        assert res.wins == 0 and res.losses == 1000

    def test_one_shot_frequency(self):
        M, sigma = self.one_shot()
        res = simulate(M, 0, sigma, runs=10000, seed=0)
        assert 0.57 <= res.win_fraction <= 0.63
        assert (res.wins, res.losses, res.undecided) == (5999, 4001, 0)

    def test_reproducible(self):
        M, sigma = self.one_shot()
        first = simulate(M, 0, sigma, runs=200, seed=11).to_csv()
        assert first == simulate(M, 0, sigma, runs=200, seed=11).to_csv()
        assert first != simulate(M, 0, sigma, runs=200, seed=12).to_csv()
        assert first.splitlines()[0] == "run_id,outcome,steps,final_state"

    def test_missing_card_under_almost_sure_strategy(self):
        M = build("missing-card", 3)
        sigma = synthesize_as_strategy(M)
        for e in M.envs:
            res = simulate(M, e, sigma, runs=500, horizon=500, seed=5)
            assert res.undecided_fraction < 0.01
            assert res.win_fraction == pytest.approx(1 - res.undecided_fraction)

    def test_horizon_cuts_runs(self):
        M, sigma = fig3_play({"a": Fraction(1, 2), "b": Fraction(1, 2)})
        res = simulate(M, 0, sigma, runs=100, horizon=1, seed=0)
        assert res.undecided == 100
        with pytest.raises(ValueError):
            simulate(M, 0, sigma, horizon=0)
