import json
import subprocess
import sys

import pytest

from memdp.cli import main
from memdp.examples import generate


@pytest.fixture
def write(tmp_path):
    def _write(obj, name="model.json"):
        path = tmp_path / name
        path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
        return str(path)

    return _write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_ls_fig3(capsys, write):
    code, out, _ = run(capsys, "check-ls", write(generate("fig3")))
    res = json.loads(out)
    assert code == 0
    assert res["winning"] == ["q1", "q2", "q3"]
    comp = res["distinguishing_components"][0]
    assert comp["pairs"] == {"q1": ["c"], "q2": ["c"]} and comp["winning"] is True


def test_check_dot(capsys, write):
    code, out, _ = run(capsys, "check-as", write(generate("fig4")), "--format", "dot")
    assert code == 0 and out.startswith('digraph "almost-sure region"')
    assert '"e1:q2" -> "e1:q5" [label="a: 1/2", color=red, fontcolor=red];' in out
    assert '"e1:q5" [label="q5 (0)", style=filled' in out


def test_objective_option_and_sidecar(capsys, write):
    raw = generate("fig3")
    code, out, _ = run(capsys, "check-as", write(raw), "--objective", "reach:q4")
    assert json.loads(out)["winning"] == ["q4"]
    raw["objective"] = {"kind": "safe", "states": ["q1", "q2", "q3"]}
    code, out, _ = run(capsys, "check-as", write(raw))
    res = json.loads(out)
    assert res["objective"]["kind"] == "safe"
    assert "q3" in res["winning"] and "q4" not in res["winning"]


def test_envs_option(capsys, write):
    code, out, _ = run(capsys, "check-as", write(generate("fig3")), "--envs", "e1")
    assert json.loads(out)["winning"] == ["q1", "q2", "q3"]


def test_gen_example_missing_card(capsys):
    code, out, _ = run(capsys, "gen-example", "missing-card", "--cards", "3")
    raw = json.loads(out)
    assert code == 0
    assert list(raw["environments"]) == ["e1", "e2", "e3"]
    assert {"sample", "guess1", "guess2", "guess3"} <= set(raw["actions"])


def test_gap_pennies(capsys, write):
    code, out, _ = run(capsys, "gap", write(generate("pennies")), "--alpha", "1/2", "--eps", "1/20", "--mem", "1", "--seed", "7")
    res = json.loads(out)
    assert code == 0 and res["answer"] == "yes"
    assert sorted((r["action"], r["prob"]) for r in res["p"] if r["state"] == "s") == [("a", "1/2"), ("b", "1/2")]


def test_gap_no(capsys, write):
    code, out, _ = run(capsys, "gap", write(generate("pennies")), "--alpha", "4/5", "--eps", "1/20")
    assert code == 0 and json.loads(out)["answer"] == "no-within-budget"


def test_synthesize_certify(capsys, write):
    code, out, _ = run(capsys, "synthesize", write(generate("fig4")), "--mode", "ls", "--eps", "1/4", "--certify")
    res = json.loads(out)
    assert code == 0
    assert res["evaluation"]["values"] == {"e1": "7/8", "e2": "1"}
    assert res["memory_size"] > 1


def test_synthesize_not_winning(capsys, write):
    code, _, err = run(capsys, "synthesize", write(generate("fig3")), "--mode", "as")
    assert code == 2 and json.loads(err)["error"] == "not_almost_sure_winning"


def test_memory_budget_exit(capsys, write):
    code, _, err = run(capsys, "synthesize", write(generate("missing-card", 3)), "--mem-cap", "2")
    assert code == 3 and json.loads(err)["error"] == "memory_budget_exceeded"


def test_simulate_csv(capsys, write):
    code, out, _ = run(capsys, "simulate", write(generate("missing-card", 3)), "--env", "e2", "--runs", "5", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "run_id,outcome,steps,final_state" and len(lines) == 6
    assert all(line.split(",")[1] == "win" for line in lines[1:])


def test_simulate_json(capsys, write):
    code, out, _ = run(capsys, "simulate", write(generate("fig3")), "--mode", "ls", "--eps", "1/4", "--runs", "200", "--seed", "3")
    res = json.loads(out)
    assert code == 0 and res["runs"] == 200 and res["wins"] + res["losses"] + res["undecided"] == 200
    assert res["win_fraction"] > 0.8


def test_simulate_not_winning(capsys, write):
    code, _, err = run(capsys, "simulate", write(generate("one-shot")), "--mode", "ls")
    assert code == 2 and json.loads(err)["error"] == "not_limit_sure_winning"


@pytest.mark.parametrize(
    "content, error",
    [
        ("{not json", "model_error"),
        (json.dumps({"states": []}), "invalid_model"),
    ],
)
def test_model_errors_exit_2(capsys, write, content, error):
    code, out, err = run(capsys, "check-as", write(content))
    assert code == 2 and out == ""
    assert json.loads(err)["error"] == error


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "check-as", str(tmp_path / "absent.json"))
    assert code == 2 and json.loads(err)["error"] == "invalid_input"


def test_unknown_state_in_objective(capsys, write):
    code, _, err = run(capsys, "check-as", write(generate("fig3")), "--objective", "reach:nowhere")
    assert code == 2 and json.loads(err)["error"] == "unknown_state"


def test_bad_card_count(capsys):
    code, _, err = run(capsys, "gen-example", "duplicate-card", "--cards", "1")
    assert code == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "memdp", "gen-example", "fig3"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["states"] == ["q1", "q2", "q3", "q4"]
