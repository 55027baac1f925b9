"""Command-line interface: ``memdp <command> ...``.

Exit status is 0 on success, 2 for model errors and 3 when a memory or
search budget is exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import List, Optional

from .almost_sure import AlmostSureSolver, revealing_transitions, synthesize_as_strategy
from .errors import BudgetError, ModelError
from .evaluate import evaluate_exact, simulate
from .examples import FAMILIES, generate
from .gap import solve_gap
from .limit_sure import LimitSureSolver, synthesize_ls_strategy
from .model import MEMDP, Parity, Reach, Safe, encode_objective, validate
from .strategy import memory_cap_default

EXIT_OK, EXIT_MODEL, EXIT_BUDGET = 0, 2, 3


def fraction_arg(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def load_model(path: str):
    """Read a model file; returns the model and the optional sidecar objective."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from exc
    objective = None
    if isinstance(raw, dict) and "objective" in raw:
        raw = dict(raw)
        objective = raw.pop("objective")
    return validate(raw), objective


def parse_objective(M: MEMDP, objective) -> object:
    """``parity``, ``reach:s1,s2`` or ``safe:s1,s2``; sidecar objects use ``{"kind": ..., "states": [...]}``."""
    if objective is None or objective == "parity":
        return Parity()
    if isinstance(objective, dict):
        kind, names = objective.get("kind", "parity"), objective.get("states", [])
    else:
        kind, _, rest = str(objective).partition(":")
        names = [s for s in rest.split(",") if s]
    if kind == "parity":
        return Parity()
    ids = frozenset(M.state_id(s) for s in names)
    if kind == "reach":
        return Reach(ids)
    if kind == "safe":
        return Safe(ids)
    raise ModelError(f"unknown objective kind {kind!r}")


def objective_json(M: MEMDP, obj) -> dict:
    if isinstance(obj, Reach):
        return {"kind": "reach", "states": M.state_names(obj.targets)}
    if isinstance(obj, Safe):
        return {"kind": "safe", "states": M.state_names(obj.allowed)}
    return {"kind": "parity"}


def prepare(args):
    M, sidecar = load_model(args.model)
    obj = parse_objective(M, args.objective if args.objective is not None else sidecar)
    enc = encode_objective(M, obj)
    K = enc.env_set(args.envs.split(",") if args.envs else None)
    return M, obj, enc, K


def to_dot(M: MEMDP, winning=frozenset(), title="memdp") -> str:
    """One cluster per environment; revealing transitions in red, winning states filled."""
    K = M.all_envs()
    revealing = {(t.source, t.action, t.target) for t in revealing_transitions(M, K)}
    lines = [f'digraph "{title}" {{', "  rankdir=LR;", "  node [shape=circle];"]
    for e, env in enumerate(M.envs):
        lines.append(f'  subgraph "cluster_{env}" {{')
        lines.append(f'    label="{env}";')
        for q, name in enumerate(M.states):
            style = ', style=filled, fillcolor="palegreen"' if q in winning else ""
            lines.append(f'    "{env}:{name}" [label="{name} ({M.priority[q]})"{style}];')
        for q in range(M.n_states):
            for a in M.enabled[q]:
                for q2, p in M.dist(e, q, a).items():
                    attrs = f'label="{M.actions[a]}: {p}"'
                    if (q, a, q2) in revealing:
                        attrs += ", color=red, fontcolor=red"
                    lines.append(f'    "{env}:{M.states[q]}" -> "{env}:{M.states[q2]}" [{attrs}];')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit(payload: dict):
    json.dump(payload, sys.stdout, indent=2, sort_keys=False)
    sys.stdout.write("\n")


def cmd_check(args, mode: str) -> int:
    M, obj, enc, K = prepare(args)
    if mode == "almost-sure":
        solver = AlmostSureSolver(enc)
        region = solver.solve(K)
        level = solver.level(solver.canonical(K)) if len(solver.canonical(K)) > 1 else None
        log = level.revealed.log if level else []
    else:
        solver = LimitSureSolver(enc)
        region = solver.solve(K)
        level = solver.level(K) if len(K) > 1 else None
        log = level.revealed.log if level else []
    if args.format == "dot":
        sys.stdout.write(to_dot(M, region.states, title=f"{mode} region"))
        return EXIT_OK
    payload = {
        "mode": mode,
        "objective": objective_json(M, obj),
        "environments": [M.envs[e] for e in K],
        "winning": region.names(M),
        "initial": M.states[M.initial],
        "initial_winning": M.initial in region,
        "revealed_log": [
            dict(t.describe(enc), redirect="win" if good else "lose")
            for t, good in log
        ],
    }
    if mode == "limit-sure" and level is not None:
        payload["distinguishing_components"] = [
            {"pairs": D.describe(level.revealed.model), "partition": part.describe(enc), "winning": good}
            for D, part, good in level.partitions
        ]
    emit(payload)
    return EXIT_OK


def _strategy(args, enc, K, q0):
    cap = args.mem_cap if args.mem_cap is not None else memory_cap_default()
    if args.mode == "as":
        return synthesize_as_strategy(enc, K, q0, cap)
    return synthesize_ls_strategy(enc, K, args.eps, q0, cap)


def cmd_synthesize(args) -> int:
    M, obj, enc, K = prepare(args)
    q0 = M.state_id(args.state) if args.state else M.initial
    sigma = _strategy(args, enc, K, q0)
    payload = {
        "mode": "almost-sure" if args.mode == "as" else "limit-sure",
        "objective": objective_json(M, obj),
        "start": M.states[q0],
        "eps": str(args.eps) if args.mode == "ls" else None,
        "memory_size": sigma.memory_size,
    }
    if args.certify:
        payload["evaluation"] = evaluate_exact(enc, K, sigma, q0).to_json(enc)
    payload["strategy"] = sigma.to_json(enc)
    emit(payload)
    return EXIT_OK


def cmd_gap(args) -> int:
    M, obj, enc, K = prepare(args)
    ans = solve_gap(M, obj, args.alpha, args.eps, args.mem, args.budget, args.seed, envs=K)
    payload = {"objective": objective_json(M, obj), "alpha": str(args.alpha), "eps": str(args.eps)}
    payload.update(ans.to_json(enc))
    emit(payload)
    return EXIT_OK


def cmd_simulate(args) -> int:
    M, obj, enc, K = prepare(args)
    q0 = M.state_id(args.state) if args.state else M.initial
    sigma = _strategy(args, enc, K, q0)
    env = args.env or M.envs[K.first()]
    res = simulate(enc, env, sigma, q0, args.runs, args.horizon, args.seed)
    if args.format == "csv":
        sys.stdout.write(res.to_csv())
    else:
        payload = {"environment": env, "seed": args.seed, "horizon": args.horizon, "rng": "numpy PCG64"}
        payload.update(res.to_json())
        emit(payload)
    return EXIT_OK


def cmd_gen(args) -> int:
    raw = generate(args.family, args.cards)
    validate(raw)
    emit(raw)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memdp", description="Analyse multiple-environment MDPs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p):
        p.add_argument("model", help="model file (JSON)")
        p.add_argument("--objective", help="parity | reach:s1,s2 | safe:s1,s2 (default: sidecar key or parity)")
        p.add_argument("--envs", help="comma-separated environment names (default: all)")

    def strategy_args(p, default_mode):
        p.add_argument("--mode", choices=["as", "ls"], default=default_mode)
        p.add_argument("--eps", type=fraction_arg, default=Fraction(1, 10))
        p.add_argument("--state", help="start state (default: the model's initial state)")
        p.add_argument("--mem-cap", type=int, default=None, help="memory cap (default: $MEMDP_MEMORY_CAP or 10^6)")

    for name in ("check-as", "check-ls"):
        p = sub.add_parser(name, help=f"{'almost' if name == 'check-as' else 'limit'}-sure winning region")
        model_args(p)
        p.add_argument("--format", choices=["json", "dot"], default="json")

    p = sub.add_parser("synthesize", help="synthesize and optionally certify a winning strategy")
    model_args(p)
    strategy_args(p, "as")
    p.add_argument("--certify", action="store_true", help="include exact per-environment values")

    p = sub.add_parser("gap", help="gap problem with capped memory")
    model_args(p)
    p.add_argument("--alpha", type=fraction_arg, required=True)
    p.add_argument("--eps", type=fraction_arg, required=True)
    p.add_argument("--mem", type=int, default=1, help="largest memory size tried")
    p.add_argument("--budget", type=int, default=20, help="random restarts per memory size")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="Monte-Carlo simulation of a synthesized strategy")
    model_args(p)
    strategy_args(p, "as")
    p.add_argument("--env", help="environment to simulate (default: first)")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("gen-example", help="print a reference model")
    p.add_argument("family", choices=sorted(FAMILIES))
    p.add_argument("--cards", type=int, default=3)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "check-as": lambda a: cmd_check(a, "almost-sure"),
        "check-ls": lambda a: cmd_check(a, "limit-sure"),
        "synthesize": cmd_synthesize,
        "gap": cmd_gap,
        "simulate": cmd_simulate,
        "gen-example": cmd_gen,
    }
    try:
        return handlers[args.command](args)
    except ModelError as exc:
        emit_error(exc)
        return EXIT_MODEL
    except BudgetError as exc:
        emit_error(exc)
        return EXIT_BUDGET
    except (OSError, ValueError) as exc:
        emit_error(exc, "invalid_input")
        return EXIT_MODEL


def emit_error(exc: Exception, code: Optional[str] = None):
    json.dump({"error": code or getattr(exc, "code", "error"), "message": str(exc)}, sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
