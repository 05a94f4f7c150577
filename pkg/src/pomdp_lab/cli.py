"""Command-line front end.

Every command writes ``report.json`` (and CSV metrics where there is a table)
into ``--out`` and prints the report path.  Reports embed the effective
configuration together with the package version, seed and a hash of the
configuration, so a run can be repeated with ``--config report.json``.

Exit codes: 0 success, 2 configuration error, 3 validation failure,
4 desk-scale bound exceeded, 5 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basecamp import HyperParams, learn, practical_params, theoretical_params
from .diagnostics import contraction_profile, exact_optimal_value, exact_policy_value, tilde_mdp
from .fixtures import FIXTURES, RejectionBudgetError, fixture_path, generate
from .model import extend_with_sinks, load_model, save_model, validate_model
from .observability import DeskScaleError, observability_margin
from .policies import Atom, UniformRandom, loads_policy, dumps_policy
from .simulator import Environment, empirical_value
from .spanner import bary_spanner_policy, verify_spanner, zmdp_oracle

EXIT_OK, EXIT_CONFIG, EXIT_INVALID, EXIT_DESK, EXIT_INTERNAL = 0, 2, 3, 4, 5


class ConfigError(Exception):
    pass


class ValidationFailure(Exception):
    pass


# keys that make up a run configuration (anything else on the namespace is plumbing)
CONFIG_KEYS = ("command", "model", "seed", "params_mode", "L", "N0", "N1", "K", "alpha", "beta",
               "episodes", "gamma", "S", "A", "O", "H", "structure", "policy", "h", "L_grid",
               "directions", "C_star")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _resolve_model_path(p):
    if p is None:
        raise ConfigError("--model is required")
    if Path(p).exists():
        return str(p)
    if p in FIXTURES:
        return str(fixture_path(p))
    raise ConfigError(f"model file not found: {p}")


def _issues(rep):
    return {"passed": rep.passed,
            "issues": [{"severity": i.severity, "location": str(i.location), "message": i.message}
                       for i in rep.issues]}


def _raw_model(cfg):
    path = _resolve_model_path(cfg.get("model"))
    try:
        return load_model(path, extend=False)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read model {path}: {e}") from e


def _model(cfg):
    raw = _raw_model(cfg)
    rep = validate_model(raw)
    if not rep.passed:
        raise ValidationFailure(_issues(rep))
    return extend_with_sinks(raw)


def _params(cfg, model) -> HyperParams:
    defaults = dict(alpha=0.1, beta=0.1, L=2, N0=50_000, N1=200, K=6)
    get = lambda k: cfg.get(k) if cfg.get(k) is not None else defaults[k]  # noqa: E731
    try:
        if cfg.get("params_mode", "practical") == "theoretical":
            gamma = min(observability_margin(model, h) for h in range(2, model.H + 1))
            return theoretical_params(get("alpha"), get("beta"), gamma, model.S, model.A, model.O,
                                      model.H, cfg.get("C_star") or 1.0)
        return practical_params(alpha=get("alpha"), beta=get("beta"), L=get("L"), N0=get("N0"),
                                N1=get("N1"), K=get("K"), eval_episodes=cfg.get("episodes"))
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _exact_or_none(fn, *a):
    try:
        return fn(*a)
    except DeskScaleError:
        return None


# ---------------------------------------------------------------------------
# commands; each returns (report body, {filename: text}) and may raise


def cmd_gen(cfg, out):
    for k in ("S", "A", "O", "H", "gamma"):
        if cfg.get(k) is None:
            raise ConfigError(f"gen needs --{k}")
    try:
        m = generate(cfg["S"], cfg["A"], cfg["O"], cfg["H"], cfg["gamma"],
                     cfg.get("structure") or "noisy-permutation", cfg.get("seed") or 0)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    path = out / "model.json"
    save_model(m, path)
    margins = [observability_margin(m, h) for h in range(2, m.H + 1)]
    return {"model_file": str(path), "margins": margins}, {}


def cmd_validate(cfg, out):
    body = _issues(validate_model(_raw_model(cfg)))
    if not body["passed"]:
        raise ValidationFailure(body)
    return body, {}


def cmd_plan(cfg, out):
    m = _model(cfg)
    v, pol = exact_optimal_value(m)
    rows = [[len(a) + 1, " ".join(map(str, a)), " ".join(map(str, o)), act]
            for (a, o), act in sorted(pol.items(), key=lambda kv: (len(kv[0][0]), kv[0]))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "actions", "observations", "best_action"])
    w.writerows(rows)
    return {"optimal_value": v}, {"plan.csv": buf.getvalue()}


def cmd_learn(cfg, out):
    m = _model(cfg)
    params = _params(cfg, m)
    rep = learn(Environment(m), params, cfg.get("seed") or 0)
    body = rep.to_dict()
    v_star = _exact_or_none(lambda: exact_optimal_value(m)[0])
    v_pol = exact_policy_value(m, Atom(rep.policy))
    body["exact_policy_value"] = v_pol
    body["optimal_value"] = v_star
    body["suboptimality"] = None if v_star is None else v_star - v_pol
    return body, {"metrics.csv": rep.metrics_csv(), "policy.json": dumps_policy(Atom(rep.policy))}


def cmd_eval(cfg, out):
    m = _model(cfg)
    if cfg.get("policy"):
        try:
            pol = loads_policy(Path(cfg["policy"]).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"policy file not found: {cfg['policy']}") from e
    else:
        pol = UniformRandom()
    n = cfg.get("episodes") or 10_000
    val = empirical_value(m, pol, n, cfg.get("seed") or 0, "eval")
    exact = _exact_or_none(exact_policy_value, m, pol)
    return {"episodes": n, "empirical_value": val, "exact_value": exact}, {}


def cmd_contract(cfg, out):
    m = _model(cfg)
    h = cfg.get("h") or m.H
    Ls = cfg.get("L_grid") or [1, 2, 4, 6]
    if not 2 <= h <= m.H:
        raise ConfigError(f"step {h} outside 2..{m.H}")
    prior = np.full(m.S, 1.0 / m.S)
    prof = contraction_profile(m, UniformRandom(), prior, Ls, h, n=cfg.get("episodes") or 10_000,
                               master=cfg.get("seed") or 0)
    rows = [[L, repr(mean), repr(se)] for L, mean, se in prof]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["L", "mean_l1_error", "std_error"])
    w.writerows(rows)
    return {"h": h, "profile": [list(r) for r in prof]}, {"contraction.csv": buf.getvalue()}


def cmd_spanner_check(cfg, out):
    m = _model(cfg)
    L = cfg.get("L") or 1
    h = cfg.get("h") or m.H
    if not 2 <= h - L <= m.H:
        raise ConfigError(f"need 2 <= h-L <= H (h={h}, L={L})")
    zm = tilde_mdp(m, [UniformRandom()] * m.H, L)
    pol, res = bary_spanner_policy(zm, h, L, return_result=True)
    rng = np.random.default_rng(cfg.get("seed") or 0)
    oracle = zmdp_oracle(zm, h)
    pts = [oracle(r)[2] for r in rng.standard_normal((cfg.get("directions") or 200, zm.n_obs))]
    chk = verify_spanner(pts, res, 2.0)
    if not chk.within_bound:
        raise AssertionError(f"spanner coefficient {chk.max_coefficient} exceeds the bound")
    return {"rank": res.rank, "oracle_calls": res.n_calls, "max_coefficient": chk.max_coefficient,
            "points_checked": len(pts)}, {}


COMMANDS = {"gen": cmd_gen, "validate": cmd_validate, "plan": cmd_plan, "learn": cmd_learn,
            "eval": cmd_eval, "contract": cmd_contract, "spanner-check": cmd_spanner_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pomdp-lab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--model", help="model file or shipped fixture name")
        p.add_argument("--config", help="JSON config (a previous report also works)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--params-mode", choices=["theoretical", "practical"])
        for flag, typ in (("--L", int), ("--N0", int), ("--N1", int), ("--K", int),
                          ("--alpha", float), ("--beta", float), ("--episodes", int)):
            p.add_argument(flag, type=typ, dest=flag[2:])
        if name == "gen":
            for flag in ("--S", "--A", "--O", "--H"):
                p.add_argument(flag, type=int, dest=flag[2:])
            p.add_argument("--gamma", type=float)
            p.add_argument("--structure", choices=["noisy-permutation", "random"])
        if name == "eval":
            p.add_argument("--policy", help="policy file written by learn")
        if name in ("contract", "spanner-check"):
            p.add_argument("--h", type=int)
        if name == "contract":
            p.add_argument("--L-grid", type=lambda s: [int(x) for x in s.split(",")], dest="L_grid")
        if name == "spanner-check":
            p.add_argument("--directions", type=int)
    return ap


def effective_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {args.config}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        loaded = loaded.get("config", loaded)
        unknown = set(loaded) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for k in CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    cfg["command"] = args.command
    cfg.setdefault("seed", 0)
    if args.command != "gen":
        _resolve_model_path(cfg.get("model"))
    return {k: cfg[k] for k in sorted(cfg) if cfg[k] is not None}


def _emit_error(out, code, kind, message, detail=None):
    err = {"format_version": 1, "kind": "error", "exit_code": code, "error": kind, "message": message}
    if detail is not None:
        err["detail"] = detail
    text = json.dumps(err, sort_keys=True)
    print(text, file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n")
    except OSError:
        pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = effective_config(args)
        out.mkdir(parents=True, exist_ok=True)
        body, files = COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        return _emit_error(out, EXIT_CONFIG, "config", str(e))
    except ValidationFailure as e:
        return _emit_error(out, EXIT_INVALID, "validation", "model failed validation", e.args[0])
    except (DeskScaleError, RejectionBudgetError) as e:
        return _emit_error(out, EXIT_DESK, "desk_scale", str(e))
    except (AssertionError, FloatingPointError) as e:
        return _emit_error(out, EXIT_INTERNAL, "invariant", str(e))
    report = {"format_version": 1, "kind": f"{args.command}_report", "version": __version__,
              "seed": cfg["seed"], "config": cfg, "config_hash": config_hash(cfg), "result": body}
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    for name, text in files.items():
        (out / name).write_text(text)
    print(out / "report.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
