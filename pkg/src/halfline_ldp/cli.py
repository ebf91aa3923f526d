"""Command-line front end: ``halfline-ldp <command> [options]``.

Every command reads an optional JSON config file.  Flags override config
fields, which override defaults; the effective config is echoed into the
output (CSV comment header or a ``config`` key).  Exit codes: 0 success,
2 configuration error, 3 verdict FAIL.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from typing import Any, Callable

import numpy as np

from . import __version__
from .coefficients import constant_value, is_zero
from .cramer import legendre, model_from_dict, variance
from .errors import ConfigError, UnsupportedError
from .path_space import Path, Puhalskii, distance, metric_from_dict, rho_puhalskii, to_jsonable
from .rate import Quadratic, RandomWalk, rate_finite_horizon, rate_infinite, rate_model_from_dict
from .simulate import DiffusionSim, RandomWalkSim, SimSpec, sim_from_dict, simulate_paths, write_jsonl
from .variational import GridOptions, event_from_dict, infimum_rate
from .verify import (estimate_prob, estimate_prob_tilted, estimates_csv, fit_ldp_slope, fmt,
                     kolmogorov_grid, synthetic_estimate, tail_sup_prob)

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 2, 3

# command -> (allowed config fields, defaults)
_SCHEMA: dict[str, tuple[set[str], dict[str, Any]]] = {
    "legendre": ({"model", "alpha"}, {}),
    "rate": ({"model", "path", "T"}, {"T": "inf"}),
    "infimum": ({"model", "event", "anchors", "t_min", "t_max"},
                {"anchors": 200, "t_min": 1e-3, "t_max": 1e3}),
    "simulate": ({"sim", "replicates"}, {"replicates": 1}),
    "verify": ({"check", "sim", "event", "n_list", "replicates", "tilted", "target", "x_power",
                "synthetic", "T_list", "eps", "kappa", "horizon_multiple", "model", "x_list", "y_list"},
               {"check": "slope", "tilted": False, "replicates": 10000, "kappa": 0.0,
                "horizon_multiple": 8.0}),
    "metric": ({"f", "g", "metric"}, {"metric": {"kind": "weighted_sup", "kappa": 0.0}}),
}
_GLOBAL = {"seed", "format"}
_DEFAULT_FORMAT = {"legendre": "csv", "verify": "csv", "simulate": "jsonl"}


# --------------------------------------------------------------------------
# config plumbing

def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def effective_config(command: str, args: argparse.Namespace) -> dict:
    allowed, defaults = _SCHEMA[command]
    cfg = dict(defaults)
    file_cfg = _load_config(args.config)
    unknown = set(file_cfg) - allowed - _GLOBAL
    if unknown:
        raise ConfigError(f"unknown config fields for {command}: {sorted(unknown)}")
    cfg.update(file_cfg)
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        if key not in allowed:
            raise ConfigError(f"unknown parameter {key!r} for {command}")
        cfg[key] = _parse_value(val)
    if args.format is not None:
        cfg["format"] = args.format
    cfg.setdefault("format", _DEFAULT_FORMAT.get(command, "json"))
    if cfg["format"] not in ("csv", "json", "jsonl"):
        raise ConfigError(f"unknown format {cfg['format']!r}")
    cfg["seed"] = _resolve_seed(args.seed, cfg)
    return cfg


def _resolve_seed(flag: int | None, cfg: dict) -> int:
    if flag is not None:
        seed = flag
    elif "seed" in cfg:
        seed = cfg["seed"]
    elif isinstance(cfg.get("sim"), dict) and "seed" in cfg["sim"]:
        seed = cfg["sim"]["seed"]
    elif os.environ.get("LDP_SEED"):
        seed = os.environ["LDP_SEED"]
    else:
        seed = 0
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from exc
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required field(s): {', '.join(missing)}")


def _build(fn: Callable, payload: Any, what: str):
    try:
        return fn(payload)
    except (ValueError, TypeError, KeyError, AttributeError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def _load_path(obj: Any) -> Path:
    if isinstance(obj, str):
        try:
            with open(obj) as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read path file {obj}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"path file {obj} is not valid JSON: {exc}") from exc
    return _build(Path.from_dict, obj, "path")


def _alpha_grid(spec: Any) -> np.ndarray:
    if isinstance(spec, list):
        return np.array([float("inf") if a == "inf" else float(a) for a in spec])
    if isinstance(spec, dict) and set(spec) == {"start", "stop", "num"}:
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    raise ConfigError("alpha must be a list or {start, stop, num}")


def _header(cfg: dict) -> str:
    return "# config: " + json.dumps(cfg, sort_keys=True, default=to_jsonable) + "\n"


def _json_doc(cfg: dict, result: Any) -> str:
    return json.dumps({"config": cfg, "result": to_jsonable(result)}, sort_keys=True, indent=2) + "\n"


def _kv_csv(cfg: dict, row: dict) -> str:
    keys = list(row)
    return _header(cfg) + ",".join(keys) + "\n" + ",".join(
        fmt(row[k]) if isinstance(row[k], float) else str(row[k]) for k in keys) + "\n"


# --------------------------------------------------------------------------
# commands; each returns (text, exit code)

def cmd_legendre(cfg: dict, workers: int) -> tuple[str, int]:
    _require(cfg, "model", "alpha")
    model = _build(model_from_dict, cfg["model"], "model")
    rows = [(float(a), legendre(model, float(a))) for a in _alpha_grid(cfg["alpha"])]
    if cfg["format"] == "json":
        return _json_doc(cfg, [{"alpha": a, "value": v} for a, v in rows]), EXIT_OK
    body = "alpha,value\n" + "".join(f"{fmt(a)},{fmt(v)}\n" for a, v in rows)
    return _header(cfg) + body, EXIT_OK


def cmd_rate(cfg: dict, workers: int) -> tuple[str, int]:
    _require(cfg, "model", "path")
    model = _build(rate_model_from_dict, cfg["model"], "model")
    f = _load_path(cfg["path"])
    T = cfg["T"]
    if T == "inf" or (isinstance(T, (int, float)) and math.isinf(T)):
        rv = rate_infinite(model, f)
    else:
        try:
            T = float(T)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"T must be a number or 'inf', got {T!r}") from exc
        rv = rate_finite_horizon(model, f, T)
    if cfg["format"] == "csv":
        return _kv_csv(cfg, {"finite": rv.finite, "value": float(rv.value)}), EXIT_OK
    return _json_doc(cfg, rv.to_dict()), EXIT_OK


def cmd_infimum(cfg: dict, workers: int) -> tuple[str, int]:
    _require(cfg, "model", "event")
    model = _build(rate_model_from_dict, cfg["model"], "model")
    event = _build(event_from_dict, cfg["event"], "event")
    opts = GridOptions(int(cfg["anchors"]), float(cfg["t_min"]), float(cfg["t_max"]))
    res = infimum_rate(model, event, opts)
    if cfg["format"] == "csv":
        return _kv_csv(cfg, {"value": float(res.value), "anchor": float(res.anchor),
                             "slope": float(res.slope)}), EXIT_OK
    return _json_doc(cfg, res.to_dict()), EXIT_OK


def cmd_simulate(cfg: dict, workers: int) -> tuple[str, int]:
    _require(cfg, "sim")
    sim = _sim(cfg, cfg["sim"])
    reps = int(cfg["replicates"])
    if reps < 1:
        raise ConfigError("replicates must be positive")
    import io
    buf = io.StringIO()
    buf.write(json.dumps({"config": cfg}, sort_keys=True, default=to_jsonable) + "\n")
    write_jsonl(simulate_paths(sim, reps), buf)
    return buf.getvalue(), EXIT_OK


def cmd_metric(cfg: dict, workers: int) -> tuple[str, int]:
    _require(cfg, "f", "g")
    f, g = _load_path(cfg["f"]), _load_path(cfg["g"])
    spec = _build(metric_from_dict, cfg["metric"], "metric")
    out: dict[str, Any] = {"value": distance(f, g, spec)}
    if isinstance(spec, Puhalskii):
        out["value"], out["truncation_bound"] = rho_puhalskii(f, g, spec.k_max, return_bound=True)
    if cfg["format"] == "csv":
        return _kv_csv(cfg, {k: float(v) for k, v in out.items()}), EXIT_OK
    return _json_doc(cfg, out), EXIT_OK


def _sim(cfg: dict, d: Any, **changes) -> SimSpec:
    if not isinstance(d, dict):
        raise ConfigError("sim must be an object")
    d = dict(d)
    d["seed"] = cfg["seed"]
    d.update(changes)
    return _build(sim_from_dict, d, "sim")


def _seed_for(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0])


def _n_list(cfg: dict, key: str = "n_list") -> list:
    vals = cfg.get(key)
    if not isinstance(vals, list) or not vals:
        raise ConfigError(f"{key} must be a non-empty list")
    return vals


def _default_target(cfg: dict, sim_d: dict, event) -> float:
    """``I(B)`` for the natural limit model of the simulated family."""
    kind = sim_d.get("kind")
    if kind == "random_walk":
        model = _build(model_from_dict, sim_d.get("model", {}), "model")
        mdp = cfg.get("x_power") is not None or sim_d.get("x") is not None
        target = Quadratic(variance(model)) if mdp else RandomWalk(model)
    elif kind == "diffusion":
        probe = _sim(cfg, sim_d, n=1)
        s = constant_value(probe.sigma)
        if not (is_zero(probe.a) and s is not None and probe.x0 == 0.0):
            raise ConfigError("give 'target' explicitly for diffusions with drift or state-dependent sigma")
        target = Quadratic(s * s)
    else:
        raise ConfigError("give 'target' explicitly for this simulation kind")
    try:
        return infimum_rate(target, event).value
    except UnsupportedError as exc:
        raise ConfigError(str(exc)) from exc


def _verify_slope(cfg: dict, workers: int) -> tuple[str, int]:
    if cfg.get("synthetic") is not None:
        pairs = cfg["synthetic"]
        if not isinstance(pairs, list) or not pairs:
            raise ConfigError("synthetic must be a non-empty list of [n, p]")
        _require(cfg, "target")
        ests = [_build(lambda q: synthetic_estimate(int(q[0]), float(q[1])), q, "synthetic point")
                for q in pairs]
    else:
        _require(cfg, "sim", "event")
        ns = _n_list(cfg)
        event = _build(event_from_dict, cfg["event"], "event")
        reps = int(cfg["replicates"])
        ests = []
        for n in ns:
            changes: dict[str, Any] = {"n": int(n), "seed": _seed_for(cfg["seed"], int(n))}
            if cfg.get("x_power") is not None:
                changes["x"] = float(n) ** float(cfg["x_power"])
            sim = _sim(cfg, cfg["sim"], **changes)
            if cfg["tilted"]:
                ests.append(estimate_prob_tilted(sim, event, reps, workers))
            else:
                ests.append(estimate_prob(sim, event, reps, workers))
        if cfg.get("target") is None:
            cfg["target"] = _default_target(cfg, cfg["sim"], event)
    target = float(cfg["target"])
    try:
        fit = fit_ldp_slope(ests, target)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [(e, target, "") for e in ests]
    rows[-1] = (ests[-1], target, fit.verdict)
    code = EXIT_OK if fit.passed else EXIT_FAIL
    fit_d = {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual,
             "band": fit.band, "dropped": fit.dropped, "verdict": fit.verdict}
    if cfg["format"] == "json":
        return _json_doc(cfg, {"rows": [_est_dict(e) for e in ests], "fit": fit_d}), code
    footer = (f"# fit: slope={fmt(fit.slope)} intercept={fmt(fit.intercept)} "
              f"residual={fmt(fit.residual)} dropped={fit.dropped} verdict={fit.verdict}\n")
    return estimates_csv(rows, _header(cfg)) + footer, code


def _est_dict(e) -> dict:
    return {"kind": e.kind, "n": e.n, "speed": e.speed, "replicates": e.replicates, "p_hat": e.p_hat,
            "ci_low": e.ci_low, "ci_high": e.ci_high, "log_scaled": e.log_scaled, "ess": e.ess}


def _verify_tail(cfg: dict, workers: int) -> tuple[str, int]:
    _require(cfg, "sim", "eps")
    ns, Ts = _n_list(cfg), _n_list(cfg, "T_list")
    eps, kappa, mult = float(cfg["eps"]), float(cfg["kappa"]), float(cfg["horizon_multiple"])
    reps = int(cfg["replicates"])
    rows, ok = [], True
    for n in ns:
        for T in Ts:
            T = float(T)
            changes: dict[str, Any] = {"n": int(n), "seed": _seed_for(cfg["seed"], int(n), int(T * 1e6))}
            if "horizon" not in cfg["sim"]:
                changes["horizon"] = mult * T if T > 0 else 1.0
            sim = _sim(cfg, cfg["sim"], **changes)
            try:
                res = tail_sup_prob(sim, T, eps, kappa, reps, workers, mult)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            est = replace(res.estimate, kind=f"tail_sup[T={fmt(T)}]")
            bound = float(res.bound) if res.bound is not None else "none"
            verdict = "PASS" if res.consistent else "FAIL"
            ok &= res.consistent
            rows.append((est, bound, verdict))
    code = EXIT_OK if ok else EXIT_FAIL
    if cfg["format"] == "json":
        return _json_doc(cfg, [dict(_est_dict(e), bound=b, verdict=v) for e, b, v in rows]), code
    return estimates_csv(rows, _header(cfg)), code


def _verify_kolmogorov(cfg: dict, workers: int) -> tuple[str, int]:
    _require(cfg, "model")
    model = _build(model_from_dict, cfg["model"], "model")
    ns, xs, ys = _n_list(cfg), _n_list(cfg, "x_list"), _n_list(cfg, "y_list")
    try:
        res = kolmogorov_grid(model, [int(n) for n in ns], [float(x) for x in xs], [float(y) for y in ys])
    except (ValueError, UnsupportedError) as exc:
        raise ConfigError(str(exc)) from exc
    code = EXIT_OK if all(r.passed for r in res) else EXIT_FAIL
    if cfg["format"] == "json":
        return _json_doc(cfg, [{"n": r.n, "x": r.x, "y": r.y, "lhs": r.lhs, "rhs": r.rhs,
                                "pass": r.passed} for r in res]), code
    body = "n,x,y,lhs,rhs,pass\n" + "".join(
        f"{r.n},{fmt(r.x)},{fmt(r.y)},{fmt(r.lhs)},{fmt(r.rhs)},{'PASS' if r.passed else 'FAIL'}\n"
        for r in res)
    return _header(cfg) + body, code


def cmd_verify(cfg: dict, workers: int) -> tuple[str, int]:
    check = cfg["check"]
    runners = {"slope": _verify_slope, "tail_sup": _verify_tail, "kolmogorov": _verify_kolmogorov}
    if check not in runners:
        raise ConfigError(f"unknown check {check!r}")
    return runners[check](cfg, workers)


_COMMANDS = {"legendre": cmd_legendre, "rate": cmd_rate, "infimum": cmd_infimum,
             "simulate": cmd_simulate, "verify": cmd_verify, "metric": cmd_metric}


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="JSON config file")
    common.add_argument("--seed", type=int, metavar="U64", help="global seed (fallback: $LDP_SEED)")
    common.add_argument("--workers", type=int, default=1, metavar="N", help="worker processes")
    common.add_argument("--out", metavar="FILE", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json", "jsonl"), help="output format")
    common.add_argument("--param", action="append", metavar="KEY=VALUE",
                        help="override one config field; VALUE is parsed as JSON when possible")
    p = argparse.ArgumentParser(prog="halfline-ldp", description="Large-deviation tools for half-line paths.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "legendre": "tabulate the deviation function of a step law",
        "rate": "action functional of a path",
        "infimum": "rate infimum over an event",
        "simulate": "sample paths as JSON lines",
        "verify": "Monte Carlo slope fits and exact inequality checks",
        "metric": "distance between two paths",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = effective_config(args.command, args)
        text, code = _COMMANDS[args.command](cfg, args.workers)
    except (ConfigError, UnsupportedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
