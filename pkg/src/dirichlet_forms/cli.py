"""Batch experiment runner: one JSON config in, one JSON report out.

Exit status: 0 when every item in the report passes, 1 on any failure,
2 when the config cannot be parsed or validated.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import diffusion, forms, inequalities, measures
from .simplex import (
    AlphaSequence,
    CylinderFunction,
    DirichletParams,
    InfiniteDirichletParams,
    WeightSequence,
    exponents,
    monomial_family,
)

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "DIRICHLET_FORMS_OUTPUT_DIR"

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


_MISSING = object()


class Block:
    """Read access to a config mapping that records every resolved value."""

    def __init__(self, data: Any, where: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"{where or 'config'} must be a JSON object", where or None)
        self.data = data
        self.where = where
        self.resolved: dict[str, Any] = {}

    def _name(self, key: str) -> str:
        return f"{self.where}.{key}" if self.where else key

    def get(self, key: str, default: Any = _MISSING, cast: Callable | None = None) -> Any:
        if key in self.data:
            value = self.data[key]
        elif default is _MISSING:
            raise ConfigError(f"missing required key '{self._name(key)}'", key)
        else:
            value = default
        self.resolved[key] = value
        if cast is not None and value is not None:
            try:
                value = cast(value)
            except (TypeError, ValueError, KeyError, AttributeError) as exc:
                raise ConfigError(f"bad value for '{self._name(key)}': {exc}", key) from None
        return value


def _seed(value) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed


def _positive_int(value) -> int:
    v = int(value)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _kind(value) -> str:
    if value not in forms.KINDS:
        raise ValueError(f"kind must be one of {forms.KINDS}")
    return value


def _float_list(value) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ValueError("expected a non-empty list of numbers")
    return [float(v) for v in value]


def parse_finite_params(d) -> DirichletParams:
    if not isinstance(d, dict) or "alphas" not in d:
        raise ValueError("expected {'alphas': [...], 'alpha_inf': ...}")
    return DirichletParams(d["alphas"], d.get("alpha_inf", 1.0))


def parse_infinite_params(d) -> InfiniteDirichletParams:
    if not isinstance(d, dict) or "sequence" not in d:
        raise ValueError("expected {'sequence': {...}, 'alpha_inf': ...}")
    return InfiniteDirichletParams(AlphaSequence.from_dict(d["sequence"]), float(d.get("alpha_inf", 1.0)))


def parse_function(value) -> CylinderFunction:
    """A list of [exponent-vector, coefficient] pairs."""
    if not isinstance(value, list) or not value:
        raise ValueError("a function is a non-empty list of [exponents, coefficient] pairs")
    pairs = []
    for item in value:
        if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], list)):
            raise ValueError(f"bad term {item!r}")
        pairs.append((tuple(int(e) for e in item[0]), float(item[1])))
    return CylinderFunction.from_terms(pairs)


def parse_family(value) -> list[CylinderFunction]:
    if isinstance(value, list):
        return [parse_function(v) for v in value]
    if isinstance(value, dict) and "monomials" in value:
        spec = value["monomials"]
        return monomial_family(int(spec["m"]), int(spec["max_degree"]), int(spec.get("min_degree", 0)))
    if isinstance(value, dict) and "default" in value:
        spec = value["default"]
        return inequalities.default_family(int(spec["m"]), int(spec.get("max_degree", 3)))
    raise ValueError("family must be a list of functions, {'monomials': ...} or {'default': ...}")


# subcommands; each returns (results, passed)


def cmd_sample(cfg: Block):
    params = cfg.get("params", cast=parse_finite_params)
    n = cfg.get("n_samples", 10, _positive_int)
    seed = cfg.get("seed", 0, _seed)
    X = measures.sample_array(params, n, seed, "sample")
    ok = bool(np.all(X >= 0) and np.all(X.sum(axis=1) <= 1 + 1e-12))
    return [{"index": i, "point": row.tolist()} for i, row in enumerate(X)], ok


def cmd_moments(cfg: Block):
    params = cfg.get("params", cast=parse_finite_params)
    max_degree = cfg.get("max_degree", 2, int)
    n = cfg.get("n_samples", 0, int)
    seed = cfg.get("seed", 0, _seed)
    sigma = cfg.get("sigma", 4.0, float)
    X = measures.sample_array(params, n, seed, "moments") if n > 0 else None
    results, ok = [], True
    for e in exponents(params.dim, max_degree):
        row = {"kappa": list(e), "exact": measures.moment(params, e)}
        if X is not None and sum(e) > 0:
            est = measures.MonteCarloEstimate.from_values(
                CylinderFunction.monomial(e).eval(X), seed, "moments"
            )
            row["mean"], row["stderr"] = est.mean, est.stderr
            row["pass"] = abs(est.zscore(row["exact"])) <= sigma
            ok &= row["pass"]
        results.append(row)
    return results, ok


def cmd_verify_projection(cfg: Block):
    params = cfg.get("params", cast=parse_infinite_params)
    n = cfg.get("n", 1, int)
    m = cfg.get("m", 3, int)
    if "function" in cfg.data:
        family = [cfg.get("function", cast=parse_function)]
    else:
        family = cfg.get("family", {"monomials": {"m": m, "max_degree": 3}}, parse_family)
    n_samples = cfg.get("n_samples", 100_000, _positive_int)
    seed = cfg.get("seed", 0, _seed)
    sigma = cfg.get("sigma", 3.0, float)
    try:
        measures.split(params, n, m)
    except ValueError as exc:
        raise ConfigError(str(exc), "n") from None
    results, ok = [], True
    for idx, f in enumerate(family):
        lhs, rhs = measures.verify_projection(f, params, n, m, n_samples, seed + idx)
        combined = math.hypot(lhs.stderr, rhs.stderr)
        diff = abs(lhs.mean - rhs.mean)
        passed = diff <= sigma * combined if combined > 0 else diff == 0.0
        results.append(
            {
                "function": f.to_pairs(),
                "exact": measures.expectation(f, params.truncate(m)),
                "lhs": lhs.to_dict(),
                "rhs": rhs.to_dict(),
                "pass": passed,
            }
        )
        ok &= passed
    return results, ok


def cmd_check_symmetry(cfg: Block):
    kinds = cfg.get("kinds", list(forms.KINDS), lambda v: [_kind(k) for k in v])
    params = cfg.get("params", cast=parse_finite_params)
    max_degree = cfg.get("max_degree", 3, int)
    method = cfg.get("method", "quadrature")
    if method not in ("quadrature", "monte-carlo"):
        raise ConfigError("method must be 'quadrature' or 'monte-carlo'", "method")
    order = cfg.get("order", 64, _positive_int) if method == "quadrature" else None
    n_samples = cfg.get("n_samples", 100_000, _positive_int) if method == "monte-carlo" else None
    seed = cfg.get("seed", 0, _seed)
    tol = cfg.get("tolerance", 1e-8, float)
    sigma = cfg.get("sigma", 3.0, float)
    family = monomial_family(params.dim, max_degree)
    results, ok = [], True
    for kind in kinds:
        for i, f in enumerate(family):
            for j, g in enumerate(family):
                if method == "quadrature":
                    try:
                        res = forms.check_symmetry(kind, f, g, params, "quadrature", order)
                    except (ValueError, measures.SingularDensityError) as exc:
                        raise ConfigError(str(exc), "method") from None
                    row = {"kind": kind, "f": i, "g": j, "residual": res, "pass": abs(res) <= tol}
                else:
                    est = forms.check_symmetry(kind, f, g, params, "monte-carlo", n_samples, seed)
                    passed = abs(est.mean) <= sigma * est.stderr if est.stderr > 0 else est.mean == 0
                    row = {"kind": kind, "f": i, "g": j, "residual": est.mean, "stderr": est.stderr, "pass": passed}
                results.append(row)
                ok &= row["pass"]
    return results, ok


def cmd_gap(cfg: Block):
    kind = cfg.get("kind", "type2", _kind)
    params = cfg.get("params", cast=parse_finite_params)
    family = cfg.get("family", {"monomials": {"m": params.dim, "max_degree": 2}}, parse_family)
    n_samples = cfg.get("n_samples", 100_000, _positive_int)
    seed = cfg.get("seed", 0, _seed)
    expected = cfg.get("expected", None, float)
    rel_tol = cfg.get("rel_tol", 0.05, float)
    try:
        quotients = inequalities.rayleigh_quotients(kind, params, family, n_samples, seed)
        gap = inequalities.rayleigh_gap(kind, params, family, n_samples, seed)
    except ValueError as exc:
        raise ConfigError(str(exc), "family") from None
    reference = 1.0 / inequalities.poincare_constant(kind, params)
    passed = gap >= reference * (1.0 - rel_tol)
    if expected is not None:
        passed = passed and abs(gap - expected) <= rel_tol * expected
    results = [
        {"gap": gap, "reference_gap": reference, "expected": expected, "pass": passed},
        {"quotients": quotients},
    ]
    return results, passed


def _poincare_rows(report: inequalities.PoincareReport, label: str | None = None):
    d = report.to_dict()
    if label is not None:
        d["candidate"] = label
    return d


def cmd_certify_poincare(cfg: Block):
    kind = cfg.get("kind", "type2", _kind)
    params_raw = cfg.get("params")
    n_samples = cfg.get("n_samples", 100_000, _positive_int)
    seed = cfg.get("seed", 0, _seed)
    try:
        if isinstance(params_raw, dict) and "sequence" in params_raw:
            params = parse_infinite_params(params_raw)
            n = cfg.get("n", 1, int)
            m = cfg.get("m", 3, int)
            family = cfg.get("family", {"monomials": {"m": m - n, "max_degree": 2}}, parse_family)
            if kind != "type2":
                raise ConfigError("candidate-constant comparison is defined for type2", "kind")
            reports = inequalities.compare_type2_constants(params, n, m, family, n_samples, seed)
            results = [_poincare_rows(rep, name) for name, rep in reports.items()]
            return results, all(rep.passed for rep in reports.values())
        params = parse_finite_params(params_raw)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc), "params") from None
    family = cfg.get("family", {"monomials": {"m": params.dim, "max_degree": 2}}, parse_family)
    constant = cfg.get("constant", None, float)
    report = inequalities.certify_poincare(kind, params, family, n_samples, seed, constant)
    return [_poincare_rows(report)], report.passed


def cmd_certify_super_poincare(cfg: Block):
    kind = cfg.get("kind", "type1", _kind)
    params = cfg.get("params", cast=parse_infinite_params)
    weights = cfg.get("weights", {"kind": "constant", "value": 1.0}, WeightSequence.from_dict)
    r_grid = cfg.get("r_grid", cast=_float_list)
    family = cfg.get("family", {"default": {"m": 3}}, parse_family)
    n_samples = cfg.get("n_samples", 100_000, _positive_int)
    seed = cfg.get("seed", 0, _seed)
    c_n = cfg.get("c_n", None, float)
    truncation = cfg.get("truncation", None, int)
    csv_path = cfg.get("csv", None)
    try:
        report = inequalities.certify_super_poincare(
            kind, params, weights, r_grid, family, n_samples, seed, c_n, truncation
        )
    except inequalities.RangeError as exc:
        raise ConfigError(str(exc), "r_grid") from None
    except ValueError as exc:
        raise ConfigError(str(exc), "truncation") from None
    if csv_path:
        Path(csv_path).write_text(report.to_csv())
    return [report.to_dict()], report.passed


def cmd_beta_bound(cfg: Block):
    kind = cfg.get("kind", "type1", _kind)
    params = cfg.get("params", cast=parse_infinite_params)
    weights = cfg.get("weights", {"kind": "constant", "value": 1.0}, WeightSequence.from_dict)
    c_n = cfg.get("c_n", 1.0, float)
    if "r" in cfg.data:
        r_grid = [cfg.get("r", cast=float)]
    else:
        r_grid = cfg.get("r_grid", cast=_float_list)
    results, ok = [], True
    for r in r_grid:
        try:
            spec = inequalities.BetaBoundSpec(kind, c_n, r, params, weights)
            n, theta, bound = inequalities.beta_bound_details(spec)
            results.append({"r": r, "n": n, "theta": theta, "bound": bound, "pass": True})
        except inequalities.RangeError as exc:
            results.append({"r": r, "error": str(exc), "pass": False})
            ok = False
        except ValueError as exc:
            raise ConfigError(str(exc), "r_grid") from None
    return results, ok


def cmd_simulate(cfg: Block):
    kind = cfg.get("kind", "type2", _kind)
    params = cfg.get("params", cast=parse_finite_params)
    dt = cfg.get("dt", 1e-3, float)
    steps = cfg.get("steps", 100_000, _positive_int)
    burn_in = cfg.get("burn_in", steps // 10, int)
    seed = cfg.get("seed", 0, _seed)
    max_degree = cfg.get("max_degree", 2, int)
    n_batches = cfg.get("n_batches", 50, _positive_int)
    sigma = cfg.get("sigma", 4.0, float)
    floor = cfg.get("systematic_floor", 0.02, float)
    dump = cfg.get("dump_trajectory", None)
    try:
        config = diffusion.SdeConfig(kind, params, dt, steps, burn_in, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc), "dt") from None
    monos = monomial_family(params.dim, max_degree)
    estimates = diffusion.simulate_moments(config, monos, n_batches, dump)
    results, ok = [], True
    for f, est in zip(monos, estimates):
        exact = measures.expectation(f, params)
        tol = max(sigma * est.stderr, floor * abs(exact))
        passed = abs(est.mean - exact) <= tol
        results.append(
            {"kappa": list(f.terms[0][0]), "exact": exact, "mean": est.mean, "stderr": est.stderr, "pass": passed}
        )
        ok &= passed
    return results, ok


COMMANDS: dict[str, Callable[[Block], tuple[list, bool]]] = {
    "sample": cmd_sample,
    "moments": cmd_moments,
    "verify-projection": cmd_verify_projection,
    "check-symmetry": cmd_check_symmetry,
    "gap": cmd_gap,
    "certify-poincare": cmd_certify_poincare,
    "certify-super-poincare": cmd_certify_super_poincare,
    "beta-bound": cmd_beta_bound,
    "simulate": cmd_simulate,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, tuple):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _line_of(text: str, key: str | None) -> int:
    if key:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if re.search(r'"%s"\s*:' % re.escape(key), line):
                return lineno
    return 1


def build_report(command: str, data: dict) -> tuple[dict, bool]:
    cfg = Block(data)
    handler = COMMANDS[command]
    results, ok = handler(cfg)
    resolved = dict(cfg.resolved)
    for key in ("output",):
        if key in data:
            resolved[key] = data[key]
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": resolved,
        "results": results,
        "pass": bool(ok),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    return _jsonable(report), bool(ok)


def _output_path(command: str, config_path: Path, data: dict, override: str | None) -> Path:
    if override:
        return Path(override)
    name = data.get("output") or f"{config_path.stem}.{command}.report.json"
    path = Path(name)
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        return Path(env_dir) / path.name
    if not path.is_absolute():
        path = config_path.parent / path
    return path


def run(command: str, config_path: str | Path, output: str | None = None) -> int:
    config_path = Path(config_path)
    try:
        text = config_path.read_text()
    except OSError as exc:
        print(f"{config_path}:1: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"{config_path}:{exc.lineno}: invalid JSON: {exc.msg}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(data, dict):
        print(f"{config_path}:1: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report, ok = build_report(command, data)
    except ConfigError as exc:
        print(f"{config_path}:{_line_of(text, exc.key)}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = _output_path(command, config_path, data, output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"{command}: {'pass' if ok else 'FAIL'} -> {path}")
    return EXIT_PASS if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dirichlet-forms", description="Run one verification experiment from a JSON config."
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="path to the JSON experiment config")
    parser.add_argument("-o", "--output", help="report path (overrides the config's 'output')")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.output)


if __name__ == "__main__":
    sys.exit(main())
