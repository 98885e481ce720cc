"""Command line interface.

Usage::

    lpustat COMMAND [--config FILE] [--set SECTION.KEY=VALUE ...] [--seed N] [--output-dir DIR]

Commands: ``simulate``, ``estimate``, ``study``, ``gradient-check``, ``selftest``.
Configuration is an INI file; ``--set`` and the short flags override it.
Exit status: 0 success, 1 configuration or input error, 2 numerical failure,
3 selftest failure.
"""

import argparse
import configparser
from datetime import datetime, timezone
import itertools
import json
import math
from pathlib import Path
import sys
import warnings

import numpy as np

from . import __version__
from .bench import (
    ESTIMATORS,
    StudyConfig,
    asymptotic_variance,
    clipped_square_direction,
    cosine_direction,
    gradient_check,
    monte_carlo_study,
    relative_variance_increase,
)
from .constrained import a_star_hat, constrained_estimate
from .functions import get_function
from .innovations import InnovationSpec, ScoreUnavailable
from .plugin import estimate_theta, one_step_efficient_ar1, substitution_estimate
from .process import ProcessPath, default_r, get_model, recover_innovations, simulate
from ._seeding import derive_seed_sequence, stream
from ._validation import DomainError
from .ustat import UStatConfig, choose_m, ustat_exact, ustat_incomplete

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3
COMMANDS = ("simulate", "estimate", "study", "gradient-check", "selftest")

DEFAULTS = {
    "run": {"seed": "0", "partitions": "1", "output_dir": "."},
    "model": {"name": "AR1", "theta": "0.5"},
    "innovations": {"family": "gamma"},
    "function": {"name": "square", "params": ""},
    "sample": {"n": "2000", "r": "auto"},
    "ustat": {"m": "auto", "B": "auto", "mode": "incomplete"},
    "estimate": {"input": "", "theta_method": "least-squares"},
    "study": {"N": "1000", "estimators": "empirical, improved-empirical, ustat-ls, simple-efficient",
              "workers": "1", "one_step_update": "root"},
    "gradient": {"directions": "clipped-square, cosine", "eps": "0.02, 0.05, 0.1",
                 "mc": "1000000", "clip": "4", "t": "1"},
}

_SPEC_KEYS = {"sigma", "shape", "scale", "half_width", "p"}


class ConfigError(Exception):
    """Invalid or incomplete configuration."""


def _check_key(section, key):
    # innovation parameters depend on the family and are checked when the law is built
    if section != "innovations" and key not in DEFAULTS[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]; expected one of {sorted(DEFAULTS[section])}")


def load_config(path=None, overrides=()):
    """Read the INI file over the defaults and apply ``SECTION.KEY=VALUE`` overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        text = p.read_text()
        try:
            user = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
            user.optionxform = str
            user.read_string(text, source=str(p))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if user.has_section("innovations"):
            # a new family replaces the default family parameters
            cp.remove_section("innovations")
            cp.add_section("innovations")
        for section in user.sections():
            if not cp.has_section(section):
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in user.items(section):
                _check_key(section, key)
                cp.set(section, key, value)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not SECTION.KEY=VALUE")
        key, value = item.split("=", 1)
        section, option = key.split(".", 1)
        if not cp.has_section(section):
            raise ConfigError(f"unknown config section [{section}] in override {item!r}")
        _check_key(section, option)
        cp.set(section, option, value)
    return cp


def _int(cp, section, key, minimum=None, auto=False):
    raw = cp.get(section, key).strip()
    if auto and raw.lower() in ("auto", ""):
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(f"[{section}] {key} must be >= {minimum}, got {value}")
    return value


def _floats(raw, where):
    parts = [p for p in raw.replace(",", " ").split() if p]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{where} must be numbers, got {raw!r}") from None


def _spec(cp):
    items = dict(cp.items("innovations"))
    family = items.pop("family", None)
    if family is None:
        raise ConfigError("[innovations] needs a family")
    params = {}
    for key, value in items.items():
        if key not in _SPEC_KEYS:
            raise ConfigError(f"unknown [innovations] parameter {key!r}")
        params[key] = _floats(value, f"[innovations] {key}")[0]
    try:
        return InnovationSpec(family, params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[innovations] {exc}") from exc


def _function(cp):
    name = cp.get("function", "name").strip()
    params = _floats(cp.get("function", "params"), "[function] params")
    try:
        return get_function(name, *params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[function] {exc}") from exc


def _model(cp):
    try:
        model = get_model(cp.get("model", "name").strip())
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc
    theta = _floats(cp.get("model", "theta"), "[model] theta")
    if len(theta) != model.dim:
        raise ConfigError(f"[model] theta needs {model.dim} value(s) for {model.name}")
    return model, np.array(theta)


def _resolve_ustat(n, m, B, mode):
    """``m`` and ``B`` for sample size ``n``; ``None`` means automatic."""
    m_warnings = []
    m_auto, B_auto = m is None, B is None
    if m_auto:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m, m_warnings = choose_m(n, return_diagnostics=True)
    if B_auto:
        B = 200 * n * m
    return {"m": m, "B": B, "mode": mode, "m_auto": m_auto, "B_auto": B_auto,
            "m_warnings": m_warnings}


def resolve(cp, command):
    """Fully resolved run configuration (auto fields filled in) as a JSON-ready dict."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    seed = _int(cp, "run", "seed", minimum=0)
    partitions = _int(cp, "run", "partitions", minimum=1)
    model, theta = _model(cp)
    spec = _spec(cp)
    h = _function(cp)
    n = _int(cp, "sample", "n", minimum=2)
    r = _int(cp, "sample", "r", minimum=0, auto=True)
    r = default_r(n) if r is None else r
    m = _int(cp, "ustat", "m", minimum=1, auto=True)
    B = _int(cp, "ustat", "B", minimum=1, auto=True)
    mode = cp.get("ustat", "mode").strip()
    if mode not in ("exact", "incomplete"):
        raise ConfigError(f"[ustat] mode must be exact or incomplete, got {mode!r}")
    cfg = {
        "command": command,
        "seed": seed,
        "partitions": partitions,
        "model": {"name": model.name, "theta": theta.tolist()},
        "innovations": spec.to_dict(),
        "function": h.to_dict(),
        "n": n,
        "r": r,
        "ustat": _resolve_ustat(n, m, B, mode),
        "output_dir": cp.get("run", "output_dir").strip(),
    }
    if command == "estimate":
        method = cp.get("estimate", "theta_method").strip()
        if method not in ("least-squares", "moment-match", "one-step"):
            raise ConfigError(f"[estimate] theta_method {method!r} is unknown")
        cfg["estimate"] = {"input": cp.get("estimate", "input").strip(), "theta_method": method}
    if command == "study":
        est = [e.strip() for e in cp.get("study", "estimators").split(",") if e.strip()]
        unknown = [e for e in est if e not in ESTIMATORS]
        if unknown or not est:
            raise ConfigError(f"[study] estimators must be a non-empty subset of {list(ESTIMATORS)}")
        cfg["study"] = {
            "N": _int(cp, "study", "N", minimum=2),
            "estimators": est,
            "workers": _int(cp, "study", "workers", minimum=1),
            "one_step_update": cp.get("study", "one_step_update").strip(),
        }
    if command == "gradient-check":
        dirs = [d.strip() for d in cp.get("gradient", "directions").split(",") if d.strip()]
        bad = [d for d in dirs if d not in ("clipped-square", "cosine")]
        if bad or not dirs:
            raise ConfigError("[gradient] directions must be from clipped-square, cosine")
        cfg["gradient"] = {
            "directions": dirs,
            "eps": _floats(cp.get("gradient", "eps"), "[gradient] eps"),
            "mc": _int(cp, "gradient", "mc", minimum=1),
            "clip": _floats(cp.get("gradient", "clip"), "[gradient] clip")[0],
            "t": _floats(cp.get("gradient", "t"), "[gradient] t")[0],
        }
    return cfg


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _metadata():
    return {"created": datetime.now(timezone.utc).isoformat(), "version": __version__}


def _objects(cfg):
    model = get_model(cfg["model"]["name"])
    spec = InnovationSpec(cfg["innovations"]["family"],
                          {k: v for k, v in cfg["innovations"].items() if k != "family"})
    h = get_function(cfg["function"]["name"], *cfg["function"]["params"])
    return model, np.array(cfg["model"]["theta"]), spec, h


def cmd_simulate(cfg, out):
    model, theta, spec, _ = _objects(cfg)
    path = simulate(model, theta, spec, cfg["n"], r=cfg["r"],
                    random_state=stream(cfg["seed"], "simulate"))
    target = out / "path.csv"
    path.to_csv(target, comments=["config " + json.dumps(cfg, sort_keys=True)])
    return {"path_csv": str(target)}


def _load_path(cfg, model, theta, spec):
    source = cfg["estimate"]["input"]
    if source:
        p = Path(source)
        if not p.is_file():
            raise ConfigError(f"[estimate] input {source} not found")
        try:
            return ProcessPath.from_csv(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return simulate(model, theta, spec, cfg["n"], r=cfg["r"], random_state=stream(cfg["seed"], "simulate"))


def cmd_estimate(cfg, out):
    model, theta0, spec, h = _objects(cfg)
    path = _load_path(cfg, model, theta0, spec)
    if cfg["estimate"]["input"]:
        u = cfg["ustat"]
        cfg["n"], cfg["r"] = path.n, path.r
        cfg["ustat"] = _resolve_ustat(path.n, None if u["m_auto"] else u["m"],
                                      None if u["B_auto"] else u["B"], u["mode"])
    method = cfg["estimate"]["theta_method"]
    if method == "one-step":
        if model.name != "AR1":
            raise ConfigError("theta_method one-step needs model AR1")
        theta = np.array([one_step_efficient_ar1(path, estimate_theta(path, model), spec)])
    else:
        theta = estimate_theta(path, model, method)
    m = cfg["ustat"]["m"]
    if m > path.n:
        raise ConfigError(f"m={m} exceeds the number of observations {path.n}")
    ucfg = UStatConfig(m=m, mode=cfg["ustat"]["mode"], B=cfg["ustat"]["B"],
                       n_partitions=cfg["partitions"],
                       random_state=derive_seed_sequence(cfg["seed"], "tuples"))
    report = substitution_estimate(path, model, theta, h, config=ucfg, theta_method=method,
                                   spec=spec if spec.has_score else None)
    report.diagnostics["rate_warnings"] = sorted(set(report.diagnostics["rate_warnings"])
                                                 | set(cfg["ustat"]["m_warnings"]))
    payload = report.to_dict()
    payload["config"] = {"resolved": cfg, "estimator": payload["config"]}
    payload["metadata"] = _metadata()
    target = out / "estimate.json"
    _write_json(target, payload)
    return {"estimate_json": str(target), "kappa_hat": report.kappa_hat, "se_plugin": report.se_plugin}


def cmd_study(cfg, out):
    model, theta0, spec, h = _objects(cfg)
    s = cfg["study"]
    scfg = StudyConfig(model=model.name, theta0=theta0, spec=spec, h=h, n=cfg["n"], N=s["N"],
                       estimators=s["estimators"], master_seed=cfg["seed"], m=cfg["ustat"]["m"],
                       B=cfg["ustat"]["B"], r=cfg["r"], mode=cfg["ustat"]["mode"],
                       n_partitions=cfg["partitions"], one_step_update=s["one_step_update"],
                       workers=s["workers"])
    result = monte_carlo_study(scfg)
    result.metadata.update(_metadata())
    payload = result.to_dict()
    payload["config"] = {"resolved": cfg, "study": payload["config"]}
    csv_text = "# config " + json.dumps(cfg, sort_keys=True) + "\n" + result.to_csv()
    (out / "study.csv").write_text(csv_text)
    _write_json(out / "study.json", payload)
    return {"study_csv": str(out / "study.csv"), "study_json": str(out / "study.json"),
            "n_errors": len(result.errors)}


def cmd_gradient_check(cfg, out):
    model, theta0, spec, h = _objects(cfg)
    g = cfg["gradient"]
    C, a, _ = model.tail_constants(theta0)
    length = max(1, math.ceil(math.log(1e-10 * (1 - a) / max(C, 1.0)) / math.log(a))) if a > 0 else 1
    beta = model.alpha(theta0, length + 1)
    reports = []
    for k, name in enumerate(g["directions"]):
        direction = (clipped_square_direction(spec, g["clip"]) if name == "clipped-square"
                     else cosine_direction(spec, g["t"]))
        reports.append(gradient_check(spec, beta, h, direction, g["eps"], mc=g["mc"],
                                      random_state=stream(cfg["seed"], "gradient", k)))
    payload = {"config": cfg, "checks": reports, "metadata": _metadata()}
    _write_json(out / "gradient.json", payload)
    return {"gradient_json": str(out / "gradient.json"),
            "relative_errors": [r["relative_error"] for r in reports]}


def selftest_checks():
    """Tiny-instance oracle comparisons; returns ``[(name, passed, detail)]``."""
    checks = []
    X = np.array([1.0, 2.0, 3.0])
    beta = np.array([1.0, 0.5])
    brute = np.mean([(X[i] + 0.5 * X[j]) ** 2 for i, j in itertools.permutations(range(3), 2)])
    res = ustat_exact(X, beta, np.square)
    checks.append(("exact enumeration vs brute force", math.isclose(res.kappa_tilde, brute, rel_tol=1e-14),
                   f"{res.kappa_tilde} vs {brute}"))
    rows = np.zeros(3)
    for i, j in itertools.permutations(range(3), 2):
        v = (X[i] + 0.5 * X[j]) ** 2
        rows[i] += v / 2
        rows[j] += v / 2
    a_brute = float(np.sum(X * rows) / np.sum(X * X))
    a_hat = a_star_hat(X, res, center=False)
    checks.append(("projection coefficient vs brute force", math.isclose(a_hat, a_brute, rel_tol=1e-12),
                   f"{a_hat} vs {a_brute}"))
    corrected = constrained_estimate(res, 1.0, X)
    checks.append(("constraint correction", math.isclose(corrected, 7.5, rel_tol=1e-14), f"{corrected}"))

    rng = np.random.default_rng(7)
    Xr = rng.standard_normal(6)
    b3 = np.array([1.0, -0.7, 0.4])
    exact = ustat_exact(Xr, b3, np.square)
    inc = ustat_incomplete(Xr, b3, np.square, B=200000, random_state=derive_seed_sequence(0, "selftest"))
    checks.append(("incomplete vs exact", abs(inc.kappa_tilde - exact.kappa_tilde) <= 4 * inc.sampling_se,
                   f"|diff|={abs(inc.kappa_tilde - exact.kappa_tilde):.3g}, se={inc.sampling_se:.3g}"))

    path = ProcessPath(pre_obs=np.array([1.0]), obs=np.array([0.5, 0.25, 0.125]))
    rec = recover_innovations(path, get_model("AR1"), [0.5])
    checks.append(("innovation recovery on a geometric path", bool(np.allclose(rec, 0.0, atol=1e-15)),
                   f"{rec.tolist()}"))

    gamma3 = InnovationSpec.gamma(3.0)
    vals = [asymptotic_variance(w, 0.5, gamma3) for w in ("empirical", "improved", "ustat-ls", "efficient")]
    expected = [256 / 3, 64.0, 64.0, 28 / 0.5625]
    checks.append(("closed-form variances", bool(np.allclose(vals, expected, rtol=1e-12)), f"{vals}"))
    ratios = [relative_variance_increase(w, 0.5, gamma3) for w in ("empirical", "improved")]
    checks.append(("relative variance increases", bool(np.allclose(ratios, [15 / 21, 6 / 21], rtol=1e-12)),
                   f"{ratios}"))
    return checks


def cmd_selftest(cfg, out):
    checks = selftest_checks()
    payload = {
        "config": cfg,
        "checks": [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in checks],
        "metadata": _metadata(),
    }
    _write_json(out / "selftest.json", payload)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    return {"passed": all(ok for _, ok, _ in checks)}


HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "study": cmd_study,
    "gradient-check": cmd_gradient_check,
    "selftest": cmd_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="lpustat", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", "-c", help="INI configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value (repeatable)")
    parser.add_argument("--seed", type=int, help="master seed (same as --set run.seed=N)")
    parser.add_argument("--output-dir", "-o", help="directory for artifacts")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.output_dir is not None:
        overrides.append(f"run.output_dir={args.output_dir}")
    try:
        cp = load_config(args.config, overrides)
        cfg = resolve(cp, args.command)
        out = Path(cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ScoreUnavailable, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(summary, sort_keys=True))
    if args.command == "selftest" and not summary["passed"]:
        return EXIT_SELFTEST
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
