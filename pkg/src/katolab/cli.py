"""Experiment runner: one JSON config in, a directory of deterministic artifacts out.

A config looks like::

    {"schema_version": 1, "command": "verify-decay", "seed": 0,
     "parameters": {"n": 2, "q": 4}}

Every artifact written for a run carries the hash of the resolved config:
JSON files hold it under ``config_hash``, CSV files start with a
``# config_hash=...`` line and ``.field`` files have it in their name.
Nothing time- or host-dependent is written, so identical configs give
byte-identical directories.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ConfigError, DivergenceError, LabError, NoConvergenceError
from .estimates_lab import (
    control_sweep,
    hardy_littlewood_bound_probe,
    hardy_littlewood_power_oracle,
    nonlinearity_decay,
    observation_sweep,
    product_integrate,
    rows_to_csv,
)
from .function_spaces import SpaceTag, norm_report
from .interpolation_lab import family_study
from .kato_solver import (
    ExponentConfig,
    KatoConfig,
    e_norm,
    measure_eta,
    node_z_norms,
    picard_solve,
    smallness_threshold,
    source_term,
    taylor_green_3d,
)
from .probes import gaussian_bump, power_law, trig_mixture
from .spectral_core import Grid, SpectralField, field_to_bytes, leray_project, set_threads, taylor_green
from .time_spaces import TimeGrid

log = logging.getLogger("katolab")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2
HL_ORACLE_PAIRS = ((0.0, 0.5), (0.3, 0.25), (-0.4, 0.7))

_EXPONENTS = {"space": "lebesgue", "n": 2, "q": None, "p": "inf", "alpha": None, "lam": None,
              "eps": None, "tau": 0.5}

DEFAULTS = {
    "solve": {**_EXPONENTS, "N": None, "M": 256, "r": 2.0, "tol": 1e-8, "max_iter": 50,
              "initial": "taylor_green", "amplitude": 1e-3, "start": "y", "snapshots": 16},
    "threshold": {**_EXPONENTS, "n": 3, "alpha": 0.25, "N": 16, "M": 64, "r": 2.0, "tol": 1e-8,
                  "max_iter": 50, "direction": "taylor_green", "start_amplitude": None,
                  "rel_width": 0.05, "factor": 4.0, "eta_safety": 2.0},
    "verify-decay": {"n": 2, "q": 4.0, "N": None, "tolerance": 0.05, "min_r2": 0.98},
    "verify-hl": {"q": 2.0, "beta": 0.25, "p": 4.0, "alpha": 0.0, "gamma": 0.5,
                  "half_widths": [2, 5, 8, 11, 14], "per_decade": 32, "oracle_tol": 1e-8},
    "verify-admissibility": {"operator": "C", "p": "inf", "alpha": 0.25, "shift": 0.0,
                             "dims": [64, 128, 256, 512]},
    "verify-interp": {"count": 100, "dims": [64, 512], "theta": 0.4, "p": 3.0,
                      "probes_per_model": 6, "chain": [1, 0, 2], "reiteration": [0.5, 1.0, 2.0],
                      "reiteration_probes": 2, "spectrum_range": [1e-3, 1e3]},
    "norms": {"n": 2, "N": 32, "field": "taylor_green", "exponent": None,
              "spaces": [{"kind": "Lq", "q": 2.0}, {"kind": "WeakLq", "q": 4.0}]},
}
COMMANDS = tuple(DEFAULTS)


# configuration ------------------------------------------------------------------

def _number(v):
    """JSON cannot hold infinity; accept the strings "inf" / "infinity"."""
    if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
        return np.inf
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return "inf" if np.isinf(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class ExperimentConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    expect_failure: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"schema_version", "command", "parameters", "seed", "expect_failure"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
        command = data.get("command")
        if command not in DEFAULTS:
            raise ConfigError(f"unknown command {command!r}; expected one of {list(COMMANDS)}")
        given = data.get("parameters", {})
        extra = set(given) - set(DEFAULTS[command])
        if extra:
            raise ConfigError(f"unknown parameters for {command}: {sorted(extra)}")
        params = {**DEFAULTS[command], **given}
        params = {k: (_number(v) if not isinstance(v, (list, dict)) else v) for k, v in params.items()}
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or not (0 <= seed < 2**64):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        return cls(command, params, seed, bool(data.get("expect_failure", False)))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "command": self.command,
                "parameters": _jsonable(self.parameters), "seed": self.seed,
                "expect_failure": self.expect_failure}

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def _exponents(params: dict) -> ExponentConfig:
    space, n, p, lam = params["space"], int(params["n"]), float(params["p"]), params["lam"]
    q = params["q"]
    if q is None:
        # the Morrey default is the largest q allowed by lam <= n/q
        q = n / lam if space == "morrey" and lam else 6.0
    q = float(q)
    alpha = params["alpha"]
    if alpha is None:
        inv_p = 0.0 if p == np.inf else 1.0 / p
        if space in ("lebesgue", "weak"):
            alpha = 0.5 - n / (2 * q) - inv_p
        elif space == "morrey":
            alpha = (1 - lam) / 2 - inv_p
        else:
            raise ConfigError("the Hoelder space needs an explicit alpha")
    return ExponentConfig(space, n, q, p, float(alpha), lam, params["eps"], float(params["tau"]))


def _diagnostic(name, residual=None, ok=True, **extra) -> dict:
    return {"name": name, "residual": residual, "ok": bool(ok), **extra}


def validate(config: ExperimentConfig) -> list:
    """Diagnostics for the config: one entry per identity or range condition.

    Identities report their residual; ``ok`` is False for a nonzero
    residual.  Range conditions report ``residual`` None.
    """
    c, out = config.parameters, []
    if config.command in ("solve", "threshold"):
        exps = _exponents(c)
        rep = exps.validate()
        identity = {"lebesgue": "alpha + 1/p = 1/2 - n/(2q)", "weak": "alpha + 1/p = 1/2 - n/(2q)",
                    "morrey": "alpha + 1/p = (1 - lam)/2"}.get(exps.space)
        for name, ok in rep["checks"].items():
            if name == "scaling_residual_zero":
                if identity is not None:
                    out.append(_diagnostic(identity, rep["scaling_residual"], ok))
            else:
                out.append(_diagnostic(name, None, ok))
    elif config.command == "verify-decay":
        n, q = int(c["n"]), float(c["q"])
        out.append(_diagnostic("n in {2, 3}", None, n in (2, 3)))
        out.append(_diagnostic("q in (n, inf)", None, n < q < np.inf))
    elif config.command == "verify-hl":
        inv = lambda v: 0.0 if v == np.inf else 1.0 / v  # noqa: E731
        residual = (1 + c["alpha"] - c["beta"] - c["gamma"]) - (inv(c["q"]) - inv(c["p"]))
        out.append(_diagnostic("1 + alpha - beta - gamma = 1/q - 1/p", float(residual),
                               abs(residual) < 1e-12))
        out.append(_diagnostic("gamma in (0, 1)", None, 0 < c["gamma"] < 1))
        out.append(_diagnostic("q <= p", None, c["q"] <= c["p"]))
    elif config.command == "verify-admissibility":
        out.append(_diagnostic("operator in {C, B}", None, c["operator"] in ("C", "B")))
        out.append(_diagnostic("critical exponent (shift = 0)", float(c["shift"]), c["shift"] == 0))
    elif config.command == "verify-interp":
        out.append(_diagnostic("theta in (0, 1)", None, 0 < c["theta"] < 1))
        out.append(_diagnostic("p in [1, inf]", None, 1 <= c["p"] <= np.inf))
        out.append(_diagnostic("count >= 1", None, c["count"] >= 1))
    return out


# runners ------------------------------------------------------------------------

@dataclass
class RunResult:
    summary: dict
    passed: bool
    tables: dict = field(default_factory=dict)     # name -> (rows, columns)
    fields: dict = field(default_factory=dict)     # name -> SpectralField


def _grid(n, N):
    return Grid(int(n), int(N) if N is not None else {2: 64, 3: 32}[int(n)])


def _kato_config(c, exps) -> KatoConfig:
    return KatoConfig(exps, tol=float(c["tol"]), max_iter=int(c["max_iter"]), M=int(c["M"]),
                      r=float(c["r"]))


def _initial(kind, grid, amplitude, seed):
    if kind == "zero":
        return SpectralField.zeros(grid)
    if kind == "taylor_green":
        return (taylor_green_3d(grid) if grid.n == 3 else taylor_green(grid)) * amplitude
    if kind == "random":
        f = leray_project(SpectralField.random(grid, np.random.default_rng(seed), kmax=4))
        return f * (amplitude / f.l2_norm())
    raise ConfigError(f"unknown initial datum {kind!r}")


def run_solve(cfg: ExperimentConfig) -> RunResult:
    c = cfg.parameters
    exps = _exponents(c)
    grid = _grid(exps.n, c["N"])
    kato = _kato_config(c, exps)
    u0 = _initial(c["initial"], grid, float(c["amplitude"]), cfg.seed)
    summary = {"exponents": exps.to_dict(), "grid": grid.to_dict(), "time": kato.time_grid().to_dict()}
    try:
        x, diag = picard_solve(u0, kato, start=c["start"],
                               allow_scaling_violation=cfg.expect_failure)
    except (DivergenceError, NoConvergenceError) as exc:
        summary.update({"converged": False, "failure": exc.code, "message": str(exc),
                        "diagnostics": exc.diagnostics.to_dict() if exc.diagnostics else None})
        return RunResult(summary, False)
    nodes = kato.time_grid().nodes
    z_norms = node_z_norms(x, exps.z_space())
    final = diag.e_norms[-1]
    summary.update({"converged": True, "diagnostics": diag.to_dict(), "e_norm": final,
                    "e_norm_over_y_norm": final / diag.y_norm if diag.y_norm > 0 else 0.0})
    rows = [{"node": j, "t": float(t), "z_norm": float(z), "l2_norm": x.field(j).l2_norm()}
            for j, (t, z) in enumerate(zip(nodes, z_norms))]
    saved = np.unique(np.linspace(0, kato.M, int(c["snapshots"]) + 1).round().astype(int))
    fields = {f"node{j:04d}": x.field(j) for j in saved}
    summary["snapshots"] = {f"node{j:04d}": float(nodes[j]) for j in saved}
    return RunResult(summary, True, {"nodes": (rows, ["node", "t", "z_norm", "l2_norm"])}, fields)


def run_threshold(cfg: ExperimentConfig) -> RunResult:
    c = cfg.parameters
    exps = _exponents(c)
    grid = _grid(exps.n, c["N"])
    kato = _kato_config(c, exps)
    direction = _initial(c["direction"], grid, 1.0, cfg.seed)
    eta = measure_eta(kato, grid, seed=cfg.seed, extra=[direction], safety=float(c["eta_safety"]))
    y_norm = e_norm(source_term(direction, kato), kato)
    predicted = 1.0 / (4.0 * eta["eta"] * y_norm)
    res = smallness_threshold(direction, kato, start=c["start_amplitude"] or predicted,
                              rel_width=float(c["rel_width"]))
    res.predicted = predicted
    ratio = res.threshold / predicted
    factor = float(c["factor"])
    within = 1.0 / factor <= ratio <= factor
    summary = {"exponents": exps.to_dict(), "grid": grid.to_dict(), **res.to_dict(),
               "eta": eta, "direction_e_norm": y_norm, "ratio_to_predicted": ratio,
               "factor": factor, "within_factor": within}
    rows = [{"order": i, "amplitude": float(a), "converged": bool(ok)}
            for i, (a, ok) in enumerate(res.samples)]
    return RunResult(summary, bool(within and not res.ambiguous),
                     {"samples": (rows, ["order", "amplitude", "converged"])})


def run_decay(cfg: ExperimentConfig) -> RunResult:
    c = cfg.parameters
    n, q = int(c["n"]), float(c["q"])
    fit = nonlinearity_decay(n, q, c["N"])
    target = 0.5 + n / (2 * q)
    ok = abs(fit.gamma - target) <= float(c["tolerance"]) and fit.r2 >= float(c["min_r2"])
    summary = {**fit.to_dict(), "gamma_target": target, "gamma_error": fit.gamma - target,
               "n": n, "q": q, "N": c["N"] or {2: 64, 3: 32}[n]}
    rows = [{"t": t, "ratio": r} for t, r in zip(fit.times, fit.ratios)]
    return RunResult(summary, bool(ok), {"ratios": (rows, ["t", "ratio"])})


def hl_oracle_errors(grid: TimeGrid = TimeGrid(1.0, 256, 2.0), pairs=HL_ORACLE_PAIRS) -> list:
    """Worst relative error of the product rule against T_gamma s^a = B(1+a, 1-gamma) t^(1+a-gamma)."""
    t = grid.nodes
    out = []
    for a, gamma in pairs:
        f = np.empty_like(t)
        f[1:] = t[1:] ** a
        f[0] = 1.0 if a == 0 else (0.0 if a > 0 else np.inf)
        got = product_integrate(f, t, gamma, "power")[1:]
        exact = hardy_littlewood_power_oracle(a, gamma, t[1:])
        out.append({"a": a, "gamma": gamma, "max_rel_error": float(np.max(np.abs(got / exact - 1)))})
    return out


def run_hl(cfg: ExperimentConfig) -> RunResult:
    c = cfg.parameters
    probe = hardy_littlewood_bound_probe(c["q"], c["beta"], c["p"], c["alpha"], c["gamma"],
                                         tuple(c["half_widths"]), int(c["per_decade"]))
    oracle = hl_oracle_errors()
    oracle_ok = all(o["max_rel_error"] <= float(c["oracle_tol"]) for o in oracle)
    expected = "unbounded" if cfg.expect_failure else "stable"
    summary = {**probe.to_dict(), "expected_verdict": expected, "oracle": oracle,
               "oracle_ok": oracle_ok}
    rows = [{"half_width": d, "ratio_sup": r} for d, r in zip(probe.steps, probe.ratio_sup)]
    return RunResult(summary, bool(oracle_ok and probe.verdict == expected),
                     {"ratios": (rows, ["half_width", "ratio_sup"])})


def run_admissibility(cfg: ExperimentConfig) -> RunResult:
    c = cfg.parameters
    sweep = observation_sweep if c["operator"] == "C" else control_sweep
    out = sweep(c["p"], float(c["alpha"]), float(c["shift"]), tuple(int(d) for d in c["dims"]))
    expected = "jointly divergent" if cfg.expect_failure else "jointly finite"
    out["expected_verdict"] = expected
    columns = ["dim"] + [k for k in out["rows"][0] if k != "dim"]
    return RunResult(out, out["verdict"] == expected, {"sweep": (out["rows"], columns)})


def run_interp(cfg: ExperimentConfig) -> RunResult:
    c = cfg.parameters
    out = family_study(cfg.seed, int(c["count"]), tuple(int(d) for d in c["dims"]), float(c["theta"]),
                       c["p"], int(c["probes_per_model"]), tuple(c["chain"]),
                       tuple(_number(v) for v in c["reiteration"]), int(c["reiteration_probes"]),
                       tuple(c["spectrum_range"]))
    rows = [{"dim": int(d), "pair": name, **iv}
            for d, pairs in out["equivalence"].items() for name, iv in pairs.items()]
    rows += [{"dim": int(d), "pair": "reiterated/direct", **iv} for d, iv in out["reiteration"].items()]
    ok = out["equivalence_stable"] and out["embedding_chain_passed"] and out["reiteration_stable"]
    return RunResult(out, bool(ok), {"intervals": (rows, ["dim", "pair", "lo", "hi"])})


def run_norms(cfg: ExperimentConfig) -> RunResult:
    c = cfg.parameters
    grid = _grid(c["n"], c["N"])
    kind = c["field"]
    if kind == "power_law":
        f = power_law(grid, float(c["exponent"]))
    elif kind == "gaussian":
        f = gaussian_bump(grid)
    elif kind == "trig":
        f = trig_mixture(grid, seed=cfg.seed)
    else:
        f = _initial(kind, grid, 1.0, cfg.seed)
    reports = []
    for spec in c["spaces"]:
        tag = SpaceTag(**{k: _number(v) for k, v in spec.items()})
        reports.append(json.loads(norm_report(f, tag).to_json()))
    rows = [{"space": json.dumps(r["space"], sort_keys=True), "value": r["value"],
             "estimator": r["estimator"]} for r in reports]
    return RunResult({"grid": grid.to_dict(), "field": kind, "norms": reports}, True,
                     {"norms": (rows, ["space", "value", "estimator"])})


RUNNERS = {"solve": run_solve, "threshold": run_threshold, "verify-decay": run_decay,
           "verify-hl": run_hl, "verify-admissibility": run_admissibility,
           "verify-interp": run_interp, "norms": run_norms}


# artifacts ----------------------------------------------------------------------

def _write(path: Path, data: bytes, artifacts: list):
    path.write_bytes(data)
    artifacts.append({"name": path.name, "bytes": len(data),
                      "sha256": hashlib.sha256(data).hexdigest()})


def run(config: ExperimentConfig, out_dir) -> int:
    """Validate, execute and write artifacts; returns the process exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config.digest()
    diagnostics = validate(config)
    failed = [d for d in diagnostics if not d["ok"]]
    identities_only = all(d["residual"] is not None for d in failed)
    if failed and not (config.expect_failure and identities_only):
        raise ConfigError("config rejected: " + "; ".join(d["name"] for d in failed),
                          diagnostics=_jsonable(diagnostics))
    result = RUNNERS[config.command](config)
    artifacts = []
    status = "ok" if result.passed else "verdict-failure"
    summary = {"config_hash": digest, "command": config.command, "status": status,
               "expect_failure": config.expect_failure, "result": result.summary}
    _write(out / "summary.json", _dumps(summary).encode(), artifacts)
    for name, (rows, columns) in sorted(result.tables.items()):
        text = f"# config_hash={digest}\n" + rows_to_csv(rows, columns)
        _write(out / f"{name}.csv", text.encode(), artifacts)
    for name, f in sorted(result.fields.items()):
        _write(out / f"{digest}-{name}.field", field_to_bytes(f), artifacts)
    manifest = {"config_hash": digest, "config": config.to_dict(), "diagnostics": diagnostics,
                "package_version": __version__, "status": status, "artifacts": artifacts}
    (out / "manifest.json").write_text(_dumps(manifest))
    return EXIT_OK if result.passed else EXIT_VERDICT


# command line -------------------------------------------------------------------

def _resolve(config_path, seed, expect_failure) -> ExperimentConfig:
    cfg = load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    if expect_failure:
        cfg.expect_failure = True
    return cfg


def _error_exit(exc: LabError, out_dir=None) -> int:
    text = _dumps(exc.to_dict())
    click.echo(text, nl=False)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text)
        except OSError:
            pass
    return EXIT_ERROR


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Kato fixed-point and linear-estimate experiments from JSON configs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
              help="Overrides the seed in the config.")
@click.option("--threads", type=click.IntRange(1), default=1, help="Worker cap for FFTs.")
@click.option("--expect-failure", is_flag=True,
              help="Accept configs that break a scaling identity and expect a failing verdict.")
def run_command(config_path, out_dir, seed, threads, expect_failure):
    """Run one experiment and write manifest.json, summary.json, CSV and field files."""
    set_threads(threads)
    started = time.perf_counter()
    try:
        cfg = _resolve(config_path, seed, expect_failure)
        status = run(cfg, out_dir)
    except LabError as exc:
        sys.exit(_error_exit(exc, out_dir))
    log.info("finished in %.1f s with exit status %d", time.perf_counter() - started, status)
    click.echo(Path(out_dir, "summary.json").read_text(), nl=False)
    sys.exit(status)


@main.command("validate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--expect-failure", is_flag=True)
def validate_command(config_path, expect_failure):
    """Print the identity residuals and range checks of a config."""
    try:
        cfg = _resolve(config_path, None, expect_failure)
        diagnostics = validate(cfg)
    except LabError as exc:
        sys.exit(_error_exit(exc))
    valid = all(d["ok"] for d in diagnostics)
    click.echo(_dumps({"config_hash": cfg.digest(), "valid": valid, "diagnostics": diagnostics}),
               nl=False)
    sys.exit(EXIT_OK if valid or cfg.expect_failure else EXIT_ERROR)


@main.command("defaults")
@click.argument("command", type=click.Choice(COMMANDS))
def defaults_command(command):
    """Print a complete config for COMMAND with every default filled in."""
    cfg = ExperimentConfig.from_dict({"schema_version": SCHEMA_VERSION, "command": command})
    click.echo(_dumps(cfg.to_dict()), nl=False)


if __name__ == "__main__":
    main()
