"""Scenario runner: YAML configs in, CSV series and a JSON summary out.

A scenario file (``schema_version: 1``) looks like::

    schema_version: 1
    name: schwinger-adiabatic
    model:
      family: schwinger            # or: file: path/to/table.csv
      params: {omega0: 10, theta: 0.01, omega: 1}
    tracked_level: 1
    gauge: pancharatnam_aligned(1)
    grid: {t_start: 0, t_end: 12.566, samples: 2001}   # samples may be "adaptive"
    analyses: [criteria, bounds, propagate, bw, oracles]
    thresholds: {criteria: 0.1, infidelity: 0.01}
    options: {normalization: rabi, norm: spectral, tol: 1.0e-10}
    passages: [2, 4, 8]            # cycling_lz only
    epsilon: 1.0                   # slow-down factor, grid is stretched by 1/epsilon
    output: out/schwinger-adiabatic

Only ``schema_version``, ``name``, ``model`` and ``grid`` are required.
"""
from __future__ import annotations

import argparse
import csv
import inspect
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import hamiltonian as hm
from ._numerics import cumulative_integral
from .bounds import bound_report, bw_series, jrs_bound
from .errors import AdiabaticityError, ConfigError
from .frame import _fmt, build_frame, criteria_series, two_level_conditions
from .propagator import (
    UNITARITY_TOL,
    DEFAULT_TOL,
    evolve,
    lz_multipassage,
    propagate,
    rescaled_evolution,
    schwinger_analytic,
    unitarity_error,
)
from .spectral import GaugeChoice, eigencurves

SCHEMA_VERSION = 1
ANALYSES = ("criteria", "bounds", "propagate", "bw", "oracles")
DEFAULT_THRESHOLDS = {"criteria": 0.1, "infidelity": 0.01}
DEFAULT_OPTIONS = {"normalization": "rabi", "norm": "spectral", "tol": DEFAULT_TOL}
MIN_SAMPLES = 16
MAX_ADAPTIVE_SAMPLES = 200001
TOP_KEYS = {"schema_version", "name", "model", "tracked_level", "gauge", "grid", "analyses",
            "thresholds", "options", "passages", "epsilon", "output"}


@dataclass(frozen=True)
class Scenario:
    name: str
    family: str
    params: dict
    t_start: float
    t_end: float
    samples: object  # int or "adaptive"
    tracked_level: int = 0
    gauge: GaugeChoice = GaugeChoice()
    analyses: tuple = ANALYSES
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    options: dict = field(default_factory=lambda: dict(DEFAULT_OPTIONS))
    passages: tuple = ()
    epsilon: float = 1.0
    output: Optional[str] = None
    file: Optional[str] = None


@dataclass
class DiagnosticReport:
    name: str
    verdicts: dict
    series_paths: dict
    summary: dict
    gauge: str
    output_dir: str
    discrepancies: list
    verdict: str
    rows: list = field(default_factory=list)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "scenario": self.name, "verdict": self.verdict,
                "gauge": self.gauge, "verdicts": self.verdicts,
                "discrepancies": self.discrepancies, "summary": self.summary,
                "series": self.series_paths}


# --------------------------------------------------------------------------
# parsing


def _number(x, what):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{what} must be a number, got {x!r}")
    return float(x)


def parse_scenario(data, base_dir=".") -> Scenario:
    """Validate a loaded YAML mapping and build a :class:`Scenario`."""
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    name = data.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ConfigError("name must be a non-empty string")

    model = data.get("model")
    if not isinstance(model, dict):
        raise ConfigError("model must be a mapping")
    file = model.get("file")
    if file is not None:
        family = "tabulated"
        path = Path(base_dir) / file
        if not path.is_file():
            raise ConfigError(f"tabulated file not found: {path}")
        file = str(path)
        params = {}
    else:
        family = model.get("family")
        if family not in hm.FAMILIES or family == "tabulated":
            raise ConfigError(f"unknown family {family!r}; use model.file for tabulated data")
        params = model.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("model.params must be a mapping")
        allowed = set(inspect.signature(hm.FAMILIES[family]).parameters) - {"t_span"}
        bad = set(params) - allowed
        if bad:
            raise ConfigError(f"family {family} has no parameters {sorted(bad)}")

    grid = data.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError("grid must be a mapping with t_start, t_end, samples")
    t0 = _number(grid.get("t_start", 0.0), "grid.t_start")
    t1 = _number(grid.get("t_end"), "grid.t_end")
    if not t1 > t0:
        raise ConfigError("grid.t_end must exceed grid.t_start")
    samples = grid.get("samples", "adaptive")
    if samples != "adaptive":
        if isinstance(samples, bool) or not isinstance(samples, int):
            raise ConfigError("grid.samples must be an integer or 'adaptive'")
        if samples < MIN_SAMPLES:
            raise ConfigError(f"grid.samples must be at least {MIN_SAMPLES}, got {samples}")

    level = data.get("tracked_level", 0)
    if isinstance(level, bool) or not isinstance(level, int) or level < 0:
        raise ConfigError("tracked_level must be a non-negative integer")
    try:
        gauge = GaugeChoice.parse(str(data.get("gauge", "parallel_transport")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    analyses = data.get("analyses", list(ANALYSES))
    if not isinstance(analyses, list) or not analyses or not set(analyses) <= set(ANALYSES):
        raise ConfigError(f"analyses must be a non-empty subset of {list(ANALYSES)}")

    thresholds = dict(DEFAULT_THRESHOLDS)
    for k, v in (data.get("thresholds") or {}).items():
        if k not in DEFAULT_THRESHOLDS:
            raise ConfigError(f"unknown threshold {k!r}")
        if not _number(v, f"thresholds.{k}") > 0:
            raise ConfigError(f"thresholds.{k} must be positive")
        thresholds[k] = float(v)

    options = dict(DEFAULT_OPTIONS)
    for k, v in (data.get("options") or {}).items():
        if k not in DEFAULT_OPTIONS:
            raise ConfigError(f"unknown option {k!r}")
        options[k] = v
    if options["normalization"] not in ("rabi", "literal"):
        raise ConfigError("options.normalization must be 'rabi' or 'literal'")
    if options["norm"] not in ("spectral", "one"):
        raise ConfigError("options.norm must be 'spectral' or 'one'")
    options["tol"] = _number(options["tol"], "options.tol")

    passages = data.get("passages", [])
    if not isinstance(passages, list) or any(
            isinstance(m, bool) or not isinstance(m, int) or m <= 0 or m % 2 for m in passages):
        raise ConfigError("passages must be a list of positive even integers")
    if passages and family != "cycling_lz":
        raise ConfigError("passages only apply to the cycling_lz family")

    eps = _number(data.get("epsilon", 1.0), "epsilon")
    if not eps > 0:
        raise ConfigError("epsilon must be positive")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output must be a path string")

    return Scenario(name=name.strip(), family=family, params=dict(params), t_start=t0,
                    t_end=t1, samples=samples, tracked_level=level, gauge=gauge,
                    analyses=tuple(a for a in ANALYSES if a in analyses),
                    thresholds=thresholds, options=options, passages=tuple(passages),
                    epsilon=eps, output=output, file=file)


def builtin_scenarios() -> dict:
    """Shipped scenario files by name."""
    root = resources.files("adiabaticity") / "scenarios"
    return {p.name[:-5]: p for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".yaml")}


def load_scenario(path) -> Scenario:
    """Read a scenario file; a bare shipped-scenario name also works."""
    p = Path(path)
    if not p.is_file():
        shipped = builtin_scenarios()
        if str(path) not in shipped:
            raise ConfigError(f"no such scenario file or shipped scenario: {path}")
        with resources.as_file(shipped[str(path)]) as real:
            p = Path(real)
            text = p.read_text()
    else:
        text = p.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_scenario(data, base_dir=p.parent)


# --------------------------------------------------------------------------
# pipeline


def _family_kwargs(scn: Scenario, seed):
    kw = {}
    for k, v in scn.params.items():
        kw[k] = np.asarray(v, dtype=complex) if isinstance(v, list) else v
    if scn.family == "random_smooth":
        if seed is not None:
            kw["seed"] = int(seed)
        kw.setdefault("t_span", (scn.t_start, scn.t_end))
    elif scn.family in ("schwinger", "cycling_lz", "constant"):
        kw["t_span"] = (scn.t_start, scn.t_end)
    return kw


def build_model(scn: Scenario, seed=None) -> hm.HamiltonianModel:
    try:
        if scn.file is not None:
            model = hm.load_tabulated(scn.file)
        else:
            model = hm.FAMILIES[scn.family](**_family_kwargs(scn, seed))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, AdiabaticityError) and not isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot build {scn.family} model: {exc}") from exc
    if scn.tracked_level >= model.dimension:
        raise ConfigError(f"tracked_level {scn.tracked_level} out of range for N={model.dimension}")
    if scn.gauge.level is not None and scn.gauge.level >= model.dimension:
        raise ConfigError(f"gauge level {scn.gauge.level} out of range")
    if scn.epsilon != 1.0:
        model = rescaled_evolution(model, scn.epsilon)
    return model


def _adaptive_samples(model, t0, t1):
    probe = np.linspace(t0, t1, 257)
    e = np.linalg.eigvalsh(model.eval(probe))
    gap = np.min(np.diff(e, axis=1), axis=1)
    hd = np.linalg.norm(model.eval_derivative(probe, 1), 2, axis=(1, 2))
    rate = max(np.max(e[:, -1] - e[:, 0]), np.max(hd / gap))
    k = int(np.ceil(32 * (t1 - t0) * rate / (2 * np.pi)))
    k = min(max(k, 256), MAX_ADAPTIVE_SAMPLES - 1)
    return k + (k % 2) + 1


def build_grid(scn: Scenario, model) -> np.ndarray:
    t0, t1 = scn.t_start / scn.epsilon, scn.t_end / scn.epsilon
    samples = scn.samples
    if samples == "adaptive":
        samples = _adaptive_samples(model, t0, t1)
    return np.linspace(t0, t1, samples)


def _argmax(y):
    y = np.asarray(y, dtype=float)
    if np.all(np.isnan(y)):
        return None
    return int(np.nanargmax(y))


def _verdict(value, threshold, k, t, series, column, kind="max"):
    return {"value": value, "threshold": threshold, "pass": bool(value <= threshold),
            "statistic": kind, "series": series, "column": column, "row": k + 1, "t": t}


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not np.isfinite(x) else x
    return x


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else (str(c) if isinstance(c, (int, np.integer))
                                                      else _fmt(c)) for c in r])


def _schwinger_oracles(params, grid, U, criteria):
    Ua = schwinger_analytic(params, grid)
    rows, diff = [], np.max(np.abs(U - Ua), axis=(1, 2))
    closed = np.abs(params.omega * np.sin(params.theta)) / np.abs(
        params.omega0 - params.omega * np.cos(params.theta))
    out = {"max_propagator_error": float(np.max(diff))}
    if criteria is not None:
        g = criteria.generalized
        out["max_generalized_error"] = float(np.nanmax(np.abs(g - closed)))
    for k, t in enumerate(grid):
        rows.append([t, diff[k], closed, "" if criteria is None else criteria.generalized[k]])
    return out, ["t", "propagator_error", "generalized_closed_form", "generalized"], rows


def run(scn: Scenario, output_dir=None, seed=None, echo=False) -> DiagnosticReport:
    """Run the full pipeline for one scenario and write its outputs.

    Series go to ``output_dir/<name>`` (or the scenario's ``output``);
    ``summary.json`` holds verdicts, maxima and margins.  Module errors are
    re-raised with the scenario name attached.
    """
    try:
        return _run(scn, output_dir, seed, echo)
    except ConfigError:
        raise
    except AdiabaticityError as exc:
        raise type(exc)(f"[scenario {scn.name}] {exc}") from exc


def _out_dir(scn, output_dir):
    if output_dir is not None:
        return Path(output_dir) / scn.name
    if scn.output is not None:
        return Path(scn.output)
    return Path("adiabaticity-out") / scn.name


def _run(scn: Scenario, output_dir, seed, echo):
    start = time.perf_counter()
    out = _out_dir(scn, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(scn, seed)
    grid = build_grid(scn, model)
    n = scn.tracked_level
    thr = scn.thresholds
    opt = scn.options
    curve = eigencurves(model, grid, scn.gauge)
    frame = build_frame(curve, n)
    paths, summary, verdicts = {}, {}, {}
    summary["family"] = scn.family
    summary["dimension"] = model.dimension
    summary["samples"] = len(grid)
    summary["t_start"], summary["t_end"] = float(grid[0]), float(grid[-1])
    summary["epsilon"] = scn.epsilon
    if scn.family == "random_smooth":
        summary["seed"] = model.params.get("seed")

    curve.to_csv(out / "spectrum.csv", n)
    paths["spectrum"] = "spectrum.csv"

    crit = None
    if "criteria" in scn.analyses:
        crit = criteria_series(frame, normalization=opt["normalization"], norm=opt["norm"])
        crit.to_csv(out / "criteria.csv")
        paths["criteria"] = "criteria.csv"
        for key, column in (("standard", "standard"), ("generalized", "generalized"),
                            ("cond13", "cond13")):
            k = _argmax(getattr(crit, key))
            if k is None:
                continue
            v = float(getattr(crit, key)[k])
            summary[f"max_{key}"] = v
            verdicts[key] = _verdict(v, thr["criteria"], k, float(grid[k]), "criteria.csv", column)
        k = len(grid) - 1
        summary["cond14_total"] = float(crit.cond14_integral[k])
        verdicts["cond14"] = _verdict(summary["cond14_total"], thr["criteria"], k,
                                      float(grid[k]), "criteria.csv", "cond14_integral", "final")
        summary["monotonicity_changes"] = crit.monotonicity_changes
        summary["oscillation_flag"] = crit.oscillation_flag

    report = None
    if "bounds" in scn.analyses:
        report = bound_report(frame)
        report.to_csv(out / "bounds.csv")
        paths["bounds"] = "bounds.csv"
        summary["bw_converged_fraction"] = float(np.mean(report.bw_converged))
        summary["key_bound_evaluable"] = report.key_bound is not None
        summary["final_jrs_bound"] = float(report.jrs_bound[-1])
        summary["final_jrs_integral"] = float(
            jrs_bound(model, curve, n, part="integral")[-1])
        bf = report.bauer_fike_rhs - report.bauer_fike_lhs
        summary["min_bauer_fike_margin"] = float(np.min(bf))

    if "bw" in scn.analyses:
        bw = bw_series(frame)
        _write_rows(out / "bw.csv", ["t", "E_prime_n", "Delta_prime", "iterations", "converged"],
                    [[t, bw.E_prime_n[k], bw.Delta_prime[k], int(bw.iterations[k]),
                      int(bw.converged[k])] for k, t in enumerate(grid)])
        paths["bw"] = "bw.csv"
        summary["bw_max_iterations"] = int(np.max(bw.iterations))

    evo = None
    if "propagate" in scn.analyses:
        evo = propagate(model, curve, n, tol=opt["tol"],
                        E_prime_n=None if report is None else report.E_prime_n)
        evo.to_csv(out / "evolution.csv")
        paths["evolution"] = "evolution.csv"
        infid = 1.0 - evo.fidelity
        k = int(np.argmax(infid))
        summary["min_fidelity"] = float(evo.fidelity[k])
        summary["max_unitarity_error"] = float(np.max(unitarity_error(evo.U)))
        summary["unitarity_ok"] = bool(summary["max_unitarity_error"] <= UNITARITY_TOL)
        summary["max_phase_mismatch"] = float(np.max(evo.phase_mismatch))
        summary["max_usual_phase_mismatch"] = float(np.max(evo.usual_mismatch))
        verdicts["infidelity"] = _verdict(float(infid[k]), thr["infidelity"], k, float(grid[k]),
                                          "evolution.csv", "fidelity", "max of 1 - fidelity")
        if report is not None:
            kb = report.key_bound if report.key_bound is not None else report.key_bound_dense
            summary["key_bound_source"] = ("brillouin_wigner" if report.key_bound is not None
                                           else "dense_eigenvector")
            summary["min_key_bound_margin"] = float(np.min(kb - evo.phase_mismatch))
            summary["min_jrs_margin"] = float(np.min(report.jrs_bound - infid))
            summary["min_zeno_margin"] = float(np.min(report.zeno_bound - infid))
        summary["max_fidelity_relation_excess"] = float(
            np.max(2.0 * infid - evo.phase_mismatch ** 2))

    if "oracles" in scn.analyses:
        oracle = {}
        p = model.params
        if "schwinger" in p:
            U = evo.U if evo is not None else None
            if U is None:
                U = evolve(model, grid, opt["tol"])
            res, header, rows = _schwinger_oracles(p["schwinger"], grid, U, crit)
            oracle.update(res)
            _write_rows(out / "oracles.csv", header, rows)
            paths["oracles"] = "oracles.csv"
        if "two_level" in p and crit is not None:
            ratio, integrand = two_level_conditions(p["two_level"], grid)
            ref = cumulative_integral(integrand, grid)
            oracle["max_cond13_vs_ratio15"] = float(np.nanmax(np.abs(crit.cond13 - ratio)))
            oracle["cond14_vs_integral16"] = float(abs(crit.cond14_integral[-1] - ref[-1]))
        if "cycling_lz" in p and scn.passages:
            pred, meas = lz_multipassage(p["cycling_lz"], list(scn.passages), n=n,
                                         tol=opt["tol"])
            rows = [[m, pred.p1, pred.Theta, pred.Theta_approx, pred.at(m), meas[m]]
                    for m in scn.passages]
            _write_rows(out / "stueckelberg.csv",
                        ["M", "p1", "Theta", "Theta_approx", "predicted", "measured"], rows)
            paths["stueckelberg"] = "stueckelberg.csv"
            oracle["p1"] = pred.p1
            oracle["Theta"] = pred.Theta
            oracle["passages"] = {str(m): {"predicted": pred.at(m), "measured": meas[m]}
                                  for m in scn.passages}
        summary["oracles"] = oracle

    discrepancies = []
    measured = verdicts.get("infidelity")
    for key in ("standard", "generalized", "cond13", "cond14"):
        v = verdicts.get(key)
        if v is None or measured is None:
            continue
        if v["pass"] and not measured["pass"]:
            discrepancies.append(f"{key} criterion predicts adiabatic evolution but the measured "
                                 f"infidelity {measured['value']:.3g} exceeds "
                                 f"{measured['threshold']:.3g}")
        elif not v["pass"] and measured["pass"]:
            discrepancies.append(f"{key} criterion fails ({v['value']:.3g}) although the measured "
                                 f"evolution stays adiabatic")
    if measured is not None:
        verdict = "adiabatic" if measured["pass"] else "non-adiabatic"
    elif verdicts:
        verdict = ("adiabatic (predicted)" if all(v["pass"] for v in verdicts.values())
                   else "non-adiabatic (predicted)")
    else:
        verdict = "undetermined"

    rep = DiagnosticReport(name=scn.name, verdicts=verdicts, series_paths=paths,
                           summary=summary, gauge=str(curve.gauge), output_dir=str(out),
                           discrepancies=discrepancies, verdict=verdict)
    if "oracles" in summary and "passages" in summary["oracles"]:
        rep.rows = [{"M": m, **d} for m, d in summary["oracles"]["passages"].items()]
    with open(out / "summary.json", "w") as fh:
        json.dump(_json_safe(rep.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["summary"] = "summary.json"
    if echo:
        print(format_report(rep, time.perf_counter() - start))
    return rep


def format_report(rep: DiagnosticReport, elapsed=None) -> str:
    lines = [f"scenario: {rep.name}", f"  verdict: {rep.verdict}", f"  gauge: {rep.gauge}"]
    for key, v in rep.verdicts.items():
        mark = "pass" if v["pass"] else "FAIL"
        lines.append(f"  {key}: {mark} ({v['statistic']} {_fmt(v['value'])} vs "
                     f"{_fmt(v['threshold'])}; {v['series']} row {v['row']})")
    for d in rep.discrepancies:
        lines.append(f"  discrepancy: {d}")
    for key in ("min_fidelity", "min_key_bound_margin", "cond14_total"):
        if key in rep.summary:
            lines.append(f"  {key}: {_fmt(rep.summary[key])}")
    lines.append(f"  output: {rep.output_dir}")
    if elapsed is not None:
        lines.append(f"  elapsed: {elapsed:.2f} s")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# sweeps


def _coerce(text):
    if isinstance(text, (int, float)):
        return text
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"sweep value {text!r} is not a number") from exc


def sweep_variants(scn: Scenario, parameter: str, values) -> list:
    values = [_coerce(v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    variants = []
    for v in values:
        tag = f"{scn.name}-{parameter}={v}"
        if parameter == "M":
            if scn.family != "cycling_lz":
                raise ConfigError("M sweeps need the cycling_lz family")
            if not isinstance(v, int) or v <= 0 or v % 2:
                raise ConfigError(f"M must be a positive even integer, got {v}")
            variants.append(replace(scn, name=tag, passages=(v,), output=None))
        elif parameter == "epsilon":
            if not v > 0:
                raise ConfigError("epsilon must be positive")
            variants.append(replace(scn, name=tag, epsilon=float(v), output=None))
        else:
            if scn.file is not None:
                raise ConfigError("tabulated models have no sweepable parameters")
            allowed = set(inspect.signature(hm.FAMILIES[scn.family]).parameters) - {"t_span"}
            if parameter not in allowed:
                raise ConfigError(f"family {scn.family} has no parameter {parameter!r}")
            variants.append(replace(scn, name=tag, params={**scn.params, parameter: v},
                                    output=None))
    return variants


SWEEP_COLUMNS = ["parameter", "value", "verdict", "max_standard", "max_generalized", "max_cond13",
                 "cond14_total", "min_fidelity", "final_jrs_bound", "jrs_integral", "M", "p1",
                 "Theta", "predicted", "measured"]


def sweep(scn: Scenario, parameter: str, values, output_dir=None, threads=1, seed=None,
          echo=False) -> list:
    """Independent runs over ``values`` plus a combined ``sweep.csv``.

    Rows are one per value, or one per (value, M) when passages are
    measured.
    """
    variants = sweep_variants(scn, parameter, values)
    root = Path(output_dir) if output_dir is not None else _out_dir(scn, None)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        reports = list(pool.map(lambda s: run(s, root, seed, echo), variants))
    rows = []
    for s, rep in zip(variants, reports):
        value = {"M": s.passages[0] if s.passages else "", "epsilon": s.epsilon}.get(
            parameter, s.params.get(parameter))
        su = rep.summary
        jrs_int = su.get("final_jrs_integral", "")
        base = [parameter, value, rep.verdict] + [su.get(k, "") for k in (
            "max_standard", "max_generalized", "max_cond13", "cond14_total", "min_fidelity",
            "final_jrs_bound")] + [jrs_int]
        passes = su.get("oracles", {}).get("passages", {})
        if passes:
            for m, d in passes.items():
                rows.append(base + [int(m), su["oracles"]["p1"], su["oracles"]["Theta"],
                                    d["predicted"], d["measured"]])
        else:
            rows.append(base + ["", "", "", "", ""])
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_cell(c) for c in r])
    return reports


def _cell(c):
    if isinstance(c, str):
        return c
    if isinstance(c, (bool, np.bool_)):
        return str(bool(c))
    if isinstance(c, (int, np.integer)):
        return str(c)
    return _fmt(c)


# --------------------------------------------------------------------------
# command line


def _common(suppress):
    # subcommands must not reset options given before the subcommand name
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=d(None), help="root directory for scenario outputs")
    common.add_argument("--threads", type=int, default=d(1),
                        help="parallel scenarios or sweep points")
    common.add_argument("--seed", type=int, default=d(None),
                        help="seed override for random-matrix scenarios")
    return common


def _parser():
    common = _common(suppress=True)
    p = argparse.ArgumentParser(prog="adiabaticity", parents=[_common(suppress=False)],
                                description="Adiabaticity criteria, bounds and exact evolution.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one or more scenarios")
    r.add_argument("configs", nargs="+", help="scenario YAML files or shipped scenario names")
    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter of a scenario")
    s.add_argument("config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated list")
    sub.add_parser("list-families", parents=[common], help="model families and their parameters")
    sub.add_parser("list-scenarios", parents=[common], help="shipped scenario files")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-families":
            for name, fn in hm.FAMILIES.items():
                if name == "tabulated":
                    print("tabulated: model.file = CSV with header t, re(H[0][0]), im(H[0][0]), ...")
                    continue
                params = [k for k in inspect.signature(fn).parameters if k != "t_span"]
                print(f"{name}: {', '.join(params)}")
            return 0
        if args.command == "list-scenarios":
            for name in builtin_scenarios():
                print(name)
            return 0
        if args.command == "run":
            scns = [load_scenario(c) for c in args.configs]
            with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
                reps = list(pool.map(lambda s: run(s, args.output_dir, args.seed), scns))
            for rep in reps:
                print(format_report(rep))
            return 0
        scn = load_scenario(args.config)
        values = [v for v in args.values.split(",") if v.strip()]
        reps = sweep(scn, args.param, values, args.output_dir, args.threads, args.seed)
        for rep in reps:
            print(format_report(rep))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AdiabaticityError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
