"""Batch runner: ``maxlab <subcommand> [--config FILE] --out DIR``.

Configuration is an INI file with the sections and keys listed in
:data:`SCHEMA`; unknown sections or keys are fatal. Every subcommand writes
gnuplot-ready CSV files and ``manifest.json`` into the output directory.

Exit codes: 0 pass, 2 configuration or usage error, 3 invariant violated.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from maxlab import __version__
from maxlab import diagnostics as diag
from maxlab import evolution as evo
from maxlab import lp
from maxlab import symbols as sym
from maxlab.errors import ConfigError, MaxlabError
from maxlab.fields import TorusGrid, field_parity
from maxlab.norms import NormReport, sobolev_norm
from maxlab.presets import COEFFICIENT_PRESETS, DATA_PRESETS, coefficient_preset, data_preset
from maxlab.reflect import compat_csv, compatibility_residuals
from maxlab.snapshots import write_snapshot

log = logging.getLogger("maxlab")

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 2, 3

SUBCOMMANDS = ("linear2d", "linear3d", "kerr2d", "check-symbols", "check-helmholtz", "check-envelopes",
               "check-compat", "strichartz-sweep", "cyl-consistency")


# config schema


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str


SCHEMA: dict[str, dict[str, Key]] = {
    "grid": {
        "dim": Key(int, None, "must match the subcommand when given"),
        "n": Key(int, None, "points per axis (subcommand default)"),
        "length": Key(float, 2 * math.pi, "period of every axis"),
    },
    "run": {
        "T": Key(float, 1.0, "final time"),
        "cfl": Key(float, 0.25, "CFL fraction, at most 0.5"),
        "dt": Key(_optional_float, None, "explicit step; 'auto' derives it from cfl"),
        "integrator": Key(str, "leapfrog", "leapfrog or rk4"),
        "nonlinearity": Key(str, None, "none or kerr2d (subcommand default)"),
        "seed": Key(int, 0, "seed for randomized data and samples"),
        "snapshot_every": Key(int, 0, "write snapshots/t_<i>.bin every this many steps (0: first and last)"),
        "reversal_check": Key(_bool, True, "run forward and back and report the round-trip error"),
        "convergence_check": Key(_bool, True, "kerr2d: measure the dt-halving error ratio"),
    },
    "coefficients": {
        "preset": Key(str, None, "one of " + ", ".join(COEFFICIENT_PRESETS)),
    },
    "data": {
        "preset": Key(str, None, "one of " + ", ".join(DATA_PRESETS)),
        "amplitude": Key(float, None, "L2 size (kerr-small: H^2 size)"),
    },
    "symbols": {
        "lams": Key(_ints, (4, 16, 64, 256), "frequency scales"),
        "count": Key(int, 1000, "samples per scale and branch"),
        "identity_count": Key(int, 10_000, "samples for the algebraic identities"),
    },
    "helmholtz": {
        "dim": Key(int, 3, "dimension"),
        "n": Key(int, 16, "coarse grid; the refined grid doubles it"),
        "count": Key(int, 50, "random fields per grid and order"),
        "torus_count": Key(int, 100, "random fields for the torus identity"),
        "orders": Key(_floats, (0.0, 1.0), "Sobolev orders s"),
    },
    "envelopes": {
        "dim": Key(int, 2, "dimension"),
        "n": Key(int, 1024, "points per axis"),
        "commutator_lams": Key(_ints, (8, 16, 32, 64, 128, 256), "bands for the commutator bound"),
        "iters": Key(int, 60, "power iterations per band"),
        "delta": Key(float, 0.25, "envelope exponent"),
        "s": Key(float, 1.0, "envelope Sobolev order"),
        "envelope_n": Key(int, 128, "grid for the envelope and mollifier checks"),
        "mollifier_ladder": Key(_floats, (2, 4, 8, 16, 32, 64), "mollification scales n"),
    },
    "compat": {
        "order": Key(int, 2, "highest compatibility order checked"),
        "tol": Key(float, 1e-10, "residual tolerance relative to max(1, ||u||_{H^{order+1}})"),
    },
    "sweep": {
        "seeds": Key(int, 20, "number of seeds (0..seeds-1)"),
        "refinements": Key(_ints, (2, 3, 4), "grid refinement levels"),
        "lams": Key(_ints, (4, 8, 16, 32, 64), "frequency scales"),
        "T": Key(float, 1.0, "time horizon"),
        "max_spread": Key(float, 100.0, "largest admissible max/min per triple"),
    },
    "cylinder": {
        "n": Key(int, 64, "2D points per axis"),
        "n3": Key(int, 128, "points along the lifted axis"),
        "T": Key(float, 1.0, "time horizon"),
        "samples": Key(int, 10, "comparison times"),
        "tol": Key(float, 1e-6, "largest admissible relative discrepancy"),
        "plateau_tol": Key(float, 1e-10, "largest admissible plateau x3-derivative"),
    },
}

# subcommand-specific defaults for keys whose schema default is None
_DEFAULTS: dict[str, dict[tuple[str, str], Any]] = {
    "linear2d": {("grid", "n"): 128, ("coefficients", "preset"): "smooth", ("data", "preset"): "random",
                 ("data", "amplitude"): 1.0, ("run", "nonlinearity"): "none"},
    "linear3d": {("grid", "n"): 48, ("coefficients", "preset"): "smooth", ("data", "preset"): "random",
                 ("data", "amplitude"): 1.0, ("run", "nonlinearity"): "none"},
    "kerr2d": {("grid", "n"): 128, ("coefficients", "preset"): "flat", ("data", "preset"): "kerr-small",
               ("data", "amplitude"): 0.05, ("run", "nonlinearity"): "kerr2d"},
    "check-symbols": {("coefficients", "preset"): "smooth", ("grid", "n"): 32},
    "check-compat": {("grid", "dim"): 3, ("grid", "n"): 32, ("coefficients", "preset"): "flat",
                     ("data", "preset"): "standing-wave", ("data", "amplitude"): 1.0},
    "cyl-consistency": {("coefficients", "preset"): "flat", ("data", "preset"): "packet",
                        ("data", "amplitude"): 1.0, ("run", "nonlinearity"): "none"},
}

_FIXED_DIM = {"linear2d": 2, "linear3d": 3, "kerr2d": 2, "cyl-consistency": 2}


class Config(dict):
    """Resolved ``{section: {key: value}}`` with every schema key present."""


def load_config(path: str | None, subcommand: str) -> Config:
    """Parse and validate ``path`` (``None``: defaults only).

    Raises
    ------
    ConfigError
        Naming the first unknown section or key in file order, or the first
        value that fails to parse.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\0none",
                                       inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
    cfg = Config({sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()})
    for (sec, key), v in _DEFAULTS.get(subcommand, {}).items():
        cfg[sec][key] = v
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{key}' in section [{sec}]")
            try:
                cfg[sec][key] = SCHEMA[sec][key].parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}' in section [{sec}]: {exc}") from exc
    _check_consistency(cfg, subcommand)
    return cfg


def _check_consistency(cfg: Config, subcommand: str) -> None:
    fixed = _FIXED_DIM.get(subcommand)
    dim = cfg["grid"]["dim"]
    if fixed is not None:
        if dim is not None and dim != fixed:
            raise ConfigError(f"grid.dim = {dim} does not match {subcommand}")
        cfg["grid"]["dim"] = fixed
    nl = cfg["run"]["nonlinearity"]
    if subcommand == "kerr2d" and nl != "kerr2d":
        raise ConfigError("kerr2d needs run.nonlinearity = kerr2d")
    if subcommand in ("linear2d", "linear3d") and nl not in (None, "none"):
        raise ConfigError(f"{subcommand} is linear; run.nonlinearity must be none")
    if subcommand == "cyl-consistency" and nl not in (None, "none", "kerr2d"):
        raise ConfigError(f"unknown nonlinearity {nl!r}")
    if cfg["coefficients"]["preset"] not in (None, *COEFFICIENT_PRESETS):
        raise ConfigError(f"unknown coefficient preset {cfg['coefficients']['preset']!r}")
    if cfg["data"]["preset"] not in (None, *DATA_PRESETS):
        raise ConfigError(f"unknown data preset {cfg['data']['preset']!r}")
    if cfg["run"]["integrator"] not in evo.INTEGRATORS:
        raise ConfigError(f"unknown integrator {cfg['run']['integrator']!r}")
    if cfg["grid"]["dim"] not in (None, 2, 3):
        raise ConfigError("grid.dim must be 2 or 3")


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


# output handling


def git_blob_hash(data: bytes) -> str:
    """Content hash computed the way ``git hash-object`` does."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class Output:
    def __init__(self, root: Path, force: bool):
        if root.exists() and (not root.is_dir() or any(root.iterdir())):
            if not force:
                raise ConfigError(f"output directory {root} exists and is not empty (use --force)")
        root.mkdir(parents=True, exist_ok=True)
        self.root = root
        self.files: list[str] = []

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.files.append(name)
        return path

    def write_snapshot(self, index: int, state) -> None:
        name = f"snapshots/t_{index}.bin"
        (self.root / "snapshots").mkdir(exist_ok=True)
        write_snapshot(self.root / name, state)
        self.files.append(name)

    def hashes(self) -> dict[str, str]:
        return {f: git_blob_hash((self.root / f).read_bytes()) for f in sorted(set(self.files))}


@dataclass
class Outcome:
    results: dict
    violations: list[str]


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else format(v, ".17g") if isinstance(v, float) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def _check(violations: list[str], ok: bool, message: str) -> None:
    if not ok:
        violations.append(message)
        log.warning("violation: %s", message)


# evolution subcommands


def _grid(cfg: Config) -> TorusGrid:
    return TorusGrid.cube(cfg["grid"]["dim"], cfg["grid"]["n"], cfg["grid"]["length"])


def _evolution_config(cfg: Config, T: float | None = None) -> evo.EvolutionConfig:
    r = cfg["run"]
    return evo.EvolutionConfig(T=r["T"] if T is None else T, cfl=r["cfl"], dt=r["dt"],
                               integrator=r["integrator"], nonlinearity=r["nonlinearity"] or "none")


def run_evolution(cfg: Config, out: Output, seed: int) -> Outcome:
    grid = _grid(cfg)
    kerr = cfg["run"]["nonlinearity"] == "kerr2d"
    coeffs = None if kerr else coefficient_preset(cfg["coefficients"]["preset"], grid)
    if kerr and cfg["coefficients"]["preset"] != "flat":
        raise ConfigError("the Kerr system is evolved with flat coefficients only")
    state = data_preset(cfg["data"]["preset"], grid, seed, cfg["data"]["amplitude"])
    config = _evolution_config(cfg)
    every = cfg["run"]["snapshot_every"]
    t0 = time.perf_counter()
    res = evo.evolve(state, coeffs, config, keep_every=1)
    timings = {"evolve": time.perf_counter() - t0}
    steps = res.steps
    keep = [0, steps] if every <= 0 else sorted(set(range(0, steps + 1, every)) | {steps})
    for i in keep:
        out.write_snapshot(i, res.history[i])

    report = NormReport(s_list=(0.0, 1.0, 2.0), q_list=(2.0, 4.0, math.inf))
    for rec, st in zip(res.records, res.history):
        report.record(st, energy=rec.energy_modified, charge=rec.charge_drift,
                      energy_raw=rec.energy, parity_defect=rec.parity_defect)
    out.write_text("norms.csv", report.to_csv())

    results: dict[str, Any] = {
        "dt": res.dt, "steps": steps,
        "energy_drift": res.max_energy_drift(modified=True),
        "energy_drift_raw": res.max_energy_drift(modified=False),
        "charge_drift": res.max_charge_drift(),
        "parity_defect": res.max_parity_defect(),
    }
    violations: list[str] = []
    # the modified energy is an exact invariant of the linear leapfrog only
    if config.integrator == "leapfrog" and not kerr:
        _check(violations, results["energy_drift"] <= 1e-9, f"energy drift {results['energy_drift']:.3e} > 1e-9")
    _check(violations, results["charge_drift"] <= 1e-10, f"charge drift {results['charge_drift']:.3e} > 1e-10")
    _check(violations, results["parity_defect"] <= 1e-12, f"parity defect {results['parity_defect']:.3e} > 1e-12")
    if cfg["run"]["reversal_check"]:
        t0 = time.perf_counter()
        err = evo.time_reversal_error(state, coeffs, config)
        timings["reversal"] = time.perf_counter() - t0
        results["reversal_error"] = err
        _check(violations, err <= 1e-8, f"time-reversal error {err:.3e} > 1e-8")

    if kerr:
        trip = max(float(np.max(np.abs(evo.kerr_invert(evo.kerr_displacement(s.E)) - s.E))) for s in res.history)
        results["kerr_round_trip"] = trip
        _check(violations, trip <= 1e-12, f"D/E round trip {trip:.3e} > 1e-12")
        boot = diag.bootstrap_functionals(res.history, kerr=True)
        out.write_text("bootstrap.csv", boot.to_csv())
        C = boot.gronwall_constant()
        results["gronwall_constant"] = C
        _check(violations, math.isfinite(C), "Gronwall constant is not finite")
        if cfg["run"]["convergence_check"]:
            t0 = time.perf_counter()
            conv = evo.convergence_ratio(state, None, config)
            timings["convergence"] = time.perf_counter() - t0
            results["convergence"] = conv
            order = 2 if config.integrator == "leapfrog" else 4
            target = 2.0 ** order
            _check(violations, abs(conv["ratio"] / target - 1) <= 0.15,
                   f"dt-halving ratio {conv['ratio']:.4f} is not within 15% of {target:g}")
    results["timings"] = timings
    return Outcome(results, violations)


# checks


def run_check_symbols(cfg: Config, out: Output, seed: int) -> Outcome:
    c = cfg["symbols"]
    rng = np.random.default_rng(seed)
    ids = sym.algebraic_identities(c["identity_count"], np.random.default_rng(seed))
    out.write_text("identities.csv", _csv(["identity", "max_residual", "holds_1e-12"],
                                          [(k, v, str(v <= 1e-12).lower()) for k, v in ids.items()]))
    rows = []
    for dim in (2, 3):
        grid = TorusGrid.cube(dim, cfg["grid"]["n"], cfg["grid"]["length"])
        coeffs = coefficient_preset(cfg["coefficients"]["preset"], grid)
        for lam in c["lams"]:
            for branch in ((None,) if dim == 2 else (1, 2, 3)):
                rows.append(sym.factorization_residual(dim, coeffs, lam, branch=branch, count=c["count"], rng=rng))
    out.write_text("residuals.csv", sym.residual_csv(rows))
    worst = max(r.max_residual for r in rows)
    orth = max(r.orthonormality_defect for r in rows)
    violations: list[str] = []
    _check(violations, worst <= 1e-10, f"factorization residual {worst:.3e} > 1e-10")
    _check(violations, orth <= 1e-12, f"orthonormality defect {orth:.3e} > 1e-12")
    return Outcome({"max_residual": worst, "orthonormality_defect": orth, "identities": ids}, violations)


def run_check_helmholtz(cfg: Config, out: Output, seed: int) -> Outcome:
    c = cfg["helmholtz"]
    dim, n, L = c["dim"], c["n"], cfg["grid"]["length"]
    rng = np.random.default_rng(seed)
    grid = TorusGrid.cube(dim, 2 * n, L)
    defects = []
    for _ in range(c["torus_count"]):
        E = diag.random_parity_field(grid, rng)
        defects.append(diag.helmholtz_ratio(E, 1.0, grid, mode="torus").identity_defect)
    rows, violations = [], []
    results: dict[str, Any] = {"torus_identity_defect": max(defects)}
    _check(violations, max(defects) <= 1e-10, f"torus Helmholtz identity defect {max(defects):.3e} > 1e-10")
    for s in c["orders"]:
        coarse = diag.helmholtz_sweep(dim, n, s, c["count"], seed, L, master_n=2 * n)
        fine = diag.helmholtz_sweep(dim, 2 * n, s, c["count"], seed, L, master_n=2 * n)
        for sw in (coarse, fine):
            rows.append((sw.grid_n, s, min(sw.ratios), max(sw.ratios), sw.constant))
        change = abs(fine.constant / coarse.constant - 1)
        results[f"s={s:g}"] = {"C_coarse": coarse.constant, "C_fine": fine.constant, "relative_change": change}
        _check(violations, change <= 0.10, f"Helmholtz constant for s={s:g} moved by {change:.1%} under refinement")
    out.write_text("helmholtz.csv", _csv(["grid", "s", "min_ratio", "max_ratio", "C"], rows))
    return Outcome(results, violations)


def run_check_envelopes(cfg: Config, out: Output, seed: int) -> Outcome:
    c = cfg["envelopes"]
    L = cfg["grid"]["length"]
    violations: list[str] = []
    results: dict[str, Any] = {}
    rng = np.random.default_rng(seed)

    # commutator with the Lipschitz profile |x_d|
    grid = TorusGrid.cube(c["dim"], c["n"], L)
    bank = lp.DyadicProjectorBank(grid)
    kappa = np.broadcast_to(np.abs(grid.mesh()[grid.normal_axis]), grid.shape).copy()
    est = [lp.commutator_decay(kappa, lam, bank, iters=c["iters"], seed=seed) for lam in c["commutator_lams"]]
    out.write_text("commutator.csv", _csv(["lambda", "norm", "lambda_times_norm"],
                                          [(e.lam, e.norm, e.scaled) for e in est]))
    sup = max(e.scaled for e in est)
    results["commutator_sup"] = sup
    _check(violations, math.isfinite(sup), "commutator bound is not finite")

    # partition of unity and envelopes on a smaller grid
    g = TorusGrid.cube(c["dim"], c["envelope_n"], L)
    b = lp.DyadicProjectorBank(g)
    f = diag.random_parity_field(g, rng, decay=1.0)
    recon = sum(b.decompose(f[0]).values())
    tele = float(np.max(np.abs(recon - f[0])) / np.max(np.abs(f[0])))
    results["partition_defect"] = tele
    _check(violations, tele <= 1e-10, f"partition of unity defect {tele:.3e} > 1e-10")
    env = lp.sharp_envelope(f, c["s"], c["delta"], b)
    out.write_text("envelope.csv", env.to_csv())
    out.write_text("band_energy.csv", lp.band_energy_csv(f, b))
    defects = {"energy": env.energy_defect(), "l2": env.l2_excess(), "slow": env.slow_variation_defect()}
    results["envelope"] = defects
    _check(violations, defects["energy"] <= 0.0, f"envelope misses a band norm by {defects['energy']:.3e}")
    _check(violations, defects["l2"] <= 0.0, f"envelope square sum exceeds its bound by {defects['l2']:.3e}")
    _check(violations, defects["slow"] <= 1e-12, f"envelope varies too fast ({defects['slow']:.3e})")

    # mollifier ladder
    parity = field_parity(g.dim, g.normal_axis)[0]
    mrows = []
    for n in c["mollifier_ladder"]:
        mol = lp.Mollifier(g, n)
        fn = np.stack([mol.apply(comp) for comp in f])
        err = sobolev_norm(fn - f, 0, g)
        pdef = max(float(np.max(np.abs(comp - p * g.mirror(comp)))) for comp, p in zip(fn, parity))
        mrows.append((n, err, pdef))
    out.write_text("mollifier.csv", _csv(["n", "l2_error", "parity_defect"], mrows))
    errs = [r[1] for r in mrows]
    pmax = max(r[2] for r in mrows)
    results["mollifier"] = {"errors": errs, "parity_defect": pmax}
    _check(violations, pmax <= 1e-12, f"mollifier parity defect {pmax:.3e} > 1e-12")
    _check(violations, all(b2 <= a2 for a2, b2 in zip(errs, errs[1:])),
           "mollifier error does not decrease along the ladder")
    return Outcome(results, violations)


def run_check_compat(cfg: Config, out: Output, seed: int) -> Outcome:
    grid = _grid(cfg)
    coeffs = coefficient_preset(cfg["coefficients"]["preset"], grid)
    state = data_preset(cfg["data"]["preset"], grid, seed, cfg["data"]["amplitude"])
    order = cfg["compat"]["order"]
    rows = compatibility_residuals(state, coeffs, order)
    out.write_text("compat.csv", compat_csv(rows))
    scale = max(1.0, sobolev_norm(state.components, order + 1, grid))
    worst = max((r[2] for r in rows), default=0.0) / scale
    violations: list[str] = []
    _check(violations, worst <= cfg["compat"]["tol"], f"compatibility residual {worst:.3e} > {cfg['compat']['tol']:g}")
    return Outcome({"max_relative_residual": worst, "conditions": len(rows)}, violations)


def run_strichartz_sweep(cfg: Config, out: Output, seed: int, workers: int) -> Outcome:
    c = cfg["sweep"]
    seeds = range(seed, seed + c["seeds"])
    members = diag.sweep_members(seeds=seeds, refinements=c["refinements"], lams=c["lams"], T=c["T"])
    t0 = time.perf_counter()
    rows = diag.run_sweep(members, workers)
    elapsed = time.perf_counter() - t0
    summary = diag.sweep_summary(rows)
    out.write_text("sweep.csv", diag.sweep_csv(rows))
    out.write_text("summary.json", diag.summary_json(summary) + "\n")
    violations: list[str] = []
    for s in summary:
        tag = f"(p={s.p}, q={s.q}, {s.dim}D)"
        _check(violations, s.spread <= c["max_spread"], f"{tag} spread {s.spread:.3g} > {c['max_spread']:g}")
        _check(violations, s.monotone, f"{tag} medians increase under refinement: {s.violations}")
    return Outcome({"members": len(rows), "seconds": elapsed,
                    "spreads": {f"{s.dim}D p={s.p} q={s.q}": s.spread for s in summary}}, violations)


def run_cyl_consistency(cfg: Config, out: Output, seed: int) -> Outcome:
    c = cfg["cylinder"]
    grid = TorusGrid.cube(2, c["n"], cfg["grid"]["length"])
    kerr = cfg["run"]["nonlinearity"] == "kerr2d"
    coeffs = None if kerr else coefficient_preset(cfg["coefficients"]["preset"], grid)
    state = data_preset(cfg["data"]["preset"], grid, seed, cfg["data"]["amplitude"])
    config = _evolution_config(cfg, T=c["T"])
    rep = evo.cylindrical_lift_and_compare(state, config, coeffs, n3=c["n3"], samples=c["samples"])
    out.write_text("cylinder.csv", _csv(["time", "relative_discrepancy"], zip(rep.times, rep.discrepancy)))
    violations: list[str] = []
    _check(violations, rep.max_discrepancy <= c["tol"], f"lift discrepancy {rep.max_discrepancy:.3e} > {c['tol']:g}")
    _check(violations, rep.plateau_derivative <= c["plateau_tol"],
           f"plateau x3-derivative {rep.plateau_derivative:.3e} > {c['plateau_tol']:g}")
    return Outcome({"max_discrepancy": rep.max_discrepancy, "plateau_derivative": rep.plateau_derivative,
                    "plateau_radius": rep.plateau_radius, "horizon": rep.horizon}, violations)


# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"maxlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="overrides run.seed")
        p.add_argument("--workers", type=int, default=1, help="concurrent sweep members")
        p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
        p.add_argument("--preset", help="overrides data.preset")
    return ap


def _setup_logging() -> None:
    level = os.environ.get("MAXLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def run(command: str, config_path: str | None, out_dir: str, seed: int | None = None, workers: int = 1,
        force: bool = False, preset: str | None = None) -> int:
    """Execute one subcommand; returns the process exit status."""
    try:
        cfg = load_config(config_path, command)
        if preset is not None:
            if preset not in DATA_PRESETS:
                raise ConfigError(f"unknown data preset {preset!r}")
            cfg["data"]["preset"] = preset
        if seed is not None:
            cfg["run"]["seed"] = seed
        if workers < 1:
            raise ConfigError("--workers must be at least 1")
        out = Output(Path(out_dir), force)
    except ConfigError as exc:
        print(f"maxlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    s = cfg["run"]["seed"]
    t0 = time.perf_counter()
    try:
        if command in ("linear2d", "linear3d", "kerr2d"):
            outcome = run_evolution(cfg, out, s)
        elif command == "check-symbols":
            outcome = run_check_symbols(cfg, out, s)
        elif command == "check-helmholtz":
            outcome = run_check_helmholtz(cfg, out, s)
        elif command == "check-envelopes":
            outcome = run_check_envelopes(cfg, out, s)
        elif command == "check-compat":
            outcome = run_check_compat(cfg, out, s)
        elif command == "strichartz-sweep":
            outcome = run_strichartz_sweep(cfg, out, s, workers)
        else:
            outcome = run_cyl_consistency(cfg, out, s)
    except ConfigError as exc:
        print(f"maxlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MaxlabError as exc:
        print(f"maxlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    wall = time.perf_counter() - t0

    echo = {sec: {k: _jsonable(v) for k, v in keys.items()} for sec, keys in cfg.items()}
    config_text = json.dumps(echo, sort_keys=True)
    manifest = {
        "experiment": f"{command}-{hashlib.sha1(config_text.encode()).hexdigest()[:12]}",
        "command": command,
        "version": __version__,
        "config": echo,
        "outputs": out.hashes(),
        "results": outcome.results,
        "violations": outcome.violations,
        "timings": {"wall_seconds": wall},
        "status": "pass" if not outcome.violations else "violation",
    }
    (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
    for v in outcome.violations:
        print(f"maxlab: invariant violated: {v}", file=sys.stderr)
    print(f"{command}: {manifest['status']} ({wall:.1f} s) -> {out.root}")
    return EXIT_VIOLATION if outcome.violations else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return run(args.command, args.config, args.out, args.seed, args.workers, args.force, args.preset)


if __name__ == "__main__":
    sys.exit(main())
