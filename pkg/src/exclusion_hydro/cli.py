"""Command line driver: ``simulate``, ``pde``, ``compare``, ``ensembles``, ``gibbs-check``.

Configuration files are INI style::

    [model]       theta, alpha, beta, n_sites
    [initial]     preset = step | constant | stationary | piecewise
                  step:      left, bulk, right
                  constant:  value
                  stationary: mass (flat chemical potential holding that mass)
                  piecewise: points = u:rho, u:rho | u:rho, ... | ...
                             (one breakpoint list per region, linear in between)
    [simulation]  t_end, snapshots (list) or n_snapshots, replicas, seed, block, averaging
    [pde]         cells, safety, refine
    [compare]     averaging, tolerance, gap_tolerance
    [ensembles]   rho_step, lambda_min, lambda_max, lambda_step
    [gibbs]       samples, lln_samples, seed

Exit status: 0 success, 2 invalid input, 1 failure while running (including
a failed check in ``gibbs-check`` or ``compare``).
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .ensembles import EnsembleTable, lambda_of_rho
from .gibbs import (
    GibbsSpec,
    enumerate_distribution,
    exact_marginals,
    sample_chain,
    total_variation,
)
from .kmc import RNG_NAME, bernoulli_configuration, run_replicas
from .model import ModelParams
from .observables import (
    DensityProfile,
    interface_traces,
    normalized_averaged_empirical,
    read_profile_csv,
    replica_mean_profile,
    sine_mode,
    standard_battery,
    trapezoid,
    two_block_potential_gap,
    write_profile_csv,
)
from .pde import _cell_integrals, cell_centers, initial_state, solve, stationary_profile, weak_residual

SCHEMA = 1


class ConfigError(ValueError):
    """Invalid configuration or arguments."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class InitialProfile:
    preset: str = "step"
    values: Dict[str, object] = field(default_factory=dict)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        v = self.values
        if self.preset == "constant":
            return np.full(u.shape, v["value"])
        if self.preset in ("step", "stationary"):
            return np.where(u < 0, v["left"], np.where(u <= 1, v["bulk"], v["right"]))
        regions = v["points"]
        out = np.empty(u.shape)
        masks = (u < 0, (u >= 0) & (u <= 1), u > 1)
        for pts, mask in zip(regions, masks):
            xs, ys = zip(*pts)
            out[mask] = np.interp(u[mask], xs, ys)
        return out

    def describe(self):
        return {"preset": self.preset, **{k: v for k, v in self.values.items()}}


def _parse_points(text: str):
    regions = []
    for chunk in text.split("|"):
        pts = []
        for item in chunk.split(","):
            if item.strip():
                a, b = item.split(":")
                pts.append((float(a), float(b)))
        if not pts or any(np.diff([p[0] for p in pts]) <= 0):
            raise ConfigError("breakpoints must be increasing and non-empty in every region")
        regions.append(pts)
    if len(regions) != 3:
        raise ConfigError("piecewise profile needs three regions separated by '|'")
    return regions


def _float_list(text: str) -> List[float]:
    return [float(s) for s in text.replace(",", " ").split()]


@dataclass
class RunConfig:
    params: ModelParams
    initial: InitialProfile
    t_end: float = 0.5
    snapshots: List[float] = field(default_factory=lambda: [0.0, 0.5])
    replicas: int = 8
    seed: int = 0
    block: int = 8
    averaging: int = 16
    cells: int = 100
    safety: float = 0.4
    refine: bool = False
    tolerance: float = 0.05
    gap_tolerance: Optional[float] = None
    rho_step: float = 0.01
    lambda_min: float = -8.0
    lambda_max: float = 8.0
    lambda_step: float = 0.1
    gibbs_samples: int = 1_000_000
    lln_samples: int = 10_000

    def describe(self):
        p = self.params
        return {
            "model": {"theta": p.theta, "alpha": p.alpha, "beta": p.beta, "n_sites": p.n_sites, "q": p.q},
            "initial": self.initial.describe(),
            "simulation": {
                "t_end": self.t_end, "snapshots": list(self.snapshots), "replicas": self.replicas,
                "seed": self.seed, "block": self.block, "averaging": self.averaging,
            },
            "pde": {"cells": self.cells, "safety": self.safety, "refine": self.refine},
            "compare": {"tolerance": self.tolerance, "gap_tolerance": self.gap_tolerance},
        }


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> RunConfig:
    """Reads and validates a configuration file; ``overrides`` come from command line flags."""
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc

    def get(section, key, cast, default):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                return cast(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
        return default

    try:
        params = ModelParams(
            get("model", "theta", float, 1.0), get("model", "alpha", float, 2.0),
            get("model", "beta", float, 0.0), get("model", "n_sites", int, 32),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    preset = get("initial", "preset", str, "step").strip()
    if preset == "step":
        values = {k: get("initial", k, float, d) for k, d in (("left", 0.8), ("bulk", 0.2), ("right", 0.2))}
    elif preset == "constant":
        values = {"value": get("initial", "value", float, 0.5)}
    elif preset == "stationary":
        mass = get("initial", "mass", float, 1.5)
        if not 0 < mass < 3:
            raise ConfigError("stationary mass must lie in (0, 3)")
        _, (a, b, c) = stationary_profile(mass, EnsembleTable.from_params(params))
        values = {"mass": mass, "left": a, "bulk": b, "right": c}
    elif preset == "piecewise":
        if not cp.has_option("initial", "points"):
            raise ConfigError("piecewise profile needs [initial] points")
        values = {"points": _parse_points(cp.get("initial", "points"))}
    else:
        raise ConfigError(f"unknown initial preset {preset!r}")
    initial = InitialProfile(preset, values)
    probe = initial(np.linspace(-1, 2, 3001))
    if np.any(probe < 0) or np.any(probe > 1):
        raise ConfigError("initial densities must lie in [0, 1]")

    cfg = RunConfig(params, initial)
    cfg.t_end = get("simulation", "t_end", float, cfg.t_end)
    if cp.has_option("simulation", "snapshots"):
        cfg.snapshots = get("simulation", "snapshots", _float_list, None)
    else:
        n_snap = get("simulation", "n_snapshots", int, 2)
        if n_snap < 1:
            raise ConfigError("n_snapshots must be positive")
        cfg.snapshots = [float(t) for t in np.linspace(0.0, cfg.t_end, n_snap)] if n_snap > 1 else [cfg.t_end]
    cfg.replicas = get("simulation", "replicas", int, cfg.replicas)
    cfg.seed = get("simulation", "seed", int, cfg.seed)
    cfg.block = get("simulation", "block", int, cfg.block)
    cfg.averaging = get("simulation", "averaging", int, cfg.averaging)
    cfg.averaging = get("compare", "averaging", int, cfg.averaging)
    cfg.cells = get("pde", "cells", int, cfg.cells)
    cfg.safety = get("pde", "safety", float, cfg.safety)
    cfg.refine = get("pde", "refine", lambda s: s.strip().lower() in ("1", "true", "yes", "on"), cfg.refine)
    cfg.tolerance = get("compare", "tolerance", float, cfg.tolerance)
    cfg.gap_tolerance = get("compare", "gap_tolerance", float, cfg.gap_tolerance)
    cfg.rho_step = get("ensembles", "rho_step", float, cfg.rho_step)
    cfg.lambda_min = get("ensembles", "lambda_min", float, cfg.lambda_min)
    cfg.lambda_max = get("ensembles", "lambda_max", float, cfg.lambda_max)
    cfg.lambda_step = get("ensembles", "lambda_step", float, cfg.lambda_step)
    cfg.gibbs_samples = get("gibbs", "samples", int, cfg.gibbs_samples)
    cfg.lln_samples = get("gibbs", "lln_samples", int, cfg.lln_samples)
    if cp.has_option("gibbs", "seed"):
        cfg.seed = get("gibbs", "seed", int, cfg.seed)

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    n = cfg.params.n_sites
    s = np.asarray(cfg.snapshots, dtype=float)
    if not math.isfinite(cfg.t_end) or cfg.t_end < 0:
        raise ConfigError("t_end must be a non-negative number")
    if s.size == 0 or np.any(np.diff(s) <= 0) or s[0] < 0 or s[-1] > cfg.t_end:
        raise ConfigError("snapshot times must be strictly increasing and inside [0, t_end]")
    if cfg.replicas < 1:
        raise ConfigError("replicas must be positive")
    if cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not 1 <= cfg.block <= n // 4:
        raise ConfigError(f"block half-width must lie in [1, N/4] = [1, {n // 4}]")
    if not 3 <= cfg.averaging <= n // 2 + 1:
        raise ConfigError(f"averaging depth must lie in [3, N/2 + 1] = [3, {n // 2 + 1}]")
    if cfg.cells < 2 or not 0 < cfg.safety <= 1:
        raise ConfigError("pde needs at least 2 cells per region and safety in (0, 1]")
    if not 0 < cfg.rho_step < 0.5 or not cfg.lambda_min < cfg.lambda_max or cfg.lambda_step <= 0:
        raise ConfigError("invalid ensembles grid")
    if cfg.gibbs_samples < 1 or cfg.lln_samples < 1:
        raise ConfigError("sample counts must be positive")


# ---------------------------------------------------------------------------
# output helpers


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_table(path: Path, header: Sequence[str], rows, meta: Optional[dict] = None) -> None:
    lines = [f"#{k}: {v}" for k, v in (meta or {}).items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_table(path: Path):
    header = None
    rows = []
    for line in path.read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
        else:
            rows.append([float(v) for v in line.split(",")])
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def _manifest(command: str, cfg: RunConfig, files: List[str], extra: Optional[dict] = None) -> dict:
    out = {
        "schema": SCHEMA,
        "command": command,
        "version": __version__,
        "rng": RNG_NAME,
        "config": cfg.describe(),
        "files": sorted(files),
    }
    out.update(extra or {})
    return out


def _profile_files(directory: Path, prefix: str) -> List[Path]:
    files = sorted(directory.glob(f"{prefix}_*.csv"))
    if not files:
        raise ConfigError(f"no {prefix}_*.csv files in {directory}")
    return files


# ---------------------------------------------------------------------------
# pairings used by compare


def sim_pairing(profile_values: np.ndarray, G, n: int, k: int) -> float:
    """Averaged empirical pairing of a replica-mean occupation profile (weights normalised)."""
    return float(normalized_averaged_empirical(profile_values, G, n, k))


def pde_pairing(cells: np.ndarray, G) -> float:
    """``int rho G`` of a cell-average profile on ``3M`` cells."""
    m = cells.shape[-1] // 3
    g, _ = _cell_integrals(G, m)
    return float(np.asarray(cells) @ g)


def pairing_distances(times, sim_profiles, n, pde_cells, k, battery=None) -> Dict[str, float]:
    """Trapezoid-in-time integral of the pairing gap, for each test function."""
    battery = standard_battery() if battery is None else battery
    out = {}
    for G in battery:
        gap = [abs(sim_pairing(s, G, n, k) - pde_pairing(c, G)) for s, c in zip(sim_profiles, pde_cells)]
        out[G.name] = trapezoid(gap, times)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, out: Path, threads: Optional[int] = None) -> dict:
    params = cfg.params
    n = params.n_sites
    times = np.asarray(cfg.snapshots, dtype=float)

    def initial(rng):
        return bernoulli_configuration(params, cfg.initial, rng)

    res = run_replicas(params, initial, cfg.replicas, cfg.seed, cfg.t_end, times, threads)
    table = EnsembleTable.from_params(params)
    u = np.arange(-n, 2 * n + 1) / n
    files = []
    trace_rows = []
    for i, t in enumerate(times):
        occ = res.configs[:, i, :].astype(float)
        if cfg.replicas >= 2:
            mean, se = replica_mean_profile(occ)
            per_rep = interface_traces(occ, cfg.block, n)
            tr, tr_se = replica_mean_profile(per_rep)
        else:
            mean, se = occ[0], np.zeros_like(occ[0])
            tr = interface_traces(occ[0], cfg.block, n)
            tr_se = np.zeros(4)
        meta = {"source": "simulation", "N": n, "l": cfg.block, "k": cfg.averaging, "t": repr(float(t)),
                "replicas": cfg.replicas, "seed": cfg.seed}
        name = f"sim_profile_{i:04d}.csv"
        write_profile_csv(out / name, DensityProfile(u, mean, se, meta))
        files.append(name)
        gap0, gap1, clamped = two_block_potential_gap(tr, table)
        trace_rows.append([t, *tr, *tr_se, gap0, gap1, float(clamped)])
    _write_table(
        out / "sim_traces.csv",
        ["t", "rho_0m", "rho_0p", "rho_1m", "rho_1p", "se_0m", "se_0p", "se_1m", "se_1p",
         "gap0", "gap1", "clamped"],
        trace_rows, {"source": "simulation", "N": n, "l": cfg.block},
    )
    files.append("sim_traces.csv")
    counts = res.configs.sum(axis=2)
    extra = {
        "seeds": res.seeds,
        "events": [int(e) for e in res.events],
        "violations": int(res.violations.sum()),
        "particle_count_constant": bool(np.all(counts == counts[:, :1])),
    }
    manifest = _manifest("simulate", cfg, files + ["manifest.json"], extra)
    _write_json(out / "manifest.json", manifest)
    return manifest


def _pde_run(cfg: RunConfig, m: int):
    table = EnsembleTable.from_params(cfg.params)
    state = initial_state(cfg.initial, m, table)
    return solve(state, cfg.t_end, cfg.snapshots, cfg.safety)


def _coarsen(cells: np.ndarray, factor: int) -> np.ndarray:
    return cells.reshape(cells.shape[:-1] + (-1, factor)).mean(axis=-1)


def cmd_pde(cfg: RunConfig, out: Path) -> dict:
    series = _pde_run(cfg, cfg.cells)
    m = cfg.cells
    u = cell_centers(m)
    files = []
    for i, t in enumerate(series.times):
        meta = {"source": "pde", "M": m, "t": repr(float(t))}
        name = f"pde_profile_{i:04d}.csv"
        write_profile_csv(out / name, DensityProfile(u, np.clip(series.cells[i], 0.0, 1.0),
                                                     np.zeros(u.size), meta))
        files.append(name)
    residuals = {}
    if series.times[0] == 0.0:
        for mode in (1, 2, 3):
            G = sine_mode(mode)
            residuals[G.name] = [weak_residual(series, G, t) for t in series.times]
    rows = [[t, mass] + [residuals[k][i] for k in sorted(residuals)]
            for i, (t, mass) in enumerate(zip(series.times, series.mass))]
    _write_table(out / "pde_series.csv", ["t", "mass"] + [f"residual_{k}" for k in sorted(residuals)],
                 rows, {"source": "pde", "M": m})
    files.append("pde_series.csv")
    report = {
        "schema": SCHEMA,
        "cells_per_region": m,
        "steps": series.steps,
        "mass_drift": float(np.ptp(series.mass)),
        "max_flux_mismatch": series.max_flux_mismatch,
        "max_lambda_mismatch": series.max_lambda_mismatch,
        "weak_residual_final": {k: v[-1] for k, v in residuals.items()},
    }
    if cfg.refine:
        fine = _pde_run(cfg, 2 * m).cells[-1]
        finer = _pde_run(cfg, 4 * m).cells[-1]
        d1 = float(np.abs(series.cells[-1] - _coarsen(fine, 2)).sum() / m)
        d2 = float(np.abs(fine - _coarsen(finer, 2)).sum() / (2 * m))
        report["refinement"] = {"l1_M_2M": d1, "l1_2M_4M": d2, "ratio": d1 / d2 if d2 > 0 else None}
    _write_json(out / "pde_report.json", report)
    files.append("pde_report.json")
    manifest = _manifest("pde", cfg, files + ["manifest.json"])
    _write_json(out / "manifest.json", manifest)
    return report


def cmd_compare(cfg: RunConfig, sim_dir: Path, pde_dir: Path, out: Path) -> dict:
    """Pairing distances of a simulation (or a second PDE run) against a PDE run."""
    pdes = [read_profile_csv(p) for p in _profile_files(pde_dir, "pde_profile")]
    against_pde = not list(sim_dir.glob("sim_profile_*.csv"))
    sims = [read_profile_csv(p) for p in _profile_files(sim_dir, "pde_profile" if against_pde else "sim_profile")]
    t_sim = np.array([float(p.meta["t"]) for p in sims])
    t_pde = np.array([float(p.meta["t"]) for p in pdes])
    if t_sim.size != t_pde.size or np.any(np.abs(t_sim - t_pde) > 1e-12):
        raise ConfigError("simulation and PDE snapshot grids differ")
    k = cfg.averaging
    if against_pde:
        n = None
        dist = {}
        for G in standard_battery():
            gap = [abs(pde_pairing(a.values, G) - pde_pairing(b.values, G)) for a, b in zip(sims, pdes)]
            dist[G.name] = trapezoid(gap, t_sim)
    else:
        n = int(sims[0].meta["N"])
        if not 3 <= k <= n // 2 + 1:
            raise ConfigError("averaging depth out of range for the simulated lattice")
        dist = pairing_distances(t_sim, [p.values for p in sims], n, [p.values for p in pdes], k)
    worst = max(dist.values())
    report = {
        "schema": SCHEMA,
        "source": "pde" if against_pde else "simulation",
        "N": n,
        "k": k,
        "weights": "normalised",
        "times": [float(t) for t in t_sim],
        "distances": dist,
        "max_distance": worst,
        "tolerance": cfg.tolerance,
        "distance_pass": bool(worst <= cfg.tolerance),
    }
    passed = report["distance_pass"]
    trace_file = sim_dir / "sim_traces.csv"
    if trace_file.is_file():
        header, data = _read_table(trace_file)
        col = {h: i for i, h in enumerate(header)}
        report["final_gap0"] = float(data[-1, col["gap0"]])
        report["final_gap1"] = float(data[-1, col["gap1"]])
        if cfg.gap_tolerance is not None:
            report["gap_tolerance"] = cfg.gap_tolerance
            report["gap_pass"] = bool(max(report["final_gap0"], report["final_gap1"]) <= cfg.gap_tolerance)
            passed = passed and report["gap_pass"]
    report["pass"] = bool(passed)
    _write_json(out / "compare_report.json", report)
    return report


def cmd_ensembles(cfg: RunConfig, out: Path) -> dict:
    table = EnsembleTable.from_params(cfg.params)
    steps = int(round(1.0 / cfg.rho_step))
    rho = np.arange(1, steps) / steps
    rows = np.column_stack([
        rho, table.lambda_minus(rho), table.lambda_plus(rho), table.phi(rho),
        table.q_minus(rho), table.q_plus(rho),
    ])
    _write_table(out / "ensembles_rho.csv", ["rho", "lambda_minus", "lambda_plus", "phi", "q_minus", "q_plus"],
                 rows, {"theta": cfg.params.theta, "alpha": cfg.params.alpha, "beta": cfg.params.beta})
    count = int(round((cfg.lambda_max - cfg.lambda_min) / cfg.lambda_step)) + 1
    lam = np.linspace(cfg.lambda_min, cfg.lambda_max, count)
    rows = np.column_stack([lam, table.p_minus(lam), table.p_plus(lam), table.rho_minus(lam), table.rho_plus(lam)])
    _write_table(out / "ensembles_lambda.csv", ["lambda", "p_minus", "p_plus", "rho_minus", "rho_plus"],
                 rows, {"theta": cfg.params.theta, "alpha": cfg.params.alpha, "beta": cfg.params.beta})
    files = ["ensembles_rho.csv", "ensembles_lambda.csv", "manifest.json"]
    manifest = _manifest("ensembles", cfg, files)
    _write_json(out / "manifest.json", manifest)
    return manifest


def lln_exceedance(rng, l: int, rho: float, family: str, q: float, samples: int, delta: float = 0.1) -> int:
    """Number of exact block samples with ``|M_{B_l} - rho| >= delta``."""
    table_q = q if family == "+" else 0.0
    lam = lambda_of_rho(rho, family, table_q)
    draws = sample_chain(GibbsSpec(2 * l + 1, family, lam, table_q), rng, samples)
    dens = draws.mean(axis=1)
    return int(np.sum(np.abs(dens - rho) >= delta - 1e-12))


def cmd_gibbs_check(cfg: RunConfig, out: Path) -> dict:
    q = cfg.params.q
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    spec = GibbsSpec(8, "+", 0.0, q)
    states, probs = enumerate_distribution(spec)
    tv = total_variation(sample_chain(spec, rng, cfg.gibbs_samples), probs)
    marg_err = float(np.max(np.abs(exact_marginals(spec) - probs @ states)))
    lln = []
    lln_ok = True
    for family in ("-", "+"):
        for rho in (0.3, 0.5, 0.7):
            counts = [lln_exceedance(rng, l, rho, family, q, cfg.lln_samples) for l in (50, 100, 200)]
            ok = counts[0] > counts[1] > counts[2]
            lln_ok = lln_ok and ok
            lln.append({"family": family, "rho": rho, "l": [50, 100, 200], "exceedances": counts,
                        "samples": cfg.lln_samples, "strictly_decreasing": ok})
    report = {
        "schema": SCHEMA,
        "seed": cfg.seed,
        "tv_size8": tv,
        "tv_samples": cfg.gibbs_samples,
        "tv_pass": bool(tv <= 0.01),
        "marginal_error": marg_err,
        "marginal_pass": bool(marg_err <= 1e-12),
        "lln": lln,
        "lln_pass": bool(lln_ok),
    }
    report["pass"] = bool(report["tv_pass"] and report["marginal_pass"] and report["lln_pass"])
    _write_json(out / "gibbs_report.json", report)
    return report


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exclusion-hydro",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeded=True):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        if seeded:
            p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        return p

    p = common(sub.add_parser("simulate", help="run replicas of the particle system"))
    p.add_argument("--replicas", type=int, help="number of independent replicas")
    p.add_argument("--threads", type=int,
                   help="worker threads (default: EXCLUSION_HYDRO_THREADS or 1)")
    p = common(sub.add_parser("pde", help="solve the limiting equation"), seeded=False)
    p.add_argument("--refine", action="store_true", help="also run 2M and 4M cells")
    p = common(sub.add_parser("compare", help="pairing distance between simulation and PDE"), seeded=False)
    p.add_argument("--sim", required=True, help="directory written by simulate")
    p.add_argument("--pde", required=True, help="directory written by pde")
    p.add_argument("--k", type=int, help="averaging depth")
    common(sub.add_parser("ensembles", help="tables of pressures, potentials and Phi"), seeded=False)
    common(sub.add_parser("gibbs-check", help="exact-sampler and concentration checks"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {
            "seed": getattr(args, "seed", None),
            "replicas": getattr(args, "replicas", None),
            "averaging": getattr(args, "k", None),
            "refine": True if getattr(args, "refine", False) else None,
        }
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise ConfigError("threads must be positive")
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "compare":
            sim_dir, pde_dir = Path(args.sim), Path(args.pde)
            for d in (sim_dir, pde_dir):
                if not d.is_dir():
                    raise ConfigError(f"{d} is not a directory")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            cmd_simulate(cfg, out, args.threads)
            return 0
        if args.command == "pde":
            cmd_pde(cfg, out)
            return 0
        if args.command == "compare":
            return 0 if cmd_compare(cfg, sim_dir, pde_dir, out)["pass"] else 1
        if args.command == "ensembles":
            cmd_ensembles(cfg, out)
            return 0
        return 0 if cmd_gibbs_check(cfg, out)["pass"] else 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
