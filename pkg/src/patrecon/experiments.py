"""Experiment configuration and the command implementations behind the CLI.

A run is described by :class:`ExperimentConfig`; the shipped presets live in
``patrecon/presets/*.yaml``. Every output file carries a JSON sidecar, and every
noisy trace records the seed that produced it.
"""
from dataclasses import dataclass, asdict
import csv
import math
import os
import warnings
from importlib import resources

import numpy as np
import yaml

from .exceptions import ConfigError, FormatError
from .grid import build_detectors, build_grid, build_timegrid
from .phantom import (PhantomSpec, ScalarField2D, export_pgm, gaussian_phantom, head_phantom,
                      rasterize, read_field, write_field)
from .recon2d import (l2_error, range_condition_residual, reconstruct_dirichlet,
                      reconstruct_mixed, reconstruct_neumann, write_error_csv, write_reconstruction)
from .wavesim import add_noise, combine_mixed, read_traces, simulate, write_traces

# column name -> (formula, horizon, trace kind), in the fixed table order
COLUMNS = {
    "F_inf(n)": ("F", "infinite", "neumann"),
    "F_T(n)": ("F", "finite", "neumann"),
    "G_inf(d)": ("G", "infinite", "dirichlet"),
    "G_T(d)": ("G", "finite", "dirichlet"),
    "F_inf(d)": ("F", "infinite", "dirichlet"),
    "F_T(d)": ("F", "finite", "dirichlet"),
    "F_inf(mix)": ("F", "infinite", "mixed"),
    "F_T(mix)": ("F", "finite", "mixed"),
}
KINDS = ("dirichlet", "neumann", "mixed")
PRESETS = ("paper-defaults", "desk-scale")
_KNOWN_KEYS = {"phantom", "grid", "dt", "T", "sweep_T", "sweep_dt", "noise", "seeds", "weights",
               "kernel", "reconstructors", "output"}


@dataclass
class ExperimentConfig:
    phantom: str = "head"
    N: int = 129
    rho: float = 1.0
    z: tuple = (0.0, 0.0)
    dt: float = 1e-3
    T: float = 2.0
    sweep_T: tuple = (2.0, 4.0, 6.0, 8.0)
    sweep_dt: float = 1e-3
    noise: tuple = (0.0, 0.2, 0.4)
    seeds: tuple = (0,)
    a: float = 1.0
    b: float = 0.1
    kernel: str = "corrected"
    reconstructors: tuple = tuple(COLUMNS)
    output: str = None

    def validate(self):
        """Raise :class:`ConfigError` naming the first invalid field."""
        def bad(name, why):
            raise ConfigError(f"config field {name!r}: {why}")

        if not isinstance(self.N, int) or isinstance(self.N, bool) or self.N < 3:
            bad("grid.N", "must be an integer >= 3")
        for name in ("rho", "dt", "T", "sweep_dt"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or not math.isfinite(val) or val <= 0:
                bad(name, "must be a positive number")
        if len(self.z) != 2:
            bad("grid.z", "must have two coordinates")
        diam = 2.0 * self.rho
        for T in (self.T,) + tuple(self.sweep_T):
            if T < diam:
                bad("T", f"end time {T} is below the diameter {diam}")
            if self.dt >= T or self.sweep_dt >= T:
                bad("dt", "time step must be smaller than the end time")
        if any((not isinstance(p, (int, float))) or p < 0 for p in self.noise):
            bad("noise", "levels must be non-negative numbers")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            bad("seeds", "must be a non-empty list of non-negative integers")
        if self.b == 0 and any(COLUMNS[c][2] == "mixed" for c in self.reconstructors if c in COLUMNS):
            bad("weights.b", "mixed reconstructions need b != 0")
        if self.kernel not in ("corrected", "published"):
            bad("kernel", "must be 'corrected' or 'published'")
        unknown = [c for c in self.reconstructors if c not in COLUMNS]
        if unknown or not self.reconstructors:
            bad("reconstructors", f"unknown or empty selection {unknown}; choose from {list(COLUMNS)}")
        return self

    def to_dict(self):
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _from_mapping(data):
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    grid = data.get("grid", {}) or {}
    weights = data.get("weights", {}) or {}
    if not isinstance(grid, dict) or not isinstance(weights, dict):
        raise ConfigError("config fields 'grid' and 'weights' must be mappings")
    kw = {}
    for key in ("phantom", "dt", "T", "sweep_dt", "kernel", "output"):
        if key in data:
            kw[key] = data[key]
    for key in ("sweep_T", "noise", "seeds", "reconstructors"):
        if key in data:
            val = data[key]
            kw[key] = tuple(val) if isinstance(val, (list, tuple)) else (val,)
    for key in ("N", "rho", "z"):
        if key in grid:
            kw[key] = tuple(grid[key]) if key == "z" else grid[key]
    for key in ("a", "b"):
        if key in weights:
            kw[key] = weights[key]
    try:
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    for name in ("rho", "dt", "T", "sweep_dt", "a", "b"):
        val = getattr(cfg, name)
        if isinstance(val, str):
            try:
                setattr(cfg, name, float(val))
            except ValueError as exc:
                raise ConfigError(f"config field {name!r}: not a number") from exc
    return cfg.validate()


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {list(PRESETS)}")
    text = resources.files("patrecon.presets").joinpath(f"{name}.yaml").read_text()
    return _from_mapping(yaml.safe_load(text))


def load_config(path=None, preset=None):
    """Config from a YAML file (overrides nothing) or from a named preset (default desk-scale)."""
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
        return _from_mapping(data)
    return load_preset(preset or "desk-scale")


# --- shared building blocks -------------------------------------------------------------

def phantom_spec(cfg):
    name = cfg.phantom
    if name == "head":
        return head_phantom()
    if name == "gaussian":
        return gaussian_phantom()
    if name in ("empty", "zero"):
        return PhantomSpec()
    try:
        with open(name) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{name}: unreadable phantom spec: {exc}") from exc
    return PhantomSpec.from_dict(data or {})


def setup(cfg, T=None, dt=None):
    grid = build_grid(cfg.N, cfg.rho, cfg.z)
    geom = build_detectors(cfg.rho, cfg.z, grid.dx)
    tg = build_timegrid(cfg.T if T is None else T, cfg.dt if dt is None else dt)
    return grid, geom, tg


def noise_tag(level):
    return f"noise{int(round(100 * level)):03d}"


def noise_seed(seed, level_index, kind):
    """Independent, reproducible seed per (base seed, noise level, trace kind)."""
    ss = np.random.SeedSequence([int(seed), int(level_index), KINDS.index(kind)])
    return int(ss.generate_state(1)[0])


def trace_name(kind, level, seed=None):
    base = f"traces_{kind}_{noise_tag(level)}"
    return base + (f"_seed{seed}.f64" if level > 0 else ".f64")


def exact_traces(field, geom, tg, a, b):
    d, n = simulate(field, geom, tg)
    return {"dirichlet": d, "neumann": n, "mixed": combine_mixed(d, n, a, b)}


def noisy_traces(exact, level, level_index, seed):
    if level == 0:
        return dict(exact)
    return {k: add_noise(tr, level, noise_seed(seed, level_index, k)) for k, tr in exact.items()}


def run_column(column, traces, grid, variant="corrected"):
    formula, horizon, kind = COLUMNS[column]
    trace = traces[kind]
    if formula == "G":
        return reconstruct_dirichlet(trace, grid, horizon, variant)
    if kind == "neumann":
        return reconstruct_neumann(trace, grid, horizon, variant)
    if kind == "mixed":
        return reconstruct_mixed(trace, grid, horizon, variant)
    return range_condition_residual(trace, grid, horizon, variant)


def column_error(column, recon, reference):
    """L2 error against the phantom, or against zero for the range-condition columns."""
    if COLUMNS[column][0] == "F" and COLUMNS[column][2] == "dirichlet":
        reference = ScalarField2D(reference.grid, np.zeros_like(reference.data))
    return l2_error(recon, reference)


def _row(column, level, T, dt, value):
    formula, horizon, kind = COLUMNS[column]
    return {"formula": formula, "horizon": horizon, "kind": kind, "noise": repr(float(level)),
            "T": repr(float(T)), "dt": repr(float(dt)), "L2": repr(float(value))}


# --- commands ---------------------------------------------------------------------------

def cmd_phantom(cfg, out):
    os.makedirs(out, exist_ok=True)
    spec = phantom_spec(cfg)
    grid, _, _ = setup(cfg)
    if not spec.primitives:
        warnings.warn("phantom spec has no primitives; writing a zero field")
    field = rasterize(spec, grid)
    path = os.path.join(out, "phantom.f64")
    write_field(field, path, provenance={"phantom": cfg.phantom, "spec": spec.to_dict()})
    export_pgm(field.data, os.path.join(out, "phantom.pgm"))
    return [path, os.path.join(out, "phantom.pgm")]


def _reference(cfg, out):
    path = os.path.join(out, "phantom.f64")
    if os.path.exists(path):
        field = read_field(path)
        if field.grid.N != cfg.N:
            raise FormatError(f"{path}: phantom grid N={field.grid.N} does not match config N={cfg.N}")
        return field
    grid, _, _ = setup(cfg)
    return rasterize(phantom_spec(cfg), grid)


def cmd_simulate(cfg, out, seed=None):
    """Write Dirichlet, Neumann and mixed traces for every noise level (and seed)."""
    os.makedirs(out, exist_ok=True)
    seeds = (seed,) if seed is not None else cfg.seeds
    field = _reference(cfg, out)
    _, geom, tg = setup(cfg)
    exact = exact_traces(field, geom, tg, cfg.a, cfg.b)
    written = []
    for i, level in enumerate(cfg.noise):
        for s in (seeds if level > 0 else (None,)):
            traces = noisy_traces(exact, level, i, s)
            for kind in KINDS:
                path = os.path.join(out, trace_name(kind, level, s))
                write_traces(traces[kind], path)
                written.append(path)
    return written


def cmd_reconstruct(cfg, out, columns=None, seed=None):
    """Run the reconstruction battery on stored traces; write fields and two CSV tables.

    ``errors.csv`` has one row per (column, noise) in the long schema; ``table.csv`` is the
    wide noise-by-column table. With several seeds the reported error is the median.
    """
    columns = tuple(columns or cfg.reconstructors)
    for c in columns:
        if c not in COLUMNS:
            raise ConfigError(f"unknown reconstructor {c!r}")
    seeds = (seed,) if seed is not None else cfg.seeds
    reference = _reference(cfg, out)
    grid = reference.grid
    rows, table = [], []
    for level in cfg.noise:
        per_col = {c: [] for c in columns}
        for s in (seeds if level > 0 else (None,)):
            traces = {}
            for kind in {COLUMNS[c][2] for c in columns}:
                path = os.path.join(out, trace_name(kind, level, s))
                if not os.path.exists(path):
                    raise FileNotFoundError(f"missing trace file {path}; run 'simulate' first")
                traces[kind] = read_traces(path)
            for c in columns:
                recon = run_column(c, traces, grid, cfg.kernel)
                tag = noise_tag(level) + (f"_seed{s}" if s is not None else "")
                write_reconstruction(recon, os.path.join(out, f"recon_{_slug(c)}_{tag}.f64"))
                per_col[c].append(column_error(c, recon, reference))
        med = {c: float(np.median(v)) for c, v in per_col.items()}
        rows.extend(_row(c, level, cfg.T, cfg.dt, med[c]) for c in columns)
        table.append([noise_tag(level)] + [repr(med[c]) for c in columns])
    write_error_csv(rows, os.path.join(out, "errors.csv"))
    with open(os.path.join(out, "table.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["noise"] + list(columns))
        writer.writerows(table)
    return rows


def _slug(column):
    return column.replace("(", "_").replace(")", "")


def sweep_errors(field, cfg, columns=None, seeds=None):
    """L2 errors over the end-time list; the wave field is simulated once at the largest T."""
    columns = tuple(columns or cfg.reconstructors)
    seeds = tuple(seeds or cfg.seeds)
    _, geom, tg = setup(cfg, T=max(cfg.sweep_T), dt=cfg.sweep_dt)
    full = exact_traces(field, geom, tg, cfg.a, cfg.b)
    rows = []
    for T in sorted(cfg.sweep_T):
        exact = {k: tr.truncate(T) for k, tr in full.items()}
        for i, level in enumerate(cfg.noise):
            errs = {c: [] for c in columns}
            for s in (seeds if level > 0 else (None,)):
                traces = noisy_traces(exact, level, i, s)
                for c in columns:
                    errs[c].append(column_error(c, run_column(c, traces, field.grid, cfg.kernel), field))
            rows.extend(_row(c, level, T, cfg.sweep_dt, float(np.median(errs[c]))) for c in columns)
    return rows


def cmd_sweep(cfg, out, columns=None, seed=None):
    os.makedirs(out, exist_ok=True)
    field = _reference(cfg, out)
    rows = sweep_errors(field, cfg, columns, (seed,) if seed is not None else None)
    path = os.path.join(out, "sweep.csv")
    write_error_csv(rows, path)
    return rows

