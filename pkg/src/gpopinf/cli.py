"""Batch front-end for the full pipeline.

Stages run in order and each writes into the configured output directory::

    fom-run   training snapshots and test trajectories     snapshots/, fom/
    pod       singular vectors for the largest r             pod/
    infer     reduced operators per variant and r            infer/<variant>/
    rom-run   reduced trajectories and energies              rom/<variant>/
    report    error tables and the structure table           report/

``reproduce`` runs all of them for a named recipe. A completed stage is
skipped unless ``--force`` is given; completion is tied to the hash of the
configuration, so a changed configuration cannot silently reuse old output.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data import (
    projected_gradient_snapshots,
    read_matrix,
    snapshots_from_trajectory,
    write_csv,
    write_json,
    write_matrix,
)
from .errors import ArtifactIOError, ConfigError, DeflationWarning, GPOpInfError
from .fom import PARAMETER_RANGES, build_fom
from .integrators import PicardConfig, TimeGrid, integrate
from .linalg import skew_defect, sym_eig
from .metrics import (
    ErrorReport,
    ErrorRow,
    approx_error,
    data_error_surrogate,
    grad_projection_error,
    optimization_error,
    projection_error,
)
from .opinf import BarrierConfig, InferredOperator, infer, max_sym_eig
from .pod import basis_from_modes, left_singular
from .rom import assemble_gp_rom, assemble_spg_rom, simulate_rom

STAGES = ("fom-run", "pod", "infer", "rom-run", "report")

MODEL_PARAMS = {
    "wave": {"n", "c"},
    "kdv": {"n", "alpha", "nu"},
    "allen_cahn_1d": {"n", "eps"},
    "allen_cahn_2d": {"n", "eps"},
}
CONSERVATIVE_VARIANTS = ("V", "P", "GP")


# --- configuration ----------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see the README for the JSON schema."""

    model: str
    model_params: dict
    train_mu: tuple
    dt: float
    T_fom: float
    r: tuple
    variants: tuple
    output_dir: str = "runs/experiment"
    test_mu: tuple | None = None
    random_test: int = 0
    T_rom: float | None = None
    spg: bool = True
    basis: str = "auto"
    snapshot_stride: int = 1
    barrier: dict = dataclasses.field(default_factory=dict)
    picard: dict = dataclasses.field(default_factory=dict)
    seed: int = 0
    extrapolate: bool = False
    dt_rom: float | None = None
    gradient_data: str = "state"

    @property
    def block(self) -> bool:
        return self.basis == "block" or (self.basis == "auto" and self.model == "wave")

    @property
    def t_rom(self) -> float:
        return self.T_fom if self.T_rom is None else self.T_rom

    @property
    def rom_stride(self) -> int:
        """ROM step as a multiple of the full-order step."""
        return 1 if self.dt_rom is None else int(round(self.dt_rom / self.dt))

    def test_parameters(self) -> list:
        """Explicit test parameters, then ``random_test`` draws from the model range."""
        if self.test_mu is not None:
            mus = list(self.test_mu)
        else:
            mus = [] if self.random_test else list(self.train_mu)
        if self.random_test:
            lo, hi = PARAMETER_RANGES[self.model]
            rng = np.random.default_rng(self.seed)
            mus += [float(v) for v in rng.uniform(lo, hi, self.random_test)]
        return mus

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the output location."""
        payload = {k: v for k, v in self.to_json().items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _number(name, value, *, positive=True, integer=False):
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"{name} must be {'an integer' if integer else 'a number'}, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return value


def _number_list(name, value, *, integer=False, allow_empty=False):
    if not isinstance(value, list) or (not value and not allow_empty):
        raise ConfigError(f"{name} must be a {'possibly empty ' if allow_empty else 'non-empty '}list")
    return tuple(_number(f"{name}[{i}]", v, positive=integer, integer=integer) for i, v in enumerate(value))


def _overrides(name, value, cls):
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(value) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}; allowed: {sorted(known)}")
    try:
        cls(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return dict(value)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw JSON object; every problem is reported before any compute."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - fields)
    if unknown:
        raise ConfigError(f"unknown configuration keys {unknown}")
    required = ("model", "model_params", "train_mu", "dt", "T_fom", "r", "variants")
    missing = [k for k in required if k not in raw]
    if missing:
        raise ConfigError(f"missing configuration keys {missing}")

    model = raw["model"]
    if model not in MODEL_PARAMS:
        raise ConfigError(f"model must be one of {sorted(MODEL_PARAMS)}, got {model!r}")
    params = raw["model_params"]
    if not isinstance(params, dict) or "n" not in params:
        raise ConfigError("model_params must be an object with at least 'n'")
    bad = sorted(set(params) - MODEL_PARAMS[model])
    if bad:
        raise ConfigError(f"model_params: unknown keys {bad} for {model}; allowed: {sorted(MODEL_PARAMS[model])}")
    _number("model_params.n", params["n"], integer=True)
    if params["n"] < 3:
        raise ConfigError("model_params.n must be >= 3")
    for k, v in params.items():
        if k != "n":
            _number(f"model_params.{k}", v, positive=k in ("c", "eps"))

    structure = "dissipative" if model.startswith("allen_cahn") else "conservative"
    variants = raw["variants"]
    allowed = ("dissipative",) if structure == "dissipative" else CONSERVATIVE_VARIANTS
    if not isinstance(variants, list) or not variants or any(v not in allowed for v in variants):
        raise ConfigError(f"variants for the {structure} model {model} must be a non-empty subset of {list(allowed)}")
    if len(set(variants)) != len(variants):
        raise ConfigError("variants must not repeat")

    r = _number_list("r", raw["r"], integer=True)
    if list(r) != sorted(set(r)):
        raise ConfigError("r must be strictly increasing")

    cfg = dict(raw)
    cfg["train_mu"] = _number_list("train_mu", raw["train_mu"])
    if raw.get("test_mu") is not None:
        cfg["test_mu"] = _number_list("test_mu", raw["test_mu"], allow_empty=True)
    cfg["r"] = r
    cfg["variants"] = tuple(variants)
    _number("dt", raw["dt"])
    _number("T_fom", raw["T_fom"])
    if raw.get("T_rom") is not None:
        _number("T_rom", raw["T_rom"])
    for key in ("random_test",):
        if key in raw:
            _number(key, raw[key], positive=False, integer=True)
            if raw[key] < 0:
                raise ConfigError(f"{key} must be >= 0")
    if "seed" in raw:
        _number("seed", raw["seed"], positive=False, integer=True)
    if "snapshot_stride" in raw:
        _number("snapshot_stride", raw["snapshot_stride"], integer=True)
    for key in ("spg", "extrapolate"):
        if key in raw and not isinstance(raw[key], bool):
            raise ConfigError(f"{key} must be true or false")
    if raw.get("gradient_data", "state") not in ("state", "projected"):
        raise ConfigError("gradient_data must be 'state' or 'projected'")
    if raw.get("basis", "auto") not in ("auto", "monolithic", "block"):
        raise ConfigError("basis must be 'auto', 'monolithic' or 'block'")
    if raw.get("basis") == "block" and model != "wave":
        raise ConfigError("a block basis needs a two-component state; only 'wave' has one")
    if "output_dir" in raw and not isinstance(raw["output_dir"], str):
        raise ConfigError("output_dir must be a string")
    cfg["barrier"] = _overrides("barrier", raw.get("barrier", {}), BarrierConfig)
    cfg["picard"] = _overrides("picard", raw.get("picard", {}), PicardConfig)

    out = ExperimentConfig(**cfg)
    if out.dt_rom is not None:
        _number("dt_rom", out.dt_rom)
        k = out.dt_rom / out.dt
        if abs(k - round(k)) > 1e-9 * k or round(k) < 1:
            raise ConfigError(f"dt_rom={out.dt_rom} must be a whole multiple of dt={out.dt}")
        if abs(out.t_rom / out.dt_rom - round(out.t_rom / out.dt_rom)) > 1e-9 * out.t_rom / out.dt_rom:
            raise ConfigError(f"T_rom={out.t_rom} is not a whole number of dt_rom={out.dt_rom} steps")
    for t in (out.T_fom, out.t_rom):
        if round(t / out.dt) < 2:
            raise ConfigError(f"time interval {t} holds fewer than 2 steps of dt={out.dt}")
    if not out.test_parameters():
        raise ConfigError("no test parameters: give test_mu or random_test")
    lo, hi = PARAMETER_RANGES[model]
    if not out.extrapolate:
        outside = [m for m in out.train_mu + tuple(out.test_parameters()) if not lo <= m <= hi]
        if outside:
            raise ConfigError(f"parameters {outside} lie outside [{lo}, {hi}]; set extrapolate to allow them")
    return out


# --- recipes ----------------------------------------------------------------

def _sweep(lo, hi, step):
    return list(range(lo, hi + 1, step))


RECIPES = {
    "wave-test1": (
        {"model": "wave", "model_params": {"n": 200, "c": 0.1}, "train_mu": [10.0], "dt": 1e-3,
         "T_fom": 5.0, "T_rom": 5.0, "r": _sweep(5, 60, 5), "variants": ["V", "P", "GP"]},
        {"model_params": {"n": 1000, "c": 0.1}},
    ),
    "wave-test1-t10": (
        {"model": "wave", "model_params": {"n": 200, "c": 0.1}, "train_mu": [10.0], "dt": 1e-3,
         "T_fom": 10.0, "T_rom": 10.0, "r": _sweep(5, 60, 5), "variants": ["V", "P", "GP"]},
        {"model_params": {"n": 1000, "c": 0.1}},
    ),
    "wave-test2": (
        {"model": "wave", "model_params": {"n": 200, "c": 0.1}, "train_mu": [10.0], "dt": 2.5e-4,
         "T_fom": 5.0, "T_rom": 5.0, "r": _sweep(5, 60, 5), "variants": ["GP"]},
        {"model_params": {"n": 5000, "c": 0.1}, "dt": 2e-4, "T_fom": 10.0, "T_rom": 10.0,
         "r": _sweep(25, 300, 25)},
    ),
    "wave-test3": (
        {"model": "wave", "model_params": {"n": 200, "c": 0.1}, "train_mu": [10.0], "dt": 1e-3,
         "T_fom": 5.0, "T_rom": 20.0, "r": [10, 20, 40], "variants": ["GP"]},
        {"model_params": {"n": 1000, "c": 0.1}, "T_fom": 10.0, "T_rom": 100.0, "r": [10, 20, 40, 80]},
    ),
    "wave-test4": (
        {"model": "wave", "model_params": {"n": 200, "c": 0.1}, "train_mu": np.linspace(5, 15, 11).tolist(),
         "test_mu": [6.7, 9.5, 14.1], "dt": 1e-3, "T_fom": 5.0, "r": _sweep(5, 40, 5), "variants": ["GP"]},
        {"model_params": {"n": 1000, "c": 0.1}, "T_fom": 10.0, "r": _sweep(10, 100, 10)},
    ),
    "kdv-test1": (
        {"model": "kdv", "model_params": {"n": 512, "alpha": -6.0, "nu": -1.0}, "train_mu": [2 ** 0.5],
         "dt": 5e-3, "T_fom": 20.0, "T_rom": 20.0, "r": _sweep(5, 60, 5), "variants": ["GP"]},
        {"model_params": {"n": 4000, "alpha": -6.0, "nu": -1.0}, "dt": 2.5e-3, "r": _sweep(10, 100, 10)},
    ),
    "kdv-test2": (
        {"model": "kdv", "model_params": {"n": 512, "alpha": -6.0, "nu": -1.0}, "train_mu": [2 ** 0.5],
         "dt": 1e-2, "T_fom": 20.0, "T_rom": 40.0, "r": [10, 20, 40], "variants": ["GP"]},
        {"model_params": {"n": 4000, "alpha": -6.0, "nu": -1.0}, "r": [10, 20, 40, 80]},
    ),
    "kdv-test3": (
        {"model": "kdv", "model_params": {"n": 512, "alpha": -6.0, "nu": -1.0},
         "train_mu": np.linspace(1, 5, 9).tolist(), "test_mu": [1.4, 2.8, 4.7], "dt": 1e-2, "T_fom": 20.0,
         "r": _sweep(5, 50, 5), "variants": ["GP"]},
        {"model_params": {"n": 4000, "alpha": -6.0, "nu": -1.0}, "r": _sweep(10, 100, 10)},
    ),
    "ac1d-test1": (
        {"model": "allen_cahn_1d", "model_params": {"n": 500, "eps": 0.01}, "train_mu": [1.0], "dt": 2.5e-4,
         "T_fom": 3.0, "T_rom": 3.0, "r": _sweep(5, 40, 5), "variants": ["dissipative"]},
        {"model_params": {"n": 2000, "eps": 0.01}, "r": _sweep(10, 100, 10)},
    ),
    "ac1d-test2": (
        {"model": "allen_cahn_1d", "model_params": {"n": 500, "eps": 0.01}, "train_mu": [1.0], "dt": 1e-3,
         "T_fom": 3.0, "T_rom": 5.0, "r": [10, 20, 40], "variants": ["dissipative"]},
        {"model_params": {"n": 2000, "eps": 0.01}, "r": [10, 20, 40, 80]},
    ),
    "ac1d-test3": (
        {"model": "allen_cahn_1d", "model_params": {"n": 500, "eps": 0.01},
         "train_mu": np.linspace(0.2, 2, 10).tolist(), "test_mu": [0.34, 0.96, 1.87], "dt": 1e-3,
         "T_fom": 3.0, "r": _sweep(5, 30, 5), "variants": ["dissipative"]},
        {"model_params": {"n": 2000, "eps": 0.01}, "r": _sweep(10, 60, 10)},
    ),
    "ac2d-test1": (
        {"model": "allen_cahn_2d", "model_params": {"n": 32, "eps": 0.02},
         "train_mu": np.linspace(0, 0.7, 15).tolist(), "test_mu": [0.17, 0.38, 0.63], "dt": 1e-2,
         "T_fom": 5.0, "r": _sweep(5, 30, 5), "variants": ["dissipative"]},
        {"model_params": {"n": 64, "eps": 0.02}, "T_fom": 20.0, "r": _sweep(10, 60, 10)},
    ),
}


def recipe_config(name: str, paper_scale: bool = False) -> dict:
    """Raw configuration of a named recipe (desk scale unless ``paper_scale``)."""
    try:
        desk, paper = RECIPES[name]
    except KeyError:
        raise ConfigError(f"unknown recipe {name!r}; choose from {sorted(RECIPES)}") from None
    raw = json.loads(json.dumps(desk))
    if paper_scale:
        raw.update(json.loads(json.dumps(paper)))
    raw["output_dir"] = f"runs/{name}{'-paper' if paper_scale else ''}"
    return raw


# --- run directory ----------------------------------------------------------

class Run:
    """Output directory bound to one configuration."""

    def __init__(self, cfg: ExperimentConfig, root: Path, workers: int = 1):
        self.cfg = cfg
        self.root = Path(root)
        self.workers = max(1, int(workers))
        self.hash = cfg.digest()

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def open(self, force: bool) -> None:
        manifest = self.path("manifest.json")
        if manifest.exists():
            try:
                old = json.loads(manifest.read_text())
            except json.JSONDecodeError as exc:
                raise ArtifactIOError(f"{manifest}: unreadable manifest ({exc})") from None
            if old.get("config_hash") != self.hash and not force:
                raise ConfigError(
                    f"{self.root} holds results of a different configuration "
                    f"(hash {str(old.get('config_hash'))[:12]}); use --force or another output_dir"
                )
        write_json(manifest, {
            "config": self.cfg.to_json(),
            "config_hash": self.hash,
            "versions": {
                "gpopinf": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        })

    def done(self, stage: str) -> bool:
        marker = self.path(".stages", f"{stage}.json")
        if not marker.exists():
            return False
        try:
            return json.loads(marker.read_text()).get("config_hash") == self.hash
        except json.JSONDecodeError:
            return False

    def mark(self, stage: str, seconds: float) -> None:
        write_json(self.path(".stages", f"{stage}.json"), {"config_hash": self.hash})
        timings_path = self.path("timings.json")
        timings = json.loads(timings_path.read_text()) if timings_path.exists() else {}
        timings[stage] = seconds
        write_json(timings_path, timings)

    def require(self, stage: str) -> None:
        if not self.done(stage):
            raise ArtifactIOError(f"missing inputs: stage '{stage}' has not completed in {self.root}; run it first")

    def map(self, fn, items):
        """Ordered map over a bounded worker pool."""
        items = list(items)
        if self.workers == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items))

    # shared loaders
    def fom(self, mu: float):
        cfg = self.cfg
        return build_fom(cfg.model, mu, extrapolate=cfg.extrapolate, **cfg.model_params)

    def grid(self, T: float) -> TimeGrid:
        return TimeGrid.until(T, self.cfg.dt)

    def picard(self) -> PicardConfig:
        return PicardConfig(**self.cfg.picard)

    def index(self) -> dict:
        return json.loads(self.path("snapshots", "index.json").read_text())

    def basis(self, r: int):
        if self.cfg.block:
            names = ("U_u", "s_u", "U_v", "s_v")
        else:
            names = ("U", "s")
        return basis_from_modes(tuple(read_matrix(self.path("pod", f"{k}.gpoi")) for k in names), r)

    def operator(self, variant: str, r: int) -> InferredOperator:
        D = read_matrix(self.path("infer", variant, f"D_r{r:03d}.gpoi"))
        summary = json.loads(self.path("infer", variant, "summary.json").read_text())[str(r)]
        return InferredOperator(D, variant, summary["certificate"], summary["residual"], summary["diagnostics"])

    def rom_kinds(self) -> list:
        return list(self.cfg.variants) + (["SPG"] if self.cfg.spg else [])


# --- stages -----------------------------------------------------------------

def stage_fom_run(run: Run) -> str:
    cfg = run.cfg
    picard = run.picard()
    train_grid, test_grid = run.grid(cfg.T_fom), run.grid(cfg.t_rom)

    def train(mu):
        spec = run.fom(mu)
        traj = integrate(spec, spec.y0, train_grid, picard)
        return snapshots_from_trajectory(spec, traj.states, train_grid, cfg.snapshot_stride), traj.wall_seconds

    def test(mu):
        spec = run.fom(mu)
        traj = integrate(spec, spec.y0, test_grid, picard)
        return traj.states, traj.wall_seconds

    sets = run.map(train, cfg.train_mu)
    tests = run.map(test, cfg.test_parameters())
    widths = [s.width for s, _ in sets]
    for name in ("Y", "F", "Ydot"):
        write_matrix(run.path("snapshots", f"{name}.gpoi"), np.hstack([getattr(s, name) for s, _ in sets]))
    write_json(run.path("snapshots", "index.json"), {
        "train_mu": list(cfg.train_mu),
        "offsets": [int(v) for v in np.concatenate([[0], np.cumsum(widths)[:-1]])],
        "widths": widths,
        "dt": cfg.dt * cfg.snapshot_stride,
    })
    test_mu = cfg.test_parameters()
    for k, (states, _) in enumerate(tests):
        write_matrix(run.path("fom", f"test_{k:02d}.gpoi"), states)
    write_json(run.path("fom", "index.json"), {"test_mu": test_mu, "steps": test_grid.steps})
    write_json(run.path("fom", "timings.json"), {
        "train_seconds": [t for _, t in sets], "test_seconds": [t for _, t in tests],
    })
    return f"{len(sets)} training and {len(tests)} test trajectories"


def stage_pod(run: Run) -> str:
    run.require("fom-run")
    cfg = run.cfg
    Y = read_matrix(run.path("snapshots", "Y.gpoi"))
    rmax = max(cfg.r)
    if cfg.block:
        if Y.shape[0] % 2:
            raise ConfigError("block basis needs an even state dimension")
        m = Y.shape[0] // 2
        Uu, su = left_singular(Y[:m])
        Uv, sv = left_singular(Y[m:])
        modes = {"U_u": Uu[:, :rmax], "s_u": su, "U_v": Uv[:, :rmax], "s_v": sv}
    else:
        U, s = left_singular(Y)
        modes = {"U": U[:, :rmax], "s": s}
    # validates every requested r against the snapshot rank before writing
    basis_from_modes(tuple(modes.values()), rmax)
    for k, v in modes.items():
        write_matrix(run.path("pod", f"{k}.gpoi"), v)
    return f"basis with up to r={rmax}" + (" per block" if cfg.block else "")


def stage_infer(run: Run) -> str:
    run.require("pod")
    cfg = run.cfg
    Y = read_matrix(run.path("snapshots", "Y.gpoi"))
    F = read_matrix(run.path("snapshots", "F.gpoi"))
    Ydot = read_matrix(run.path("snapshots", "Ydot.gpoi"))
    barrier = BarrierConfig(**cfg.barrier)
    idx = run.index()
    blocks = [(run.fom(mu), slice(o, o + w)) for mu, o, w in zip(idx["train_mu"], idx["offsets"], idx["widths"])]

    def task(item):
        variant, r = item
        basis = run.basis(r)
        Phi = basis.Phi
        if cfg.gradient_data == "projected":
            Fr = np.hstack([Phi.T @ projected_gradient_snapshots(spec, Y[:, b], Phi) for spec, b in blocks])
        else:
            Fr = Phi.T @ F
        Ydot_r = Phi.T @ Ydot
        op = infer(variant, Ydot_r, Fr, barrier=barrier)
        return op, float(sym_eig(Fr @ Fr.T).eigenvalues[0])

    items = [(v, r) for v in cfg.variants for r in cfg.r]
    results = run.map(task, items)
    summaries = {v: {} for v in cfg.variants}
    for (variant, r), (op, min_eig) in zip(items, results):
        write_matrix(run.path("infer", variant, f"D_r{r:03d}.gpoi"), op.D_r)
        diag = {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in op.diagnostics.items()}
        summaries[variant][str(r)] = {
            "certificate": op.certificate, "residual": op.residual, "min_eig_FFt": min_eig, "diagnostics": diag,
        }
    for variant, summary in summaries.items():
        write_json(run.path("infer", variant, "summary.json"), summary)
    return f"{len(items)} operators"


def _certificate(D, structure) -> float:
    return skew_defect(D) if structure == "conservative" else max_sym_eig(D)


def stage_rom_run(run: Run) -> str:
    run.require("infer")
    cfg = run.cfg
    grid, picard = TimeGrid.until(cfg.t_rom, cfg.dt * cfg.rom_stride), run.picard()
    test_mu = cfg.test_parameters()

    def task(item):
        kind, r, k = item
        basis = run.basis(r)
        spec = run.fom(test_mu[k])
        rom = assemble_spg_rom(basis, spec) if kind == "SPG" else assemble_gp_rom(basis, run.operator(kind, r), spec)
        return simulate_rom(rom, grid, picard)

    items = [(kind, r, k) for kind in run.rom_kinds() for r in cfg.r for k in range(len(test_mu))]
    results = run.map(task, items)
    seconds = {}
    for (kind, r, k), traj in zip(items, results):
        stem = f"r{r:03d}_mu{k:02d}"
        write_matrix(run.path("rom", kind, f"{stem}.gpoi"), traj.states)
        write_csv(run.path("rom", kind, f"{stem}_energy.csv"), ("t", "H"), zip(traj.times, traj.energy))
        seconds.setdefault(kind, {})[stem] = traj.reduced.wall_seconds
    write_json(run.path("rom", "timings.json"), seconds)
    return f"{len(items)} reduced simulations"


def stage_report(run: Run) -> str:
    run.require("rom-run")
    cfg = run.cfg
    test_mu = cfg.test_parameters()
    T, dA_spec = cfg.t_rom, run.fom(test_mu[0])
    dA, structure = dA_spec.dA, dA_spec.structure
    F = read_matrix(run.path("snapshots", "F.gpoi"))
    Ydot = read_matrix(run.path("snapshots", "Ydot.gpoi"))
    idx = run.index()
    blocks = [slice(o, o + w) for o, w in zip(idx["offsets"], idx["widths"])]
    Y = read_matrix(run.path("snapshots", "Y.gpoi"))
    train_specs = [run.fom(mu) for mu in idx["train_mu"]]
    fom_seconds = json.loads(run.path("fom", "timings.json").read_text())["test_seconds"]
    rom_seconds = json.loads(run.path("rom", "timings.json").read_text())
    written = 0

    tests = []
    for k, mu in enumerate(test_mu):
        spec = run.fom(mu)
        Yt = read_matrix(run.path("fom", f"test_{k:02d}.gpoi"))[:, ::cfg.rom_stride]
        tests.append((spec, Yt, spec.gradient(Yt)))

    # training-set quantities depend only on r and the operator
    per_r = {}
    for r in cfg.r:
        basis = run.basis(r)
        ops = {v: run.operator(v, r) for v in cfg.variants}
        if cfg.spg:
            D_spg = basis.Phi.T @ tests[0][0].D @ basis.Phi
            ops["SPG"] = InferredOperator(D_spg, "SPG", _certificate(D_spg, structure), float("nan"))
        if cfg.gradient_data == "projected":
            F_used = [projected_gradient_snapshots(sp, Y[:, b], basis.Phi) for sp, b in zip(train_specs, blocks)]
        else:
            F_used = [F[:, b] for b in blocks]
        e_opt = {
            kind: float(np.mean([
                optimization_error(Ydot[:, b], Fb, basis.Phi, op.D_r, cfg.T_fom, dA)
                for b, Fb in zip(blocks, F_used)
            ]))
            for kind, op in ops.items()
        }
        per_r[r] = (basis, ops, e_opt)

    for kind in run.rom_kinds():
        for k, (spec, Yt, Ft) in enumerate(tests):
            report = ErrorReport(T=T, N=Yt.shape[1] - 1, dA=dA, meta={"kind": kind, "mu": test_mu[k]})
            for r in cfg.r:
                basis, ops, e_opt = per_r[r]
                stem = f"r{r:03d}_mu{k:02d}"
                yr = read_matrix(run.path("rom", kind, f"{stem}.gpoi"))
                lifted = basis.Phi @ yr
                E = approx_error(Yt, lifted, T, dA) if np.all(np.isfinite(lifted)) else float("inf")
                report.add(ErrorRow(
                    r=r,
                    E=E,
                    E_proj=projection_error(Yt, basis.Phi, T, dA),
                    E_opt=e_opt[kind],
                    E_proj_gradH=grad_projection_error(Ft, basis.Phi, T, dA),
                    certificate=ops[kind].certificate,
                    fom_seconds=fom_seconds[k],
                    rom_seconds=rom_seconds[kind][stem],
                ))
            report.to_csv(run.path("report", f"{kind}_mu{k:02d}.csv"))
            written += 1

    header = ["r", "min_eig_FFt"] + [f"certificate_{v}" for v in cfg.variants]
    rows = []
    summaries = {v: json.loads(run.path("infer", v, "summary.json").read_text()) for v in cfg.variants}
    for r in cfg.r:
        first = summaries[cfg.variants[0]][str(r)]
        rows.append([r, first["min_eig_FFt"]] + [summaries[v][str(r)]["certificate"] for v in cfg.variants])
    write_csv(run.path("report", "structure.csv"), header, rows)

    write_csv(run.path("report", "data_error.csv"), ("mu", "surrogate"), [
        (mu, data_error_surrogate(Y[:, b], idx["dt"], cfg.T_fom, dA)) for mu, b in zip(idx["train_mu"], blocks)
    ])
    return f"{written} error tables, structure.csv and data_error.csv"


STAGE_FUNCS = {
    "fom-run": stage_fom_run,
    "pod": stage_pod,
    "infer": stage_infer,
    "rom-run": stage_rom_run,
    "report": stage_report,
}


def run_stage(run: Run, stage: str, force: bool, log=print) -> bool:
    """Run one stage; returns False when it was already complete."""
    if run.done(stage) and not force:
        log(f"{stage}: up to date in {run.root} (use --force to recompute)")
        return False
    start = time.perf_counter()
    summary = STAGE_FUNCS[stage](run)
    run.mark(stage, time.perf_counter() - start)
    log(f"{stage}: {summary} -> {run.root}")
    return True


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpopinf", description="Gradient-preserving operator inference pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fom-run": "simulate the full-order model and store snapshots",
        "pod": "compute and store the reduced basis",
        "infer": "learn reduced operators for every variant and r",
        "rom-run": "simulate the reduced models",
        "report": "write error tables (CSV)",
        "reproduce": "run every stage of a named recipe",
        "config": "print the resolved configuration as JSON",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        src = p.add_mutually_exclusive_group(required=name == "reproduce")
        src.add_argument("--recipe", metavar="NAME", help=f"named recipe: {', '.join(sorted(RECIPES))}")
        if name != "reproduce":
            src.add_argument("--config", metavar="PATH", help="JSON configuration file")
        p.add_argument("--paper-scale", action="store_true", help="use the full-size recipe settings")
        p.add_argument("--output", metavar="DIR", help="override output_dir")
        p.add_argument("--seed", type=int, metavar="N", help="override the RNG seed")
        if name != "config":
            p.add_argument("--force", action="store_true", help="recompute completed stages")
            p.add_argument("--workers", type=int, default=1, metavar="N", help="worker pool size (default 1)")
    return parser


def load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        if args.paper_scale:
            raise ConfigError("--paper-scale applies to recipes only")
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ArtifactIOError(f"{path}: {exc.strerror or exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    elif args.recipe:
        raw = recipe_config(args.recipe, args.paper_scale)
    else:
        raise ConfigError("give --config PATH or --recipe NAME")
    if isinstance(raw, dict):
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.output:
            raw["output_dir"] = args.output
    return parse_config(raw)


def _error_record(command, exc, code) -> str:
    return json.dumps({
        "status": "error", "command": command, "error": type(exc).__name__, "exit_code": code, "message": str(exc),
    })


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "config":
            print(json.dumps(cfg.to_json(), indent=2, sort_keys=True))
            return 0
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        run = Run(cfg, Path(cfg.output_dir), args.workers)
        run.open(args.force)
        stages = STAGES if args.command == "reproduce" else (args.command,)
        with warnings.catch_warnings():
            # deflation counts are kept in infer/<variant>/summary.json
            warnings.simplefilter("ignore", DeflationWarning)
            for stage in stages:
                run_stage(run, stage, args.force)
        return 0
    except GPOpInfError as exc:
        failure, code = exc, exc.exit_code
    except (OSError, EOFError) as exc:
        failure, code = exc, 3
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        failure, code = exc, 4
    print(_error_record(args.command, failure, code), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
