"""Benchmark scenario configs, ground-truth simulation and error curves.

A scenario file is YAML (shipped with a ``.cfg`` extension) holding nested
sections: model, run, bounds, initial, noise, filter, particles, solver and
optionally bound_demo.  All randomness is derived from one master seed via
counter-based seed sequences, so any trial is reproducible in isolation and
trials may run in any order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .conic import SolverOptions
from .dynamics import DynamicsModel, make_cv_tracking_model, make_linear_model
from .ellipsoids import Ellipsoid
from .errors import ConfigError
from .particles import NoiseHypothesis, truncated_gaussian_hypothesis, uniform_hypothesis
from .remainder import SamplePlan

_STREAMS = {"truth": 0, "init": 1, "mcsmf": 2, "pf-t": 3, "pf-g": 4, "pf-u": 5}


def trial_rng(master_seed: int, stream: str, trial: int) -> np.random.Generator:
    """Independent generator for (stream, trial), derived from the master seed."""
    if stream not in _STREAMS:
        raise ValueError(f"unknown rng stream {stream!r}")
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(_STREAMS[stream], trial))
    return np.random.default_rng(ss)


def cv_q_matrix(accel_intensity: float, T: float) -> np.ndarray:
    """Process-noise shape matrix of the constant-velocity model."""
    base = np.array([
        [T**3 / 3.0, 0.0, T**2 / 2.0, 0.0],
        [0.0, T**3 / 3.0, 0.0, T**2 / 2.0],
        [T**2 / 2.0, 0.0, T, 0.0],
        [0.0, T**2 / 2.0, 0.0, T],
    ])
    return accel_intensity * base


@dataclass(frozen=True)
class NoiseLawConfig:
    """Simulated noise law: density restricted to the bounding ellipsoid."""

    law: str  # "truncated_gaussian" | "uniform" | "zero"
    mean: np.ndarray
    cov: np.ndarray | None

    def __post_init__(self):
        if self.law not in ("truncated_gaussian", "uniform", "zero"):
            raise ConfigError(f"unknown noise law {self.law!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model_kind: str  # "cv_tracking" | "linear"
    T: float
    F: np.ndarray | None
    H: np.ndarray | None
    horizon: int
    trials: int
    seed: int
    Q: np.ndarray
    R: np.ndarray
    x0: np.ndarray
    init_center: np.ndarray
    init_shape: np.ndarray
    process_noise: NoiseLawConfig
    meas_noise: NoiseLawConfig
    plan: SamplePlan
    inflation: float
    particles: int
    solver: SolverOptions
    bound_demo: dict | None = None

    def build_model(self) -> DynamicsModel:
        if self.model_kind == "cv_tracking":
            return make_cv_tracking_model(self.T, self.F)
        return make_linear_model(self.F, self.H)

    def init_ellipsoid(self) -> Ellipsoid:
        return Ellipsoid(self.init_center, self.init_shape)

    def process_bound(self) -> Ellipsoid:
        return Ellipsoid(np.zeros(self.Q.shape[0]), self.Q)

    def meas_bound(self) -> Ellipsoid:
        return Ellipsoid(np.zeros(self.R.shape[0]), self.R)


@dataclass
class TrialRecord:
    """One trial's ground truth plus whatever each filter produced on it."""

    truth: np.ndarray  # (K+1, n)
    measurements: np.ndarray  # (K+1, n1)
    estimates: dict[str, np.ndarray] = field(default_factory=dict)
    containment: dict[str, np.ndarray] = field(default_factory=dict)
    traces: dict[str, np.ndarray] = field(default_factory=dict)
    step_times: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.truth.shape[0] - 1

    def attach(self, tag: str, estimates: np.ndarray, contained: np.ndarray,
               traces: np.ndarray, times: np.ndarray) -> None:
        for name, arr in (("estimates", estimates), ("containment", contained),
                          ("traces", traces), ("step_times", times)):
            if np.asarray(arr).shape[0] != self.truth.shape[0]:
                raise ValueError(f"{name} for {tag!r} does not span the horizon")
        self.estimates[tag] = np.asarray(estimates, dtype=float)
        self.containment[tag] = np.asarray(contained, dtype=bool)
        self.traces[tag] = np.asarray(traces, dtype=float)
        self.step_times[tag] = np.asarray(times, dtype=float)


def noise_hypothesis(law: NoiseLawConfig, bound: Ellipsoid) -> NoiseHypothesis | None:
    """True-law sampler for simulation; None for the zero law."""
    if law.law == "zero":
        return None
    if law.law == "uniform":
        return uniform_hypothesis(bound)
    return truncated_gaussian_hypothesis(bound, law.mean, law.cov, kind="true-pdf")


def assumed_hypothesis(law: NoiseLawConfig, bound: Ellipsoid, variant: str) -> NoiseHypothesis:
    """Noise model a particle-filter variant assumes.

    pf-t uses the true law; pf-g assumes a zero-mean truncated Gaussian with
    the same covariance (bound/9 if the true law has none); pf-u assumes the
    uniform density on the bound.
    """
    if variant == "pf-u":
        return uniform_hypothesis(bound)
    if variant == "pf-g":
        cov = law.cov if law.cov is not None else bound.shape / 9.0
        return truncated_gaussian_hypothesis(bound, np.zeros(bound.dim), cov,
                                             kind="zero-mean-gaussian")
    hyp = noise_hypothesis(law, bound)
    if hyp is None:
        raise ConfigError("particle filters need a non-degenerate noise law")
    return hyp


def simulate_trial(cfg: ScenarioConfig, trial: int) -> TrialRecord:
    """Ground truth and measurements for one trial (no filters attached).

    Every realized noise vector is asserted to satisfy its bounding
    ellipsoid; rejection sampling guarantees this by construction.
    """
    model = cfg.build_model()
    rng = trial_rng(cfg.seed, "truth", trial)
    w_bound, v_bound = cfg.process_bound(), cfg.meas_bound()
    w_hyp = noise_hypothesis(cfg.process_noise, w_bound)
    v_hyp = noise_hypothesis(cfg.meas_noise, v_bound)

    K = cfg.horizon
    n, n1 = model.state_dim, model.meas_dim
    truth = np.empty((K + 1, n))
    meas = np.empty((K + 1, n1))
    truth[0] = cfg.x0
    ws = np.zeros((K, n)) if w_hyp is None else w_hyp.sample(K, rng)
    vs = np.zeros((K + 1, n1)) if v_hyp is None else v_hyp.sample(K + 1, rng)
    if w_hyp is not None:
        assert np.all(w_bound.quadratic_form_many(ws) <= 1.0)
    if v_hyp is not None:
        assert np.all(v_bound.quadratic_form_many(vs) <= 1.0)
    for k in range(K):
        meas[k] = model.h(truth[k]) + vs[k]
        truth[k + 1] = model.f(truth[k]) + ws[k]
    meas[K] = model.h(truth[K]) + vs[K]
    return TrialRecord(truth=truth, measurements=meas)


def error_curves(records: list[TrialRecord], tag: str) -> np.ndarray:
    """Componentwise mean absolute estimation error per step, over trials."""
    if not records:
        raise ValueError("need at least one trial record")
    errs = [np.abs(r.truth - r.estimates[tag]) for r in records]
    return np.mean(errs, axis=0)


# -- config file parsing -----------------------------------------------------


def _matrix(value, key: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{key}: not a numeric matrix") from err
    if arr.ndim != 2:
        raise ConfigError(f"{key}: expected a matrix (list of rows)")
    return arr


def _vector(value, key: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{key}: not a numeric vector") from err
    if arr.ndim != 1:
        raise ConfigError(f"{key}: expected a flat list of numbers")
    return arr


def _section(data: dict, key: str) -> dict:
    if key not in data:
        raise ConfigError(f"missing config section {key!r}")
    if not isinstance(data[key], dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    return data[key]


def _noise_law(section: dict, key: str, dim: int, bound: np.ndarray) -> NoiseLawConfig:
    law = section.get("law")
    if law is None:
        raise ConfigError(f"{key}.law is required")
    mean = _vector(section.get("mean", [0.0] * dim), f"{key}.mean")
    if mean.size != dim:
        raise ConfigError(f"{key}.mean must have {dim} entries")
    cov = None
    if law == "truncated_gaussian":
        if "cov" in section:
            cov = _matrix(section["cov"], f"{key}.cov")
        else:
            divisor = float(section.get("cov_divisor", 9.0))
            if divisor <= 0:
                raise ConfigError(f"{key}.cov_divisor must be positive")
            cov = bound / divisor
    return NoiseLawConfig(law, mean, cov)


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"config does not parse: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")

    model = _section(data, "model")
    kind = model.get("kind")
    if kind not in ("cv_tracking", "linear"):
        raise ConfigError(f"model.kind must be cv_tracking or linear, got {kind!r}")
    T = float(model.get("T", 1.0))
    F = _matrix(model["F"], "model.F") if "F" in model else None
    H = _matrix(model["H"], "model.H") if "H" in model else None
    if kind == "linear" and (F is None or H is None):
        raise ConfigError("linear models need explicit model.F and model.H")

    run = _section(data, "run")
    try:
        horizon = int(run["horizon"])
        trials = int(run["trials"])
        seed = int(run["seed"])
    except KeyError as err:
        raise ConfigError(f"run.{err.args[0]} is required") from err
    if horizon < 1 or trials < 1:
        raise ConfigError("run.horizon and run.trials must be positive")

    bounds = _section(data, "bounds")
    if "Q" in bounds:
        Q = _matrix(bounds["Q"], "bounds.Q")
    elif "accel_intensity" in bounds:
        Q = cv_q_matrix(float(bounds["accel_intensity"]), T)
    else:
        raise ConfigError("bounds needs Q or accel_intensity")
    R = _matrix(bounds.get("R"), "bounds.R") if "R" in bounds else None
    if R is None:
        raise ConfigError("bounds.R is required")

    initial = _section(data, "initial")
    for key in ("truth", "center", "shape"):
        if key not in initial:
            raise ConfigError(f"initial.{key} is required")
    x0 = _vector(initial["truth"], "initial.truth")
    center = _vector(initial["center"], "initial.center")
    shape = _matrix(initial["shape"], "initial.shape")

    noise = _section(data, "noise")
    proc = _noise_law(_section(noise, "process"), "noise.process", Q.shape[0], Q)
    meas = _noise_law(_section(noise, "measurement"), "noise.measurement", R.shape[0], R)

    filt = data.get("filter", {}) or {}
    plan = SamplePlan(
        mode=filt.get("mode", "boundary"),
        count=int(filt.get("samples", 50)),
        deterministic=bool(filt.get("deterministic", True)),
        seed=int(filt.get("seed", seed)),
    )
    inflation = float(filt.get("inflation", 1.0))

    particles = int((data.get("particles", {}) or {}).get("count", 1000))

    solver_sec = data.get("solver", {}) or {}
    solver = SolverOptions(
        feasibility_tol=float(solver_sec.get("feasibility_tol", 1e-7)),
        max_iter=int(solver_sec.get("max_iter", 200)),
        verbose=bool(solver_sec.get("verbose", False)),
    )

    cfg = ScenarioConfig(
        name=str(data.get("name", path.stem)),
        model_kind=kind,
        T=T,
        F=F,
        H=H,
        horizon=horizon,
        trials=trials,
        seed=seed,
        Q=Q,
        R=R,
        x0=x0,
        init_center=center,
        init_shape=shape,
        process_noise=proc,
        meas_noise=meas,
        plan=plan,
        inflation=inflation,
        particles=particles,
        solver=solver,
        bound_demo=data.get("bound_demo"),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig) -> None:
    n = cfg.Q.shape[0]
    model = cfg.build_model()  # raises on malformed F/H
    if model.state_dim != n:
        raise ConfigError(f"bounds.Q is {n}x{n} but the model state is {model.state_dim}-D")
    if cfg.R.shape[0] != model.meas_dim:
        raise ConfigError("bounds.R dimension does not match the measurement dimension")
    for name, mat in (("bounds.Q", cfg.Q), ("bounds.R", cfg.R), ("initial.shape", cfg.init_shape)):
        eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        if eigs[0] <= 0:
            raise ConfigError(f"{name} must be positive definite")
    if cfg.x0.size != n or cfg.init_center.size != n:
        raise ConfigError("initial.truth and initial.center must match the state dimension")
    if cfg.init_shape.shape[0] != n:
        raise ConfigError("initial.shape must match the state dimension")


def with_overrides(cfg: ScenarioConfig, trials: int | None = None, seed: int | None = None,
                   samples: int | None = None, particles: int | None = None) -> ScenarioConfig:
    """Apply CLI-level overrides without touching the config file."""
    changes: dict = {}
    if trials is not None:
        changes["trials"] = trials
    if seed is not None:
        changes["seed"] = seed
        changes["plan"] = dataclasses.replace(cfg.plan, seed=seed)
    if samples is not None:
        plan = changes.get("plan", cfg.plan)
        changes["plan"] = dataclasses.replace(plan, count=samples)
    if particles is not None:
        changes["particles"] = particles
    return dataclasses.replace(cfg, **changes) if changes else cfg
