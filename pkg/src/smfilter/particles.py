"""Bootstrap particle filters under bounded-noise hypotheses.

The baselines differ only in what they assume about the noise densities:
the true truncated Gaussians, zero-mean truncated Gaussians, or uniform
densities on the bounding ellipsoids.  Weighting uses unnormalized densities
(normalizers cancel in resampling) and every draw is rejected back into its
bounding ellipsoid, so simulated noise always respects the bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsModel
from .ellipsoids import Ellipsoid, sample_in_ellipsoid
from .errors import DimensionMismatch, RejectionStall, WeightCollapse

#: Resample when the effective sample size drops below this fraction of N.
ESS_FRACTION = 0.5

#: Batched rejection sampling gives up after this many proposals per draw.
MAX_REJECTION_FACTOR = 100_000


@dataclass
class ParticleCloud:
    states: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,), nonnegative, sums to 1

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.states.ndim != 2 or self.weights.shape != (self.states.shape[0],):
            raise DimensionMismatch("cloud needs (N, n) states and (N,) weights")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1 (got {total})")

    @property
    def count(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class NoiseHypothesis:
    """Assumed noise law on a bounding ellipsoid.

    kind: "true-pdf" | "zero-mean-gaussian" | "uniform".  Gaussian kinds use
    (mean, cov) restricted to the bound; draws are rejection-sampled so each
    one satisfies the bound exactly.
    """

    kind: str
    bound: Ellipsoid
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("true-pdf", "zero-mean-gaussian", "uniform"):
            raise ValueError(f"unknown noise hypothesis kind {self.kind!r}")
        if self.kind != "uniform":
            if self.mean is None or self.cov is None:
                raise ValueError("gaussian hypotheses need mean and cov")
            object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
            object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n vectors, all inside the bounding ellipsoid."""
        if self.kind == "uniform":
            return sample_in_ellipsoid(self.bound, n, rng)
        L = np.linalg.cholesky(self.cov)
        out = np.empty((n, self.bound.dim))
        have = 0
        attempts = 0
        while have < n:
            want = max(n - have, 1) * 4
            draws = self.mean + rng.standard_normal((want, self.bound.dim)) @ L.T
            ok = draws[self.bound.quadratic_form_many(draws) <= 1.0]
            take = min(len(ok), n - have)
            out[have : have + take] = ok[:take]
            have += take
            attempts += want
            if attempts > MAX_REJECTION_FACTOR * n and have == 0:
                raise RejectionStall(
                    f"acceptance below {1.0 / MAX_REJECTION_FACTOR:g}; noise config mis-specified")
        return out

    def density(self, v: np.ndarray) -> np.ndarray:
        """Unnormalized density at residuals ``v`` (rows); zero outside the bound."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        inside = self.bound.quadratic_form_many(v) <= 1.0 + 1e-12
        if self.kind == "uniform":
            return inside.astype(float)
        L = np.linalg.cholesky(self.cov)
        z = np.linalg.solve(L, (v - self.mean).T)
        q = np.einsum("ij,ij->j", z, z)
        return np.where(inside, np.exp(-0.5 * q), 0.0)


def truncated_gaussian_hypothesis(bound: Ellipsoid, mean, cov, kind: str = "true-pdf") -> NoiseHypothesis:
    return NoiseHypothesis(kind, bound, mean, cov)


def uniform_hypothesis(bound: Ellipsoid) -> NoiseHypothesis:
    return NoiseHypothesis("uniform", bound)


def pf_init(init: Ellipsoid, n_particles: int, rng: np.random.Generator) -> ParticleCloud:
    """Equal-weight cloud drawn uniformly from the initial bounding ellipsoid."""
    states = sample_in_ellipsoid(init, n_particles, rng)
    return ParticleCloud(states, np.full(n_particles, 1.0 / n_particles))


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling indices: one uniform offset, N equal strata."""
    n = len(weights)
    positions = (np.arange(n) + rng.random()) / n
    return np.searchsorted(np.cumsum(weights), positions).clip(max=n - 1)


def effective_sample_size(weights: np.ndarray) -> float:
    return 1.0 / float(np.sum(np.square(weights)))


def _weight_and_resample(states: np.ndarray, weights: np.ndarray, y: np.ndarray,
                         model: DynamicsModel, hyp_meas: NoiseHypothesis,
                         rng: np.random.Generator) -> ParticleCloud:
    resid = model.wrap_residual(np.asarray(y, dtype=float) - model.apply_h(states))
    weights = weights * hyp_meas.density(resid)
    total = float(weights.sum())
    if total <= 0.0:
        raise WeightCollapse("all particle likelihoods are zero")
    weights = weights / total
    n = states.shape[0]
    if effective_sample_size(weights) < ESS_FRACTION * n:
        idx = systematic_resample(weights, rng)
        states = states[idx]
        weights = np.full(n, 1.0 / n)
    return ParticleCloud(states, weights)


def pf_step(cloud: ParticleCloud, y: np.ndarray, model: DynamicsModel,
            hyp_process: NoiseHypothesis, hyp_meas: NoiseHypothesis,
            rng: np.random.Generator) -> ParticleCloud:
    """One bootstrap step: propagate with process draws, weight, maybe resample.

    Raises WeightCollapse when no particle is consistent with the
    measurement's bounded support.
    """
    propagated = model.apply_f(cloud.states) + hyp_process.sample(cloud.count, rng)
    return _weight_and_resample(propagated, cloud.weights, y, model, hyp_meas, rng)


def pf_reweight(cloud: ParticleCloud, y: np.ndarray, model: DynamicsModel,
                hyp_meas: NoiseHypothesis, rng: np.random.Generator) -> ParticleCloud:
    """Measurement conditioning without propagation (initial-step weighting)."""
    return _weight_and_resample(cloud.states, cloud.weights, y, model, hyp_meas, rng)


def pf_estimate(cloud: ParticleCloud) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and (symmetrized) weighted covariance of the cloud."""
    mean = cloud.weights @ cloud.states
    centered = cloud.states - mean
    cov = (cloud.weights[:, None] * centered).T @ centered
    return mean, 0.5 * (cov + cov.T)


def confidence_band(cloud: ParticleCloud, sigmas: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate interval mean +- sigmas * std."""
    if sigmas <= 0.0:
        raise ValueError("sigmas must be positive")
    mean, cov = pf_estimate(cloud)
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return mean - sigmas * std, mean + sigmas * std
