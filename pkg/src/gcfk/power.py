"""Identifiability of manipulation from observed statistics, and sample sizes.

A round's summary statistic is ``y = mu + LB z + eps`` with ``eps ~ N(0, Sigma')``;
randomized challenges add a score with mean ``eta u.z`` and variance ``sigma_c^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import ndtr, ndtri

from .errors import SingularCovariance, ZeroNoncentrality
from .linalg import as_symmetric, as_vector
from .mechanism import MixPolicy

NULLSPACE_RTOL = 1e-10


@dataclass(frozen=True)
class ObservationModel:
    lb: np.ndarray
    sigma_prime: np.ndarray
    u: np.ndarray
    mix: MixPolicy = field(default_factory=lambda: MixPolicy(0.0))

    def __post_init__(self):
        lb = np.atleast_2d(np.asarray(self.lb, dtype=float))
        sp = as_symmetric(self.sigma_prime, "sigma_prime")
        u = as_vector(self.u, "u")
        if sp.shape[0] != lb.shape[0] or u.size != lb.shape[1]:
            raise ValueError(f"inconsistent shapes: LB {lb.shape}, Sigma' {sp.shape}, u {u.size}")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "sigma_prime", sp)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.lb.shape[1]

    def fisher_information(self) -> np.ndarray:
        """Per-round information about ``z``, including the challenge term."""
        W = _cov_solve(self.sigma_prime, self.lb)
        mix = self.mix
        return self.lb.T @ W + mix.pi * mix.eta**2 * np.outer(self.u, self.u) / mix.sigma_c**2


@dataclass(frozen=True)
class PowerSpec:
    significance: float = 0.05
    power_target: float = 0.8
    z_alt: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.significance < 1:
            raise ValueError("significance must lie in (0, 1)")
        if not 0 < self.power_target < 1:
            raise ValueError("power_target must lie in (0, 1)")
        if self.z_alt is not None:
            object.__setattr__(self, "z_alt", as_vector(self.z_alt, "z_alt"))

    @property
    def beta(self) -> float:
        return 1.0 - self.power_target


def _cov_solve(cov: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        cho = scipy.linalg.cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("Sigma' is not positive definite") from exc
    return scipy.linalg.cho_solve(cho, b)


def nullspace_basis(model: ObservationModel, tol: float | None = None) -> list[np.ndarray]:
    """Orthonormal directions ``z`` with ``|LB z| <= tol * |LB|`` (spectral norm)."""
    _, s, vt = np.linalg.svd(model.lb)
    p = model.dim
    top = s[0] if s.size else 0.0
    thresh = (NULLSPACE_RTOL if tol is None else tol) * top
    sv = np.zeros(p)
    sv[: s.size] = s
    return [vt[i].copy() for i in range(p) if sv[i] <= thresh]


def restricted_sigma_min(model: ObservationModel, subspace_basis) -> float:
    B = np.column_stack([as_vector(b) for b in subspace_basis])
    A = model.lb @ B
    s = np.linalg.svd(A, compute_uv=False)
    if A.shape[0] < A.shape[1]:
        return 0.0
    return float(s.min())


def noncentrality(model: ObservationModel, z_alt) -> float:
    """``(LB z)^T Sigma'^{-1} (LB z) + pi eta^2 (u.z)^2 / sigma_c^2``."""
    z = as_vector(z_alt, "z_alt")
    m = model.lb @ z
    quad = float(m @ _cov_solve(model.sigma_prime, m))
    mix = model.mix
    return quad + mix.pi * mix.eta**2 * float(model.u @ z) ** 2 / mix.sigma_c**2


def normal_quantile(p: float) -> float:
    return float(ndtri(p))


def _ceil_rounds(raw: float) -> int:
    # Guards against 7.000000000001 style round-off pushing the ceiling up a step.
    return max(1, math.ceil(raw * (1.0 - 1e-12)))


def required_n_raw(spec: PowerSpec, delta_sq: float) -> float:
    if not delta_sq > 0:
        raise ZeroNoncentrality("noncentrality must be positive")
    za = normal_quantile(1.0 - spec.significance)
    zb = normal_quantile(1.0 - spec.beta)
    return (za + zb) ** 2 / delta_sq


def required_n(spec: PowerSpec, delta_sq: float) -> int:
    return _ceil_rounds(required_n_raw(spec, delta_sq))


def required_n_tail(delta: float, delta_sq: float) -> int:
    """Rounds sufficient for level ``delta`` and power ``1 - delta`` via the exponential tail."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not delta_sq > 0:
        raise ZeroNoncentrality("noncentrality must be positive")
    return _ceil_rounds(2.0 * math.log(2.0 / delta) / delta_sq)


def theoretical_power(significance: float, delta_sq: float, n: float) -> float:
    """Power of the one-sided standardized test after ``n`` rounds."""
    return float(ndtr(math.sqrt(n * delta_sq) - normal_quantile(1.0 - significance)))


def mc_power_at(delta_sq: float, significance: float, n: float, reps: int, seed: int) -> float:
    if reps < 2000:
        raise ValueError("reps must be at least 2000")
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    stat = rng.standard_normal(reps) + math.sqrt(n * max(delta_sq, 0.0))
    return float(np.mean(stat > normal_quantile(1.0 - significance)))


def mc_power(model: ObservationModel, spec: PowerSpec, n: float, reps: int, seed: int) -> float:
    """Monte Carlo rejection rate of the standardized GLS statistic under ``z = spec.z_alt``.

    The statistic is ``N(sqrt(n) Delta, 1)``; ``n`` may be fractional when
    checking calibration at an unrounded sample size.
    """
    z = spec.z_alt if spec.z_alt is not None else np.zeros(model.dim)
    return mc_power_at(noncentrality(model, z), spec.significance, n, reps, seed)


# --- round-count planning for index estimates -------------------------------


def aggregator_inflation(kind: str, trim_fraction: float = 0.0) -> float:
    """Variance inflation ``1 / (1 - rho_trim)`` relative to the plain mean."""
    if kind == "mean":
        rho = 0.0
    elif kind == "median":
        rho = math.pi / 2 - 1
    elif kind == "trimmed":
        if not 0 <= trim_fraction < 0.5:
            raise ValueError("trim_fraction must lie in [0, 0.5)")
        rho = 2 * trim_fraction
    else:
        raise ValueError(f"unknown aggregator kind {kind!r}")
    return 1.0 / (1.0 - rho)


def rounds_for_index_test(
    significance: float,
    beta: float,
    sigma_index: float,
    tau: float,
    mean_index: float,
    aggregator: str = "mean",
    trim_fraction: float = 0.0,
    pi: float = 0.0,
) -> float:
    """Approximate rounds to show the index sits below ``tau`` with power ``1 - beta``.

    Includes the aggregator inflation and the ``(1 - pi)^-2`` mixing contraction.
    """
    if tau == mean_index:
        raise ZeroNoncentrality("effect size tau - mean_index is zero")
    if not 0 <= pi < 1:
        raise ValueError("pi must lie in [0, 1)")
    z = normal_quantile(1 - significance) + normal_quantile(1 - beta)
    base = z**2 * sigma_index**2 / (tau - mean_index) ** 2
    return base * aggregator_inflation(aggregator, trim_fraction) / (1 - pi) ** 2


def rounds_for_interval(significance: float, sigma_index: float, half_width: float) -> float:
    return normal_quantile(1 - significance / 2) ** 2 * sigma_index**2 / half_width**2
