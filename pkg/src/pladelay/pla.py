"""Channel-based authentication: discriminant, error rates and bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .channel import DeviceChannelStats, correlation_matrix
from .specfun import DomainError, chi2_sf, noncentral_chi2_cdf


class SingularCovarianceError(np.linalg.LinAlgError):
    """Feature covariance is not strictly positive definite."""


def discriminant(feature_mean, feature_cov, observed) -> np.ndarray:
    """Quadratic form ``2 (h - m)^H S^-1 (h - m)`` over the last axis of ``observed``."""
    m = np.asarray(feature_mean, dtype=complex)
    try:
        chol = np.linalg.cholesky(np.asarray(feature_cov, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("feature covariance is singular") from exc
    diff = np.asarray(observed, dtype=complex) - m
    flat = diff.reshape(-1, m.size).T
    white = np.linalg.solve(chol, flat) if m.size > 1 else flat / chol[0, 0]
    out = 2.0 * np.sum(np.abs(white) ** 2, axis=0)
    if diff.ndim == 1:
        return float(out[0])
    return out.reshape(diff.shape[:-1])


def false_alarm_rate(threshold: float, n_rx: int) -> float:
    """Probability that a legitimate message fails the threshold test."""
    if threshold < 0:
        raise DomainError(f"threshold must be >= 0, got {threshold}")
    if math.isinf(threshold):
        return 0.0
    return chi2_sf(2 * n_rx, threshold)


def threshold_for_fa(target_fa: float, n_rx: int) -> float:
    """Threshold whose false-alarm rate equals ``target_fa``."""
    if not 0.0 < target_fa < 1.0:
        raise DomainError(f"target false-alarm rate must lie in (0, 1), got {target_fa}")
    log_target = math.log(target_fa)

    def gap(t):
        return math.log(chi2_sf(2 * n_rx, t)) - log_target

    hi = 2.0 * n_rx
    while gap(hi) > 0:
        hi *= 2.0
    return optimize.brentq(gap, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass(frozen=True)
class PlaDecisionModel:
    """Constant-threshold test shared by all device ids."""

    threshold: float
    n_rx: int

    def __post_init__(self):
        if self.threshold < 0:
            raise DomainError("threshold must be >= 0")

    @classmethod
    def from_false_alarm(cls, p_fa: float, n_rx: int) -> "PlaDecisionModel":
        return cls(threshold_for_fa(p_fa, n_rx), n_rx)

    @classmethod
    def disabled(cls, n_rx: int) -> "PlaDecisionModel":
        """Accept-everything model (no authentication)."""
        return cls(math.inf, n_rx)

    @property
    def enabled(self) -> bool:
        return not math.isinf(self.threshold)

    @property
    def p_fa(self) -> float:
        return false_alarm_rate(self.threshold, self.n_rx)


@dataclass(frozen=True)
class ImpersonationParams:
    """Attacker discriminant law ``lam * chi2_{2 n_rx}(nu)``."""

    lam: float
    nu: float
    n_rx: int

    def __post_init__(self):
        if not self.lam > 0 or self.nu < 0:
            raise DomainError(f"need lam > 0 and nu >= 0, got lam={self.lam}, nu={self.nu}")


def _shape_matrix(stats: DeviceChannelStats) -> np.ndarray:
    # Covariance divided by its scale P/(1+K); must equal corr**|i-j|.
    if math.isinf(stats.rice_k):
        raise SingularCovarianceError("pure line-of-sight link has singular covariance")
    return stats.covariance * (1.0 + stats.rice_k) / stats.power


def impersonation_params(legit: DeviceChannelStats, attacker: DeviceChannelStats) -> ImpersonationParams:
    """Scale and noncentrality of the legitimate discriminant applied to the attacker."""
    if legit.n_rx != attacker.n_rx:
        raise DomainError("legitimate and attacker channels have different antenna counts")
    shape_i = _shape_matrix(legit)
    shape_e = _shape_matrix(attacker)
    if not np.allclose(shape_i, shape_e, rtol=1e-9, atol=1e-12):
        raise DomainError("attacker covariance is not a scaled copy of the legitimate one")
    if not np.allclose(shape_i, correlation_matrix(legit.n_rx, legit.corr), atol=1e-9):
        raise DomainError("covariance does not have the corr**|i-j| structure")
    lam = attacker.power * (1.0 + legit.rice_k) / (legit.power * (1.0 + attacker.rice_k))
    nu = discriminant(legit.mean, attacker.covariance, attacker.mean)
    return ImpersonationParams(lam=lam, nu=nu, n_rx=legit.n_rx)


def missed_detection_rate(threshold: float, params: ImpersonationParams) -> float:
    """Probability that a single forged message passes the threshold test."""
    if threshold < 0:
        raise DomainError(f"threshold must be >= 0, got {threshold}")
    if math.isinf(threshold):
        return 1.0
    return noncentral_chi2_cdf(2 * params.n_rx, params.nu, threshold / params.lam)


def chernoff_log_objective(t, params: ImpersonationParams):
    """Log of the Chernoff objective for ``P(d_E < d_i)`` at tilt ``t``."""
    t = np.asarray(t, dtype=float)
    lam, nu, n = params.lam, params.nu, params.n_rx
    with np.errstate(divide="ignore", invalid="ignore"):
        base = (1.0 - 2.0 * t) * (1.0 + 2.0 * lam * t)
        out = -n * np.log(base) - nu * lam * t / (1.0 + 2.0 * lam * t)
    return np.where(base > 0, out, np.inf)


def chernoff_pd(params: ImpersonationParams, return_tilt: bool = False):
    """Chernoff bound on ``P(d_E < d_i)`` for independent legit/attacker channels.

    The tilt runs over ``0 <= t < 1/2``; the objective is convex there, so a
    200-point grid followed by a bounded scalar refinement finds the minimum.
    The result is clamped to ``[0, 1]``.
    """
    upper = 0.5 * (1.0 - 1e-12)
    grid = upper * np.linspace(0.0, 1.0, 200, endpoint=False)
    grid = np.concatenate((grid, 0.5 - 0.5 * np.logspace(-3, -12, 20)))
    vals = chernoff_log_objective(grid, params)
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    best_t, best = grid[k], float(vals[k])
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda t: float(chernoff_log_objective(t, params)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-13 * max(1.0, hi)},
        )
        if res.fun < best:
            best_t, best = float(res.x), float(res.fun)
    bound = min(1.0, math.exp(min(best, 0.0)))
    return (bound, best_t) if return_tilt else bound


def md_l2_bounds(threshold: float, params: ImpersonationParams) -> tuple:
    """Lower and upper bounds on the two-message missed-detection probability."""
    p_md = missed_detection_rate(threshold, params)
    lower = false_alarm_rate(threshold, params.n_rx) * p_md
    upper = min(p_md, chernoff_pd(params))
    return lower, upper
