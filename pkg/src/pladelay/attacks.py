"""Scheduling and service-availability models for each attack scenario.

All pmfs over counts are plain numpy vectors indexed by the count. The
symbol-budget pmf is a ``{n_k: probability}`` dict in decreasing ``n_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .specfun import DomainError, poisson_binomial_pmf


@dataclass(frozen=True)
class FrameResourceModel:
    n_frame: int
    active_set: tuple
    sybil_set: tuple = ()
    arrival_rate: float = 0.0

    def __post_init__(self):
        if self.n_frame < 1:
            raise DomainError("n_frame must be >= 1")
        overlap = set(self.active_set) & set(self.sybil_set)
        if overlap:
            raise DomainError(f"sybil ids overlap the active set: {sorted(overlap)}")


@dataclass(frozen=True)
class ScheduleDistribution:
    sched_pmf: np.ndarray
    nk_pmf: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DisassocModel:
    p_attack: float
    k_rc: int
    p_block: float


def _check_prob(p, name="probability"):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise DomainError(f"{name} must lie in [0, 1]")


def _check_pmf(pmf):
    pmf = np.asarray(pmf, dtype=float)
    if pmf.ndim != 1 or np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-9:
        raise DomainError("not a valid pmf")
    return pmf


def baseline_sched_dist(n_active: int, p_fa: float) -> np.ndarray:
    """Binomial(n_active, 1 - p_fa) pmf of the number of accepted requests."""
    if n_active < 0:
        raise DomainError("n_active must be >= 0")
    _check_prob(p_fa, "p_fa")
    return stats.binom.pmf(np.arange(n_active + 1), n_active, 1.0 - p_fa)


def sybil_success_dist(md_rates) -> np.ndarray:
    """Pmf of accepted Sybil ids treating the per-id tests as independent."""
    return poisson_binomial_pmf(md_rates)


def sched_dist_under_sybil(baseline, sybil) -> np.ndarray:
    """Pmf of accepted legitimate plus Sybil requests (a convolution)."""
    return np.convolve(_check_pmf(baseline), _check_pmf(sybil))


def nk_dist(sched_pmf, n_frame: int) -> dict:
    """Symbols given to a scheduled tagged device.

    ``sched_pmf[c]`` is the probability that ``c`` other requests are
    accepted alongside the tagged one, so the share is ``n_frame // (c + 1)``.
    Counts mapping to the same share are merged.
    """
    pmf = _check_pmf(sched_pmf)
    if n_frame < 1:
        raise DomainError("n_frame must be >= 1")
    out: dict = {}
    for c, p in enumerate(pmf):
        if p == 0.0:
            continue
        n = n_frame // (c + 1)
        out[n] = out.get(n, 0.0) + float(p)
    return dict(sorted(out.items(), reverse=True))


def nk_mean(nk_pmf: dict) -> float:
    return float(sum(n * p for n, p in nk_pmf.items()))


def disassoc_block_prob(md_upper: float, p_attack: float, k_rc: int) -> float:
    """Probability that at least one attack in a ``k_rc``-frame block succeeds."""
    _check_prob(md_upper, "md_upper")
    _check_prob(p_attack, "p_attack")
    if k_rc < 1 or int(k_rc) != k_rc:
        raise DomainError("k_rc must be a positive integer")
    return 1.0 - (1.0 - md_upper * p_attack) ** int(k_rc)


def tagged_schedule(n_active: int, p_fa: float, sybil_pmf=None, n_frame: int = 288) -> ScheduleDistribution:
    """Schedule of the other requests seen by one active, scheduled device."""
    others = baseline_sched_dist(n_active - 1, p_fa)
    if sybil_pmf is not None:
        others = sched_dist_under_sybil(others, sybil_pmf)
    return ScheduleDistribution(sched_pmf=others, nk_pmf=nk_dist(others, n_frame))
