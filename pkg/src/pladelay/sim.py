"""Frame-level Monte Carlo simulation of one authenticated link.

Each frame draws the tagged device's channel, runs the threshold test,
allocates symbols among the accepted requests and serves a fluid FIFO
queue fed at a constant rate. Attack scenarios add an eavesdropper whose
forged requests go through the same test.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import DeviceChannelStats, covariance_factor, complex_normal
from .pla import discriminant, false_alarm_rate
from .specfun import DomainError

SCENARIOS = ("baseline", "sybil", "disassociation", "no-pla-baseline", "no-pla-disassociation")
SIM_COLUMNS = ("w", "empirical_p", "ci_halfwidth", "n_samples")


@dataclass(frozen=True)
class SimConfig:
    """Everything one replication needs; channel statistics are passed by value."""

    scenario: str
    tagged: DeviceChannelStats
    alpha: float
    threshold: float = math.inf
    n_active: int = 1
    n_frame: int = 288
    n_frames: int = 10**6
    warmup: Optional[int] = None
    seed: int = 0
    sybil: tuple = ()
    attacker: Optional[DeviceChannelStats] = None
    p_attack: float = 0.0
    k_rc: int = 1
    max_w: int = 200
    chunk: int = 1 << 18

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise DomainError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.n_frames // 10)
        if not self.n_frames > self.warmup >= 0:
            raise DomainError("need n_frames > warmup >= 0")
        if self.alpha < 0 or self.n_active < 1 or self.n_frame < 1 or self.max_w < 0:
            raise DomainError("invalid rate, device count, frame size or max_w")
        if self.scenario == "sybil" and (self.attacker is None or not self.sybil):
            raise DomainError("sybil scenario needs an attacker and at least one Sybil id")
        if "disassociation" in self.scenario:
            if self.attacker is None:
                raise DomainError("disassociation scenario needs an attacker")
            if not 0.0 <= self.p_attack <= 1.0 or self.k_rc < 1:
                raise DomainError("need p_attack in [0, 1] and k_rc >= 1")

    @property
    def pla_enabled(self) -> bool:
        return not self.scenario.startswith("no-pla") and not math.isinf(self.threshold)


@dataclass
class SimTrace:
    """Post-warmup delay samples and the resulting violation curve."""

    delay_samples: np.ndarray
    w: np.ndarray
    empirical_p: np.ndarray
    ci_halfwidth: np.ndarray
    n_ties: int = 0
    service: Optional[np.ndarray] = field(default=None, repr=False)
    backlog: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return int(self.delay_samples.size)

    @property
    def violation_curve(self) -> dict:
        return {int(w): (float(p), float(c)) for w, p, c in zip(self.w, self.empirical_p, self.ci_halfwidth)}

    def rows(self, bound=None):
        for i, w in enumerate(self.w):
            row = {
                "w": int(w),
                "empirical_p": float(self.empirical_p[i]),
                "ci_halfwidth": float(self.ci_halfwidth[i]),
                "n_samples": self.n_samples,
            }
            if bound is not None:
                row["bound"] = float(bound[i])
            yield row

    def to_csv(self, path, bound=None):
        cols = list(SIM_COLUMNS) + (["bound"] if bound is not None else [])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.rows(bound):
                writer.writerow({k: format_number(v) if k != "w" and k != "n_samples" else v for k, v in row.items()})


def format_number(x: float) -> str:
    """Plain decimals, switching to scientific notation below 1e-3."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    if x != 0 and abs(x) < 1e-3:
        return f"{x:.6e}"
    return f"{x:.10g}"


class _ChannelSampler:
    def __init__(self, stats: DeviceChannelStats):
        self.stats = stats
        self.factor = covariance_factor(stats.covariance)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = complex_normal(rng, (n, self.stats.n_rx))
        return self.stats.mean + z @ self.factor.T


def queue_delays(alpha: float, service: np.ndarray, start: int, max_w: int):
    """Head-of-line delays of a fluid FIFO queue fed ``alpha`` per frame.

    ``W(t)`` is the smallest ``u`` with ``A(0, t) <= D(0, t + u)``, which is
    the first ``j >= t - 1`` where the backlog ``B_j <= alpha (j + 1 - t)``.
    Writing ``Z_j = B_j - alpha (j + 1)`` and noting ``Z_i > -alpha t`` for
    every ``i < t - 1``, the search reduces to a sorted lookup on the running
    minimum of ``Z``. Returns ``(delays, backlog)``; delays of bits whose
    departure lies past the horizon are ``inf``.
    """
    n = service.size
    steps = np.cumsum(alpha - service)
    backlog = steps - np.minimum.accumulate(np.minimum(steps, 0.0))
    backlog = np.maximum(backlog, 0.0)
    if alpha == 0.0:
        return np.zeros(n - start), backlog
    idx = np.arange(n, dtype=float)
    z = np.concatenate(([0.0], backlog - alpha * (idx + 1.0)))
    running = np.minimum.accumulate(z)
    t = np.arange(start, n)
    j = np.searchsorted(-running, alpha * t.astype(float), side="left")
    delays = (j - t).astype(float)
    delays[j >= n + 1] = math.inf
    # Bits too close to the horizon would be censored; keep only complete tails.
    keep = t <= n - 1 - max_w
    return delays[keep], backlog


def violation_curve(delays: np.ndarray, max_w: int):
    """Empirical ``P(W > w)`` for ``w = 0..max_w`` with 95% normal half-widths."""
    n = delays.size
    if n == 0:
        raise DomainError("no delay samples")
    w = np.arange(max_w + 1)
    finite = np.sort(delays[np.isfinite(delays)])
    exceed = n - np.searchsorted(finite, w, side="right")
    p = exceed / n
    ci = 1.96 * np.sqrt(p * (1.0 - p) / n)
    return w, p, ci


def _frame_service(cfg: SimConfig, rng: np.random.Generator):
    """Per-frame service (bits) and the number of tie-broken attack frames."""
    n = cfg.n_frames
    pla = cfg.pla_enabled
    threshold = cfg.threshold if pla else math.inf
    p_fa = false_alarm_rate(threshold, cfg.tagged.n_rx)
    tagged = _ChannelSampler(cfg.tagged)
    attacker = _ChannelSampler(cfg.attacker) if cfg.attacker is not None else None
    sybil = [(s.mean, s.covariance) for s in cfg.sybil]
    dis = "disassociation" in cfg.scenario

    service = np.empty(n)
    attack_win = np.zeros(n, dtype=bool) if dis else None
    ties = 0
    for lo in range(0, n, cfg.chunk):
        m = min(cfg.chunk, n - lo)
        h = tagged.draw(rng, m)
        gamma = np.sum(np.abs(h) ** 2, axis=1)
        d_i = discriminant(cfg.tagged.mean, cfg.tagged.covariance, h) if pla else np.zeros(m)
        accepted = d_i <= threshold
        others = rng.binomial(cfg.n_active - 1, 1.0 - p_fa, size=m)
        if cfg.scenario == "sybil":
            h_e = attacker.draw(rng, m)
            for mean, cov in sybil:
                if pla:
                    others += discriminant(mean, cov, h_e) <= threshold
                else:
                    others += 1
        if dis:
            attack = rng.random(m) < cfg.p_attack
            if pla:
                h_e = attacker.draw(rng, m)
                d_e = discriminant(cfg.tagged.mean, cfg.tagged.covariance, h_e)
                ties += int(np.count_nonzero(attack & (d_e == d_i)))
                win = attack & (d_e < d_i) & (d_e <= threshold)
            else:
                win = attack & (rng.random(m) < 0.5)
            attack_win[lo : lo + m] = win
        n_k = cfg.n_frame // (others + 1)
        service[lo : lo + m] = np.where(accepted, n_k * np.log2(1.0 + gamma), 0.0)

    if dis:
        _apply_outages(service, attack_win, cfg.k_rc)
    return service, ties


def _apply_outages(service: np.ndarray, wins: np.ndarray, k_rc: int) -> None:
    """Zero ``k_rc`` frames from each successful attack; attacks during an outage do nothing."""
    free_from = 0
    for k in np.flatnonzero(wins):
        if k >= free_from:
            service[k : k + k_rc] = 0.0
            free_from = k + k_rc


def run_link_sim(config: SimConfig, rng: Optional[np.random.Generator] = None, keep_series: bool = False) -> SimTrace:
    """One replication; the generator defaults to one seeded from ``config.seed``."""
    rng = rng if rng is not None else np.random.default_rng(np.random.SeedSequence(config.seed))
    service, ties = _frame_service(config, rng)
    delays, backlog = queue_delays(config.alpha, service, config.warmup, config.max_w)
    w, p, ci = violation_curve(delays, config.max_w)
    return SimTrace(
        delay_samples=delays,
        w=w,
        empirical_p=p,
        ci_halfwidth=ci,
        n_ties=ties,
        service=service if keep_series else None,
        backlog=backlog if keep_series else None,
    )


def merge_traces(traces, max_w: int) -> SimTrace:
    """Pool replications in list order (so the result does not depend on completion order)."""
    delays = np.concatenate([t.delay_samples for t in traces])
    w, p, ci = violation_curve(delays, max_w)
    return SimTrace(delays, w, p, ci, n_ties=sum(t.n_ties for t in traces))


def run_replications(config: SimConfig, n_reps: int, executor=None) -> SimTrace:
    """Independent replications seeded by spawning from ``config.seed``."""
    children = np.random.SeedSequence(config.seed).spawn(n_reps)
    rngs = [np.random.default_rng(c) for c in children]
    if executor is None:
        traces = [run_link_sim(config, r) for r in rngs]
    else:
        traces = list(executor.map(run_link_sim, [config] * n_reps, rngs))
    return merge_traces(traces, config.max_w)


@dataclass(frozen=True)
class RateEstimate:
    estimate: float
    std_error: float
    n: int


def _rate(hits: int, n: int) -> RateEstimate:
    p = hits / n
    return RateEstimate(p, math.sqrt(p * (1.0 - p) / n), n)


def detection_mc(
    legit: DeviceChannelStats,
    threshold: float,
    n_samples: int,
    rng: np.random.Generator,
    attacker: Optional[DeviceChannelStats] = None,
    chunk: int = 1 << 18,
) -> dict:
    """MC estimates of the authentication error rates from channel draws.

    Returns ``p_fa`` and, with an attacker, ``p_md`` (one forged message),
    ``p_d`` (the forged message looks more legitimate than a genuine one)
    and ``p_md_l2`` (it is chosen over the genuine one and passes the test).
    """
    if n_samples < 10_000:
        raise DomainError("detection MC needs at least 1e4 samples")
    lg = _ChannelSampler(legit)
    at = _ChannelSampler(attacker) if attacker is not None else None
    counts = {"p_fa": 0, "p_md": 0, "p_d": 0, "p_md_l2": 0}
    for lo in range(0, n_samples, chunk):
        m = min(chunk, n_samples - lo)
        d_i = discriminant(legit.mean, legit.covariance, lg.draw(rng, m))
        counts["p_fa"] += int(np.count_nonzero(d_i > threshold))
        if at is not None:
            d_e = discriminant(legit.mean, legit.covariance, at.draw(rng, m))
            counts["p_md"] += int(np.count_nonzero(d_e <= threshold))
            counts["p_d"] += int(np.count_nonzero(d_e < d_i))
            counts["p_md_l2"] += int(np.count_nonzero((d_e < d_i) & (d_e <= threshold)))
    keys = ("p_fa", "p_md", "p_d", "p_md_l2") if at is not None else ("p_fa",)
    return {k: _rate(counts[k], n_samples) for k in keys}


def sybil_count_mc(
    sybil: list,
    attacker: DeviceChannelStats,
    threshold: float,
    n_frames: int,
    rng: np.random.Generator,
    chunk: int = 1 << 18,
) -> RateEstimate:
    """Mean number of accepted Sybil ids when one attacker channel per frame serves them all."""
    sampler = _ChannelSampler(attacker)
    total = 0.0
    total_sq = 0.0
    for lo in range(0, n_frames, chunk):
        m = min(chunk, n_frames - lo)
        h_e = sampler.draw(rng, m)
        k = np.zeros(m)
        for s in sybil:
            k += discriminant(s.mean, s.covariance, h_e) <= threshold
        total += k.sum()
        total_sq += (k**2).sum()
    mean = total / n_frames
    var = max(total_sq / n_frames - mean**2, 0.0)
    return RateEstimate(mean, math.sqrt(var / n_frames), n_frames)
