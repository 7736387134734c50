"""Stochastic network calculus delay bounds in the SNR (Mellin) domain.

Arrival and service are handled through their Mellin transforms
``M_X(s) = E[e^{(s-1) x}]`` of the bit-domain per-frame increments. The
steady-state kernel ``M_S(1-s)**w / (1 - M_A(1+s) M_S(1-s))`` upper-bounds
the probability that a bit waits longer than ``w`` steps; the bound is
minimized over ``s`` on the stability interval.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, optimize, special

from .specfun import (
    ConvergenceError,
    DomainError,
    RealTolerance,
    generalized_binomial_seq,
    ln_gamma,
    upper_incomplete_gamma_scaled_ladder,
)

LN2 = math.log(2.0)
MELLIN_TOL = RealTolerance(rel_tol=1e-10, max_terms=200)
UNBOUNDED = math.inf


@dataclass(frozen=True)
class GammaApproxParams:
    """SNR approximated as ``alpha_g * X`` with ``X ~ chi2(k_g)``."""

    alpha_g: float
    k_g: float

    def __post_init__(self):
        if not (self.alpha_g > 0 and self.k_g > 0):
            raise DomainError(f"need alpha_g > 0 and k_g > 0, got {self.alpha_g}, {self.k_g}")

    @property
    def mean(self) -> float:
        return self.alpha_g * self.k_g


@dataclass(frozen=True)
class DeterministicSnr:
    """Constant SNR (pure line-of-sight link)."""

    snr: float

    def __post_init__(self):
        if self.snr < 0:
            raise DomainError("SNR must be >= 0")

    @property
    def mean(self) -> float:
        return self.snr


SnrLaw = Union[GammaApproxParams, DeterministicSnr]


def gamma_approx_params(moments, offset_variant: bool = False) -> GammaApproxParams:
    """Match a scaled central chi-square to the SNR mean and variance.

    The default uses the plain moments. ``offset_variant=True`` replaces the
    mean by ``1 + mean`` and the variance by half of it.
    """
    mean, var = (float(v) for v in moments)
    if not mean > 0:
        raise DomainError(f"mean SNR must be positive, got {mean}")
    if var == 0:
        raise DomainError("zero SNR variance; use DeterministicSnr")
    if not var > 0:
        raise DomainError(f"SNR variance must be positive, got {var}")
    if offset_variant:
        num, v = 1.0 + mean, 0.5 * var
        return GammaApproxParams(alpha_g=v / num, k_g=num**2 / v)
    return GammaApproxParams(alpha_g=var / (2.0 * mean), k_g=2.0 * mean**2 / var)


def snr_law(moments, offset_variant: bool = False) -> SnrLaw:
    """Gamma approximation, or the exact deterministic law when the variance is zero."""
    mean, var = moments
    if var == 0:
        return DeterministicSnr(float(mean))
    return gamma_approx_params(moments, offset_variant)


def _series_log(s, params: GammaApproxParams, tol: RealTolerance, cancel_limit: float):
    """Log of the Mellin series per entry of ``s``; NaN where it fails."""
    x = 0.5 / params.alpha_g
    kp = 0.5 * params.k_g - 1.0
    n = tol.max_terms
    coef = generalized_binomial_seq(kp, n) * (-1.0) ** np.arange(n)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = coef[None, :] * upper_incomplete_gamma_scaled_ladder(s + kp, n, x)
        partial = np.cumsum(terms, axis=1)
        small = np.abs(terms) < tol.rel_tol * np.abs(partial)
    run = small[:, :-2] & small[:, 1:-1] & small[:, 2:]
    converged = run.any(axis=1)
    stop = np.argmax(run, axis=1) + 2
    rows = np.arange(s.size)
    total = partial[rows, stop]
    upto = np.arange(n)[None, :] <= stop[:, None]
    peak = np.where(upto, np.abs(terms), 0.0).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        good = converged & (total > 0) & (peak <= cancel_limit * total)
        log_pref = 0.5 * params.k_g * math.log(x) - ln_gamma(0.5 * params.k_g)
        out = np.where(good, log_pref + np.log(total), np.nan)
    return out, converged


@functools.lru_cache(maxsize=4096)
def _laguerre_nodes(n: int, shape: float):
    return special.roots_genlaguerre(n, shape)


def _laguerre_log(s, params: GammaApproxParams, n_nodes: int):
    """Log of the defining integral by Gauss-Laguerre matched to the integrand's mode.

    The integrand ``x**(a-1) (1 + alpha x)**(s-1) e**(-x/2)`` is divided by the
    Gamma kernel with the same mode and log-curvature, and the smooth ratio
    is integrated against that kernel.
    """
    a = 0.5 * params.k_g
    alpha = params.alpha_g
    p = 1.0 - np.asarray(s, dtype=float)
    qa, qb, qc = -0.5 * alpha, -p * alpha + (a - 1.0) * alpha - 0.5, a - 1.0
    if a > 1.0:
        mode = (-qb - np.sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa)
    else:
        mode = np.full_like(p, np.nan)
    out = np.empty_like(p)
    for i, (pi, xm) in enumerate(zip(p, mode)):
        if not xm > 0:
            out[i] = np.nan
            continue
        curv = pi * alpha**2 / (1.0 + alpha * xm) ** 2 - (a - 1.0) / xm**2
        # The kernel need only be close, so its shape is rounded to reuse nodes.
        c = 1.0 + max(round(-curv * xm**2 * 8.0) / 8.0, -0.875)
        b = (c - 1.0) / xm if c != 1.0 else 1.0 / xm
        if not (c > 0 and b > 0):
            out[i] = np.nan
            continue
        y, wts = _laguerre_nodes(n_nodes, c - 1.0)
        xn = y / b
        log_r = (a - c) * np.log(xn) - pi * np.log1p(alpha * xn) + (b - 0.5) * xn
        top = log_r.max()
        out[i] = top + math.log(np.dot(wts, np.exp(log_r - top))) - c * math.log(b)
    return out - a * LN2 - ln_gamma(a)


def _quad_log(s: float, params: GammaApproxParams) -> float:
    """Log of the defining integral by adaptive quadrature, scaled at the peak."""
    a, alpha = 0.5 * params.k_g, params.alpha_g

    def phi(x):
        return (a - 1.0) * math.log(x) + (s - 1.0) * math.log1p(alpha * x) - 0.5 * x

    res = optimize.minimize_scalar(lambda u: -phi(math.exp(u)), bounds=(-60.0, 10.0), method="bounded")
    xm = math.exp(res.x)
    top = phi(xm)

    def f(v):
        return math.exp(phi(xm * v) - top) if v > 0 else 0.0

    body, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=400)
    tail, _ = integrate.quad(f, 1.0, np.inf, epsabs=0.0, epsrel=1e-11, limit=400)
    body, tail = body * xm, tail * xm
    return top + math.log(body + tail) - a * LN2 - ln_gamma(a)


def log_mellin_g(s, params: SnrLaw, tol: RealTolerance = MELLIN_TOL, method: str = "auto"):
    """Natural log of :func:`mellin_g`; stays finite where the value underflows."""
    s_arr = np.asarray(s, dtype=float)
    if isinstance(params, DeterministicSnr):
        out = (s_arr - 1.0) * math.log1p(params.snr)
        return float(out) if out.ndim == 0 else out
    if method not in ("auto", "series"):
        raise DomainError(f"unknown Mellin method {method!r}")

    flat = np.atleast_1d(s_arr).ravel()
    strict = method == "series"
    out, converged = _series_log(flat, params, tol, 1e10 if strict else 1e6)
    bad = np.isnan(out)
    if strict and bad.any():
        where = flat[bad][0]
        if not converged[bad][0]:
            raise ConvergenceError(f"Mellin series did not converge in {tol.max_terms} terms at s={where}")
        raise ConvergenceError(f"Mellin series lost significance to cancellation at s={where}")
    if bad.any():
        lo = _laguerre_log(flat[bad], params, 64)
        hi = _laguerre_log(flat[bad], params, 96)
        agree = np.abs(hi - lo) < 1e-9
        fixed = np.where(agree, hi, np.nan)
        for j in np.nonzero(~agree)[0]:
            fixed[j] = _quad_log(float(flat[bad][j]), params)
        out[bad] = fixed
    if s_arr.ndim == 0:
        return float(out[0])
    return out.reshape(s_arr.shape)


def mellin_g(s, params: SnrLaw, tol: RealTolerance = MELLIN_TOL, method: str = "auto"):
    """``E[(1 + gamma)**(s - 1)]`` for the approximate SNR law.

    With ``x = 1/(2 alpha_g)`` and ``k' = k_g/2 - 1`` the series reads
    ``x**(k_g/2) / Gamma(k_g/2) * sum_m (-1)**m C(k', m) G(s + k' - m, x)``
    where ``G(a, x) = e**x x**-a Gamma(a, x)``; the powers of ``2 alpha_g`` of
    the textbook form cancel, which keeps every term finite. The sum stops
    once three consecutive terms fall below ``rel_tol`` times the partial sum.

    For strongly negative ``s`` the alternating terms cancel. ``method="series"``
    then raises :class:`ConvergenceError`; the default ``"auto"`` switches to
    a mode-matched Gauss-Laguerre rule (checked against a second order, with
    adaptive quadrature as the last resort).
    """
    return np.exp(log_mellin_g(s, params, tol, method))


def _chi2_logpdf(x, k):
    return (0.5 * k - 1.0) * np.log(x) - 0.5 * x - 0.5 * k * LN2 - ln_gamma(0.5 * k)


def mellin_g_oracle(s: float, params: GammaApproxParams, rel_tol: float = 1e-10) -> float:
    """Adaptive quadrature of ``int (1 + alpha_g x)**(s-1) f_chi2(x; k_g) dx``."""
    a, k = params.alpha_g, params.k_g

    def integrand(x):
        if x <= 0:
            return 0.0
        return math.exp((s - 1.0) * math.log1p(a * x) + _chi2_logpdf(x, k))

    mode = max(k - 2.0, 0.0)
    pieces = [0.0, mode] if mode > 0 else [0.0]
    pieces += [mode + 10.0 * math.sqrt(2 * k) + 10.0]
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=400)
        total += val
    tail, _ = integrate.quad(integrand, pieces[-1], np.inf, epsabs=0.0, epsrel=rel_tol, limit=400)
    return total + tail


def mean_log2_snr(law: SnrLaw) -> float:
    """``E[log2(1 + gamma)]`` under the approximate SNR law."""
    if isinstance(law, DeterministicSnr):
        return math.log2(1.0 + law.snr)
    a, k = law.alpha_g, law.k_g

    def integrand(x):
        return math.log1p(a * x) / LN2 * math.exp(_chi2_logpdf(x, k)) if x > 0 else 0.0

    hi = k + 20.0 * math.sqrt(2 * k) + 20.0
    body, _ = integrate.quad(integrand, 0.0, hi, epsabs=0.0, epsrel=1e-11, limit=400)
    tail, _ = integrate.quad(integrand, hi, np.inf, epsabs=0.0, epsrel=1e-11, limit=400)
    return body + tail


def _check_prob(p, name):
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p}")


def mellin_service_baseline(s, p_fa: float, n_k: int, params: SnrLaw, tol: RealTolerance = MELLIN_TOL):
    """Service transform when the device receives ``n_k`` symbols unless falsely rejected."""
    return mellin_service_sybil(s, p_fa, {n_k: 1.0}, params, tol)


def mellin_service_sybil(s, p_fa: float, nk_pmf: dict, params: SnrLaw, tol: RealTolerance = MELLIN_TOL):
    """Service transform with a random symbol budget ``N_k ~ nk_pmf``."""
    _check_prob(p_fa, "p_fa")
    ns = np.array(list(nk_pmf), dtype=float)
    ps = np.array(list(nk_pmf.values()), dtype=float)
    if ns.size == 0 or np.any(ns < 1) or np.any(ps < 0) or abs(ps.sum() - 1.0) > 1e-9:
        raise DomainError("nk_pmf must be a pmf over symbol counts >= 1")
    s_arr = np.asarray(s, dtype=float)
    if p_fa == 1.0:
        out = np.ones_like(s_arr)
    else:
        flat = np.atleast_1d(s_arr).ravel()
        args = 1.0 + np.outer(flat - 1.0, ns) / LN2
        mg = np.asarray(mellin_g(args.ravel(), params, tol)).reshape(args.shape)
        out = ((1.0 - p_fa) * (mg @ ps) + p_fa).reshape(s_arr.shape)
    return float(out) if out.ndim == 0 else out


def mellin_service_disassoc(s, p_block: float, k_rc: int, baseline_mellin_at_s):
    """Block service over ``k_rc`` frames that is lost entirely with probability ``p_block``."""
    _check_prob(p_block, "p_block")
    if k_rc < 1:
        raise DomainError("k_rc must be >= 1")
    base = np.asarray(baseline_mellin_at_s, dtype=float)
    out = (1.0 - p_block) * base**k_rc + p_block
    return float(out) if out.ndim == 0 else out


def mellin_arrival_const(s, alpha: float, timescale: int = 1):
    """Constant arrivals of ``alpha`` bits per frame over ``timescale`` frames."""
    if alpha < 0:
        raise DomainError("alpha must be >= 0")
    out = np.exp(alpha * timescale * (np.asarray(s, dtype=float) - 1.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ServiceModel:
    """Per-frame service ``N_k log2(1 + gamma)`` gated by the authentication outcome."""

    p_fa: float
    nk_pmf: dict
    law: SnrLaw
    tol: RealTolerance = MELLIN_TOL

    def mellin(self, s):
        return mellin_service_sybil(s, self.p_fa, self.nk_pmf, self.law, self.tol)

    def mean_rate(self) -> float:
        e_n = sum(n * p for n, p in self.nk_pmf.items())
        return (1.0 - self.p_fa) * e_n * mean_log2_snr(self.law)


@dataclass(frozen=True)
class SncScenario:
    """Arrival and service transforms of one queue; ``timescale`` frames per kernel step."""

    arrival_mellin: Callable
    service_mellin: Callable
    timescale: int = 1
    name: str = ""

    def __post_init__(self):
        if self.timescale < 1:
            raise DomainError("timescale must be >= 1")
        for label, fn in (("arrival", self.arrival_mellin), ("service", self.service_mellin)):
            if abs(float(fn(1.0)) - 1.0) > 1e-9:
                raise DomainError(f"{label} transform must equal 1 at s=1")

    def stability_product(self, s):
        s = np.asarray(s, dtype=float)
        return self.arrival_mellin(1.0 + s) * self.service_mellin(1.0 - s)


def baseline_scenario(service: ServiceModel, alpha: float, name: str = "baseline") -> SncScenario:
    return SncScenario(
        arrival_mellin=lambda s: mellin_arrival_const(s, alpha),
        service_mellin=service.mellin,
        name=name,
    )


def disassoc_scenario(service: ServiceModel, alpha: float, p_block: float, k_rc: int) -> SncScenario:
    """Queue observed every ``k_rc`` frames with block outages of probability ``p_block``."""
    return SncScenario(
        arrival_mellin=lambda s: mellin_arrival_const(s, alpha, k_rc),
        service_mellin=lambda s: mellin_service_disassoc(s, p_block, k_rc, service.mellin(s)),
        timescale=k_rc,
        name="disassociation",
    )


def utilization_arrival_rate(u: float, service) -> float:
    """Arrival rate giving utilization ``u``; ``service`` is a ServiceModel or a mean rate."""
    if not 0.0 < u < 1.0:
        raise DomainError(f"utilization must lie in (0, 1), got {u}")
    mean = service.mean_rate() if isinstance(service, ServiceModel) else float(service)
    if not mean > 0:
        raise DomainError("mean service rate is zero")
    return u * mean


def steady_kernel(s: float, w: float, scenario: SncScenario) -> float:
    """Steady-state kernel, or ``inf`` outside the stability region."""
    if not s > 0 or w < 0:
        raise DomainError("need s > 0 and w >= 0")
    ms = float(scenario.service_mellin(1.0 - s))
    prod = float(scenario.arrival_mellin(1.0 + s)) * ms
    if not prod < 1.0:
        return math.inf
    return ms**w / (1.0 - prod)


@dataclass(frozen=True)
class DelayBoundResult:
    w: float
    bound: float
    s_star: float
    stable: bool
    raw_kernel: float = field(default=math.inf, compare=False)


S_MIN = 1e-6
N_GRID = 400
# Past this the service transform has long settled at its p_fa floor.
S_CAP = 64.0


class KernelTable:
    """Log-kernel ingredients cached on the s-grid of one scenario.

    Reusing the table across ``w`` values makes delay curves and the
    guarantee search cheap; the refinement step evaluates the scenario
    directly.
    """

    def __init__(self, scenario: SncScenario, s_min: float = S_MIN, n_grid: int = N_GRID):
        self.scenario = scenario
        self.s_max = self._stable_edge(s_min)
        self.stable = self.s_max is not None
        if self.stable:
            self.grid = np.geomspace(s_min, self.s_max, n_grid + 1)[:-1]
            self.log_ms, self.log_gap = self._parts(self.grid)

    def _log_prod(self, s) -> float:
        with np.errstate(divide="ignore", over="ignore"):
            return float(np.log(self.scenario.stability_product(s)))

    def _stable_edge(self, s_min: float) -> Optional[float]:
        if not self._log_prod(s_min) < 0:
            return None
        lo, hi = s_min, 2.0 * s_min
        while self._log_prod(hi) < 0:
            lo, hi = hi, 2.0 * hi
            if hi > S_CAP:
                return S_CAP
        while hi - lo > 1e-12 * hi:
            mid = 0.5 * (lo + hi)
            if self._log_prod(mid) < 0:
                lo = mid
            else:
                hi = mid
        return lo

    def _parts(self, s):
        s = np.asarray(s, dtype=float)
        sc = self.scenario
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            ms = np.asarray(sc.service_mellin(1.0 - s), dtype=float)
            log_ms = np.log(ms)
            log_prod = np.log(np.asarray(sc.arrival_mellin(1.0 + s), dtype=float)) + log_ms
            gap = -np.expm1(log_prod)
            log_gap = np.where(gap > 0, np.log(np.where(gap > 0, gap, 1.0)), -np.inf)
        return log_ms, log_gap

    def log_kernel(self, s, w: float):
        log_ms, log_gap = self._parts(s)
        with np.errstate(invalid="ignore"):
            out = (w * log_ms if w > 0 else 0.0) - log_gap
        return np.where(np.isfinite(log_gap), out, np.inf)

    def bound(self, w: float) -> DelayBoundResult:
        if w < 0:
            raise DomainError("w must be >= 0")
        if not self.stable:
            return DelayBoundResult(w=w, bound=1.0, s_star=math.nan, stable=False)
        vals = (w * self.log_ms if w > 0 else 0.0) - self.log_gap
        k = int(np.argmin(vals))
        best_s, best = float(self.grid[k]), float(vals[k])
        lo = self.grid[max(k - 1, 0)]
        hi = self.grid[k + 1] if k + 1 < self.grid.size else self.s_max
        if hi > lo:
            res = optimize.minimize_scalar(
                lambda t: float(self.log_kernel(t, w)),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-10 * hi},
            )
            if res.fun < best:
                best_s, best = float(res.x), float(res.fun)
        raw = math.exp(best) if best < 700 else math.inf
        return DelayBoundResult(w=w, bound=min(1.0, raw), s_star=best_s, stable=True, raw_kernel=raw)


def delay_bound(w: float, scenario: SncScenario, table: Optional[KernelTable] = None) -> DelayBoundResult:
    """Upper bound on ``P(W > w)`` with ``w`` in kernel steps."""
    return (table or KernelTable(scenario)).bound(w)


def delay_curve(ws, scenario: SncScenario) -> list:
    table = KernelTable(scenario)
    return [table.bound(w) for w in ws]


def delay_guarantee(epsilon: float, scenario: SncScenario, table: Optional[KernelTable] = None) -> float:
    """Smallest delay in frames whose violation bound is at most ``epsilon``.

    Returns ``inf`` for unstable scenarios.
    """
    if not 0.0 < epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon}")
    if epsilon == 1.0:
        return 0
    table = table or KernelTable(scenario)
    if not table.stable:
        return UNBOUNDED

    def ok(w):
        return table.bound(w).bound <= epsilon

    if ok(0):
        return 0
    lo, hi = 0, 1
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 2**40:
            return UNBOUNDED
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi * scenario.timescale
