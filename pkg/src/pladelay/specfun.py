"""Special functions used by the detection formulas and the Mellin series.

Gamma-type quantities for positive parameters come from :mod:`scipy.special`;
what scipy does not cover (upper incomplete gamma at non-positive parameter,
the generalized binomial by product recurrence, the Poisson-mixture
noncentral chi-square CDF, Poisson-binomial pmf) is implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special as sc


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class ConvergenceError(ArithmeticError):
    """Series or iteration did not reach the requested accuracy."""


@dataclass(frozen=True)
class RealTolerance:
    """Truncation control for infinite series.

    A series is truncated once ``rel_tol`` relative accuracy is reached;
    ``max_terms`` caps the number of terms and is treated as a failure.
    """

    rel_tol: float = 1e-12
    max_terms: int = 200

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1e-2):
            raise DomainError(f"rel_tol must be in (0, 1e-2), got {self.rel_tol}")
        if self.max_terms < 16:
            raise DomainError(f"max_terms must be >= 16, got {self.max_terms}")


# Width of the window around a = 0 where the downward recurrence cancels.
_NEAR_ZERO = 1e-4
_NEAR_ZERO_STEP = 1e-3
_CF_EPS = 1e-16
_CF_MAX_ITER = 20000
_TINY = 1e-300


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0:
        raise DomainError(f"ln_gamma requires x > 0, got {x}")
    return float(sc.gammaln(x))


def _scaled_positive(a: np.ndarray, x: float) -> np.ndarray:
    # e^x x^-a Gamma(a, x) for a > 0, where Q(a, x) does not underflow.
    q = sc.gammaincc(a, x)
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(np.log(q) + sc.gammaln(a) + x - a * math.log(x))


def _scaled_cf(a: np.ndarray, x: float) -> np.ndarray:
    # Legendre continued fraction (modified Lentz), valid for every real a;
    # converges quickly once x + 1 - a is not small.
    a = np.asarray(a, dtype=float)
    b = x + 1.0 - a
    c = np.full_like(a, 1.0 / _TINY)
    d = 1.0 / np.where(np.abs(b) < _TINY, _TINY, b)
    h = d.copy()
    active = np.ones(a.shape, dtype=bool)
    for i in range(1, _CF_MAX_ITER + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _CF_EPS
        if not active.any():
            return h
    raise ConvergenceError(f"incomplete gamma continued fraction stalled at x={x}")


def _scaled_near_zero(a: np.ndarray, x: float) -> np.ndarray:
    # Quadratic interpolation through a = -h, 0, +h; the recurrence into
    # (-h, 0) loses ~eps/|a| relative accuracy, so |a| < h is bridged instead.
    h = _NEAR_ZERO_STEP
    g_plus = _scaled_positive(np.array([h]), x)[0]
    g_zero = math.exp(x) * sc.exp1(x)
    g_anchor = _scaled_positive(np.array([1.0 - h]), x)[0]
    g_minus = (x * g_anchor - 1.0) / (-h)
    t = a / h
    return g_zero + 0.5 * t * (g_plus - g_minus) + 0.5 * t * t * (g_plus - 2.0 * g_zero + g_minus)


def _scaled_recurrence(a: np.ndarray, x: float) -> np.ndarray:
    # Downward recurrence G(b-1) = (x G(b) - 1)/(b-1) from an anchor in [0, 1).
    a = np.asarray(a, dtype=float)
    frac = a - np.floor(a)
    steps = (-np.floor(a)).astype(np.int64)
    anchor = frac.copy()
    out = np.empty_like(a)

    at_zero = frac == 0.0
    near_one = frac > 1.0 - _NEAR_ZERO
    regular = ~at_zero & ~near_one
    if at_zero.any():
        out[at_zero] = math.exp(x) * sc.exp1(x)
    if near_one.any():
        anchor[near_one] = frac[near_one] - 1.0
        steps[near_one] -= 1
        out[near_one] = _scaled_near_zero(anchor[near_one], x)
    if regular.any():
        out[regular] = _scaled_positive(frac[regular], x)

    b = anchor
    for _ in range(int(steps.max(initial=0))):
        live = steps > 0
        out = np.where(live, (x * out - 1.0) / (b - 1.0), out)
        b = np.where(live, b - 1.0, b)
        steps = steps - live
    return out


def upper_incomplete_gamma_scaled(s, x: float) -> np.ndarray:
    """Return ``e**x * x**(-s) * Gamma(s, x)`` for real ``s`` (array-capable).

    The scaling keeps the value O(1)-ish across the whole parameter range,
    so it neither overflows for very negative ``s`` nor underflows for large
    ``x``. Non-positive ``s`` with ``x < 1`` use the downward recurrence from
    an anchor in ``[0, 1)``; large ``x`` uses the continued fraction, which
    is where the recurrence would amplify rounding errors.
    """
    if not x > 0:
        raise DomainError(f"incomplete gamma requires x > 0, got {x}")
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s_arr)

    if x >= 1.0:
        use_cf = s_arr < x + 1.0
    else:
        use_cf = np.zeros(s_arr.shape, dtype=bool)
    pos = (s_arr > 0) & ~use_cf
    rec = (s_arr <= 0) & ~use_cf
    if use_cf.any():
        out[use_cf] = _scaled_cf(s_arr[use_cf], x)
    if pos.any():
        out[pos] = _scaled_positive(s_arr[pos], x)
    if rec.any():
        out[rec] = _scaled_recurrence(s_arr[rec], x)
    if np.ndim(s) == 0:
        return out[0]
    return out


def upper_incomplete_gamma(s: float, x: float) -> float:
    """Upper incomplete gamma ``Gamma(s, x) = int_x^inf t^(s-1) e^-t dt``.

    Any real ``s`` is accepted. Raises :class:`OverflowError` rather than
    returning infinity when the result is not representable.
    """
    if not x > 0:
        raise DomainError(f"incomplete gamma requires x > 0, got {x}")
    g = float(upper_incomplete_gamma_scaled(float(s), x))
    log_val = math.log(g) - x + s * math.log(x)
    if log_val > 709.0:
        raise OverflowError(f"Gamma({s}, {x}) overflows double precision")
    return math.exp(log_val)


def _check_dof(k_dof) -> None:
    if k_dof < 1 or int(k_dof) != k_dof:
        raise DomainError(f"degrees of freedom must be a positive integer, got {k_dof}")


def chi2_cdf(k_dof: int, x):
    """CDF of the central chi-square distribution with ``k_dof`` degrees."""
    _check_dof(k_dof)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("chi2_cdf requires x >= 0")
    out = sc.gammainc(0.5 * k_dof, 0.5 * x)
    return float(out) if out.ndim == 0 else out


def chi2_sf(k_dof: int, x):
    """Survival function ``1 - chi2_cdf`` without cancellation."""
    _check_dof(k_dof)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("chi2_sf requires x >= 0")
    out = sc.gammaincc(0.5 * k_dof, 0.5 * x)
    return float(out) if out.ndim == 0 else out


def noncentral_chi2_cdf(k_dof: int, nc: float, x: float) -> float:
    """CDF of the noncentral chi-square distribution.

    Evaluated as the Poisson(nc/2)-weighted mixture of central chi-square
    CDFs with ``k_dof + 2j`` degrees of freedom. Weights and terms are
    combined in the log domain so CDF values far below 1e-300 of their
    largest term are not lost, which matters for tiny missed-detection rates.
    """
    _check_dof(k_dof)
    if nc < 0:
        raise DomainError(f"noncentrality must be >= 0, got {nc}")
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    if x == 0:
        return 0.0
    if nc == 0:
        return chi2_cdf(k_dof, x)

    lam = 0.5 * nc
    spread = 12.0 * math.sqrt(lam) + 60.0
    j_hi = int(math.ceil(lam + spread))
    j_lo = 0
    if j_hi > 200_000:
        # Summand peaks near j ~ sqrt(lam * x / 2); keep a window over
        # whichever of the two centres matters.
        centre = min(lam, math.sqrt(lam * 0.5 * x))
        j_lo = max(0, int(centre - spread))
        j_hi = int(max(lam, centre) + spread)
    j = np.arange(j_lo, j_hi + 1, dtype=float)
    log_w = -lam + j * math.log(lam) - sc.gammaln(j + 1.0)
    with np.errstate(divide="ignore"):
        log_p = np.log(sc.gammainc(0.5 * k_dof + j, 0.5 * x))
    terms = log_w + log_p
    top = terms.max()
    if not np.isfinite(top):
        return 0.0
    total = top + math.log(np.exp(terms - top).sum())
    return min(1.0, math.exp(total))


def generalized_binomial(a: float, m: int) -> float:
    """Binomial coefficient ``C(a, m)`` for real ``a`` and integer ``m >= 0``."""
    if m < 0 or int(m) != m:
        raise DomainError(f"m must be a nonnegative integer, got {m}")
    out = 1.0
    for j in range(int(m)):
        out *= (a - j) / (j + 1)
    if not math.isfinite(out):
        raise OverflowError(f"C({a}, {m}) overflows")
    return out


def generalized_binomial_seq(a: float, n_terms: int) -> np.ndarray:
    """The first ``n_terms`` coefficients ``C(a, 0), ..., C(a, n_terms-1)``."""
    j = np.arange(n_terms - 1, dtype=float)
    ratios = (a - j) / (j + 1.0)
    out = np.concatenate(([1.0], np.cumprod(ratios)))
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"binomial coefficients of {a} overflow")
    return out


def poisson_binomial_pmf(probs: Sequence[float]) -> np.ndarray:
    """Pmf of a sum of independent Bernoulli variables.

    Built by convolving the Bernoulli factors one at a time, i.e. expanding
    the generating function ``prod(1 - p + p z)``.
    """
    probs = np.asarray(probs, dtype=float).ravel()
    if np.any((probs < 0) | (probs > 1)) or np.any(np.isnan(probs)):
        raise DomainError("probabilities must lie in [0, 1]")
    pmf = np.ones(1)
    for p in probs:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def upper_incomplete_gamma_scaled_ladder(a0, n_terms: int, x: float) -> np.ndarray:
    """Scaled ``Gamma(a0 - m, x)`` for ``m = 0..n_terms-1``, one row per ``a0``.

    Positive entries come straight from :func:`upper_incomplete_gamma_scaled`;
    once a row crosses into ``a <= 0`` each further column is one step of the
    downward recurrence (for ``x < 1``), so a whole ladder costs O(n_terms).
    """
    if not x > 0:
        raise DomainError(f"incomplete gamma requires x > 0, got {x}")
    a0 = np.atleast_1d(np.asarray(a0, dtype=float))
    a = a0[:, None] - np.arange(n_terms)[None, :]
    if x >= 1.0:
        return upper_incomplete_gamma_scaled(a.ravel(), x).reshape(a.shape)

    out = np.empty_like(a)
    pos = a > 0
    if pos.any():
        out[pos] = _scaled_positive(a[pos], x)
    # First non-positive column of every row.
    first = np.clip(np.ceil(a0).astype(np.int64), 0, None)
    first = np.where(a0 <= 0, 0, first)
    rows = np.nonzero(first < n_terms)[0]
    if rows.size:
        cols = first[rows]
        out[rows, cols] = _scaled_recurrence(a[rows, cols], x)
        for m in range(int(cols.min()) + 1, n_terms):
            live = rows[cols < m]
            if live.size:
                out[live, m] = (x * out[live, m - 1] - 1.0) / a[live, m]
    return out
