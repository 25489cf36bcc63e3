"""Ergodic capacity ``E{log2(1 + gamma_bar G)}`` of the aperture channel.

The closed form integrates each gamma component of the gain mixture against
``log2(1 + x)``; it needs ``Ei`` on the negative axis and, for the high-SNR
power offset, the digamma function.  Both are implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from capastat.gaindist import GainSpectrum, PsiSeries, SeriesNotConvergedError, moments, pdf

EULER_GAMMA = 0.57721566490153286060651209
LN2 = math.log(2.0)
EXP_ARG_LIMIT = 700.0
DEFAULT_MAX_ROUNDING_BITS = 1e-8

_EPS = np.finfo(float).eps


class RegimeError(ArithmeticError):
    """The closed form cannot be evaluated accurately at this operating point."""


class QuadratureError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# special functions


def _e1_series(t: float) -> float:
    # E1(t) = -gamma - ln t - sum_{k>=1} (-t)^k / (k k!)
    total = 0.0
    term = 1.0
    k = 1
    while True:
        term *= -t / k
        delta = term / k
        total += delta
        if abs(delta) < 1e-17 * max(abs(total), 1e-300):
            break
        k += 1
    return -EULER_GAMMA - math.log(t) - total


def _scaled_e1_cf(t: float) -> float:
    """``exp(t) * E1(t)`` for ``t > 1`` by the modified Lentz continued fraction."""
    tiny = 1e-300
    b = t + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError(f"continued fraction for E1({t}) did not converge")


def scaled_e1(t: float) -> float:
    """``exp(t) * E1(t)`` for ``t > 0`` without overflow."""
    if not t > 0:
        raise ValueError("scaled_e1 needs t > 0")
    if t <= 1.0:
        return math.exp(t) * _e1_series(t)
    return _scaled_e1_cf(t)


def exp_integral_ei(x: float) -> float:
    """Exponential integral ``Ei(x)`` for ``x < 0``, i.e. ``-E1(-x)``."""
    if not x < 0:
        raise ValueError(f"exp_integral_ei is defined here for x < 0 only, got {x!r}")
    t = -x
    if t <= 1.0:
        return -_e1_series(t)
    return -_scaled_e1_cf(t) * math.exp(-t)


# Bernoulli-number coefficients B_2k / (2k) for the digamma asymptotic series
_DIGAMMA_ASYMP = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def digamma(x: float) -> float:
    """Digamma function for ``x > 0``: upward recurrence, then the asymptotic series."""
    if not x > 0:
        raise ValueError(f"digamma needs x > 0, got {x!r}")
    shift = []
    while x < 10.0:
        shift.append(1.0 / x)
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    p = inv2
    for c in _DIGAMMA_ASYMP:
        series += c * p
        p *= inv2
    return math.log(x) - 0.5 / x - series - math.fsum(shift)


# ---------------------------------------------------------------------------
# capacity


@dataclass(frozen=True)
class SnrConfig:
    """Average transmit SNR ``gamma_bar = P / noise``."""

    gamma_bar: float
    power_w: float
    noise_v2m: float

    def __post_init__(self):
        if not (self.gamma_bar >= 0 and self.power_w >= 0 and self.noise_v2m > 0):
            raise ValueError("SNR configuration needs P >= 0 and noise > 0")
        if abs(self.gamma_bar - self.power_w / self.noise_v2m) > 1e-12 * self.gamma_bar:
            raise ValueError("gamma_bar must equal power_w / noise_v2m")

    @classmethod
    def from_power(cls, power_w: float, noise_v2m: float) -> "SnrConfig":
        if not noise_v2m > 0:
            raise ValueError("noise power must be positive")
        return cls(power_w / noise_v2m, power_w, noise_v2m)

    @classmethod
    def from_gamma(cls, gamma_bar: float) -> "SnrConfig":
        return cls(gamma_bar, gamma_bar, 1.0)


@dataclass(frozen=True)
class CapacityResult:
    ergodic_bits: float
    terms_used: int
    slope: float
    offset_3db: float
    rounding_bound: float = 0.0


def _bracket_terms(mu: float, m_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-``m`` sums of the printed inner bracket divided by ``m!``.

    For ``m = DOF + q - 1 - v`` the bracket is
    ``(-1)**(m+1) e**mu mu**m Ei(-mu) + sum_{u=1..m} Gamma(u) (-mu)**(m-u)``.
    Every term is formed from its log magnitude and sign and the terms are
    added with ``math.fsum``.  Returns the values and a rounding-error bound.
    """
    log_mu = math.log(mu)
    log_s = math.log(scaled_e1(mu))  # e**mu * E1(mu) = -e**mu Ei(-mu) > 0
    vals = np.empty(m_max + 1)
    errs = np.empty(m_max + 1)
    for m in range(m_max + 1):
        lfm = math.lgamma(m + 1)
        u = np.arange(1, m + 1)
        logs = np.empty(m + 1)
        logs[0] = log_s + m * log_mu - lfm
        logs[1:] = [math.lgamma(k) for k in u]
        logs[1:] += (m - u) * log_mu - lfm
        signs = np.empty(m + 1)
        signs[0] = -1.0 if m % 2 else 1.0
        signs[1:] = np.where((m - u) % 2, -1.0, 1.0)
        terms = signs * np.exp(logs)
        vals[m] = math.fsum(terms)
        errs[m] = 4.0 * _EPS * float(np.sum(np.abs(terms) * (1.0 + np.abs(logs))))
    return vals, errs


def avg_capacity(spec: GainSpectrum, psi: PsiSeries, snr: SnrConfig,
                 max_rounding_bits: float = DEFAULT_MAX_ROUNDING_BITS) -> CapacityResult:
    """Closed-form ergodic capacity in bits per channel use.

    Raises:
        SeriesNotConvergedError: ``psi`` did not reach its tail tolerance.
        RegimeError: ``1/(gamma_bar sigma_min) > 700`` or the alternating sum
            would lose more than ``max_rounding_bits`` to cancellation; use
            :func:`capacity_quadrature_oracle` there.
    """
    if not psi.converged:
        raise SeriesNotConvergedError("psi series is not converged")
    if not snr.gamma_bar > 0:
        raise RegimeError("closed form needs gamma_bar > 0")
    mu = 1.0 / (snr.gamma_bar * spec.sigma_min)
    if mu > EXP_ARG_LIMIT:
        raise RegimeError(f"1/(gamma_bar*sigma_min) = {mu:.4g} exceeds {EXP_ARG_LIMIT}")

    q, logw = psi.log_weights(spec)
    n = spec.n_terms + q
    vals, errs = _bracket_terms(mu, int(n.max()) - 1)
    inner = np.cumsum(vals)[n - 1]
    inner_err = np.cumsum(errs)[n - 1]
    w = np.exp(logw)
    bits = math.fsum(w * inner) / LN2
    rounding = float(np.dot(w, inner_err)) / LN2
    if rounding > max_rounding_bits:
        raise RegimeError(
            f"closed form loses ~{rounding:.2g} bits to cancellation at gamma_bar={snr.gamma_bar:g}"
        )
    slope, offset = high_snr_asymptote(spec, psi)
    return CapacityResult(ergodic_bits=max(bits, 0.0), terms_used=psi.q_max + 1,
                          slope=slope, offset_3db=offset, rounding_bound=rounding)


def capacity_quadrature_oracle(spec: GainSpectrum, psi: PsiSeries, snr: SnrConfig,
                               abs_tol: float = 1e-8) -> float:
    """Integrate ``log2(1 + gamma_bar x) f(x)`` numerically over ``[0, inf)``."""
    g = snr.gamma_bar
    if g == 0:
        return 0.0
    mean, var = moments(spec)
    x_split = mean + 12.0 * math.sqrt(var)

    def integrand(x):
        return math.log1p(g * x) / LN2 * pdf(spec, psi, x)

    head, e1, *info1 = integrate.quad(integrand, 0.0, x_split, epsabs=abs_tol / 100,
                                      epsrel=1e-13, limit=400, points=[mean],
                                      full_output=1)
    tail, e2, *info2 = integrate.quad(integrand, x_split, math.inf, epsabs=abs_tol / 100,
                                      epsrel=1e-13, limit=400, full_output=1)
    err = e1 + e2
    if err > abs_tol:
        raise QuadratureError(f"quadrature error estimate {err:.3g} exceeds {abs_tol:g}")
    return head + tail


def high_snr_asymptote(spec: GainSpectrum, psi: PsiSeries) -> tuple[float, float]:
    """Slope and power offset (3-dB units) of ``E{C} ~ S (log2 gamma_bar - L)``."""
    if not psi.converged:
        raise SeriesNotConvergedError("psi series is not converged")
    q, logw = psi.log_weights(spec)
    n = spec.n_terms + q
    log_smin = math.log(spec.sigma_min)
    terms = np.exp(logw) * np.array([digamma(float(k)) + log_smin for k in n])
    return 1.0, -math.fsum(terms) / LN2
