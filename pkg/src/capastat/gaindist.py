"""Distribution of the normalised channel gain ``G = sum_l sigma_l |Phi_l|^2``.

``G`` is a weighted sum of independent unit-mean exponentials.  Its density is
expanded as a mixture of gamma densities sharing the scale ``sigma_min``
(Moschopoulos' single-series form), with mixture weights ``C * psi_q`` where
``C = prod(sigma_min / sigma_l)``.  The SNR is ``gamma_bar * G``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from capastat.spectrum import SpectralDecomposition

DEFAULT_TAIL_TOL = 1e-10
DEFAULT_Q_CAP = 5000
DROP_RATIO = 1e-12


class SeriesNotConvergedError(ArithmeticError):
    """The psi-series tail bound did not reach the tolerance within the cap."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class GainSpectrum:
    """Descending, strictly positive exponential weights."""

    sigma: np.ndarray
    sigma_min: float

    @classmethod
    def from_values(cls, values) -> "GainSpectrum":
        s = np.sort(np.asarray(values, dtype=float).ravel())[::-1]
        if s.size == 0 or not s[0] > 0 or not np.all(np.isfinite(s)):
            raise ValueError("gain spectrum needs at least one positive finite value")
        s = s[s > DROP_RATIO * s[0]]
        return cls(sigma=s, sigma_min=float(s[-1]))

    @property
    def n_terms(self) -> int:
        return int(self.sigma.size)

    @property
    def ratios(self) -> np.ndarray:
        """``1 - sigma_min / sigma_l``, each in [0, 1)."""
        return 1.0 - self.sigma_min / self.sigma

    @property
    def log_norm(self) -> float:
        """``log C`` with ``C = sigma_min**D / prod(sigma)``."""
        return float(np.sum(np.log(self.sigma_min / self.sigma)))


@dataclass(frozen=True)
class PsiSeries:
    psi: np.ndarray
    q_max: int
    tail_tol: float
    converged: bool
    tail_bound: float

    def log_weights(self, spec: GainSpectrum) -> tuple[np.ndarray, np.ndarray]:
        """Indices ``q`` with ``psi_q > 0`` and the log mixture weights ``log(C psi_q)``."""
        q = np.flatnonzero(self.psi > 0)
        return q, spec.log_norm + np.log(self.psi[q])


def make_gain_spectrum(decomp: SpectralDecomposition, n_terms: int | None = None) -> GainSpectrum:
    """Keep the leading ``round(2L/lambda)`` channel eigenvalues.

    ``n_terms`` overrides the DOF rule, e.g. to compare against the
    untruncated law.
    """
    d = round_half_up(decomp.dof) if n_terms is None else int(n_terms)
    if d < 1:
        raise ValueError(f"aperture supports fewer than one degree of freedom (DOF={decomp.dof})")
    if d > decomp.sigma.size:
        raise ValueError(f"requested {d} terms but the decomposition has {decomp.sigma.size}")
    lead = decomp.sigma[:d]
    if not np.all(lead > DROP_RATIO * lead[0]):
        raise ValueError(
            f"leading {d} eigenvalues include zeros; increase the quadrature order"
        )
    return GainSpectrum(sigma=lead.copy(), sigma_min=float(lead[-1]))


def _power_sums(spec: GainSpectrum, q_max: int) -> np.ndarray:
    b = spec.ratios
    b = b[b > 0]
    if q_max == 0 or b.size == 0:
        return np.zeros(q_max)
    k = np.arange(1, q_max + 1)
    return np.sum(b[None, :] ** k[:, None], axis=1)


def psi_coefficients(spec: GainSpectrum, q_max: int,
                     tail_tol: float = DEFAULT_TAIL_TOL) -> PsiSeries:
    """Run the psi recursion up to ``q_max``.

    ``psi_q = (1/q) sum_{k=1..q} S_k psi_{q-k}`` with
    ``S_k = sum_l (1 - sigma_min/sigma_l)**k`` and ``psi_0 = 1``.
    """
    if q_max < 0:
        raise ValueError("q_max must be >= 0")
    s = _power_sums(spec, q_max)
    psi = np.zeros(q_max + 1)
    psi[0] = 1.0
    for q in range(1, q_max + 1):
        psi[q] = np.dot(s[:q], psi[q - 1::-1]) / q
    bound = tail_bound(spec, q_max)
    return PsiSeries(psi=psi, q_max=q_max, tail_tol=tail_tol,
                     converged=bool(bound <= tail_tol), tail_bound=bound)


def tail_bound(spec: GainSpectrum, q: int) -> float:
    """Upper bound on the probability mass dropped beyond term ``q``.

    The generating function of ``psi`` is ``prod_l 1/(1 - b_l t)``, dominated
    coefficient-wise by ``(1 - b t)**-m`` with ``b = max b_l`` and ``m`` the
    number of nonzero ``b_l``.  The dropped mass is then bounded by a
    negative-binomial tail, ``C (1-b)**-m * I_b(q+1, m)``.
    """
    b = spec.ratios
    b = b[b > 0]
    if b.size == 0:
        return 0.0
    bmax = float(b.max())
    m = b.size
    sf = special.betainc(q + 1, m, bmax)
    if sf <= 0:
        return 0.0
    return float(math.exp(spec.log_norm - m * math.log1p(-bmax) + math.log(sf)))


def choose_truncation(spec: GainSpectrum, tol: float = DEFAULT_TAIL_TOL,
                      q_cap: int = DEFAULT_Q_CAP, strict: bool = True) -> int:
    """Smallest ``Q`` whose tail bound is at most ``tol``.

    Raises SeriesNotConvergedError when even ``q_cap`` terms are not enough,
    unless ``strict`` is False, in which case ``q_cap`` is returned.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if tail_bound(spec, 0) <= tol:
        return 0
    if tail_bound(spec, q_cap) > tol:
        if strict:
            raise SeriesNotConvergedError(
                f"psi series needs more than {q_cap} terms for tol={tol:g} "
                f"(sigma_min/sigma_max={spec.sigma_min / spec.sigma[0]:.3g})"
            )
        return q_cap
    lo, hi = 0, q_cap  # bound(lo) > tol >= bound(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_bound(spec, mid) <= tol:
            hi = mid
        else:
            lo = mid
    return hi


def gain_series(spec: GainSpectrum, tol: float = DEFAULT_TAIL_TOL,
                q_cap: int = DEFAULT_Q_CAP) -> PsiSeries:
    """Psi coefficients truncated by :func:`choose_truncation`; check ``converged``."""
    q = choose_truncation(spec, tol, q_cap, strict=False)
    return psi_coefficients(spec, q, tol)


def _as_nonnegative(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("gain argument must be nonnegative")
    return x


_BLOCK = 1 << 20  # max mixture-term x grid-point products held at once


def _blocked(x: np.ndarray, n_terms: int, fn) -> np.ndarray:
    xs = x.reshape(-1)
    step = max(1, _BLOCK // max(n_terms, 1))
    out = np.concatenate([fn(xs[i:i + step]) for i in range(0, xs.size, step)]) \
        if xs.size else np.zeros(0)
    return out.reshape(x.shape)


def pdf(spec: GainSpectrum, psi: PsiSeries, x):
    """Truncated series density of ``G``, evaluated term-wise in log space."""
    x = _as_nonnegative(x)
    q, logw = psi.log_weights(spec)
    n = (spec.n_terms + q)[:, None]
    smin = spec.sigma_min
    const = logw[:, None] - n * math.log(smin) - special.gammaln(n)

    def block(xs):
        logt = const + special.xlogy(n - 1, xs[None, :]) - xs[None, :] / smin
        return np.exp(logt).sum(axis=0)

    out = _blocked(x, q.size, block)
    return out if out.ndim else float(out)


def cdf(spec: GainSpectrum, psi: PsiSeries, x):
    """Term-wise integral of :func:`pdf` via regularised lower incomplete gammas."""
    x = _as_nonnegative(x)
    q, logw = psi.log_weights(spec)
    n = (spec.n_terms + q)[:, None]
    w = np.exp(logw)[:, None]

    def block(xs):
        return (w * special.gammainc(n, xs[None, :] / spec.sigma_min)).sum(axis=0)

    out = _blocked(x, q.size, block)
    return out if out.ndim else float(out)


def moments(spec: GainSpectrum) -> tuple[float, float]:
    """Mean and variance of ``G``."""
    return float(np.sum(spec.sigma)), float(np.sum(spec.sigma**2))
