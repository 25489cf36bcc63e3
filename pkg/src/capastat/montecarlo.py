"""Monte Carlo draws of the aperture channel gain.

Two independent constructions of the same Gaussian field are provided:

* spectral: ``g(z) = sum_n sqrt(dk / 2k0) exp(j k_n z) w_n`` over a midpoint
  wavenumber grid on ``[-k0, k0]``;
* Karhunen-Loeve: ``g(z) = sum_l sqrt(sigma_l) phi_l(z) Phi_l`` from a
  :class:`~capastat.spectrum.SpectralDecomposition`.

Randomness comes from a Philox counter stream keyed by ``(seed, stream)``.
Sample ``i`` always reads the same block of counters, so results do not depend
on chunking or on the number of worker threads.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from capastat.spectrum import K0, Aperture, SpectralDecomposition, dof

CHUNK = 2048
ELEMENT_LENGTH_WL = 1.0 / (2.0 * math.sqrt(math.pi))  # sqrt(lambda^2 / 4pi)
MIMO_SPACING_WL = 0.5
KL_ENERGY_FRACTION = 1.0 - 1e-6

STREAM_FIELD = 0  # spectral and MIMO share one field realisation per sample
STREAM_KL = 1

METHODS = ("spectral", "kl", "mimo")


@dataclass(frozen=True)
class SimulationConfig:
    seed: int
    n_samples: int
    kappa_bins: int
    z_points: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.n_samples < 1 or self.kappa_bins < 1 or self.z_points < 2:
            raise ValueError("n_samples, kappa_bins must be >= 1 and z_points >= 2")

    @classmethod
    def for_aperture(cls, aperture: Aperture, seed: int = 42, n_samples: int = 100_000,
                     kappa_bins: int | None = None, z_points: int | None = None):
        if kappa_bins is None:
            kappa_bins = max(64, math.ceil(16 * dof(aperture)))
        if z_points is None:
            z_points = max(33, math.ceil(16 * aperture.length_wl) + 1)
        return cls(seed=seed, n_samples=n_samples, kappa_bins=kappa_bins, z_points=z_points)

    def check(self, aperture: Aperture) -> list[str]:
        """Resolution warnings for this aperture; empty when the grids are adequate."""
        flags = []
        if self.kappa_bins < 8 * dof(aperture):
            flags.append(f"kappa_bins={self.kappa_bins} below 8*DOF={8 * dof(aperture):g}")
        if self.z_points < 16 * aperture.length_wl:
            flags.append(f"z_points={self.z_points} below 16 per wavelength")
        return flags


@dataclass(frozen=True)
class SampleBatch:
    gains: np.ndarray
    method: str
    config: SimulationConfig


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    cap = os.environ.get("CAPA_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


# ---------------------------------------------------------------------------
# random streams


def _complex_normals(seed: int, stream: int, start: int, stop: int, width: int) -> np.ndarray:
    """Standard complex Gaussians for samples ``start..stop-1``, ``width`` per sample."""
    per = -(-2 * width // 4)  # Philox counters per sample, four words each
    bg = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64), counter=start * per)
    raw = bg.random_raw((stop - start) * per * 4).reshape(stop - start, per * 4)[:, :2 * width]
    u = ((raw >> np.uint64(11)).astype(float) + 1.0) * 2.0**-53  # (0, 1]
    r = np.sqrt(-np.log(u[:, 0::2]))
    theta = 2.0 * math.pi * u[:, 1::2]
    return r * np.exp(1j * theta)


def _run_chunks(fn, n: int, workers: int | None) -> np.ndarray:
    bounds = [(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)]
    nw = worker_count(workers)
    if nw == 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# grids and gains


def wavenumbers(config: SimulationConfig) -> np.ndarray:
    dk = 2.0 * K0 / config.kappa_bins
    return -K0 + dk * (np.arange(config.kappa_bins) + 0.5)


def z_grid(aperture: Aperture, config: SimulationConfig) -> np.ndarray:
    return np.linspace(-0.5 * aperture.length_wl, 0.5 * aperture.length_wl, config.z_points)


def trapezoid_weights(z: np.ndarray) -> np.ndarray:
    h = np.diff(z)
    w = np.zeros_like(z)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _steering(z: np.ndarray, config: SimulationConfig) -> np.ndarray:
    amp = math.sqrt(1.0 / config.kappa_bins)  # sqrt(dk / 2k0)
    return amp * np.exp(1j * np.outer(wavenumbers(config), z))


def sample_gain(field, weights) -> float:
    """Quadrature of ``|g|^2`` with the given weights (wavelength units)."""
    return float(np.dot(np.abs(np.asarray(field)) ** 2, weights))


# ---------------------------------------------------------------------------
# spectral construction


def simulate_field_spectral(aperture: Aperture, config: SimulationConfig,
                            sample_index: int) -> np.ndarray:
    """Field sample ``sample_index`` on :func:`z_grid`."""
    return _field_at(z_grid(aperture, config), config, sample_index)


def _field_at(z: np.ndarray, config: SimulationConfig, sample_index: int) -> np.ndarray:
    return spectral_field_batch(z, config, sample_index, sample_index + 1)[0]


def spectral_field_batch(z, config: SimulationConfig, start: int, stop: int) -> np.ndarray:
    """Spectral field samples ``start..stop-1`` at positions ``z``, one row per sample."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    w = _complex_normals(config.seed, STREAM_FIELD, start, stop, config.kappa_bins)
    return w @ _steering(z, config)


def _quadratic_gains(z: np.ndarray, weights: np.ndarray, config: SimulationConfig,
                     workers: int | None) -> np.ndarray:
    steer = _steering(z, config)

    def chunk(a, b):
        w = _complex_normals(config.seed, STREAM_FIELD, a, b, config.kappa_bins)
        f = w @ steer
        return (f.real**2 + f.imag**2) @ weights

    return _run_chunks(chunk, config.n_samples, workers)


def spectral_gains(aperture: Aperture, config: SimulationConfig,
                   workers: int | None = None) -> SampleBatch:
    for msg in config.check(aperture):
        warnings.warn(msg, stacklevel=2)
    z = z_grid(aperture, config)
    gains = _quadratic_gains(z, trapezoid_weights(z), config, workers)
    return SampleBatch(gains=gains, method="spectral", config=config)


# ---------------------------------------------------------------------------
# Karhunen-Loeve construction


def kl_modes(decomp: SpectralDecomposition) -> int:
    """Number of leading modes carrying ``1 - 1e-6`` of the total energy."""
    c = np.cumsum(decomp.sigma)
    return int(min(np.searchsorted(c, KL_ENERGY_FRACTION * c[-1]) + 1, c.size))


def _kl_basis(decomp: SpectralDecomposition) -> np.ndarray:
    if decomp.eigvec_samples is None:
        raise ValueError("decomposition was computed without eigenfunction samples")
    d = kl_modes(decomp)
    return np.sqrt(decomp.sigma[:d])[:, None] * decomp.eigvec_samples[:, :d].T


def kl_coefficients(decomp: SpectralDecomposition, config: SimulationConfig,
                    start: int, stop: int) -> np.ndarray:
    return _complex_normals(config.seed, STREAM_KL, start, stop, kl_modes(decomp))


def simulate_field_kl(decomp: SpectralDecomposition, config: SimulationConfig,
                      sample_index: int) -> np.ndarray:
    """Field sample on the decomposition's quadrature nodes."""
    return kl_field_batch(decomp, config, sample_index, sample_index + 1)[0]


def kl_field_batch(decomp: SpectralDecomposition, config: SimulationConfig,
                   start: int, stop: int) -> np.ndarray:
    return kl_coefficients(decomp, config, start, stop) @ _kl_basis(decomp)


def kl_gains(decomp: SpectralDecomposition, config: SimulationConfig,
             workers: int | None = None) -> SampleBatch:
    basis = _kl_basis(decomp)
    weights = decomp.grid.weights

    def chunk(a, b):
        f = kl_coefficients(decomp, config, a, b) @ basis
        return (f.real**2 + f.imag**2) @ weights

    gains = _run_chunks(chunk, config.n_samples, workers)
    return SampleBatch(gains=gains, method="kl", config=config)


# ---------------------------------------------------------------------------
# discrete baseline


def mimo_positions(aperture: Aperture) -> np.ndarray:
    """Half-wavelength ULA centred on the aperture, ``floor(2L) + 1`` elements."""
    if aperture.length_wl < MIMO_SPACING_WL:
        raise ValueError("aperture is shorter than one half-wavelength spacing")
    n = math.floor(aperture.length_wl / MIMO_SPACING_WL) + 1
    return MIMO_SPACING_WL * (np.arange(n) - 0.5 * (n - 1))


def mimo_baseline_gain(aperture: Aperture, config: SimulationConfig, sample_index: int) -> float:
    """MRT gain of the discrete array sampling field realisation ``sample_index``."""
    z = mimo_positions(aperture)
    return ELEMENT_LENGTH_WL * sample_gain(_field_at(z, config, sample_index), np.ones(z.size))


def mimo_gains(aperture: Aperture, config: SimulationConfig,
               workers: int | None = None) -> SampleBatch:
    z = mimo_positions(aperture)
    gains = _quadratic_gains(z, np.full(z.size, ELEMENT_LENGTH_WL), config, workers)
    return SampleBatch(gains=gains, method="mimo", config=config)


def sample_gains(method: str, aperture: Aperture, config: SimulationConfig,
                 decomp: SpectralDecomposition | None = None,
                 workers: int | None = None) -> SampleBatch:
    if method == "spectral":
        return spectral_gains(aperture, config, workers)
    if method == "mimo":
        return mimo_gains(aperture, config, workers)
    if method == "kl":
        if decomp is None:
            raise ValueError("the KL method needs a spectral decomposition")
        return kl_gains(decomp, config, workers)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


# ---------------------------------------------------------------------------
# statistics


def ergodic_capacity_mc(batch: SampleBatch, snr) -> tuple[float, float]:
    """Sample mean and standard error of ``log2(1 + gamma_bar G)``."""
    g = np.asarray(batch.gains)
    if g.size == 0:
        raise ValueError("empty sample batch")
    c = np.log1p(snr.gamma_bar * g) / math.log(2.0)
    if c.size == 1:
        return float(c[0]), 0.0
    return float(c.mean()), float(c.std(ddof=1) / math.sqrt(c.size))


def ecdf(samples, x) -> np.ndarray:
    s = np.sort(np.asarray(samples))
    return np.searchsorted(s, np.asarray(x), side="right") / s.size


def sup_distance(samples, cdf_fn) -> float:
    """Kolmogorov-Smirnov distance between the sample ECDF and ``cdf_fn``."""
    s = np.sort(np.asarray(samples))
    n = s.size
    f = np.asarray(cdf_fn(s), dtype=float)
    hi = np.arange(1, n + 1) / n - f
    lo = f - np.arange(n) / n
    return float(max(hi.max(), lo.max()))
