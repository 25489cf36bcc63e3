"""Sinc autocorrelation operator on a linear aperture and its eigen-spectrum.

All lengths are in carrier wavelengths.  The kernel ``K(z, z') = sin(k0 dz) / (pi dz)``
is discretised with a Gauss-Legendre Nystrom rule and symmetrised with
``sqrt(w)`` scaling so a dense symmetric eigensolver applies directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

K0 = 2.0 * math.pi  # wavenumber in wavelength units
SPEED_OF_LIGHT = 299_792_458.0


class SpectrumError(RuntimeError):
    """Raised when the discretised eigenproblem cannot be solved."""


@dataclass(frozen=True)
class Aperture:
    """A linear aperture of ``length_wl`` wavelengths centred on the origin."""

    length_wl: float
    carrier_hz: float = 2.4e9

    def __post_init__(self):
        if not (self.length_wl > 0 and math.isfinite(self.length_wl)):
            raise ValueError(f"aperture length must be positive, got {self.length_wl!r}")
        if not self.carrier_hz > 0:
            raise ValueError(f"carrier frequency must be positive, got {self.carrier_hz!r}")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def length_m(self) -> float:
        return self.length_wl * self.wavelength_m


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @classmethod
    def gauss_legendre(cls, length_wl: float, order: int) -> "QuadratureGrid":
        x, w = leggauss(order)
        half = 0.5 * length_wl
        return cls(nodes=half * x, weights=half * w, order=order)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ordered eigenpairs of the kernel operator on one aperture.

    ``eps`` are kernel eigenvalues in [0, 1]; ``sigma = eps / 2`` are the
    eigenvalues of the channel autocorrelation.  ``eigvec_samples[:, l]`` holds
    the l-th eigenfunction at the grid nodes, orthonormal under the grid
    weights.
    """

    eps: np.ndarray
    sigma: np.ndarray
    dof: float
    grid: QuadratureGrid
    aperture: Aperture
    eigvec_samples: np.ndarray | None = field(default=None, repr=False)

    def count_above(self, threshold: float) -> int:
        return int(np.count_nonzero(self.eps > threshold))


def sinc_kernel(dz, k0: float = K0):
    """Evaluate ``sin(k0*dz) / (pi*dz)``, returning ``k0/pi`` at ``dz = 0``."""
    if not k0 > 0:
        raise ValueError("k0 must be positive")
    dz = np.asarray(dz, dtype=float)
    # np.sinc(t) = sin(pi t)/(pi t)
    out = (k0 / math.pi) * np.sinc(dz * (k0 / math.pi))
    return out if out.ndim else float(out)


def autocorrelation(z, zp, k0: float = K0):
    """Channel autocorrelation ``R_g(z, z')``; unity on the diagonal."""
    return (math.pi / k0) * sinc_kernel(np.subtract(z, zp), k0)


def dof(aperture: Aperture) -> float:
    """Effective degrees of freedom ``2L/lambda``."""
    return 2.0 * aperture.length_wl


def default_order(aperture: Aperture) -> int:
    return max(64, math.ceil(4.0 * dof(aperture)))


def build_operator(aperture: Aperture, order: int) -> np.ndarray:
    """Symmetrised Nystrom matrix ``sqrt(w_i) K(z_i, z_j) sqrt(w_j)``."""
    return _operator(QuadratureGrid.gauss_legendre(aperture.length_wl, _check_order(order)))


def _check_order(order) -> int:
    if int(order) != order or order < 2:
        raise ValueError(f"quadrature order must be an integer >= 2, got {order!r}")
    return int(order)


def _operator(grid: QuadratureGrid) -> np.ndarray:
    z = grid.nodes
    sw = np.sqrt(grid.weights)
    m = sinc_kernel(z[:, None] - z[None, :])
    m *= sw[:, None]
    m *= sw[None, :]
    # exact symmetry regardless of rounding in the outer difference
    return 0.5 * (m + m.T)


def eigendecompose(aperture: Aperture, order: int | None = None,
                   keep_vectors: bool = True) -> SpectralDecomposition:
    """Eigen-decompose the kernel operator on ``aperture``.

    Args:
        aperture: the array geometry.
        order: Gauss-Legendre order; defaults to ``max(64, ceil(4*DOF))``.
        keep_vectors: retain eigenfunction samples (needed for KL simulation).

    Returns:
        SpectralDecomposition with eigenvalues sorted in descending order and
        negative round-off clamped to zero.
    """
    order = default_order(aperture) if order is None else _check_order(order)
    grid = QuadratureGrid.gauss_legendre(aperture.length_wl, order)
    m = _operator(grid)
    try:
        if keep_vectors:
            w, v = np.linalg.eigh(m)
        else:
            w, v = np.linalg.eigvalsh(m), None
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(
            f"eigensolve failed for L={aperture.length_wl} wavelengths, order={order}: {exc}"
        ) from exc

    idx = np.argsort(-w, kind="stable")
    eps = np.clip(w[idx], 0.0, None)
    samples = None
    if v is not None:
        samples = v[:, idx] / np.sqrt(grid.weights)[:, None]
    return SpectralDecomposition(
        eps=eps,
        sigma=(math.pi / K0) * eps,
        dof=dof(aperture),
        grid=grid,
        aperture=aperture,
        eigvec_samples=samples,
    )


def landau_count(threshold: float, dof: float) -> float:
    """Landau's asymptotic prediction of ``#{l : eps_l > threshold}``.

    Uses the ``(1 - sqrt(eps)) / sqrt(eps)`` form with natural logarithms.
    The classical Landau-Widom statement has ``(1 - eps) / eps`` instead; both
    coincide at the DOF to within ``O(log DOF)``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold!r}")
    if not dof > 1.0:
        raise ValueError(f"dof must exceed 1, got {dof!r}")
    r = math.sqrt(threshold)
    return dof + math.log((1.0 - r) / r) * math.log(dof) / math.pi**2
