"""Channel statistics of linear continuous-aperture arrays under isotropic scattering.

Lengths are measured in carrier wavelengths throughout, so the wavenumber is
``K0 = 2*pi`` and the channel eigenvalues are half the kernel eigenvalues.
"""

from capastat.spectrum import (
    K0,
    Aperture,
    QuadratureGrid,
    SpectralDecomposition,
    autocorrelation,
    build_operator,
    default_order,
    dof,
    eigendecompose,
    landau_count,
    sinc_kernel,
)
from capastat.gaindist import (
    GainSpectrum,
    PsiSeries,
    SeriesNotConvergedError,
    cdf,
    choose_truncation,
    gain_series,
    make_gain_spectrum,
    moments,
    pdf,
    psi_coefficients,
)
from capastat.capacity import (
    CapacityResult,
    RegimeError,
    SnrConfig,
    avg_capacity,
    capacity_quadrature_oracle,
    digamma,
    exp_integral_ei,
    high_snr_asymptote,
)

__version__ = "0.1.0"

__all__ = [
    "K0",
    "Aperture",
    "QuadratureGrid",
    "SpectralDecomposition",
    "autocorrelation",
    "build_operator",
    "default_order",
    "dof",
    "eigendecompose",
    "landau_count",
    "sinc_kernel",
    "GainSpectrum",
    "PsiSeries",
    "SeriesNotConvergedError",
    "cdf",
    "choose_truncation",
    "gain_series",
    "make_gain_spectrum",
    "moments",
    "pdf",
    "psi_coefficients",
    "CapacityResult",
    "RegimeError",
    "SnrConfig",
    "avg_capacity",
    "capacity_quadrature_oracle",
    "digamma",
    "exp_integral_ei",
    "high_snr_asymptote",
]
