"""Stabilized spectral operator layers and pseudospectral reference solvers."""

from spectralops.grid import (
    ComplexSpectrum,
    Domain,
    Parity,
    RealField,
    Spectrum1D,
    dft_forward,
    dft_inverse,
    fourier_resample,
    truncate_modes,
    zonal_avg_spectrum,
)

__all__ = [
    "ComplexSpectrum",
    "Domain",
    "Parity",
    "RealField",
    "Spectrum1D",
    "dft_forward",
    "dft_inverse",
    "fourier_resample",
    "truncate_modes",
    "zonal_avg_spectrum",
]

__version__ = "0.1.0"
