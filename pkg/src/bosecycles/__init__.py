"""Feynman-cycle statistics and off-diagonal long-range order in the Bose gas."""

from .system import SimulationBox, ThermoParams
from .heatkernel import (
    DiscretizedPath,
    concatenate,
    heat_kernel,
    integral_sandwich,
    sample_bridge,
    theta_coefficient,
)
from .canonical import (
    CanonicalEnsembleTable,
    CycleSpectrumExact,
    build_table,
    condensate_fraction,
    cycle_densities,
    cycle_density,
    cycle_spectrum,
    large_deviation_rate,
    mode_occupation,
    odlro_correlation,
    odlro_decomposition,
    verify_decomposition,
    zero_mode_tail,
)

__version__ = "0.1.0"
