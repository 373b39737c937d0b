"""Simulation box geometry and thermodynamic parameter bundles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SimulationBox:
    """Cubic torus of side `side` in `dim` spatial dimensions."""

    dim: int
    side: float

    def __post_init__(self):
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not np.isfinite(self.side) or self.side <= 0:
            raise ValueError(f"side must be a positive real, got {self.side!r}")

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    def minimum_image(self, dx):
        """Reduce each coordinate difference to the interval (-L/2, L/2]."""
        dx = np.asarray(dx, dtype=float)
        L = self.side
        red = dx - L * np.round(dx / L)
        # np.round maps half-integers to even, which can leave -L/2; fold it to +L/2.
        return np.where(red <= -0.5 * L, red + L, red)

    def distance(self, x, y):
        """Minimum-image torus distance between points x and y."""
        d = self.minimum_image(np.asarray(x, float) - np.asarray(y, float))
        return float(np.sqrt(np.sum(d * d, axis=-1)))


@dataclass(frozen=True)
class ThermoParams:
    """Inverse temperature plus exactly one of chemical potential / density.

    `mu` selects the grand-canonical ensemble, `rho` the canonical one.
    """

    beta: float
    mu: float | None = None
    rho: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ValueError(f"beta must be a positive real, got {self.beta!r}")
        if (self.mu is None) == (self.rho is None):
            raise ValueError("exactly one of mu (grand) or rho (canonical) must be set")
        if self.rho is not None and (not np.isfinite(self.rho) or self.rho <= 0):
            raise ValueError(f"rho must be a positive real, got {self.rho!r}")
        if self.mu is not None and not np.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu!r}")

    @property
    def ensemble(self) -> str:
        return "grand" if self.mu is not None else "canonical"
