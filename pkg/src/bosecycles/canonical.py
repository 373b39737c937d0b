"""Exact finite-volume canonical ensemble of the ideal Bose gas.

Everything is driven by the log-domain recursion
    N * Y(N) = sum_{n=1..N} C_n * Y(N-n),        Y(0) = 1,
with single-cycle weights C_n = V * (4*pi*n*beta)^{-d/2} * theta image sum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .heatkernel import theta_coefficient_profile, theta_image_sum
from .system import SimulationBox


@dataclass(frozen=True)
class CanonicalEnsembleTable:
    """log Y(0..N) plus log C_n for a fixed box, beta and particle number."""

    box: SimulationBox
    beta: float
    n_particles: int
    log_y: np.ndarray    # (N+1,), log_y[0] = 0
    log_c: np.ndarray    # (N+1,), entry 0 unused (nan)

    @property
    def rho(self) -> float:
        return self.n_particles / self.box.volume


@dataclass(frozen=True)
class CycleSpectrumExact:
    """Exact cycle densities with a finite-n cutoff and the inferred tail."""

    densities: np.ndarray      # (N+1,), densities[n] for n = 1..N, entry 0 = 0
    rho: float
    cutoff: int
    rho_inf_estimate: float    # rho - sum_{n <= cutoff} densities[n], clamped to [0, rho]


@dataclass(frozen=True)
class OdlroDecomposition:
    """Finite-cycle + infinite-cycle split of the two-point correlation."""

    sigma: float               # sigma_rho(x), full finite-volume correlation
    finite_part: float         # sum_{n <= n_cut} exp(-x^2/4 n beta) * rho(n)
    rho_inf_estimate: float
    residual: float            # sigma - (finite_part + rho_inf_estimate)
    n_cut: int
    cutoff_clamped: bool


def cycle_log_weights(box: SimulationBox, beta: float, n_max: int) -> np.ndarray:
    """log C_n for n = 1..n_max (index 0 is nan)."""
    if not np.isfinite(beta) or beta <= 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    out = np.full(n_max + 1, np.nan)
    if n_max == 0:
        return out
    ns = np.arange(1, n_max + 1, dtype=float)
    a = box.side ** 2 / (4.0 * ns * beta)
    log_theta = np.log(theta_image_sum(a, 0.0))
    out[1:] = (
        box.dim * np.log(box.side)
        - 0.5 * box.dim * np.log(4.0 * np.pi * ns * beta)
        + box.dim * log_theta
    )
    return out


def build_table(box: SimulationBox, beta: float, n_particles: int) -> CanonicalEnsembleTable:
    """Run the recursion for Y(0..N) entirely in the log domain."""
    if n_particles < 0:
        raise ValueError("n_particles must be >= 0")
    log_c = cycle_log_weights(box, beta, n_particles)
    log_y = np.zeros(n_particles + 1)
    buf = np.empty(n_particles + 1)
    for n in range(1, n_particles + 1):
        t = buf[:n]
        np.add(log_c[1:n + 1], log_y[n - 1::-1], out=t)
        m = t.max()
        np.subtract(t, m, out=t)
        np.exp(t, out=t)
        log_y[n] = m + np.log(t.sum()) - np.log(n)
    return CanonicalEnsembleTable(box=box, beta=beta, n_particles=n_particles,
                                  log_y=log_y, log_c=log_c)


def cycle_density(table: CanonicalEnsembleTable, n: int) -> float:
    """Density of particles in cycles of length n: (C_n/V) * Y(N-n)/Y(N)."""
    N = table.n_particles
    if not 1 <= n <= N:
        raise ValueError(f"cycle length must be in [1, {N}], got {n}")
    log_v = table.box.dim * np.log(table.box.side)
    return float(np.exp(table.log_c[n] - log_v
                        + table.log_y[N - n] - table.log_y[N]))


def cycle_densities(table: CanonicalEnsembleTable) -> np.ndarray:
    """All cycle densities at once; entry 0 is zero, entries 1..N as defined."""
    N = table.n_particles
    out = np.zeros(N + 1)
    if N == 0:
        return out
    log_v = table.box.dim * np.log(table.box.side)
    out[1:] = np.exp(table.log_c[1:] - log_v
                     + table.log_y[N - 1::-1] - table.log_y[N])
    return out


def cycle_spectrum(table: CanonicalEnsembleTable, cutoff: int | None = None) -> CycleSpectrumExact:
    """Cycle densities plus the infinite-cycle estimate rho - sum_{n<=cutoff}."""
    N = table.n_particles
    if cutoff is None:
        cutoff = N
    cutoff = int(min(max(cutoff, 1), N))
    dens = cycle_densities(table)
    rho = table.rho
    tail = rho - dens[1:cutoff + 1].sum()
    tail = min(max(tail, 0.0), rho)
    return CycleSpectrumExact(densities=dens, rho=rho, cutoff=cutoff,
                              rho_inf_estimate=tail)


def odlro_correlation(table: CanonicalEnsembleTable, x) -> float:
    """sigma_rho(x) = sum_{n=1..N} c_{n,rho}(x) * rho(n); equals rho at x = 0."""
    N = table.n_particles
    if N == 0:
        return 0.0
    coeff = theta_coefficient_profile(np.arange(1, N + 1), x, table.box, table.beta)
    return float(np.dot(coeff, cycle_densities(table)[1:]))


def odlro_decomposition(table: CanonicalEnsembleTable, x, c: float = 1.0) -> OdlroDecomposition:
    """Split sigma_rho(x) against the infinite-volume form.

    The finite sum keeps n <= n_cut = ceil(c * L^2 / beta) with the limiting
    Gaussian coefficients exp(-x^2/4 n beta); the remainder of the density is
    attributed to the infinite-cycle channel with coefficient 1.  The residual
    contracts to 0 along increasing boxes at fixed rho, beta, x.
    """
    if c <= 0:
        raise ValueError("cutoff constant c must be positive")
    N = table.n_particles
    beta = table.beta
    n_cut = int(np.ceil(c * table.box.side ** 2 / beta))
    clamped = n_cut > N
    if clamped:
        warnings.warn(f"cycle cutoff {n_cut} exceeds N={N}; clamped", RuntimeWarning,
                      stacklevel=2)
        n_cut = N
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xsq = float(np.sum(x * x))
    dens = cycle_densities(table)
    ns = np.arange(1, n_cut + 1, dtype=float)
    finite_part = float(np.dot(np.exp(-xsq / (4.0 * ns * beta)), dens[1:n_cut + 1]))
    spec = cycle_spectrum(table, cutoff=n_cut)
    sigma = odlro_correlation(table, x)
    residual = sigma - (finite_part + spec.rho_inf_estimate)
    return OdlroDecomposition(sigma=sigma, finite_part=finite_part,
                              rho_inf_estimate=spec.rho_inf_estimate,
                              residual=residual, n_cut=n_cut,
                              cutoff_clamped=clamped)


def verify_decomposition(table: CanonicalEnsembleTable, x, c: float = 1.0) -> float:
    """Residual of the finite/infinite cycle decomposition at point x."""
    return odlro_decomposition(table, x, c).residual


def mode_occupation(table: CanonicalEnsembleTable, k) -> float:
    """Average occupation of wavevector k on the dual lattice (2*pi/L) Z^d."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (table.box.dim,):
        raise ValueError(f"k must be a {table.box.dim}-vector")
    m = k * table.box.side / (2.0 * np.pi)
    if np.max(np.abs(m - np.round(m))) > 1e-9:
        raise ValueError(f"k={k} is not on the dual lattice (2*pi/L) Z^d")
    N = table.n_particles
    if N == 0:
        return 0.0
    ii = np.arange(1, N + 1, dtype=float)
    ksq = float(np.sum(k * k))
    log_terms = -table.beta * ii * ksq + table.log_y[N - 1::-1] - table.log_y[N]
    return float(np.exp(log_terms).sum())


def zero_mode_tail(table: CanonicalEnsembleTable, i: int) -> float:
    """Prob(n_0 >= i) = Y(N-i)/Y(N); 1 at i = 0, 0 beyond i = N."""
    if i < 0:
        raise ValueError("i must be >= 0")
    N = table.n_particles
    if i > N:
        return 0.0
    return float(np.exp(table.log_y[N - i] - table.log_y[N]))


def condensate_fraction(table: CanonicalEnsembleTable) -> float:
    """<n_0>/V, the density held by the zero mode."""
    return mode_occupation(table, np.zeros(table.box.dim)) / table.box.volume


def large_deviation_rate(table: CanonicalEnsembleTable, a: float) -> float:
    """(1/beta V) log Prob(n_0 >= ceil(V a)) for 0 < a <= rho."""
    if not 0 < a <= table.rho:
        raise ValueError(f"a must lie in (0, rho={table.rho}], got {a}")
    V = table.box.volume
    i = int(np.ceil(V * a))
    N = table.n_particles
    if i > N:
        raise ValueError(f"V*a = {V * a} exceeds N = {N}")
    return float((table.log_y[N - i] - table.log_y[N]) / (table.beta * V))
