"""Infinite-volume grand-canonical thermodynamics of the ideal Bose gas.

Primary evaluation route is the winding series
    p(beta, mu)   = (4*pi*beta)^{-d/2} * sum_n e^{beta mu n} n^{-d/2-1}
    rho(beta, mu) = (4*pi*beta)^{-d/2} * sum_n e^{beta mu n} n^{-d/2}
(p is the per-volume log of the grand partition function).  k-space
quadrature of the textbook integrals is kept as an independent cross-check.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate, optimize
from scipy.special import zeta

_TAIL_REL = 1e-12
_CHUNK = 4096
# below this |beta*mu| the direct series is too slow; switch to polylog
_SERIES_MIN_BETA_MU = 0.005


def _check_mu(beta: float, mu: float, dim: int, allow_zero: bool):
    if not np.isfinite(beta) or beta <= 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if not np.isfinite(mu):
        raise ValueError(f"mu must be finite, got {mu!r}")
    if mu > 0 or (mu == 0 and not (allow_zero and dim >= 3)):
        raise ValueError(
            "chemical potential must be strictly negative"
            + (" (mu = 0 allowed only for d >= 3)" if allow_zero else ""))


def _exp_series(beta_mu: float, s: float) -> float:
    """sum_{n>=1} e^{beta_mu * n} n^{-s} with certified geometric tail < 1e-12.

    Requires beta_mu < 0; near 0 the evaluation is delegated to the polylog
    (accurate for arguments approaching 1, where the direct sum is hopeless).
    """
    if beta_mu >= 0:
        raise ValueError("series route requires beta*mu < 0")
    if beta_mu > -_SERIES_MIN_BETA_MU:
        return float(mpmath.polylog(s, mpmath.exp(beta_mu)))
    r = math.exp(beta_mu)
    total = 0.0
    n0 = 1
    while True:
        ns = np.arange(n0, n0 + _CHUNK, dtype=float)
        total += float(np.exp(beta_mu * ns).sum() if s == 0.0
                       else (np.exp(beta_mu * ns) * ns ** (-s)).sum())
        n_next = n0 + _CHUNK
        tail = math.exp(beta_mu * n_next) * n_next ** (-s) / (1.0 - r)
        if tail < _TAIL_REL * total:
            return total
        n0 = n_next


def pressure(beta: float, mu: float, dim: int) -> float:
    """Per-volume log of the grand partition function (series form)."""
    _check_mu(beta, mu, dim, allow_zero=True)
    s = 0.5 * dim + 1.0
    series = zeta(s) if mu == 0.0 else _exp_series(beta * mu, s)
    return float((4.0 * np.pi * beta) ** (-0.5 * dim) * series)


def density(beta: float, mu: float, dim: int) -> float:
    """Particle density (4*pi*beta)^{-d/2} sum_n e^{beta mu n} n^{-d/2}."""
    _check_mu(beta, mu, dim, allow_zero=True)
    if mu == 0.0:
        return critical_density(beta, dim)
    s = 0.5 * dim
    return float((4.0 * np.pi * beta) ** (-0.5 * dim) * _exp_series(beta * mu, s))


def critical_density(beta: float, dim: int) -> float:
    """density(beta, mu=0); finite only for d >= 3, +inf flags divergence."""
    if not np.isfinite(beta) or beta <= 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if dim < 3:
        return math.inf
    return float((4.0 * np.pi * beta) ** (-0.5 * dim) * zeta(0.5 * dim))


def mu_of_density(beta: float, rho: float, dim: int) -> float:
    """Inverse of density(beta, ., dim) on mu < 0; requires rho < rho_c."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    rho_c = critical_density(beta, dim)
    if rho >= rho_c:
        raise ValueError(f"rho={rho} is not below the critical density {rho_c}")

    def f(mu):
        return density(beta, mu, dim) - rho

    lo = -1.0 / beta
    while f(lo) > 0.0:
        lo *= 2.0
    hi = -1e-300
    mu_star = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=8.9e-16)
    return float(mu_star)


def free_energy(beta: float, rho: float, dim: int) -> float:
    """Canonical free energy per volume via sup_{mu<=0} [rho*mu - p/beta].

    For rho >= rho_c (d >= 3) the supremum sits at mu = 0 and the value is
    -p(beta, 0)/beta, constant in rho.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    rho_c = critical_density(beta, dim)
    if rho >= rho_c:
        return float(-pressure(beta, 0.0, dim) / beta)
    mu_star = mu_of_density(beta, rho, dim)
    return float(rho * mu_star - pressure(beta, mu_star, dim) / beta)


def grand_cycle_density(n: int, beta: float, mu: float, dim: int) -> float:
    """Infinite-volume density of particles in winding-n cycles, U = 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_mu(beta, mu, dim, allow_zero=False)
    return float(math.exp(beta * mu * n) * (4.0 * np.pi * n * beta) ** (-0.5 * dim))


def cycle_density_sum(beta: float, mu: float, dim: int, tail: float = 1e-12) -> float:
    """sum_n grand_cycle_density(n) with certified geometric tail."""
    _check_mu(beta, mu, dim, allow_zero=False)
    r = math.exp(beta * mu)
    total = 0.0
    n0 = 1
    while True:
        ns = np.arange(n0, n0 + _CHUNK)
        total += sum(grand_cycle_density(int(n), beta, mu, dim) for n in ns)
        n_next = n0 + _CHUNK
        bound = grand_cycle_density(n_next, beta, mu, dim) / (1.0 - r)
        if bound < tail * total:
            return total
        n0 = n_next


def sigma_upper_bound(x, beta: float, mu: float, dim: int) -> float:
    """sum_n e^{beta mu n} (4 pi n beta)^{-d/2} e^{-x^2/4 n beta}.

    Upper-bounds limsup of the two-point correlation for mu < 0 and decays to
    zero as |x| grows.
    """
    _check_mu(beta, mu, dim, allow_zero=False)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xsq = float(np.sum(x * x))
    r = math.exp(beta * mu)
    total = 0.0
    n0 = 1
    while True:
        ns = np.arange(n0, n0 + _CHUNK, dtype=float)
        total += float((np.exp(beta * mu * ns - xsq / (4.0 * ns * beta))
                        * (4.0 * np.pi * ns * beta) ** (-0.5 * dim)).sum())
        n_next = n0 + _CHUNK
        bound = (math.exp(beta * mu * n_next)
                 * (4.0 * np.pi * n_next * beta) ** (-0.5 * dim) / (1.0 - r))
        if total > 0 and bound < _TAIL_REL * total:
            return total
        n0 = n_next


def pressure_kspace(beta: float, mu: float, dim: int) -> float:
    """Independent quadrature route: -(2 pi)^{-d} int log(1 - e^{-beta(k^2-mu)}) dk."""
    _check_mu(beta, mu, dim, allow_zero=False)
    surf = 2.0 * np.pi ** (0.5 * dim) / math.gamma(0.5 * dim)

    def integrand(k):
        return -surf * k ** (dim - 1) * np.log1p(-np.exp(-beta * (k * k - mu)))

    kmax = math.sqrt((50.0 / beta) + abs(mu))
    val, _ = integrate.quad(integrand, 0.0, kmax, limit=400)
    return float(val / (2.0 * np.pi) ** dim)


def density_kspace(beta: float, mu: float, dim: int) -> float:
    """Independent quadrature route: (2 pi)^{-d} int dk / (e^{beta(k^2-mu)} - 1)."""
    _check_mu(beta, mu, dim, allow_zero=False)
    surf = 2.0 * np.pi ** (0.5 * dim) / math.gamma(0.5 * dim)

    def integrand(k):
        return surf * k ** (dim - 1) / np.expm1(beta * (k * k - mu))

    kmax = math.sqrt((50.0 / beta) + abs(mu))
    val, _ = integrate.quad(integrand, 0.0, kmax, limit=400)
    return float(val / (2.0 * np.pi) ** dim)
