"""Cluster-expansion convergence criterion and pair-order truncation.

Everything here works in the infinite-volume normalization: winding-class
weights are per unit volume, loops are sampled in free space, and spatial
integrals use translation invariance (one base point fixed at the origin).
The convergence weight for a winding-n trajectory is a(omega) = -beta*mu*n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .grand import pressure
from .heatkernel import sample_bridge
from .potentials import PairPotential

_TAIL_REL = 1e-12


@dataclass(frozen=True)
class WindingClassWeight:
    """nu-measure mass of the winding-n class for the ideal reference."""

    n: int
    per_volume: float          # (e^{beta mu n}/n) (4 pi n beta)^{-d/2}
    nu_mass: float | None      # per_volume * V * theta factor when a box is given


def winding_class_weights(beta: float, mu: float, dim: int,
                          box=None, tail: float = _TAIL_REL) -> list[WindingClassWeight]:
    """Winding-class weights truncated at a certified geometric tail."""
    if mu >= 0:
        raise ValueError("winding weights are summable only for mu < 0")
    out = []
    total = 0.0
    n = 0
    r = math.exp(beta * mu)
    while True:
        n += 1
        pv = math.exp(beta * mu * n) / n * (4.0 * math.pi * n * beta) ** (-0.5 * dim)
        if box is not None:
            from .heatkernel import heat_kernel
            nu = math.exp(beta * mu * n) / n * box.volume * heat_kernel(n * beta, np.zeros(box.dim), box)
        else:
            nu = None
        out.append(WindingClassWeight(n=n, per_volume=pv, nu_mass=nu))
        total += pv
        bound = (math.exp(beta * mu * (n + 1)) / (n + 1)
                 * (4.0 * math.pi * (n + 1) * beta) ** (-0.5 * dim) / (1.0 - r))
        if bound < tail * total:
            return out


@dataclass(frozen=True)
class KpReport:
    lhs: float                 # (4 pi beta)^{-d/2} * int U * sum_n n^{-d/2}
    holds: bool
    series_divergent: bool     # sum n^{-d/2} diverges for d <= 2
    potential_integrable: bool
    u_integral: float


def kp_condition(beta: float, mu: float, potential: PairPotential,
                 dim: int) -> KpReport:
    """Explicit sufficient condition for cluster convergence: lhs <= -mu."""
    if not np.isfinite(beta) or beta <= 0:
        raise ValueError("beta must be positive")
    if mu >= 0:
        raise ValueError("mu must be strictly negative")
    u_int = potential.integral(dim)
    if not np.isfinite(u_int):
        return KpReport(lhs=math.inf, holds=False, series_divergent=False,
                        potential_integrable=False, u_integral=u_int)
    if dim <= 2:
        return KpReport(lhs=math.inf, holds=False, series_divergent=True,
                        potential_integrable=True, u_integral=u_int)
    lhs = (4.0 * math.pi * beta) ** (-0.5 * dim) * u_int * zeta(0.5 * dim)
    return KpReport(lhs=float(lhs), holds=bool(lhs <= -mu),
                    series_divergent=False, potential_integrable=True,
                    u_integral=float(u_int))


# ------------------------------------------------------------ loop sampling

def _sample_loop_legs(n: int, beta: float, m_slices: int, dim: int, rng) -> np.ndarray:
    """Free-space closed loop at the origin as legs (n, M, d)."""
    path = sample_bridge(n * beta, np.zeros(dim), np.zeros(dim),
                         n * m_slices, None, rng, winding=n)
    return path.beads[:n * m_slices].reshape(n, m_slices, dim)


def _loop_self_action(legs: np.ndarray, delta: float,
                      potential: PairPotential) -> float:
    """beta * U(omega): interaction between different legs of one loop."""
    n = legs.shape[0]
    if n < 2 or potential.is_zero:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    diff = legs[iu] - legs[ju]                      # (pairs, M, d)
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(delta * np.sum(potential(r)))


def _cross_action(legs_a: np.ndarray, legs_b: np.ndarray, delta: float,
                  potential: PairPotential) -> float:
    """beta * U(omega, omega'): all leg pairs between two trajectories."""
    if potential.is_zero:
        return 0.0
    diff = legs_a[:, None, :, :] - legs_b[None, :, :, :]   # (na, nb, M, d)
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(delta * np.sum(potential(r)))


def _range_hint(potential: PairPotential) -> float:
    if hasattr(potential, "r0"):
        return 3.0 * potential.r0
    if hasattr(potential, "r_grid"):
        return float(potential.r_grid[-1])
    return 1.0


def _winding_sampler(beta: float, dim: int, weights: np.ndarray):
    """Inverse-CDF sampler over 1-based winding classes with given weights."""
    cum = np.cumsum(weights)
    cum /= cum[-1]

    def draw(rng) -> int:
        return int(np.searchsorted(cum, rng.random())) + 1
    return draw


@dataclass(frozen=True)
class KpIntegralReport:
    sharp: float               # MC estimate of the convergence integral
    sharp_err: float
    certified: float           # linearized bound n * beta * int U * (4 pi beta)^{-d/2} zeta(d/2)
    budget: float              # -beta * mu * n
    certified_within_budget: bool
    high_variance: bool


def kp_integral_check(beta: float, mu: float, potential: PairPotential, dim: int,
                      omega_winding: int, mc_samples: int = 2000,
                      m_slices: int = 8, seed: int = 0) -> KpIntegralReport:
    """Monte Carlo check of the convergence integral for one sampled loop.

    The sharp estimate integrates [1 - e^{-beta U(omega, omega')}] e^{a(omega')}
    over the reference measure (the chemical-potential factors cancel against
    a(omega') = -beta*mu*n'); the certified bound linearizes 1 - e^{-u} <= u
    and is independent of the loop shape.
    """
    rep = kp_condition(beta, mu, potential, dim)
    if not rep.potential_integrable:
        raise ValueError("criterion inapplicable: potential is not integrable")
    n = int(omega_winding)
    if n < 1:
        raise ValueError("omega_winding must be >= 1")
    certified = n * beta * rep.lhs
    budget = -beta * mu * n
    rng = np.random.Generator(np.random.PCG64(seed))
    delta = beta / m_slices
    legs_a = _sample_loop_legs(n, beta, m_slices, dim, rng)

    # mu-free class weights (1/n')(4 pi n' beta)^{-d/2}, certified tail
    n_cap = 200000
    ns = np.arange(1, n_cap + 1, dtype=float)
    w = (1.0 / ns) * (4.0 * np.pi * ns * beta) ** (-0.5 * dim)
    q_total = (4.0 * np.pi * beta) ** (-0.5 * dim) * zeta(0.5 * dim + 1.0)
    draw_n = _winding_sampler(beta, dim, w)

    s2 = 2.0 * (2.0 * beta * n + _range_hint(potential) ** 2)
    vals = np.empty(mc_samples)
    for i in range(mc_samples):
        n_p = draw_n(rng)
        legs_b = _sample_loop_legs(n_p, beta, m_slices, dim, rng)
        x = math.sqrt(s2 + 2.0 * beta * n_p) * rng.standard_normal(dim)
        s2x = s2 + 2.0 * beta * n_p
        log_p = (-0.5 * dim * math.log(2.0 * math.pi * s2x)
                 - float(np.dot(x, x)) / (2.0 * s2x))
        self_b = _loop_self_action(legs_b, delta, potential)
        cross = _cross_action(legs_a, legs_b + x, delta, potential)
        vals[i] = (math.exp(-self_b) * (-math.expm1(-cross))
                   * math.exp(-log_p))
    sharp = float(q_total * vals.mean())
    err = float(q_total * vals.std(ddof=1) / math.sqrt(mc_samples))
    high_var = bool(sharp > 0 and err > 0.1 * sharp)
    return KpIntegralReport(sharp=sharp, sharp_err=err, certified=float(certified),
                            budget=float(budget),
                            certified_within_budget=bool(certified <= budget),
                            high_variance=high_var)


@dataclass(frozen=True)
class TruncatedLogZ:
    k1: float
    k1_err: float
    k2: float
    k2_err: float
    total: float
    criterion_holds: bool


def truncated_log_z(beta: float, mu: float, potential: PairPotential, dim: int,
                    k_max: int = 2, mc_samples: int = 2000, m_slices: int = 8,
                    seed: int = 0) -> TruncatedLogZ:
    """Per-volume log Z truncated at pair order.

    k=1 sums the winding-class weights with the loop self-interaction factor;
    k=2 is the Ursell pair term (1/2) int int [e^{-beta U(.,.)} - 1] dnu dnu,
    estimated by sampling loop pairs.  For U = 0 the k=1 term reproduces the
    ideal per-volume log Z exactly and the k=2 term vanishes identically.
    """
    if k_max > 2:
        raise ValueError("only truncation orders k_max <= 2 are supported")
    rep = kp_condition(beta, mu, potential, dim)
    if not rep.holds:
        import warnings
        warnings.warn("convergence criterion does not hold; truncated series "
                      "is uncontrolled", RuntimeWarning, stacklevel=2)
    rng = np.random.Generator(np.random.PCG64(seed))
    delta = beta / m_slices

    if potential.is_zero:
        k1 = pressure(beta, mu, dim)
        k1_err = 0.0
    else:
        classes = winding_class_weights(beta, mu, dim)
        k1 = classes[0].per_volume  # n = 1 has no self-interaction
        var = 0.0
        per_n = max(8, mc_samples // max(1, len(classes) - 1))
        for cw in classes[1:]:
            draws = np.empty(per_n)
            for i in range(per_n):
                legs = _sample_loop_legs(cw.n, beta, m_slices, dim, rng)
                draws[i] = math.exp(-_loop_self_action(legs, delta, potential))
            k1 += cw.per_volume * draws.mean()
            var += (cw.per_volume * draws.std(ddof=1) / math.sqrt(per_n)) ** 2
        k1_err = math.sqrt(var)

    k2 = 0.0
    k2_err = 0.0
    if k_max >= 2 and not potential.is_zero:
        classes = winding_class_weights(beta, mu, dim)
        wts = np.array([c.per_volume for c in classes])
        w_total = wts.sum()
        draw_n = _winding_sampler(beta, dim, wts)
        s2 = 2.0 * (2.0 * beta + _range_hint(potential) ** 2)
        vals = np.empty(mc_samples)
        for i in range(mc_samples):
            na = draw_n(rng)
            nb = draw_n(rng)
            legs_a = _sample_loop_legs(na, beta, m_slices, dim, rng)
            legs_b = _sample_loop_legs(nb, beta, m_slices, dim, rng)
            s2x = s2 + 2.0 * beta * (na + nb)
            x = math.sqrt(s2x) * rng.standard_normal(dim)
            log_p = (-0.5 * dim * math.log(2.0 * math.pi * s2x)
                     - float(np.dot(x, x)) / (2.0 * s2x))
            ursell = math.expm1(-_cross_action(legs_a, legs_b + x, delta, potential))
            vals[i] = (math.exp(-_loop_self_action(legs_a, delta, potential))
                       * math.exp(-_loop_self_action(legs_b, delta, potential))
                       * ursell * math.exp(-log_p))
        k2 = float(0.5 * w_total ** 2 * vals.mean())
        k2_err = float(0.5 * w_total ** 2 * vals.std(ddof=1) / math.sqrt(mc_samples))

    return TruncatedLogZ(k1=float(k1), k1_err=float(k1_err), k2=k2, k2_err=k2_err,
                         total=float(k1 + k2), criterion_holds=rep.holds)


def ratio_bound(beta: float, mu: float, potential: PairPotential, dim: int,
                omega_winding: int):
    """Certified bracket for Z(mu; omega)/Z(mu), or None without a certificate.

    The cluster estimate bounds the exponent by -beta*mu*n, giving the bracket
    [e^{beta mu n}, 1]; for U = 0 the ratio is exactly 1.
    """
    if omega_winding < 1:
        raise ValueError("omega_winding must be >= 1")
    if potential.is_zero:
        return (1.0, 1.0)
    rep = kp_condition(beta, mu, potential, dim)
    if not rep.holds:
        return None
    return (float(math.exp(beta * mu * omega_winding)), 1.0)
