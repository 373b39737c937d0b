"""Small-N oracle: direct evaluation of the cycle-ensemble partition sum.

Permutations are enumerated by cycle type (the N!/(prod k^{m_k} m_k!)
permutations of one type share the same integrand), and the interaction
factor of each type is estimated by averaging exp(-action) over independent
Wiener-bridge draws.  For U = 0 the bridge average is exactly one and the
result is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .canonical import cycle_log_weights
from .heatkernel import sample_bridge
from .pimc import action_from_legs
from .potentials import PairPotential
from .system import SimulationBox

MAX_PARTICLES = 8


@dataclass(frozen=True)
class BruteForceResult:
    log_y: float
    y: float
    y_err: float
    densities: np.ndarray        # (N+1,), particle density in length-n cycles
    density_err: np.ndarray
    n_samples: int


def partitions(n: int):
    """All integer partitions of n as non-increasing tuples."""
    if n == 0:
        yield ()
        return
    def gen(rest, largest):
        if rest == 0:
            yield ()
            return
        for k in range(min(rest, largest), 0, -1):
            for tail in gen(rest - k, k):
                yield (k,) + tail
    yield from gen(n, n)


def _type_log_coeff(part) -> float:
    """log of 1 / (prod_k k^{m_k} m_k!) for a cycle type."""
    mult: dict[int, int] = {}
    for k in part:
        mult[k] = mult.get(k, 0) + 1
    out = 0.0
    for k, m in mult.items():
        out -= m * math.log(k) + math.log(math.factorial(m))
    return out


def _sample_exp_action(part, box, beta, m_slices, potential, rng) -> float:
    """One draw of exp(-action) for independent loops of the given type."""
    legs = []
    for n in part:
        x = rng.random(box.dim) * box.side
        loop = sample_bridge(n * beta, x, x, n * m_slices, box, rng, winding=n)
        legs.append(loop.beads[:n * m_slices].reshape(n, m_slices, box.dim))
    legs = np.concatenate(legs, axis=0)
    act = action_from_legs(legs, beta / m_slices, box, potential)
    return math.exp(-act) if np.isfinite(act) else 0.0


def brute_force_small(box: SimulationBox, beta: float, n_particles: int,
                      m_slices: int, potential: PairPotential,
                      mc_samples: int = 200, seed: int = 0,
                      blocks: int = 8) -> BruteForceResult:
    """Partition value and cycle densities by cycle-type enumeration.

    Refuses n_particles > 8 (cost guard).  Errors are blocked standard errors
    of the Monte Carlo bridge averages; exactly zero for U = 0.
    """
    if n_particles > MAX_PARTICLES:
        raise ValueError(f"brute force is limited to N <= {MAX_PARTICLES}")
    if n_particles < 1:
        raise ValueError("need at least one particle")
    log_c = cycle_log_weights(box, beta, n_particles)
    parts = list(partitions(n_particles))
    log_ideal = np.array([_type_log_coeff(p) + sum(log_c[k] for k in p)
                          for p in parts])

    if potential.is_zero:
        e_blocks = np.ones((blocks, len(parts)))
        n_samples = 0
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        blocks = max(2, blocks)
        per_block = max(1, mc_samples // blocks)
        e_blocks = np.empty((blocks, len(parts)))
        for b in range(blocks):
            for ip, p in enumerate(parts):
                draws = [_sample_exp_action(p, box, beta, m_slices, potential, rng)
                         for _ in range(per_block)]
                e_blocks[b, ip] = np.mean(draws)
        n_samples = blocks * per_block

    scale = log_ideal.max()
    w_blocks = np.exp(log_ideal - scale)[None, :] * e_blocks   # (B, P)
    y_blocks = w_blocks.sum(axis=1)                           # scaled Y per block
    v = box.volume
    dens_blocks = np.zeros((e_blocks.shape[0], n_particles + 1))
    for ip, p in enumerate(parts):
        for k in set(p):
            m_k = sum(1 for q in p if q == k)
            dens_blocks[:, k] += (k * m_k / v) * w_blocks[:, ip]
    dens_blocks /= y_blocks[:, None]

    y_mean = float(y_blocks.mean())
    nb = e_blocks.shape[0]
    y_err = float(y_blocks.std(ddof=1) / np.sqrt(nb)) if not potential.is_zero else 0.0
    dens = dens_blocks.mean(axis=0)
    dens_err = (dens_blocks.std(axis=0, ddof=1) / np.sqrt(nb)
                if not potential.is_zero else np.zeros(n_particles + 1))
    return BruteForceResult(
        log_y=float(np.log(y_mean) + scale),
        y=float(y_mean * np.exp(scale)),
        y_err=float(y_err * np.exp(scale)),
        densities=dens, density_err=dens_err,
        n_samples=n_samples)
