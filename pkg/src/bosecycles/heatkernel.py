"""Periodic Gaussian heat kernels, theta-sum coefficients and Brownian bridges.

Conventions: the kinetic generator is the plain Laplacian, so the free kernel
g_t(x) = (4*pi*t)^(-d/2) exp(-x^2/4t) has variance 2t per coordinate.  On a
torus of side L the kernel is the image sum over all shifts L*z, z integer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .system import SimulationBox

# Image sums are truncated once the next shell contributes less than ~1e-18 of
# the running total; below _DUAL_SWITCH the direct form would need more than
# ~50 images per coordinate and the Poisson-resummed (dual) form is used.
_LOG_TOL = 41.5
_DUAL_SWITCH = 0.0148


def theta_image_sum(a, u):
    """Sum_k exp(-a*(u - k)^2) over all integers k, elementwise in (a, u).

    Periodic in u with period 1.  Requires a > 0.  Accurate to ~1e-15
    relative for every positive a (direct sum for narrow Gaussians, dual
    Jacobi form for wide ones).
    """
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("theta_image_sum requires finite a > 0")
    if np.any(~np.isfinite(u)):
        raise ValueError("theta_image_sum requires finite u")
    a, u = np.broadcast_arrays(a, u)
    shape = a.shape
    a = np.ravel(a)
    u = np.ravel(u)
    u = u - np.round(u)  # exact periodicity reduction
    out = np.empty_like(a)

    direct = a >= _DUAL_SWITCH
    if np.any(direct):
        ad = a[direct]
        ud = u[direct]
        kmax = int(np.ceil(np.sqrt(_LOG_TOL / ad.min()))) + 1
        ks = np.arange(-kmax, kmax + 1, dtype=float)
        out[direct] = np.exp(-ad[:, None] * (ud[:, None] - ks) ** 2).sum(axis=1)
    if np.any(~direct):
        aw = a[~direct]
        uw = u[~direct]
        # Jacobi transform: sum_k e^{-a(u-k)^2} = sqrt(pi/a) * theta3(pi*u, e^{-pi^2/a})
        ms = np.arange(1, 3, dtype=float)
        series = 1.0 + 2.0 * (
            np.exp(-np.pi ** 2 * ms ** 2 / aw[:, None])
            * np.cos(2.0 * np.pi * ms * uw[:, None])
        ).sum(axis=1)
        out[~direct] = np.sqrt(np.pi / aw) * series
    return out.reshape(shape) if shape else float(out[0])


def heat_kernel(t, x, box: SimulationBox | None):
    """Periodic heat kernel (4*pi*t)^{-d/2} sum_z exp(-(x+L*z)^2/4t).

    With box=None the free-space Gaussian kernel is returned (the L->infinity
    limit, where only the z=0 image survives).
    """
    if not np.isfinite(t) or t <= 0:
        raise ValueError(f"t must be a positive real, got {t!r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~np.isfinite(x)):
        raise ValueError("x must be finite")
    d = x.shape[-1]
    pref = (4.0 * np.pi * t) ** (-0.5 * d)
    if box is None:
        return float(pref * np.exp(-np.sum(x * x, axis=-1) / (4.0 * t)))
    if box.dim != d:
        raise ValueError(f"point has dimension {d}, box has {box.dim}")
    a = box.side ** 2 / (4.0 * t)
    per_coord = theta_image_sum(a, x / box.side)
    return float(pref * np.prod(per_coord, axis=-1))


def theta_coefficient(n: int, x, box: SimulationBox, beta: float) -> float:
    """Finite-volume ideal-gas overlap coefficient for winding n.

    Equals sum_z exp(-(L^2/4n*beta)(x/L - z)^2) / sum_z exp(-(L^2/4n*beta) z^2);
    1 at x = 0, torus-periodic in x, and -> exp(-x^2/4n*beta) as L -> infinity.
    """
    if n < 1:
        raise ValueError(f"winding n must be >= 1, got {n}")
    return float(theta_coefficient_profile(np.array([n]), x, box, beta)[0])


def theta_coefficient_profile(ns, x, box: SimulationBox, beta: float) -> np.ndarray:
    """theta_coefficient evaluated for a whole array of windings at once."""
    ns = np.asarray(ns)
    if np.any(ns < 1):
        raise ValueError("windings must be >= 1")
    if not np.isfinite(beta) or beta <= 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (box.dim,):
        raise ValueError(f"x must be a {box.dim}-vector, got shape {x.shape}")
    a = box.side ** 2 / (4.0 * ns.astype(float) * beta)  # (n,)
    out = np.ones(len(ns))
    denom_ref = theta_image_sum(a, 0.0)
    for c in range(box.dim):
        out *= theta_image_sum(a, x[c] / box.side) / denom_ref
    return out


def integral_sandwich(a: float, b: float = 0.0) -> tuple[float, float]:
    """Bracket (sqrt(pi/a) - 1, sqrt(pi/a) + 1) for sum_k exp(-a(k-b)^2).

    The bracket is valid for every real offset b.
    """
    if not np.isfinite(a) or a <= 0:
        raise ValueError(f"a must be a positive real, got {a!r}")
    if not np.isfinite(b):
        raise ValueError(f"b must be finite, got {b!r}")
    g = np.sqrt(np.pi / a)
    return (g - 1.0, g + 1.0)


@dataclass(frozen=True)
class DiscretizedPath:
    """A winding-n trajectory as beads on a uniform time grid.

    beads are absolute (unwrapped) coordinates; `wrap` records the torus image
    of the final bead relative to the declared endpoint:
    beads[-1] == end + L * wrap.  Minimum-image reduction is applied only when
    evaluating potentials, never to the stored beads.
    """

    winding: int
    dt: float
    beads: np.ndarray          # (K, d) with K = winding * steps_per_leg + 1
    wrap: np.ndarray           # (d,) integer image shifts of the endpoint
    box: SimulationBox | None = None

    def __post_init__(self):
        if self.winding < 1:
            raise ValueError("winding must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def total_time(self) -> float:
        return self.dt * (len(self.beads) - 1)

    @property
    def start(self) -> np.ndarray:
        return self.beads[0]

    @property
    def end(self) -> np.ndarray:
        if self.box is None:
            return self.beads[-1]
        return self.beads[-1] - self.box.side * self.wrap


def sample_bridge(t, x, y, m_steps: int, box: SimulationBox | None, rng,
                  winding: int = 1) -> DiscretizedPath:
    """Draw a Brownian bridge x -> y over time t with m_steps uniform steps.

    On a torus the endpoint image shift z is sampled with probability
    proportional to exp(-(y + L z - x)^2 / 4t) per coordinate; interior beads
    then follow the exact free bridge toward y + L z.  Conditioned on both
    neighbours at spacing dt, each interior bead is Gaussian around the
    midpoint with variance dt per coordinate.
    """
    if m_steps < 1:
        raise ValueError("m_steps must be >= 1")
    if not np.isfinite(t) or t <= 0:
        raise ValueError("t must be a positive real")
    x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    y = np.atleast_1d(np.asarray(y, dtype=float)).copy()
    d = len(x)
    if box is not None and box.dim != d:
        raise ValueError("point dimension does not match box")
    if box is not None:
        z = sample_image_shift(t, y - x, box, rng)
        target = y + box.side * z
    else:
        z = np.zeros(d, dtype=int)
        target = y
    dt = t / m_steps
    beads = np.empty((m_steps + 1, d))
    beads[0] = x
    beads[-1] = target
    for j in range(1, m_steps):
        t_rem = t - (j - 1) * dt
        prev = beads[j - 1]
        mean = prev + (target - prev) * (dt / t_rem)
        var = 2.0 * dt * (t_rem - dt) / t_rem
        beads[j] = mean + np.sqrt(var) * rng.standard_normal(d)
    return DiscretizedPath(winding=winding, dt=dt, beads=beads, wrap=z, box=box)


def sample_image_shift(t, dxy, box: SimulationBox, rng) -> np.ndarray:
    """Sample per-coordinate integer z with weight exp(-(dxy + L z)^2 / 4t)."""
    dxy = np.atleast_1d(np.asarray(dxy, dtype=float))
    L = box.side
    half_width = int(np.ceil(np.sqrt(_LOG_TOL * 4.0 * t) / L)) + 1
    z = np.zeros(len(dxy), dtype=int)
    for c in range(len(dxy)):
        center = int(np.round(-dxy[c] / L))
        ks = np.arange(center - half_width, center + half_width + 1)
        w = np.exp(-((dxy[c] + L * ks) ** 2) / (4.0 * t))
        w /= w.sum()
        z[c] = rng.choice(ks, p=w)
    return z


def concatenate(paths) -> DiscretizedPath:
    """Join paths end-to-start (torus-exact): windings and times add.

    Duplicate junction beads are removed; later paths are shifted by the torus
    image that makes the joined bead sequence continuous in R^d.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path")
    first = paths[0]
    if len(paths) == 1:
        return first
    box = first.box
    dt = first.dt
    for p in paths[1:]:
        if p.box != box:
            raise ContractError("paths live on different boxes")
        if not np.isclose(p.dt, dt, rtol=1e-12, atol=0.0):
            raise ContractError("paths have different time grids")
    beads = [first.beads]
    shift_total = np.zeros(first.beads.shape[1])
    image_total = np.zeros(first.beads.shape[1], dtype=int)
    prev_end = first.beads[-1]
    for p in paths[1:]:
        gap = prev_end - p.beads[0]
        if box is not None:
            k = np.round(gap / box.side).astype(int)
            resid = gap - box.side * k
        else:
            k = np.zeros_like(image_total)
            resid = gap
        if np.max(np.abs(resid)) > 1e-9 * max(1.0, box.side if box else 1.0):
            raise ContractError(
                f"endpoint mismatch at junction: residual {resid}")
        shift = (box.side * k if box is not None else 0.0) + resid  # resid ~ 0
        shift_total = shift_total + shift
        image_total = image_total + k
        beads.append(p.beads[1:] + shift_total)
        prev_end = beads[-1][-1]
    last = paths[-1]
    return DiscretizedPath(
        winding=sum(p.winding for p in paths),
        dt=dt,
        beads=np.concatenate(beads, axis=0),
        wrap=last.wrap + image_total,
        box=box,
    )
