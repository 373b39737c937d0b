"""Pair interaction potentials: nonnegative, spherically symmetric, +inf allowed."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .errors import ConfigError


def _surface(dim: int) -> float:
    return 2.0 * np.pi ** (0.5 * dim) / math.gamma(0.5 * dim)


class PairPotential:
    """Base class; evaluates U(|x|) on arrays of distances."""

    kind = "base"
    is_zero = False
    hard_core_radius = 0.0

    def __call__(self, r):
        raise NotImplementedError

    def integrable(self, dim: int) -> bool:
        return np.isfinite(self.integral(dim))

    def integral(self, dim: int) -> float:
        """int_{R^d} U(x) dx, analytic where available."""
        raise NotImplementedError

    def integral_quadrature(self, dim: int) -> float:
        """Independent route: adaptive radial quadrature of the same integral."""
        if self.hard_core_radius > 0.0:
            return math.inf
        surf = _surface(dim)
        val, _ = integrate.quad(lambda r: surf * r ** (dim - 1) * float(self(r)),
                                0.0, np.inf, limit=400)
        return float(val)


class ZeroPotential(PairPotential):
    kind = "zero"
    is_zero = True

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.zeros_like(r)

    def integral(self, dim: int) -> float:
        return 0.0


class GaussianPotential(PairPotential):
    """U(x) = u0 * exp(-(|x|/r0)^2)."""

    kind = "gaussian"

    def __init__(self, u0: float, r0: float):
        if u0 < 0 or not np.isfinite(u0):
            raise ValueError("u0 must be a finite nonnegative real")
        if r0 <= 0 or not np.isfinite(r0):
            raise ValueError("r0 must be a finite positive real")
        self.u0 = float(u0)
        self.r0 = float(r0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.u0 * np.exp(-((r / self.r0) ** 2))

    def integral(self, dim: int) -> float:
        return self.u0 * (math.sqrt(np.pi) * self.r0) ** dim


class HardCorePotential(PairPotential):
    """U = +inf inside the core radius, 0 outside."""

    kind = "hard_core"

    def __init__(self, radius: float):
        if radius <= 0 or not np.isfinite(radius):
            raise ValueError("radius must be a finite positive real")
        self.radius = float(radius)
        self.hard_core_radius = float(radius)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.radius, np.inf, 0.0)

    def integral(self, dim: int) -> float:
        return math.inf


class TabulatedPotential(PairPotential):
    """Linear interpolation on an (r, U) grid; zero beyond the last point."""

    kind = "tabulated"

    def __init__(self, r_grid, values):
        r = np.asarray(r_grid, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ValueError("need matching 1-d grids with at least 2 points")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ValueError("r grid must be nonnegative and strictly increasing")
        if np.any(v < 0) or np.any(~np.isfinite(v)):
            raise ValueError("tabulated values must be finite and nonnegative")
        self.r_grid = r
        self.values = v

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.r_grid, self.values, left=self.values[0], right=0.0)

    def integral(self, dim: int) -> float:
        return self.integral_quadrature(dim)


def potential_from_config(spec: dict) -> PairPotential:
    """Build a potential from a declarative {'kind': ..., ...} mapping."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"potential spec must be a mapping with 'kind', got {spec!r}")
    kind = spec["kind"]
    extra = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "zero":
            if extra:
                raise ConfigError(f"unknown keys for zero potential: {sorted(extra)}")
            return ZeroPotential()
        if kind == "gaussian":
            known = {"u0", "r"}
            if set(extra) != known:
                raise ConfigError(f"gaussian potential needs keys {sorted(known)}, got {sorted(extra)}")
            return GaussianPotential(u0=extra["u0"], r0=extra["r"])
        if kind == "hard_core":
            if set(extra) != {"radius"}:
                raise ConfigError(f"hard_core potential needs key 'radius', got {sorted(extra)}")
            return HardCorePotential(radius=extra["radius"])
        if kind == "tabulated":
            if set(extra) != {"r_grid", "values"}:
                raise ConfigError(f"tabulated potential needs keys r_grid, values, got {sorted(extra)}")
            return TabulatedPotential(extra["r_grid"], extra["values"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown potential kind {kind!r}")
