"""Reference particle, periodic lattice, and the four-region cell split.

Each lattice cube Q_i of side eps centered at x_i = eps*i is split into the
scaled particle T_i, an inner shell C_i up to radius eta/4, a matching
annulus D_i up to eta/2, and the far region K_i, where eta = eps^beta is an
intermediate length scale with eps^alpha <= eta <= eps.  Boundaries belong
to the inner region.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import GeometryError
from .harmonics import real_solid_harmonic


class Region(str, Enum):
    T = "T"
    C = "C"
    D = "D"
    K = "K"


# ---------------------------------------------------------------------------
# spherical quadrature


def unit_sphere_quadrature(order: int):
    """Product Gauss-Legendre x trapezoid rule on the unit sphere.

    Returns (directions (M,3), weights (M,)) with weights summing to 4*pi,
    exact for spherical harmonics through degree 2*order - 1.
    """
    if order < 1:
        raise GeometryError("quadrature order must be >= 1")
    ct, wt = np.polynomial.legendre.leggauss(order)
    nphi = max(2 * order, 4)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1.0 - ct**2)
    dirs = np.empty((order * nphi, 3))
    dirs[:, 0] = np.outer(st, np.cos(phi)).ravel()
    dirs[:, 1] = np.outer(st, np.sin(phi)).ravel()
    dirs[:, 2] = np.outer(ct, np.ones(nphi)).ravel()
    w = np.outer(wt, np.full(nphi, 2 * np.pi / nphi)).ravel()
    return dirs, w


def boundary_quadrature(radius: float, center, order: int):
    """Quadrature nodes and weights on the sphere of given radius and center.

    Weights are positive and sum to the sphere area 4*pi*r^2; exact for
    spherical-harmonic integrands through degree 2*order - 1.
    """
    dirs, w = unit_sphere_quadrature(order)
    pts = np.asarray(center, dtype=float)[None, :] + radius * dirs
    return pts, w * radius**2


# ---------------------------------------------------------------------------
# reference particle


@dataclass(frozen=True)
class ReferenceParticle:
    """Reference shape T: a sphere or a star-shaped harmonic perturbation of one.

    The boundary radius is rho(n) = radius * (1 + sum c_lm Y_lm(n)) with real
    orthonormal spherical harmonics.  The closure must stay strictly inside
    the ball of radius 1/4 and contain a neighborhood of the origin.
    """

    kind: str = "sphere"
    radius: float = 0.125
    coeffs: tuple = ()  # ((l, m, value), ...)

    def __post_init__(self):
        if self.kind not in ("sphere", "harmonic"):
            raise GeometryError(f"unknown particle kind {self.kind!r}")
        if self.kind == "sphere" and self.coeffs:
            raise GeometryError("sphere particles take no harmonic coefficients")
        if not 0 < self.radius:
            raise GeometryError("particle radius must be positive")
        object.__setattr__(self, "coeffs", tuple(tuple(c) for c in self.coeffs))
        for l, m, _ in self.coeffs:
            if l < 1 or abs(m) > l:
                raise GeometryError(f"invalid harmonic index ({l}, {m})")
        dmin, dmax = self._radius_extremes()
        if dmin <= 0:
            raise GeometryError("particle boundary collapses through the origin")
        if dmax >= 0.25:
            raise GeometryError(
                f"particle must fit strictly inside the ball of radius 1/4 "
                f"(max boundary radius {dmax:.4g})"
            )
        object.__setattr__(self, "_inner", dmin)
        object.__setattr__(self, "_outer", dmax)

    def _radius_extremes(self):
        if self.kind == "sphere":
            return self.radius, self.radius
        dirs, _ = unit_sphere_quadrature(48)
        rho = self.boundary_radius(dirs)
        return float(rho.min()), float(rho.max())

    @property
    def inner_radius(self) -> float:
        """Largest delta with the ball B_delta(0) inside the particle."""
        return self._inner

    @property
    def outer_radius(self) -> float:
        return self._outer

    def boundary_radius(self, directions) -> np.ndarray:
        """rho(n) for unit directions n, shape (M,3) -> (M,)."""
        directions = np.asarray(directions, dtype=float)
        rho = np.full(len(directions), self.radius)
        for l, m, c in self.coeffs:
            rho += self.radius * c * real_solid_harmonic(l, m).eval(directions)
        return rho

    def boundary_radius_surface_grad(self, directions) -> np.ndarray:
        """Tangential gradient of rho on the unit sphere, shape (M, 3)."""
        directions = np.asarray(directions, dtype=float)
        g = np.zeros_like(directions)
        for l, m, c in self.coeffs:
            P = real_solid_harmonic(l, m)
            dP = np.stack([P.diff(i).eval(directions) for i in range(3)], axis=1)
            val = P.eval(directions)
            # gradient of the degree-0 extension Y = P/r^l at r=1 is tangential
            g += self.radius * c * (dP - l * val[:, None] * directions)
        return g

    def contains(self, offsets) -> np.ndarray:
        """Whether points (relative to the particle center) lie in the closure."""
        offsets = np.asarray(offsets, dtype=float)
        r = np.linalg.norm(offsets, axis=1)
        safe = np.maximum(r, 1e-300)
        rho = self.boundary_radius(offsets / safe[:, None])
        return r <= rho + 1e-15


def particle_from_config(cfg: dict) -> ReferenceParticle:
    """Build a particle from a flat key = value mapping.

    Keys: kind (sphere|harmonic), radius (float), harmonic_coeffs
    ("l,m,value; l,m,value; ...", only for harmonic).
    """
    kind = str(cfg.get("kind", "sphere")).strip().lower()
    radius = float(cfg.get("radius", 0.125))
    coeffs = []
    raw = cfg.get("harmonic_coeffs", "")
    if raw:
        for chunk in str(raw).replace(";", " ").split():
            parts = chunk.split(",")
            if len(parts) != 3:
                raise GeometryError(f"bad harmonic coefficient {chunk!r}, want l,m,value")
            coeffs.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return ReferenceParticle(kind=kind, radius=radius, coeffs=tuple(coeffs))


# ---------------------------------------------------------------------------
# lattice and cell decomposition


@dataclass(frozen=True)
class CellDecomposition:
    """One lattice cell of side epsilon with intermediate scale eta = epsilon^beta."""

    epsilon: float
    alpha: float
    beta: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise GeometryError("epsilon must lie in (0, 1)")
        if not self.alpha > 1:
            raise GeometryError("alpha must exceed 1")
        if not 1 <= self.beta <= self.alpha:
            raise GeometryError(
                f"beta must lie in [1, alpha] so that eps^alpha <= eta <= eps "
                f"(got beta={self.beta}, alpha={self.alpha})"
            )

    @property
    def eta(self) -> float:
        return self.epsilon**self.beta

    @property
    def particle_scale(self) -> float:
        return self.epsilon**self.alpha

    @property
    def r_quarter(self) -> float:
        return self.eta / 4.0

    @property
    def r_half(self) -> float:
        return self.eta / 2.0


def nearest_cell(x, epsilon: float):
    """Lattice index i and offset x - eps*i with components in [-eps/2, eps/2)."""
    x = np.asarray(x, dtype=float)
    i = np.floor(x / epsilon + 0.5).astype(np.int64)
    return i, x - epsilon * i


def region_of(x, decomp: CellDecomposition, particle: ReferenceParticle) -> Region:
    """Region label of a point inside the cell cube; boundaries go inward."""
    x = np.asarray(x, dtype=float)
    off = x - np.asarray(decomp.center, dtype=float)
    if np.abs(off).max() > decomp.epsilon / 2 + 1e-15:
        raise GeometryError("point lies outside the cell cube")
    return _region_of_offsets(off[None, :], decomp, particle)[0]


def _region_of_offsets(offsets, decomp, particle):
    offsets = np.asarray(offsets, dtype=float)
    r = np.linalg.norm(offsets, axis=1)
    scale = decomp.particle_scale
    out = np.full(len(offsets), Region.K, dtype=object)
    inside = particle.contains(offsets / scale)
    out[r <= decomp.r_half] = Region.D
    out[r <= decomp.r_quarter] = Region.C
    out[inside] = Region.T
    return out


def region_volumes(decomp: CellDecomposition, particle: ReferenceParticle) -> dict:
    """Analytic region volumes for a sphere particle; they sum to eps^3."""
    if particle.kind != "sphere":
        raise GeometryError("analytic region volumes only for sphere particles")
    a = particle.radius * decomp.particle_scale
    v = lambda r: 4.0 / 3.0 * np.pi * r**3
    vT = v(a)
    vC = v(decomp.r_quarter) - vT
    vD = v(decomp.r_half) - v(decomp.r_quarter)
    vK = decomp.epsilon**3 - v(decomp.r_half)
    return {Region.T: vT, Region.C: vC, Region.D: vD, Region.K: vK}
