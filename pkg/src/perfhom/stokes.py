"""Exterior Stokes cell problem and the particle resistance matrix.

For each direction k the cell problem asks for a decaying Stokes flow around
the reference particle with velocity e_k on the particle boundary.  The
resistance matrix R_jk is the Dirichlet integral of the solutions over the
exterior; it equals the net pseudo-traction force on the particle, which is
carried entirely by the Stokeslet part of the far field.

Spheres get the classical closed-form solution (Stokeslet + potential
dipole), which makes R = 6*pi*r0*Id exact.  Harmonic perturbations are solved
by least-squares collocation over exterior Lamb modes centered at the origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CellProblemError, GeometryError
from .geometry import ReferenceParticle, boundary_quadrature, unit_sphere_quadrature
from .harmonics import Deg1Stokes, LambMode, exterior_basis

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ResistanceMatrix:
    """Symmetric positive definite 3x3 resistance matrix.

    `asymmetry` records the relative asymmetry of the raw estimate before
    symmetrization (zero for the closed-form sphere).
    """

    matrix: np.ndarray
    asymmetry: float = 0.0

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", 0.5 * (M + M.T))
        ev = np.linalg.eigvalsh(self.matrix)
        if ev.min() <= 0:
            raise CellProblemError(f"resistance matrix not positive definite: eigenvalues {ev}")

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


class CellSolution:
    """Base class: exterior Stokes solution (w_k, q_k) for k = 1, 2, 3."""

    particle: ReferenceParticle
    boundary_residual: float

    def eval(self, pts):
        """Return (W, G, Q) at points (n, 3).

        W[p, k, i] = (w_k)_i, G[p, k, i, j] = d_j (w_k)_i, Q[p, k] = q_k.
        """
        raise NotImplementedError

    def eval_pressure_grad(self, pts):
        """P[p, k, j] = d_j q_k."""
        raise NotImplementedError

    def stokeslet_matrix(self):
        """F[j, k]: coefficient-j Stokeslet force of solution k; R = F for exact solves."""
        raise NotImplementedError

    def check_exterior(self, pts):
        pts = np.asarray(pts, dtype=float)
        r = np.linalg.norm(pts, axis=1)
        safe = np.maximum(r, 1e-300)
        rho = self.particle.boundary_radius(pts / safe[:, None])
        if (r < rho * (1 - 1e-12)).any():
            raise GeometryError("evaluation point inside the particle")


class SphereCellSolution(CellSolution):
    """Closed-form translating-sphere solution, exact at any truncation order."""

    def __init__(self, particle: ReferenceParticle):
        self.particle = particle
        self.field = Deg1Stokes.translating_sphere(particle.radius)
        dirs, _ = unit_sphere_quadrature(12)
        W, _, _ = self.eval(particle.radius * dirs)
        self.boundary_residual = float(
            np.abs(W - np.eye(3)[None]).max()
        )

    def eval(self, pts):
        pts = np.asarray(pts, dtype=float)
        self.check_exterior(pts)
        return (
            self.field.velocity(pts),
            self.field.velocity_grad(pts),
            self.field.pressure(pts),
        )

    def eval_pressure_grad(self, pts):
        return self.field.pressure_grad(np.asarray(pts, dtype=float))

    def stokeslet_matrix(self):
        return 4 * math.pi * self.field.c[0] * np.eye(3)

    def to_jsonable(self):
        return {
            "kind": "sphere",
            "radius": self.particle.radius,
            "coefficients": {"stokeslet": self.field.c[0], "dipole": self.field.c[1]},
            "boundary_residual": self.boundary_residual,
        }


class CollocationCellSolution(CellSolution):
    """Least-squares collocation over exterior Lamb modes (harmonic particles)."""

    def __init__(self, particle, modes, coeffs, boundary_residual, condition):
        self.particle = particle
        self.modes = modes
        self.coeffs = coeffs  # (n_modes, 3)
        self.boundary_residual = boundary_residual
        self.condition = condition

    def eval(self, pts):
        pts = np.asarray(pts, dtype=float)
        self.check_exterior(pts)
        n = len(pts)
        W = np.zeros((n, 3, 3))
        G = np.zeros((n, 3, 3, 3))
        Q = np.zeros((n, 3))
        for mode, c in zip(self.modes, self.coeffs):
            u = mode.velocity(pts)
            g = mode.velocity_grad(pts)
            q = mode.pressure(pts)
            W += c[None, :, None] * u[:, None, :]
            G += c[None, :, None, None] * g[:, None, :, :]
            Q += c[None, :] * q[:, None]
        return W, G, Q

    def eval_pressure_grad(self, pts):
        pts = np.asarray(pts, dtype=float)
        P = np.zeros((len(pts), 3, 3))
        for mode, c in zip(self.modes, self.coeffs):
            if mode.family == "pressure":
                gq = mode.pressure_grad(pts)
                P += c[None, :, None] * gq[:, None, :]
        return P

    def stokeslet_matrix(self):
        F = np.zeros((3, 3))
        for mode, c in zip(self.modes, self.coeffs):
            F += np.outer(mode.stokeslet_vector(), c)
        return F

    def to_jsonable(self):
        return {
            "kind": "harmonic",
            "radius": self.particle.radius,
            "harmonic_coeffs": list(self.particle.coeffs),
            "modes": [(m.l, m.m, m.family, m.scale) for m in self.modes],
            "coefficients": self.coeffs.tolist(),
            "boundary_residual": self.boundary_residual,
            "condition": self.condition,
        }


def _surface_grid(particle, n_points_target):
    """Collocation/validation points on the particle boundary with normals and weights."""
    order = max(4, int(math.ceil(math.sqrt(n_points_target / 2))))
    dirs, w = unit_sphere_quadrature(order)
    rho = particle.boundary_radius(dirs)
    pts = rho[:, None] * dirs
    grad_s = particle.boundary_radius_surface_grad(dirs)
    # area element vector for a star-shaped surface x = rho(n) n
    vec = rho[:, None] ** 2 * dirs - rho[:, None] * grad_s
    area = np.linalg.norm(vec, axis=1)
    normals = vec / area[:, None]
    return pts, normals, w * area, dirs


def solve_exterior(particle: ReferenceParticle, order: int) -> CellSolution:
    """Solve the exterior cell problem with boundary velocity e_k on the particle.

    Spheres return the closed-form solution regardless of order.  Harmonic
    particles are solved by boundary collocation in least squares with
    exterior Lamb modes up to degree `order`; the collocation system uses
    four times as many points as unknown coefficients.
    """
    if order < 1:
        raise CellProblemError("truncation order must be >= 1")
    if particle.kind == "sphere":
        return SphereCellSolution(particle)

    modes = exterior_basis(order, r_ref=particle.radius)
    n_modes = len(modes)
    pts, _, _, _ = _surface_grid(particle, 4 * n_modes)
    A = np.empty((3 * len(pts), n_modes))
    for j, mode in enumerate(modes):
        A[:, j] = mode.velocity(pts).ravel()
    scales = np.linalg.norm(A, axis=0)
    scales[scales == 0] = 1.0
    A /= scales[None, :]
    b = np.tile(np.eye(3), (len(pts), 1))
    coeffs, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if rank < n_modes or condition > _COND_LIMIT:
        raise CellProblemError(
            f"collocation system ill-conditioned (cond ~ {condition:.2e}); "
            "lower the truncation order or increase the collocation density"
        )
    coeffs /= scales[:, None]
    sol = CollocationCellSolution(particle, modes, coeffs, 0.0, condition)
    # residual on an independent, denser validation grid
    vpts, _, _, _ = _surface_grid(particle, 8 * n_modes)
    W, _, _ = sol.eval(vpts)
    sol.boundary_residual = float(np.abs(W - np.eye(3)[None]).max())
    return sol


def eval_cell(sol: CellSolution, x):
    """(velocity, gradient, pressure) of all three solutions at a single point."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    W, G, Q = sol.eval(x)
    return W[0], G[0], Q[0]


def resistance(sol: CellSolution, method: str = "dirichlet") -> ResistanceMatrix:
    """Resistance matrix R_jk = Dirichlet integral of grad(w_k):grad(w_j).

    method 'dirichlet' integrates by parts onto the particle boundary
    (closed form for the sphere); 'traction' integrates the pseudo-traction
    over an enclosing sphere by quadrature; 'stokeslet' reads the net force
    off the far-field Stokeslet coefficients.  All three agree for converged
    solutions.
    """
    if method == "stokeslet":
        raw = sol.stokeslet_matrix()
    elif method == "traction":
        raw = _resistance_traction(sol)
    elif method == "dirichlet":
        raw = _resistance_dirichlet(sol)
    else:
        raise ValueError(f"unknown resistance method {method!r}")
    asym = float(np.abs(raw - raw.T).max() / max(np.abs(raw).max(), 1e-300))
    return ResistanceMatrix(matrix=raw, asymmetry=asym)


def _resistance_traction(sol: CellSolution, factor: float = 2.5) -> np.ndarray:
    """R_jk = integral over an enclosing sphere of e_j . (q_k n - dn w_k)."""
    radius = factor * sol.particle.outer_radius
    pts, w = boundary_quadrature(radius, (0.0, 0.0, 0.0), order=12)
    n = pts / radius
    _, G, Q = sol.eval(pts)
    # traction_k = q_k n - (grad w_k) n
    trac = Q[:, :, None] * n[:, None, :] - np.einsum("pkij,pj->pki", G, n)
    return np.einsum("p,pki->ik", w, trac)


def _resistance_dirichlet(sol: CellSolution) -> np.ndarray:
    if isinstance(sol, SphereCellSolution):
        g = sol.field.dirichlet_gram(sol.field, sol.particle.radius)
        return g * np.eye(3)
    # integral by parts onto the particle boundary: R_jk = int w_k . (q_j n - dn w_j)
    pts, normals, w, _ = _surface_grid(sol.particle, 6 * len(sol.modes))
    W, G, Q = sol.eval(pts)
    trac = Q[:, :, None] * normals[:, None, :] - np.einsum("pkij,pj->pki", G, normals)
    return np.einsum("p,pki,pji->jk", w, W, trac)


def solution_to_json(sol: CellSolution) -> str:
    return json.dumps(sol.to_jsonable(), indent=2, sort_keys=True)


def solution_from_json(text: str) -> CellSolution:
    d = json.loads(text)
    if d["kind"] == "sphere":
        return SphereCellSolution(ReferenceParticle(kind="sphere", radius=d["radius"]))
    particle = ReferenceParticle(
        kind="harmonic", radius=d["radius"], coeffs=tuple(tuple(c) for c in d["harmonic_coeffs"])
    )
    modes = [LambMode(l, m, fam, "exterior", scale) for l, m, fam, scale in d["modes"]]
    return CollocationCellSolution(
        particle,
        modes,
        np.asarray(d["coefficients"]),
        d["boundary_residual"],
        d["condition"],
    )
