"""Oscillating corrector on the cell decomposition plus its weighted norms.

The matrix-valued corrector w^eps equals the identity in the far region K of
every cell, vanishes on the particles, interpolates through the cell solution
in the inner shell C (column k there is e_k - w_k((x - x_i)/eps^alpha)), and
solves a Stokes matching problem in the annulus D between radii eta/4 and
eta/2.  For a sphere the matching data is degree-1 in vector harmonics and
the annulus solve is an exact 4x4 linear system per direction; harmonic
particles use least-squares matching over interior + exterior Lamb modes with
the projection remainder reported.

This module also carries the Brinkman-density pairing <M_eps phi, psi> (a
pseudo-traction surface measure on the spheres of radius eta/4 plus a
divergence-form term on the annuli) and the weighted corrector norms used by
the rate studies.
"""

from __future__ import annotations

import numpy as np

from .errors import CorrectorError, GeometryError
from .geometry import CellDecomposition, ReferenceParticle, unit_sphere_quadrature
from .harmonics import Deg1Stokes, exterior_basis, interior_basis
from .stokes import CellSolution, SphereCellSolution

_EYE3 = np.eye(3)


# ---------------------------------------------------------------------------
# annulus expansions


class _ModeSum:
    """Velocity/gradient/pressure of a Lamb-mode combination, corrector axes."""

    def __init__(self, modes, coeffs):
        self.modes = modes
        self.coeffs = coeffs  # (n_modes, 3)

    def velocity(self, pts):
        W = np.zeros((len(pts), 3, 3))
        for mode, c in zip(self.modes, self.coeffs):
            W += c[None, :, None] * mode.velocity(pts)[:, None, :]
        return W

    def velocity_grad(self, pts):
        G = np.zeros((len(pts), 3, 3, 3))
        for mode, c in zip(self.modes, self.coeffs):
            G += c[None, :, None, None] * mode.velocity_grad(pts)[:, None, :, :]
        return G

    def pressure(self, pts):
        Q = np.zeros((len(pts), 3))
        for mode, c in zip(self.modes, self.coeffs):
            if mode.family == "pressure":
                Q += c[None, :] * mode.pressure(pts)[:, None]
        return Q

    def pressure_grad(self, pts):
        P = np.zeros((len(pts), 3, 3))
        for mode, c in zip(self.modes, self.coeffs):
            if mode.family == "pressure":
                P += c[None, :, None] * mode.pressure_grad(pts)[:, None, :]
        return P


def _solve_sphere_annulus(cell_field: Deg1Stokes, scale: float, r1: float, r2: float):
    """Exact 4x4 matching: inner data e_k - w_k(./scale), outer data e_k."""
    units = [
        Deg1Stokes(c_st=1.0),
        Deg1Stokes(c_pd=1.0),
        Deg1Stokes(c_c=1.0),
        Deg1Stokes(c_q=1.0),
    ]
    rr = np.array([r1, r2])
    M = np.zeros((4, 4))
    for j, u in enumerate(units):
        A, B, _ = u.profiles(rr)
        M[0, j], M[1, j] = A[0], B[0]
        M[2, j], M[3, j] = A[1], B[1]
    Ac, Bc, _ = cell_field.profiles(np.array([r1 / scale]))
    rhs = np.array([1.0 - Ac[0], -Bc[0], 1.0, 0.0])
    col = np.abs(M).max(axis=0)
    c = np.linalg.solve(M / col[None, :], rhs) / col
    return Deg1Stokes(*c)


class _SphereAnnulus:
    """Annulus field for the sphere: one Deg1Stokes shared by all directions."""

    def __init__(self, field: Deg1Stokes):
        self.field = field

    def velocity(self, pts):
        return self.field.velocity(pts)

    def velocity_grad(self, pts):
        return self.field.velocity_grad(pts)

    def pressure(self, pts):
        return self.field.pressure(pts)

    def pressure_grad(self, pts):
        return self.field.pressure_grad(pts)


def _solve_harmonic_annulus(cell: CellSolution, scale, r1, r2, lmax):
    modes = exterior_basis(lmax, r_ref=r1) + interior_basis(lmax, r_ref=r2)
    n_modes = len(modes)
    order = max(6, int(np.ceil(np.sqrt(2 * n_modes))))
    dirs, _ = unit_sphere_quadrature(order)
    pts = np.concatenate([r1 * dirs, r2 * dirs])
    A = np.empty((3 * len(pts), n_modes))
    for j, mode in enumerate(modes):
        A[:, j] = mode.velocity(pts).ravel()
    scales = np.linalg.norm(A, axis=0)
    scales[scales == 0] = 1.0
    A /= scales[None, :]
    W_in, _, _ = cell.eval(r1 * dirs / scale)
    rhs_in = _EYE3[None] - W_in.transpose(0, 2, 1)  # [p, i, k]
    rhs_out = np.broadcast_to(_EYE3, (len(dirs), 3, 3))
    b = np.concatenate([rhs_in, rhs_out]).reshape(-1, 3)
    coeffs, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < n_modes:
        raise CorrectorError("annulus matching system is rank deficient")
    return _ModeSum(modes, coeffs / scales[:, None])


# ---------------------------------------------------------------------------
# corrector field


class CorrectorField:
    """Periodic corrector (w^eps, q^eps) built from a cell solution.

    Evaluation axes follow the rest of the package: velocities W[p, k, i],
    gradients G[p, k, i, j] = d_j (w^eps_k)_i, pressures Q[p, k].
    """

    def __init__(self, cell: CellSolution, decomp: CellDecomposition):
        self.cell = cell
        self.decomp = decomp
        self.particle = cell.particle
        eps_a = decomp.particle_scale
        r1, r2 = decomp.r_quarter, decomp.r_half
        if self.particle.outer_radius * eps_a >= r1 * (1 - 1e-12):
            raise CorrectorError(
                "scaled particle touches the matching sphere of radius eta/4; "
                "decrease beta or the particle size"
            )
        if isinstance(cell, SphereCellSolution):
            self.annulus = _SphereAnnulus(
                _solve_sphere_annulus(cell.field, eps_a, r1, r2)
            )
        else:
            lmax = max(m.l for m in cell.modes)
            self.annulus = _solve_harmonic_annulus(cell, eps_a, r1, r2, lmax)
        self.continuity_residual = self._continuity_residual()
        self.trace_residual = self._trace_residual()

    # -- diagnostics --------------------------------------------------------

    def _continuity_residual(self):
        dirs, _ = unit_sphere_quadrature(10)
        r1, r2 = self.decomp.r_quarter, self.decomp.r_half
        pts1 = r1 * dirs
        c_side = self._c_velocity(pts1)
        d_side = self.annulus.velocity(pts1)
        res = np.abs(c_side - d_side).max()
        d_out = self.annulus.velocity(r2 * dirs)
        res = max(res, np.abs(d_out - _EYE3[None]).max())
        return float(res)

    def _trace_residual(self):
        dirs, _ = unit_sphere_quadrature(10)
        rho = self.particle.boundary_radius(dirs) * self.decomp.particle_scale
        pts = rho[:, None] * dirs
        return float(np.abs(self._c_velocity(pts)).max())

    def sup_norms(self, n_radial=24, ang_order=8):
        """(sup|w|, sup|grad w|, sup|q|) sampled over one cell's fluid region."""
        off, _, _ = self.fluid_quadrature(n_radial=n_radial, ang_order=ang_order)
        W, G, Q, _ = self.eval_offsets(off, want=("w", "grad", "q"))
        return (
            max(1.0, float(np.abs(W).max())),
            float(np.abs(G).max()),
            float(np.abs(Q).max()),
        )

    # -- evaluation ----------------------------------------------------------

    def _c_velocity(self, offsets):
        scale = self.decomp.particle_scale
        Wc, _, _ = self.cell.eval(offsets / scale)
        W = np.broadcast_to(_EYE3[None, :, :], Wc.shape).copy()
        W -= Wc
        return W

    def region_masks(self, offsets):
        r = np.linalg.norm(offsets, axis=1)
        inT = self.particle.contains(offsets / self.decomp.particle_scale)
        inC = (r <= self.decomp.r_quarter) & ~inT
        inD = (r > self.decomp.r_quarter) & (r <= self.decomp.r_half)
        inK = r > self.decomp.r_half
        return inT, inC, inD, inK

    def eval_offsets(self, offsets, want=("w",)):
        """Evaluate on cell offsets (no periodic wrap).  Missing pieces are None.

        Gradients and pressures are reported as zero inside the particle;
        callers that must not touch the particle interior check the masks.
        """
        offsets = np.asarray(offsets, dtype=float)
        n = len(offsets)
        inT, inC, inD, inK = self.region_masks(offsets)
        scale = self.decomp.particle_scale
        want_w = "w" in want
        want_g = "grad" in want
        want_q = "q" in want
        want_qg = "qgrad" in want
        W = np.zeros((n, 3, 3)) if want_w else None
        G = np.zeros((n, 3, 3, 3)) if want_g else None
        Q = np.zeros((n, 3)) if want_q else None
        Pg = np.zeros((n, 3, 3)) if want_qg else None

        if want_w and inK.any():
            W[inK] = _EYE3[None]

        if inC.any():
            y = offsets[inC] / scale
            Wc, Gc, Qc = self.cell.eval(y)
            if want_w:
                W[inC] = _EYE3[None] - Wc
            if want_g:
                G[inC] = -Gc / scale
            if want_q:
                Q[inC] = -Qc / scale
            if want_qg:
                Pg[inC] = -self.cell.eval_pressure_grad(y) / scale**2

        if inD.any():
            pts = offsets[inD]
            if want_w:
                W[inD] = self.annulus.velocity(pts)
            if want_g:
                G[inD] = self.annulus.velocity_grad(pts)
            if want_q:
                Q[inD] = self.annulus.pressure(pts)
            if want_qg:
                Pg[inD] = self.annulus.pressure_grad(pts)
        return W, G, Q, Pg

    def eval(self, x, want=("w", "grad", "q")):
        """Periodic evaluation at arbitrary points; see eval_corrector."""
        from .geometry import nearest_cell

        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, off = nearest_cell(x, self.decomp.epsilon)
        if "grad" in want or "q" in want or "qgrad" in want:
            r = np.linalg.norm(off, axis=1)
            safe = np.maximum(r, 1e-300)
            rho = self.particle.boundary_radius(off / safe[:, None])
            if (r < rho * self.decomp.particle_scale * (1 - 1e-9)).any():
                raise CorrectorError(
                    "gradient/pressure of the corrector requested inside a particle"
                )
        return self.eval_offsets(off, want=want)

    # -- quadrature over one cell's regions ----------------------------------

    def _radial_nodes(self, r_lo, r_hi, n_panels, nodes_per_panel):
        """Geometrically graded Gauss-Legendre nodes; r_lo may vary per angle."""
        x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        r_lo = np.atleast_1d(np.asarray(r_lo, dtype=float))
        ratio = (r_hi / r_lo) ** (1.0 / n_panels)
        edges = r_lo[:, None] * ratio[:, None] ** np.arange(n_panels + 1)[None, :]
        a = edges[:, :-1, None]
        h = (edges[:, 1:] - edges[:, :-1])[:, :, None]
        radii = a + h * x[None, None, :]
        weights = h * w[None, None, :]
        return radii.reshape(len(r_lo), -1), weights.reshape(len(r_lo), -1)

    def shell_quadrature(self, region="CD", ang_order=6, n_panels=5, nodes=6):
        """Offsets and weights integrating over C, D or C u D of one cell.

        Returns (offsets (M,3), weights (M,), radii (M,)); weights include
        the r^2 Jacobian.
        """
        dirs, w_ang = unit_sphere_quadrature(ang_order)
        scale = self.decomp.particle_scale
        rho = self.particle.boundary_radius(dirs) * scale
        r1, r2 = self.decomp.r_quarter, self.decomp.r_half
        pieces = []
        if region in ("C", "CD"):
            pieces.append(self._radial_nodes(rho, r1, n_panels, nodes))
        if region in ("D", "CD"):
            lo = np.full(len(dirs), r1)
            pieces.append(self._radial_nodes(lo, r2, max(2, n_panels // 2), nodes))
        radii = np.concatenate([p[0] for p in pieces], axis=1)
        wrad = np.concatenate([p[1] for p in pieces], axis=1)
        offsets = dirs[:, None, :] * radii[:, :, None]
        weights = w_ang[:, None] * wrad * radii**2
        return offsets.reshape(-1, 3), weights.reshape(-1), radii.reshape(-1)

    def particle_quadrature(self, ang_order=6, nodes=8):
        """Offsets and weights integrating over the particle region T."""
        dirs, w_ang = unit_sphere_quadrature(ang_order)
        scale = self.decomp.particle_scale
        rho = self.particle.boundary_radius(dirs) * scale
        x, w = np.polynomial.legendre.leggauss(nodes)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        radii = rho[:, None] * x[None, :]
        wrad = rho[:, None] * w[None, :]
        offsets = dirs[:, None, :] * radii[:, :, None]
        weights = w_ang[:, None] * wrad * radii**2
        return offsets.reshape(-1, 3), weights.reshape(-1)

    def fluid_quadrature(self, n_radial=16, ang_order=6):
        off, w, r = self.shell_quadrature(
            region="CD", ang_order=ang_order, n_panels=max(3, n_radial // 4), nodes=5
        )
        return off, w, r


def build_corrector(cell: CellSolution, epsilon: float, alpha: float, beta: float) -> CorrectorField:
    """Construct the corrector for lattice spacing eps and eta = eps^beta."""
    decomp = CellDecomposition(epsilon=epsilon, alpha=alpha, beta=beta)
    return CorrectorField(cell, decomp)


def eval_corrector(field: CorrectorField, x, want=("w", "grad", "q")):
    """Matrix w^eps(x) with columns w_k, gradient tensor, and pressure row.

    Returns (matrix (3,3) with M[i,k] = (w_k)_i, grad (3,3,3) with
    G[k,i,j] = d_j (w_k)_i, pressure (3,)).
    """
    W, G, Q, _ = field.eval(x, want=want)
    mat = W[0].T if W is not None else None
    return mat, (G[0] if G is not None else None), (Q[0] if Q is not None else None)


# ---------------------------------------------------------------------------
# lattice sums


def lattice_centers(epsilon: float) -> np.ndarray:
    """Particle centers eps*i covering the unit torus; requires eps = 1/n."""
    n = round(1.0 / epsilon)
    if abs(n * epsilon - 1.0) > 1e-12:
        raise GeometryError(f"epsilon = {epsilon} is not commensurate with the unit torus")
    g = epsilon * np.arange(n)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def _chunked_offsets(n_offsets, centers, max_points=2_000_000):
    chunk = max(1, min(n_offsets, max_points // max(len(centers), 1)))
    for start in range(0, n_offsets, chunk):
        yield start, min(start + chunk, n_offsets)


# ---------------------------------------------------------------------------
# weighted norms and pairings


def weighted_norm(field: CorrectorField, p: float, phi, ang_order=6, n_panels=6, nodes=6) -> float:
    """|| phi (Id - w^eps) ||_Lp over the unit torus (Frobenius pointwise).

    phi is a smooth scalar field exposing values(points); p must lie in
    (3/2, 3].  The far region K contributes exactly zero.
    """
    if not 1.5 < p <= 3.0:
        raise CorrectorError(f"Lp exponent p={p} unsupported; need 3/2 < p <= 3")
    centers = lattice_centers(field.decomp.epsilon)
    phi_fn = _values_fn(phi)

    off, w, _ = field.shell_quadrature(region="CD", ang_order=ang_order, n_panels=n_panels, nodes=nodes)
    W, _, _, _ = field.eval_offsets(off, want=("w",))
    dev = np.linalg.norm((_EYE3[None] - W).reshape(len(off), 9), axis=1)
    total = _accumulate_scalar_p(phi_fn, centers, off, w * dev**p, p)

    offT, wT = field.particle_quadrature(ang_order=ang_order)
    total += 3.0 ** (p / 2.0) * _accumulate_scalar_p(phi_fn, centers, offT, wT, p)
    return float(total ** (1.0 / p))


def _accumulate_scalar_p(phi_fn, centers, offsets, weights, p):
    total = 0.0
    for s, e in _chunked_offsets(len(offsets), centers):
        pts = (centers[None, :, :] + offsets[s:e, None, :]).reshape(-1, 3)
        vals = np.abs(phi_fn(pts)) ** p
        total += weights[s:e] @ vals.reshape(e - s, -1).sum(axis=1)
    return total


def hardy_pair(field: CorrectorField, phi, ang_order=6, n_panels=6, nodes=6):
    """(|| |grad w^eps|^(1/2) phi ||_L2, || |grad q^eps|^(1/2) phi ||_L2).

    phi must vanish on every particle (checked on boundary samples); the
    gradient magnitudes are Frobenius norms over all directions k.
    """
    centers = lattice_centers(field.decomp.epsilon)
    phi_fn = _values_fn(phi)
    _check_vanishes_on_particles(field, phi_fn, centers)

    off, w, _ = field.shell_quadrature(region="CD", ang_order=ang_order, n_panels=n_panels, nodes=nodes)
    _, G, _, Pg = field.eval_offsets(off, want=("grad", "qgrad"))
    gw = np.linalg.norm(G.reshape(len(off), 27), axis=1)
    gq = np.linalg.norm(Pg.reshape(len(off), 9), axis=1)
    tw = _accumulate_scalar_p(phi_fn, centers, off, w * gw, 2.0)
    tq = _accumulate_scalar_p(phi_fn, centers, off, w * gq, 2.0)
    return float(np.sqrt(tw)), float(np.sqrt(tq))


def _check_vanishes_on_particles(field, phi_fn, centers, tol=1e-10):
    dirs, _ = unit_sphere_quadrature(6)
    rho = field.particle.boundary_radius(dirs) * field.decomp.particle_scale
    boundary = rho[:, None] * dirs
    worst = 0.0
    for s, e in _chunked_offsets(len(boundary), centers):
        pts = (centers[None, :, :] + boundary[s:e, None, :]).reshape(-1, 3)
        worst = max(worst, float(np.abs(phi_fn(pts)).max()))
    if worst > tol:
        raise CorrectorError(
            f"test field does not vanish on the particles (max boundary value {worst:.2e})"
        )


def surface_average_identity(R: np.ndarray, order: int = 6) -> np.ndarray:
    """Average of (R_k + 3 (R_k.n) n)/2 over the unit sphere; equals R_k."""
    dirs, w = unit_sphere_quadrature(order)
    R = np.asarray(R, dtype=float)
    out = np.empty((3, 3))
    for k in range(3):
        Rk = R[:, k]
        integrand = 0.5 * (Rk[None, :] + 3.0 * (dirs @ Rk)[:, None] * dirs)
        out[:, k] = (w[:, None] * integrand).sum(axis=0) / (4 * np.pi)
    return out


def pair_M(field: CorrectorField, phi, psi, ang_order=8, n_panels=4, nodes=6) -> float:
    """Pairing <M_eps phi, psi> per unit volume of the torus.

    The surface part uses the exact cell-solution pseudo-traction on each
    sphere of radius eta/4; the annulus part is integrated by parts onto
    grad(phi_k psi).  phi and psi are smooth vector fields exposing
    values(points) -> (n, 3) and grads(points) -> (n, 3, 3) with
    grads[p, k, j] = d_j phi_k.
    """
    decomp = field.decomp
    centers = lattice_centers(decomp.epsilon)
    eps_a = decomp.particle_scale
    r1 = decomp.r_quarter

    # surface term: m_density[o, k, i] = eps^-alpha (q_k I - grad w_k)(y) n
    dirs, w_ang = unit_sphere_quadrature(ang_order)
    y = (r1 / eps_a) * dirs
    _, Gc, Qc = field.cell.eval(y)
    md = Qc[:, :, None] * dirs[:, None, :] - np.einsum("okij,oj->oki", Gc, dirs)
    md /= eps_a
    w_surf = w_ang * r1**2
    off_surf = r1 * dirs

    phi_vals = _values_fn(phi)
    psi_vals = _values_fn(psi)
    total = 0.0
    for s, e in _chunked_offsets(len(off_surf), centers):
        pts = (centers[None, :, :] + off_surf[s:e, None, :]).reshape(-1, 3)
        f = phi_vals(pts).reshape(e - s, -1, 3)
        g = psi_vals(pts).reshape(e - s, -1, 3)
        contrib = np.einsum("oki,ock,oci->oc", md[s:e], f, g)
        total += w_surf[s:e] @ contrib.sum(axis=1)

    # volume term: - int_D (q^eps I - grad w^eps) : grad(phi_k psi)
    offD, wD, _ = field.shell_quadrature(region="D", ang_order=ang_order, n_panels=n_panels, nodes=nodes)
    _, G, Q, _ = field.eval_offsets(offD, want=("grad", "q"))
    T = Q[:, :, None, None] * _EYE3[None, None, :, :] - G  # [o, k, i, j]
    phi_grad = _grads_fn(phi)
    psi_grad = _grads_fn(psi)
    for s, e in _chunked_offsets(len(offD), centers):
        pts = (centers[None, :, :] + offD[s:e, None, :]).reshape(-1, 3)
        nc = e - s
        f = phi_vals(pts).reshape(nc, -1, 3)
        fg = phi_grad(pts).reshape(nc, -1, 3, 3)
        g = psi_vals(pts).reshape(nc, -1, 3)
        gg = psi_grad(pts).reshape(nc, -1, 3, 3)
        # grad(phi_k psi_i) = (d_j phi_k) psi_i + phi_k (d_j psi_i)
        contrib = np.einsum("okij,ockj,oci->oc", T[s:e], fg, g)
        contrib += np.einsum("okij,ock,ocij->oc", T[s:e], f, gg)
        total -= wD[s:e] @ contrib.sum(axis=1)

    return float(decomp.epsilon ** (3 - decomp.alpha) * total)


def _values_fn(obj):
    if hasattr(obj, "values_at"):
        return obj.values_at
    if callable(obj):
        return obj
    raise TypeError(f"{obj!r} is not a field (needs values_at or __call__)")


def _grads_fn(obj):
    if hasattr(obj, "grads_at"):
        return obj.grads_at
    raise TypeError(f"{obj!r} does not expose analytic gradients (grads_at)")
