"""Real solid harmonics and divergence-free Stokes modes ("Lamb modes").

Everything here is built from homogeneous harmonic polynomials with exact
rational coefficients, so velocities, velocity gradients and pressures of
every basis mode come out in closed form.  Three families per spherical
harmonic degree l >= 1:

* potential:  u = grad(H),            p = 0
* toroidal:   u = grad(H) x r,        p = 0
* pressure:   u = a r^2 grad(H) + b r H,  p = H

where H is a solid harmonic of degree l (interior, growing like r^l) or of
degree -(l+1) (exterior, decaying like r^-(l+1)) and (a, b) are the unique
constants making u divergence free with -lap(u) + grad(p) = 0.  The exterior
pressure mode at l = 1 is the Stokeslet; together with the l = 1 potential
mode (a potential dipole) it spans the classical translating-sphere solution.

Degree-1 fields with the sphere's symmetry are handled by a fast radial
profile evaluator (`Deg1Stokes`), used by the sphere cell solution and the
corrector's annulus matching.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

_TINY = 1e-300


# ---------------------------------------------------------------------------
# homogeneous polynomials


class HomogPoly:
    """Homogeneous polynomial in (x, y, z) as monomial exponents + coefficients."""

    __slots__ = ("exps", "coeffs")

    def __init__(self, exps, coeffs):
        self.exps = np.asarray(exps, dtype=np.int64).reshape(-1, 3)
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(-1)

    @classmethod
    def from_dict(cls, d):
        items = sorted((k, v) for k, v in d.items() if v != 0)
        if not items:
            return cls(np.zeros((1, 3)), np.zeros(1))
        return cls([k for k, _ in items], [float(v) for _, v in items])

    @property
    def degree(self):
        return int(self.exps.sum(axis=1).max())

    def eval(self, pts):
        pts = np.asarray(pts, dtype=float)
        # (n, m): product over coordinates of pts**exponent
        mon = pts[:, 0][:, None] ** self.exps[None, :, 0]
        mon *= pts[:, 1][:, None] ** self.exps[None, :, 1]
        mon *= pts[:, 2][:, None] ** self.exps[None, :, 2]
        return mon @ self.coeffs

    def diff(self, axis):
        keep = self.exps[:, axis] > 0
        if not keep.any():
            return HomogPoly(np.zeros((1, 3)), np.zeros(1))
        exps = self.exps[keep].copy()
        coeffs = self.coeffs[keep] * exps[:, axis]
        exps[:, axis] -= 1
        return HomogPoly(exps, coeffs)


def legendre_coeffs(l: int):
    """Coefficients of the Legendre polynomial P_l, exact, indexed by power."""
    coeffs = [Fraction(0)] * (l + 1)
    for k in range(l // 2 + 1):
        c = Fraction((-1) ** k * math.comb(l, k) * math.comb(2 * l - 2 * k, l), 2**l)
        coeffs[l - 2 * k] = c
    return coeffs


def real_solid_harmonic(l: int, m: int) -> HomogPoly:
    """The real solid harmonic r^l Y_lm as a polynomial, orthonormal on S^2.

    m >= 0 selects the cos(m phi) harmonic, m < 0 the sin(|m| phi) one
    (no Condon-Shortley phase).
    """
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid spherical harmonic indices ({l}, {m})")
    mm = abs(m)
    q = legendre_coeffs(l)
    for _ in range(mm):  # d^mm/dc^mm of P_l
        q = [q[j + 1] * (j + 1) for j in range(len(q) - 1)]

    # sector polynomial Re/Im (x + i y)^mm
    sector = {}
    for t in range(mm + 1):
        c = Fraction(math.comb(mm, t))
        if m >= 0 and t % 2 == 0:
            sector[(mm - t, t, 0)] = c * (-1) ** (t // 2)
        elif m < 0 and t % 2 == 1:
            sector[(mm - t, t, 0)] = c * (-1) ** ((t - 1) // 2)

    # homogenize Q(c): c^j -> z^j (x^2+y^2+z^2)^((l-mm-j)/2), then multiply
    poly = {}
    for j, qj in enumerate(q):
        if qj == 0:
            continue
        p = l - mm - j
        assert p % 2 == 0 and p >= 0
        half = p // 2
        for a in range(half + 1):
            for b in range(half - a + 1):
                c_tri = Fraction(math.factorial(half), math.factorial(a) * math.factorial(b) * math.factorial(half - a - b))
                mono = (2 * a, 2 * b, j + 2 * (half - a - b))
                for (sx, sy, sz), sc in sector.items():
                    key = (mono[0] + sx, mono[1] + sy, mono[2] + sz)
                    poly[key] = poly.get(key, Fraction(0)) + qj * c_tri * sc

    norm = math.sqrt(
        (2 * l + 1) / (4 * math.pi) * math.factorial(l - mm) / math.factorial(l + mm)
    )
    if m != 0:
        norm *= math.sqrt(2.0)
    return HomogPoly.from_dict({k: float(v) * norm for k, v in poly.items()})


# ---------------------------------------------------------------------------
# Lamb modes


def _pressure_constants(n: int):
    """(a, b) with u = a r^2 grad(p_n) + b r p_n divergence free and lap(u) = grad(p_n)."""
    return (
        Fraction(n + 3, 2 * (n + 1) * (2 * n + 3)),
        Fraction(-n, (n + 1) * (2 * n + 3)),
    )


class LambMode:
    """One smooth divergence-free solution of the homogeneous Stokes equations.

    Parameters
    ----------
    l, m : spherical harmonic indices (l >= 1)
    family : 'pressure' | 'potential' | 'toroidal'
    kind : 'interior' (regular at 0) | 'exterior' (decaying at infinity)
    scale : overall multiplier applied to velocity and pressure
    """

    def __init__(self, l, m, family, kind, scale=1.0):
        if l < 1:
            raise ValueError("Lamb modes start at degree 1")
        if family not in ("pressure", "potential", "toroidal"):
            raise ValueError(f"unknown family {family!r}")
        if kind not in ("interior", "exterior"):
            raise ValueError(f"unknown kind {kind!r}")
        self.l, self.m, self.family, self.kind, self.scale = l, m, family, kind, scale
        P = real_solid_harmonic(l, m)
        self._P = P
        self._dP = [P.diff(i) for i in range(3)]
        self._d2P = [[self._dP[i].diff(j) for j in range(3)] for i in range(3)]
        n = l if kind == "interior" else -(l + 1)
        self._n = n
        if family == "pressure":
            a, b = _pressure_constants(n)
            self._a, self._b = float(a), float(b)

    # -- solid harmonic H (= P for interior, P / r^(2l+1) for exterior) -----

    def _H(self, pts, r2):
        P = self._P.eval(pts)
        if self.kind == "interior":
            return P
        return P * r2 ** (-(2 * self.l + 1) / 2)

    def _gradH(self, pts, r2):
        dP = np.stack([d.eval(pts) for d in self._dP], axis=1)  # (n,3)
        if self.kind == "interior":
            return dP
        s = 2 * self.l + 1
        P = self._P.eval(pts)
        rs = r2 ** (-s / 2)
        return dP * rs[:, None] - s * P[:, None] * pts * (rs / r2)[:, None]

    def _hessH(self, pts, r2):
        d2 = np.empty((len(pts), 3, 3))
        for i in range(3):
            for j in range(i, 3):
                d2[:, i, j] = d2[:, j, i] = self._d2P[i][j].eval(pts)
        if self.kind == "interior":
            return d2
        s = 2 * self.l + 1
        P = self._P.eval(pts)
        dP = np.stack([d.eval(pts) for d in self._dP], axis=1)
        rs = r2 ** (-s / 2)
        rs2 = rs / r2
        rs4 = rs2 / r2
        out = d2 * rs[:, None, None]
        cross = dP[:, :, None] * pts[:, None, :] + dP[:, None, :] * pts[:, :, None]
        out -= s * rs2[:, None, None] * (cross + P[:, None, None] * np.eye(3))
        out += s * (s + 2) * (P * rs4)[:, None, None] * pts[:, :, None] * pts[:, None, :]
        return out

    # -- public evaluation ---------------------------------------------------

    def velocity(self, pts):
        pts = np.asarray(pts, dtype=float)
        r2 = np.maximum((pts**2).sum(axis=1), _TINY)
        gH = self._gradH(pts, r2)
        if self.family == "potential":
            u = gH
        elif self.family == "toroidal":
            u = np.cross(gH, pts)
        else:
            H = self._H(pts, r2)
            u = self._a * r2[:, None] * gH + self._b * pts * H[:, None]
        return self.scale * u

    def velocity_grad(self, pts):
        """Gradient G[p, i, j] = d_j u_i."""
        pts = np.asarray(pts, dtype=float)
        r2 = np.maximum((pts**2).sum(axis=1), _TINY)
        hH = self._hessH(pts, r2)
        if self.family == "potential":
            g = hH
        elif self.family == "toroidal":
            gH = self._gradH(pts, r2)
            # u_i = eps_ijk H_j x_k ; d_m u_i = eps_ijk (H_jm x_k + H_j delta_km)
            g = np.empty((len(pts), 3, 3))
            eps = _LEVI_CIVITA
            g = np.einsum("ijk,pjm,pk->pim", eps, hH, pts) + np.einsum(
                "ijm,pj->pim", eps, gH
            )
        else:
            H = self._H(pts, r2)
            gH = self._gradH(pts, r2)
            g = self._a * (
                2.0 * pts[:, None, :] * gH[:, :, None] + r2[:, None, None] * hH
            )
            g += self._b * (
                np.eye(3)[None] * H[:, None, None] + pts[:, :, None] * gH[:, None, :]
            )
        return self.scale * g

    def pressure(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.family != "pressure":
            return np.zeros(len(pts))
        r2 = np.maximum((pts**2).sum(axis=1), _TINY)
        return self.scale * self._H(pts, r2)

    def pressure_grad(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.family != "pressure":
            return np.zeros((len(pts), 3))
        r2 = np.maximum((pts**2).sum(axis=1), _TINY)
        return self.scale * self._gradH(pts, r2)

    def stokeslet_vector(self):
        """Net pseudo-traction force of the mode over any enclosing sphere.

        Nonzero only for the exterior l = 1 pressure family: the force is
        4*pi*gamma where the mode's pressure is (gamma . x)/r^3.
        """
        F = np.zeros(3)
        if self.kind == "exterior" and self.family == "pressure" and self.l == 1:
            for e, c in zip(self._P.exps, self._P.coeffs):
                F[int(np.argmax(e))] = 4 * math.pi * c * self.scale
        return F


_LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI_CIVITA[_i, _j, _k] = 1.0
    _LEVI_CIVITA[_i, _k, _j] = -1.0


def exterior_basis(lmax: int, r_ref: float = 1.0):
    """All exterior Lamb modes with 1 <= l <= lmax, scaled to O(1) at r_ref."""
    return _basis(lmax, "exterior", r_ref)


def interior_basis(lmax: int, r_ref: float = 1.0):
    return _basis(lmax, "interior", r_ref)


def _basis(lmax, kind, r_ref):
    rng = np.random.default_rng(1234)
    dirs = rng.normal(size=(24, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = r_ref * dirs
    modes = []
    for l in range(1, lmax + 1):
        for m in range(-l, l + 1):
            for family in ("pressure", "potential", "toroidal"):
                mode = LambMode(l, m, family, kind)
                mag = np.abs(mode.velocity(pts)).max()
                mode.scale = 1.0 / max(mag, 1e-30)
                modes.append(mode)
    return modes


# ---------------------------------------------------------------------------
# degree-1 radial-profile fields (sphere symmetry)


class Deg1Stokes:
    """Stokes field of the form u_k = A(r) e_k + B(r) (x.e_k) x / r^2, all k.

    Spanned by four canonical modes with coefficients (stokeslet, potential
    dipole, constant, interior quadratic):

        A(r) = c_st/(2r) + c_pd/r^3 + c_c + c_q r^2/5
        B(r) = c_st/(2r) - 3 c_pd/r^3     - c_q r^2/10
        C(r) = c_st/r^2               + c_q r        (pressure q_k = C(r) x_k/r)

    This covers the exact exterior solution for a translating sphere
    (c_st = 3 r0/2, c_pd = r0^3/4) and the annulus matching problem of the
    corrector.  Evaluation is vectorized over points and returns all three
    directions k at once.
    """

    def __init__(self, c_st=0.0, c_pd=0.0, c_c=0.0, c_q=0.0):
        self.c = np.array([float(c_st), float(c_pd), float(c_c), float(c_q)])

    @classmethod
    def translating_sphere(cls, r0: float):
        """Exterior solution with u = e_k on the sphere |x| = r0."""
        return cls(c_st=1.5 * r0, c_pd=0.25 * r0**3)

    def profiles(self, r):
        c_st, c_pd, c_c, c_q = self.c
        A = c_st / (2 * r) + c_pd / r**3 + c_c + c_q * r**2 / 5
        B = c_st / (2 * r) - 3 * c_pd / r**3 - c_q * r**2 / 10
        C = c_st / r**2 + c_q * r
        return A, B, C

    def profiles_d(self, r):
        c_st, c_pd, c_c, c_q = self.c
        dA = -c_st / (2 * r**2) - 3 * c_pd / r**4 + 2 * c_q * r / 5
        dB = -c_st / (2 * r**2) + 9 * c_pd / r**4 - c_q * r / 5
        dC = -2 * c_st / r**3 + c_q
        return dA, dB, dC

    @staticmethod
    def _split(pts):
        pts = np.asarray(pts, dtype=float)
        r = np.maximum(np.linalg.norm(pts, axis=1), _TINY)
        return pts, r, pts / r[:, None]

    def velocity(self, pts):
        """W[p, k, i] = component i of the direction-k solution."""
        pts, r, n = self._split(pts)
        A, B, _ = self.profiles(r)
        W = A[:, None, None] * np.eye(3)[None]
        W += B[:, None, None] * n[:, :, None] * n[:, None, :]
        return W

    def velocity_grad(self, pts):
        """G[p, k, i, j] = d_j of component i of the direction-k solution."""
        pts, r, n = self._split(pts)
        A, B, _ = self.profiles(r)
        dA, dB, _ = self.profiles_d(r)
        eye = np.eye(3)
        G = dA[:, None, None, None] * eye[None, :, :, None] * n[:, None, None, :]
        G += dB[:, None, None, None] * n[:, :, None, None] * n[:, None, :, None] * n[:, None, None, :]
        Br = (B / r)[:, None, None, None]
        G += Br * eye[None, None, :, :] * n[:, :, None, None]
        G += Br * eye[None, :, None, :] * n[:, None, :, None]
        G -= 2 * Br * n[:, :, None, None] * n[:, None, :, None] * n[:, None, None, :]
        return G

    def pressure(self, pts):
        """Q[p, k] = pressure of the direction-k solution."""
        pts, r, n = self._split(pts)
        _, _, C = self.profiles(r)
        return C[:, None] * n

    def pressure_grad(self, pts):
        """P[p, k, j] = d_j of the direction-k pressure."""
        pts, r, n = self._split(pts)
        _, _, C = self.profiles(r)
        _, _, dC = self.profiles_d(r)
        P = dC[:, None, None] * n[:, :, None] * n[:, None, :]
        P += (C / r)[:, None, None] * (np.eye(3)[None] - n[:, :, None] * n[:, None, :])
        return P

    def dirichlet_gram(self, other: "Deg1Stokes", a: float) -> float:
        """Exact integral of grad(u):grad(v) over the exterior r > a (per direction).

        Both fields must decay at infinity (no constant/quadratic part).
        Uses integration by parts onto the sphere r = a.
        """
        if abs(self.c[2]) + abs(self.c[3]) + abs(other.c[2]) + abs(other.c[3]) > 0:
            raise ValueError("Dirichlet integral over the exterior needs decaying fields")
        Au, Bu, _ = self.profiles(np.array([a]))
        Av, Bv, Cv = other.profiles(np.array([a]))
        dAv, dBv, _ = other.profiles_d(np.array([a]))
        val = Cv[0] * (Au[0] + Bu[0]) / 3.0
        val -= Au[0] * dAv[0]
        val -= (Au[0] * dBv[0] + Bu[0] * dAv[0] + Bu[0] * dBv[0]) / 3.0
        return 4 * math.pi * a**2 * val
