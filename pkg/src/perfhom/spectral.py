"""Periodic-box field arithmetic: transforms, derivatives, Leray projection.

The unit torus stands in for whole space at desk scale; fields live on an
N^3 grid (N a power of two) with real-to-complex transforms along the last
axis.  Nonlinear terms are dealiased by the 2/3 rule: modes with any integer
wavenumber above floor((N-1)/3) are dropped, which keeps quadratic products
of retained modes alias-free on the grid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _fft
from .errors import GeometryError


@dataclass(frozen=True)
class PeriodicGrid:
    """N points per dimension on a periodic box of side length."""

    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise GeometryError(f"grid size must be a power of two >= 8, got {self.n}")
        if self.length <= 0:
            raise GeometryError("box length must be positive")

    @property
    def nh(self) -> int:
        return self.n // 2 + 1

    @property
    def spacing(self) -> float:
        return self.length / self.n

    def axes(self):
        x = self.length * np.arange(self.n) / self.n
        return np.meshgrid(x, x, x, indexing="ij")


@lru_cache(maxsize=32)
def _wavenumbers(n: int, length: float):
    """(K, K2, K2inv, dealias mask, hermitian weights) for an n^3 rfft layout.

    K has the Nyquist wavenumber zeroed (odd derivatives have no paired
    mode); K2 keeps the true |k|^2 for Laplacians and norms.
    """
    ki = np.fft.fftfreq(n, 1.0 / n)  # integer frequencies, fft order
    k = 2 * np.pi / length * ki
    kz = 2 * np.pi / length * np.arange(n // 2 + 1)
    K = np.zeros((3, n, n, n // 2 + 1))
    K[0] = k[:, None, None]
    K[1] = k[None, :, None]
    K[2] = kz[None, None, :]
    K2 = (K**2).sum(axis=0)
    K[0, n // 2, :, :] = 0.0
    K[1, :, n // 2, :] = 0.0
    K[2, :, :, -1] = 0.0
    K2inv = 1.0 / np.where(K2 == 0.0, 1.0, K2)
    kmax = (n - 1) // 3
    keep = np.abs(ki) <= kmax
    mask = keep[:, None, None] & keep[None, :, None] & keep[None, None, : n // 2 + 1]
    herm = np.full((n, n, n // 2 + 1), 2.0)
    herm[:, :, 0] = 1.0
    herm[:, :, -1] = 1.0
    return K, K2, K2inv, mask.astype(float), herm


def grid_tools(grid: PeriodicGrid):
    return _wavenumbers(grid.n, grid.length)


class ScalarField:
    """Scalar field on a periodic grid with a lazily cached spectrum."""

    def __init__(self, grid: PeriodicGrid, values=None, spectrum=None):
        self.grid = grid
        self._values = values
        self._hat = spectrum
        if values is None and spectrum is None:
            self._values = np.zeros((grid.n,) * 3)

    @property
    def values(self):
        if self._values is None:
            self._values = _fft.irfftn(self._hat, self.grid.n)
        return self._values

    @property
    def hat(self):
        if self._hat is None:
            self._hat = _fft.rfftn(self._values)
        return self._hat


class VectorField:
    """Three-component field; values shape (3, N, N, N), spectrum (3, N, N, N/2+1)."""

    def __init__(self, grid: PeriodicGrid, values=None, spectrum=None):
        self.grid = grid
        self._values = values
        self._hat = spectrum
        if values is None and spectrum is None:
            self._values = np.zeros((3,) + (grid.n,) * 3)

    @classmethod
    def from_values(cls, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (3, grid.n, grid.n, grid.n):
            raise GeometryError(f"vector field values must have shape (3, N, N, N)")
        return cls(grid, values=values)

    @classmethod
    def from_hat(cls, grid, spectrum):
        return cls(grid, spectrum=np.asarray(spectrum, dtype=complex))

    @property
    def values(self):
        if self._values is None:
            self._values = _fft.irfftn(self._hat, self.grid.n)
        return self._values

    @property
    def hat(self):
        if self._hat is None:
            self._hat = _fft.rfftn(self._values)
        return self._hat

    def divergence_residual(self) -> float:
        """Spectral divergence norm relative to the field norm."""
        K, _, _, _, herm = grid_tools(self.grid)
        div = 1j * (K * self.hat).sum(axis=0)
        num = np.sqrt((herm * np.abs(div) ** 2).sum())
        den = np.sqrt((herm * np.abs(self.hat) ** 2).sum())
        return float(num / max(den, 1e-300))

    def copy(self):
        return VectorField(
            self.grid,
            values=None if self._values is None else self._values.copy(),
            spectrum=None if self._hat is None else self._hat.copy(),
        )

    def __add__(self, other):
        return VectorField(self.grid, values=self.values + other.values)

    def __sub__(self, other):
        return VectorField(self.grid, values=self.values - other.values)

    def __mul__(self, c):
        return VectorField(self.grid, values=self.values * float(c))

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# core operations


def project_hat(vhat: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Leray projector Id - k k^T/|k|^2 mode by mode; mean mode untouched."""
    K, _, K2inv, _, _ = grid_tools(grid)
    kd = (K * vhat).sum(axis=0) * K2inv
    return vhat - K * kd


def leray_project(v: VectorField) -> VectorField:
    return VectorField.from_hat(v.grid, project_hat(v.hat, v.grid))


def dealias_hat(vhat: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    _, _, _, mask, _ = grid_tools(grid)
    return vhat * mask


def advect(u: VectorField) -> VectorField:
    """Dealiased pseudo-spectral advection (u . grad) u for solenoidal u.

    Computed in conservative form d_j(u_i u_j), which coincides with the
    convective form for divergence-free fields and pairs skew-symmetrically
    after projection; inputs and output are truncated by the 2/3 rule.
    """
    grid = u.grid
    K, _, _, mask, _ = grid_tools(grid)
    uh = u.hat * mask
    ur = _fft.irfftn(uh, grid.n)
    iu = (0, 0, 0, 1, 1, 2)
    ju = (0, 1, 2, 1, 2, 2)
    T = np.empty((6,) + ur.shape[1:])
    for a in range(6):
        np.multiply(ur[iu[a]], ur[ju[a]], out=T[a])
    Th = _fft.rfftn(T)
    pair = ((0, 1, 2), (1, 3, 4), (2, 4, 5))
    out = np.empty_like(uh)
    for i in range(3):
        out[i] = K[0] * Th[pair[i][0]] + K[1] * Th[pair[i][1]] + K[2] * Th[pair[i][2]]
    out *= 1j
    out *= mask
    return VectorField.from_hat(grid, out)


def gradient(s: ScalarField) -> VectorField:
    K, _, _, _, _ = grid_tools(s.grid)
    return VectorField.from_hat(s.grid, 1j * K * s.hat[None])


def divergence(v: VectorField) -> ScalarField:
    K, _, _, _, _ = grid_tools(v.grid)
    return ScalarField(v.grid, spectrum=1j * (K * v.hat).sum(axis=0))


def laplacian(v: VectorField) -> VectorField:
    _, K2, _, _, _ = grid_tools(v.grid)
    return VectorField.from_hat(v.grid, -K2[None] * v.hat)


def energy(u: VectorField) -> float:
    """(1/2) ||u||_L2^2 over the box (exact for band-limited fields)."""
    vol = u.grid.length**3
    return 0.5 * vol * float((u.values**2).sum()) / u.grid.n**3


def spectral_energy(u: VectorField) -> float:
    """Parseval route to (1/2)||u||^2, for cross-checking transforms."""
    _, _, _, _, herm = grid_tools(u.grid)
    vol = u.grid.length**3
    return 0.5 * vol * float((herm * np.abs(u.hat) ** 2).sum()) / u.grid.n**6


def grad_norm2(u: VectorField) -> float:
    """||grad u||_L2^2 via Parseval."""
    _, K2, _, _, herm = grid_tools(u.grid)
    vol = u.grid.length**3
    return vol * float((herm * K2[None] * np.abs(u.hat) ** 2).sum()) / u.grid.n**6


def random_divfree_field(grid: PeriodicGrid, kmax_band: int, seed: int, rms: float = 0.2) -> VectorField:
    """Band-limited random solenoidal field with prescribed rms amplitude."""
    rng = np.random.default_rng(seed)
    vals = np.zeros((3, grid.n, grid.n, grid.n))
    x, y, z = grid.axes()
    two_pi = 2 * np.pi / grid.length
    for _ in range(12):
        k = rng.integers(-kmax_band, kmax_band + 1, size=3)
        if not k.any():
            continue
        a = rng.normal(size=3)
        a -= a @ k * k / (k @ k)  # keep each mode solenoidal
        phase = rng.uniform(0, 2 * np.pi)
        c = np.cos(two_pi * (k[0] * x + k[1] * y + k[2] * z) + phase)
        vals += a[:, None, None, None] * c[None]
    f = VectorField.from_values(grid, vals)
    fh = dealias_hat(project_hat(f.hat, grid), grid)
    f = VectorField.from_hat(grid, fh)
    scale = rms / np.sqrt(2 * energy(f) / grid.length**3)
    return VectorField.from_hat(grid, fh * scale)


# ---------------------------------------------------------------------------
# closed-form trigonometric fields (shared by solvers and corrector studies)


class TrigScalarField:
    """Finite sum of cos/sin modes: sum_a amp_a trig(2 pi k_a . x + phase)."""

    def __init__(self, modes):
        # modes: iterable of (amplitude, (kx, ky, kz), 'cos' | 'sin')
        self.modes = [(float(a), np.asarray(k, dtype=float), ph) for a, k, ph in modes]

    def values_at(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(len(pts))
        for a, k, ph in self.modes:
            arg = 2 * np.pi * (pts @ k)
            out += a * (np.cos(arg) if ph == "cos" else np.sin(arg))
        return out

    def grads_at(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros((len(pts), 3))
        for a, k, ph in self.modes:
            arg = 2 * np.pi * (pts @ k)
            d = -np.sin(arg) if ph == "cos" else np.cos(arg)
            out += (2 * np.pi * a) * d[:, None] * k[None, :]
        return out

    def __call__(self, pts):
        return self.values_at(pts)

    def on_grid(self, grid: PeriodicGrid) -> ScalarField:
        x, y, z = grid.axes()
        pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
        return ScalarField(grid, values=self.values_at(pts).reshape((grid.n,) * 3))


class TrigVectorField:
    """Vector counterpart; amplitudes are 3-vectors."""

    def __init__(self, modes):
        self.modes = [
            (np.asarray(a, dtype=float), np.asarray(k, dtype=float), ph)
            for a, k, ph in modes
        ]

    def values_at(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros((len(pts), 3))
        for a, k, ph in self.modes:
            arg = 2 * np.pi * (pts @ k)
            t = np.cos(arg) if ph == "cos" else np.sin(arg)
            out += t[:, None] * a[None, :]
        return out

    def grads_at(self, pts):
        """G[p, k, j] = d_j of component k."""
        pts = np.asarray(pts, dtype=float)
        out = np.zeros((len(pts), 3, 3))
        for a, k, ph in self.modes:
            arg = 2 * np.pi * (pts @ k)
            d = -np.sin(arg) if ph == "cos" else np.cos(arg)
            out += 2 * np.pi * d[:, None, None] * a[None, :, None] * k[None, None, :]
        return out

    def __call__(self, pts):
        return self.values_at(pts)

    def divergence_residual(self) -> float:
        res = 0.0
        for a, k, _ in self.modes:
            res = max(res, abs(2 * np.pi * (a @ k)))
        return res

    def on_grid(self, grid: PeriodicGrid) -> VectorField:
        x, y, z = grid.axes()
        pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
        vals = self.values_at(pts).T.reshape((3,) + (grid.n,) * 3)
        return VectorField.from_values(grid, vals)


def shear_field(amplitude: float = 1.0, component: int = 0, wave_axis: int = 1, k: int = 1) -> TrigVectorField:
    """u = amplitude * sin(2 pi k x_waveaxis) e_component, a steady Euler state."""
    a = np.zeros(3)
    a[component] = amplitude
    kv = np.zeros(3)
    kv[wave_axis] = k
    return TrigVectorField([(a, kv, "sin")])


# ---------------------------------------------------------------------------
# binary snapshots

_MAGIC = b"PHFLD1"


def write_snapshot(path, field):
    """Write a field snapshot: magic, u32 (N,N,N), u8 components, f64 data."""
    values = field.values
    comps = 1 if values.ndim == 3 else values.shape[0]
    n = field.grid.n
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIB", n, n, n, comps))
        data = values if values.ndim == 4 else values[None]
        for c in range(comps):
            fh.write(np.ascontiguousarray(data[c], dtype="<f8").tobytes())


def read_snapshot(path, length: float = 1.0):
    with open(path, "rb") as fh:
        if fh.read(6) != _MAGIC:
            raise GeometryError(f"{path} is not a field snapshot")
        nx, ny, nz, comps = struct.unpack("<IIIB", fh.read(13))
        if not nx == ny == nz:
            raise GeometryError("snapshot grid must be cubic")
        grid = PeriodicGrid(n=int(nx), length=length)
        data = np.empty((comps, nx, ny, nz))
        for c in range(comps):
            raw = fh.read(nx * ny * nz * 8)
            data[c] = np.frombuffer(raw, dtype="<f8").reshape(nx, ny, nz)
    if comps == 1:
        return ScalarField(grid, values=data[0])
    return VectorField.from_values(grid, data)
