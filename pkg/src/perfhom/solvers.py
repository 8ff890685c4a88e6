"""Time integration of the macroscopic systems and the algebraic Darcy solve.

Systems (all on the periodic box, velocities kept solenoidal by Leray
projection):

* euler:          du/dt = P(f - u.grad u)
* euler-brinkman: du/dt = P(f - u.grad u - F u),   F = mu0 * R
* ns-brinkman:    du/dt = P(f - u.grad u) + nu lap u - lam P(R u)
* darcy:          R u + grad p = f, div u = 0      (algebraic, per time slice)

ns-brinkman treats the stiff linear part nu*lap - lam*P R by an integrating
factor: the per-mode propagator is the exact matrix exponential on the
divergence-free subspace, so the scheme is unconditionally stable there and
exact for linear dynamics.  The advective CFL is still enforced.

The stepping loop works on "packed" spectra: only the modes kept by the 2/3
dealiasing rule are stored and updated, which keeps the per-step cost
dominated by the two transforms of the nonlinear term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import Callable, Optional

import numpy as np

from . import _fft
from .errors import CFLError, ParameterDomainError
from .spectral import (
    PeriodicGrid,
    ScalarField,
    TrigVectorField,
    VectorField,
    grid_tools,
    project_hat,
)


@dataclass
class SolverConfig:
    grid: PeriodicGrid
    dt: float
    t_end: float
    integrator: str = "rk4"  # 'rk4' | 'rk4-if'
    R: np.ndarray = dfield(default_factory=lambda: np.eye(3))
    nu: float = 0.0
    lam: float = 0.0
    cfl_limit: float = 0.5

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise ParameterDomainError("need dt > 0 and t_end >= 0")
        if self.integrator not in ("rk4", "rk4-if"):
            raise ParameterDomainError(f"unknown integrator {self.integrator!r}")
        if self.nu < 0 or self.lam < 0:
            raise ParameterDomainError("viscosity and friction scales must be >= 0")
        self.R = np.asarray(self.R, dtype=float)


@dataclass
class TrajectoryReport:
    """Per-step energy diagnostics of one run.

    energies[j] = E(t_j) = (1/2)||u(t_j)||^2; the dissipation and work
    columns are instantaneous powers, integrated by Simpson/trapezoid in
    energy_balance_residual.
    """

    times: np.ndarray
    energies: np.ndarray
    viscous: np.ndarray  # nu ||grad u||^2
    friction: np.ndarray  # lam <R u, u>
    work: np.ndarray  # <f, u>

    def energy_balance_residual(self) -> float:
        """|E(T) - E(0) + int (viscous + friction - work)| / max(E)."""
        net = self.viscous + self.friction - self.work
        total = _time_integral(self.times, net)
        return float(
            abs(self.energies[-1] - self.energies[0] + total)
            / max(self.energies.max(), 1e-300)
        )

    def to_csv(self) -> str:
        lines = ["time,energy,viscous_dissipation,friction_dissipation,work"]
        for row in zip(self.times, self.energies, self.viscous, self.friction, self.work):
            lines.append(",".join(f"{v:.16e}" for v in row))
        return "\n".join(lines) + "\n"


def _time_integral(t, y):
    """Composite Simpson where possible, trapezoid on a leftover interval."""
    n = len(t) - 1
    if n <= 0:
        return 0.0
    h = t[1] - t[0]
    total = 0.0
    m = n if n % 2 == 0 else n - 1
    if m >= 2:
        ys = y[: m + 1]
        total += h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-1:2].sum())
    if m < n:
        total += 0.5 * h * (y[-2] + y[-1])
    return total


@dataclass
class Trajectory:
    times: np.ndarray
    report: TrajectoryReport
    final: VectorField
    samples: list = dfield(default_factory=list)  # (t, VectorField) pairs


_PROD_I = (0, 0, 0, 1, 1, 2)
_PROD_J = (0, 1, 2, 1, 2, 2)


class _TorchAdvection:
    """Scatter -> irfft -> u_i u_j -> rfft -> gather, torch-resident."""

    def __init__(self, n, idx):
        import torch

        self._torch = torch
        self.n = n
        self.idx = torch.from_numpy(idx)
        self.buf = torch.zeros(3, n * n * (n // 2 + 1), dtype=torch.complex128)
        self.T = torch.empty(6, n, n, n, dtype=torch.float64)

    def __call__(self, packed):
        torch, n = self._torch, self.n
        self.buf.zero_()
        self.buf.index_copy_(1, self.idx, torch.from_numpy(packed))
        ur = torch.fft.irfftn(
            self.buf.view(3, n, n, n // 2 + 1), s=(n, n, n), dim=(-3, -2, -1)
        )
        umax = float(ur.abs().max())
        for a in range(6):
            torch.mul(ur[_PROD_I[a]], ur[_PROD_J[a]], out=self.T[a])
        Th = torch.fft.rfftn(self.T, dim=(-3, -2, -1)).view(6, -1)
        return Th.index_select(1, self.idx).numpy(), umax


class _NumpyAdvection:
    """Same contract on the scipy FFT fallback."""

    def __init__(self, n, idx):
        self.n = n
        self.idx = idx
        self.buf = np.zeros((3, n * n * (n // 2 + 1)), dtype=complex)
        self.T = np.empty((6, n, n, n))

    def __call__(self, packed):
        n = self.n
        self.buf[:] = 0.0
        self.buf[:, self.idx] = packed
        ur = _fft.irfftn(self.buf.reshape(3, n, n, n // 2 + 1), n)
        umax = float(np.abs(ur).max())
        for a in range(6):
            np.multiply(ur[_PROD_I[a]], ur[_PROD_J[a]], out=self.T[a])
        Th = _fft.rfftn(self.T).reshape(6, -1)
        return Th[:, self.idx], umax


class Forcing:
    """Closed-form forcing: solenoidal part of a trig field times an envelope."""

    def __init__(self, field: Optional[TrigVectorField], envelope: Optional[Callable[[float], float]] = None):
        self.field = field
        self.envelope = envelope or (lambda t: 1.0)
        self._cache = {}

    def packed(self, stepper: "Stepper", t: float):
        if self.field is None:
            return None
        key = (stepper.grid.n, stepper.grid.length)
        if key not in self._cache:
            fh = self.field.on_grid(stepper.grid).hat
            fh = project_hat(fh, stepper.grid)
            self._cache[key] = stepper.pack(fh)
        return self.envelope(t) * self._cache[key]


class Stepper:
    """RK4 / integrating-factor RK4 advance of one velocity state."""

    def __init__(self, system: str, u0, forcing, cfg: SolverConfig):
        if system not in ("euler", "euler-brinkman", "ns-brinkman"):
            raise ParameterDomainError(f"unknown system {system!r}")
        self.system = system
        self.cfg = cfg
        self.grid = cfg.grid
        n = self.grid.n
        K, K2, K2inv, mask, herm = grid_tools(self.grid)
        self._full_shape = (3, n, n, n // 2 + 1)
        self._idx = np.flatnonzero(mask.ravel() > 0)
        self._Kp = K.reshape(3, -1)[:, self._idx]
        self._K2p = K2.ravel()[self._idx]
        self._K2invp = K2inv.ravel()[self._idx]
        self._hermp = herm.ravel()[self._idx]
        adv_cls = _TorchAdvection if _fft.HAVE_TORCH else _NumpyAdvection
        self._transforms = adv_cls(n, self._idx)
        self.isotropic = bool(np.allclose(cfg.R, cfg.R[0, 0] * np.eye(3), atol=1e-14))
        self.friction = self._friction_scale() * cfg.R
        self.t = 0.0
        self.last_umax = 0.0

        if isinstance(u0, TrigVectorField):
            u0 = u0.on_grid(self.grid)
        uh = project_hat(u0.hat, self.grid)
        self.state = self.pack(uh)
        if isinstance(forcing, TrigVectorField):
            forcing = Forcing(forcing)
        self.forcing = forcing or Forcing(None)

        if system == "ns-brinkman":
            if cfg.integrator != "rk4-if":
                raise ParameterDomainError("ns-brinkman uses the rk4-if integrator")
            self._E_half = self._propagator(cfg.dt / 2)
            self._E_full = self._propagator(cfg.dt)
        elif cfg.integrator != "rk4":
            raise ParameterDomainError(f"{system} uses the plain rk4 integrator")

    def _friction_scale(self):
        return {"euler": 0.0, "euler-brinkman": 1.0, "ns-brinkman": self.cfg.lam}[
            self.system
        ]

    # -- packing -------------------------------------------------------------

    def pack(self, vhat):
        return np.ascontiguousarray(vhat.reshape(3, -1)[:, self._idx])

    def unpack(self, packed):
        out = np.zeros(self._full_shape, dtype=complex)
        out.reshape(3, -1)[:, self._idx] = packed
        return out

    # -- linear propagator for ns-brinkman ------------------------------------

    def _propagator(self, tau):
        nu, lam, R = self.cfg.nu, self.cfg.lam, self.cfg.R
        visc = np.exp(-nu * tau * self._K2p)
        if self.isotropic:
            return visc * math.exp(-lam * tau * R[0, 0])
        M = len(self._idx)
        E = np.zeros((M, 3, 3))
        k = self._Kp.T  # (M, 3)
        kn = np.linalg.norm(k, axis=1)
        zero = kn < 1e-14
        # orthonormal basis of the plane perpendicular to k
        a = np.where(np.abs(k[:, 2:3]) < 0.9 * kn[:, None], [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
        q1 = np.cross(k, a)
        q1 /= np.maximum(np.linalg.norm(q1, axis=1), 1e-300)[:, None]
        q2 = np.cross(k, q1)
        q2 /= np.maximum(np.linalg.norm(q2, axis=1), 1e-300)[:, None]
        Q = np.stack([q1, q2], axis=2)  # (M, 3, 2)
        H = np.einsum("mia,ij,mjb->mab", Q, R, Q)  # (M, 2, 2) symmetric
        d, V = np.linalg.eigh(H)
        core = np.einsum("mab,mb,mcb->mac", V, np.exp(-lam * tau * d), V)
        E = np.einsum("mia,mab,mjb->mij", Q, core, Q)
        if zero.any():
            dR, UR = np.linalg.eigh(R)
            E[zero] = UR @ np.diag(np.exp(-lam * tau * dR)) @ UR.T
        return visc[:, None, None] * E

    def _apply_propagator(self, E, v):
        if self.isotropic:
            return E[None, :] * v
        return np.einsum("mij,jm->im", E, v)

    # -- right-hand sides ------------------------------------------------------

    def _advection(self, packed):
        """-(u.grad)u packed (before projection), plus max|u| for the CFL check."""
        Th, umax = self._transforms(packed)
        Kp = self._Kp
        pair = ((0, 1, 2), (1, 3, 4), (2, 4, 5))
        adv = np.empty_like(packed)
        for i in range(3):
            adv[i] = Kp[0] * Th[pair[i][0]] + Kp[1] * Th[pair[i][1]] + Kp[2] * Th[pair[i][2]]
        adv *= -1j
        return adv, umax

    def _project(self, v):
        kd = (self._Kp * v).sum(axis=0) * self._K2invp
        return v - self._Kp * kd

    def _rhs_rk4(self, packed, t, track_cfl=False):
        v, umax = self._advection(packed)
        if self.friction.any():
            if self.isotropic:
                v -= self.friction[0, 0] * packed
            else:
                v -= np.einsum("ij,jm->im", self.friction, packed)
        fp = self.forcing.packed(self, t)
        if fp is not None:
            v += fp
        if track_cfl:
            self._check_cfl(umax)
        return self._project(v)

    def _nonlinear(self, packed, t, track_cfl=False):
        v, umax = self._advection(packed)
        fp = self.forcing.packed(self, t)
        if fp is not None:
            v += fp
        if track_cfl:
            self._check_cfl(umax)
        return self._project(v)

    def _check_cfl(self, umax):
        self.last_umax = umax
        cfg = self.cfg
        cfl = cfg.dt * umax * self.grid.n / self.grid.length
        if cfl > cfg.cfl_limit:
            suggested = 0.8 * cfg.cfl_limit * self.grid.length / (self.grid.n * max(umax, 1e-300))
            raise CFLError(
                f"advective CFL {cfl:.3f} exceeds {cfg.cfl_limit} at t={self.t:.4g}; "
                f"reduce dt to about {suggested:.3e}",
                suggested_dt=suggested,
            )

    # -- stepping ---------------------------------------------------------------

    def step(self):
        dt, t, u = self.cfg.dt, self.t, self.state
        if self.system == "ns-brinkman":
            Eh, Ef = self._E_half, self._E_full
            N1 = self._nonlinear(u, t, track_cfl=True)
            u2 = self._apply_propagator(Eh, u + 0.5 * dt * N1)
            N2 = self._nonlinear(u2, t + 0.5 * dt)
            u3 = self._apply_propagator(Eh, u) + 0.5 * dt * N2
            N3 = self._nonlinear(u3, t + 0.5 * dt)
            u4 = self._apply_propagator(Ef, u) + dt * self._apply_propagator(Eh, N3)
            N4 = self._nonlinear(u4, t + dt)
            self.state = self._apply_propagator(Ef, u) + (dt / 6.0) * (
                self._apply_propagator(Ef, N1)
                + 2.0 * self._apply_propagator(Eh, N2 + N3)
                + N4
            )
        else:
            k1 = self._rhs_rk4(u, t, track_cfl=True)
            k2 = self._rhs_rk4(u + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = self._rhs_rk4(u + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = self._rhs_rk4(u + dt * k3, t + dt)
            self.state = u + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        self.t = t + dt

    # -- diagnostics --------------------------------------------------------------

    def _pair(self, a, b):
        vol = self.grid.length**3
        return vol * float((self._hermp * (np.conj(a) * b).real).sum()) / self.grid.n**6

    def energy(self) -> float:
        return 0.5 * self._pair(self.state, self.state)

    def viscous_power(self) -> float:
        u = self.state
        vol = self.grid.length**3
        g2 = vol * float((self._hermp * self._K2p * (np.abs(u) ** 2).sum(axis=0)).sum()) / self.grid.n**6
        return self.cfg.nu * g2 if self.system == "ns-brinkman" else 0.0

    def friction_power(self) -> float:
        if not self.friction.any():
            return 0.0
        Ru = np.einsum("ij,jm->im", self.friction, self.state)
        return self._pair(self.state, Ru)

    def work_power(self) -> float:
        fp = self.forcing.packed(self, self.t)
        return 0.0 if fp is None else self._pair(self.state, fp)

    def field(self) -> VectorField:
        return VectorField.from_hat(self.grid, self.unpack(self.state))

    def diff_norm2(self, reference_packed) -> float:
        d = self.state - reference_packed
        return self._pair(d, d)


def run(system: str, u0, forcing, cfg: SolverConfig, sample_every: int = 0,
        callback: Optional[Callable] = None) -> Trajectory:
    """Advance from t=0 to t_end recording the energy budget each step."""
    stepper = Stepper(system, u0, forcing, cfg)
    n_steps = int(round(cfg.t_end / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_end) > 1e-9 * max(cfg.t_end, 1.0):
        raise ParameterDomainError("t_end must be an integer number of steps")
    times = np.empty(n_steps + 1)
    cols = {name: np.empty(n_steps + 1) for name in ("E", "visc", "fric", "work")}
    samples = []

    def record(j):
        times[j] = stepper.t
        cols["E"][j] = stepper.energy()
        cols["visc"][j] = stepper.viscous_power()
        cols["fric"][j] = stepper.friction_power()
        cols["work"][j] = stepper.work_power()
        if sample_every and j % sample_every == 0:
            samples.append((stepper.t, stepper.field()))
        if callback is not None:
            callback(stepper, j)

    record(0)
    for j in range(1, n_steps + 1):
        stepper.step()
        record(j)
    report = TrajectoryReport(
        times=times, energies=cols["E"], viscous=cols["visc"], friction=cols["fric"], work=cols["work"]
    )
    return Trajectory(times=times, report=report, final=stepper.field(), samples=samples)


# ---------------------------------------------------------------------------
# single-step conveniences (spec-level operations)


def step_euler_brinkman(u: VectorField, f, R, dt: float) -> VectorField:
    cfg = SolverConfig(grid=u.grid, dt=dt, t_end=dt, R=np.asarray(R, float))
    s = Stepper("euler-brinkman", u, f, cfg)
    s.step()
    return s.field()


def step_euler(u: VectorField, f, dt: float) -> VectorField:
    cfg = SolverConfig(grid=u.grid, dt=dt, t_end=dt, R=np.zeros((3, 3)))
    s = Stepper("euler", u, f, cfg)
    s.step()
    return s.field()


def step_ns_brinkman(u: VectorField, f, cfg: SolverConfig) -> VectorField:
    import dataclasses

    s = Stepper("ns-brinkman", u, f, dataclasses.replace(cfg, integrator="rk4-if"))
    s.step()
    return s.field()


# ---------------------------------------------------------------------------
# Darcy


def solve_darcy(f: VectorField, R) -> tuple[VectorField, ScalarField]:
    """Solve R u + grad p = f, div u = 0 on the torus, mode by mode.

    The pressure kills the part of R^-1 f that is not divergence free:
    p_hat = -i (k . R^-1 f_hat) / (k . R^-1 k), u_hat = R^-1 (f_hat - i k p_hat).
    """
    R = np.asarray(R, dtype=float)
    ev = np.linalg.eigvalsh(0.5 * (R + R.T))
    if ev.min() <= 0:
        raise ParameterDomainError("Darcy needs a positive definite resistance matrix")
    Rinv = np.linalg.inv(R)
    grid = f.grid
    K, _, _, _, _ = grid_tools(grid)
    fh = f.hat
    Rf = np.einsum("ij,j...->i...", Rinv, fh)
    Rk = np.einsum("ij,j...->i...", Rinv, K)
    kRk = (K * Rk).sum(axis=0)
    kRk_safe = np.where(kRk == 0.0, 1.0, kRk)
    ph = -1j * (K * Rf).sum(axis=0) / kRk_safe
    ph[kRk == 0.0] = 0.0
    uh = np.einsum("ij,j...->i...", Rinv, fh - 1j * K * ph[None])
    return VectorField.from_hat(grid, uh), ScalarField(grid, spectrum=ph)


def darcy_residual(u: VectorField, p: ScalarField, f: VectorField, R) -> float:
    """|| R u + grad p - f ||_L2 / ||f||_L2, all spectral."""
    K, _, _, _, herm = grid_tools(u.grid)
    res = np.einsum("ij,j...->i...", np.asarray(R, float), u.hat) + 1j * K * p.hat[None] - f.hat
    num = np.sqrt(float((herm * (np.abs(res) ** 2).sum(axis=0)).sum()))
    den = np.sqrt(float((herm * (np.abs(f.hat) ** 2).sum(axis=0)).sum()))
    return num / max(den, 1e-300)


# ---------------------------------------------------------------------------
# supercritical rescaling


def rescale_supercritical(traj: Trajectory, alpha: float, gamma: float, epsilon: float,
                          inverse: bool = False) -> Trajectory:
    """Map u(t, x) -> sigma * u(sigma t, x) with sigma = eps^(alpha+gamma-3).

    Defined for the supercritical regime alpha + gamma < 3 (sigma > 1); the
    inverse map undoes it exactly.
    """
    if alpha + gamma >= 3:
        raise ParameterDomainError("rescaling is defined only for alpha + gamma < 3")
    sigma = epsilon ** (alpha + gamma - 3)
    if inverse:
        sigma = 1.0 / sigma
    times = traj.times / sigma
    report = TrajectoryReport(
        times=times,
        energies=sigma**2 * traj.report.energies,
        viscous=sigma**2 * traj.report.viscous,
        friction=sigma**2 * traj.report.friction,
        work=sigma**2 * traj.report.work,
    )
    samples = [(t / sigma, VectorField.from_hat(f.grid, sigma * f.hat)) for t, f in traj.samples]
    final = VectorField.from_hat(traj.final.grid, sigma * traj.final.hat)
    return Trajectory(times=times, report=report, final=final, samples=samples)
