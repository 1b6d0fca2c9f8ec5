"""Lazutkin parameter sigma on an arc and the leading interpolating Hamiltonian.

``dsigma = (1/2) k^(2/3) ds``, normalized by the total mass ``S_tot`` of the arc
so that sigma runs over ``[0, 1]``.  The Hamiltonian is kept to leading order,
``H = k^(-2/3) phi^2``, and scaled by ``S_tot^2`` to match the normalization;
with that scaling a near-grazing orbit advances sigma by ``sqrt(H_norm)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import _GL_W, _GL_X, compensated_cumsum

N_SIGMA_PANELS = 2048


@dataclass(frozen=True, eq=False)
class SigmaMap:
    curve: object = field(repr=False)
    arc: object
    total_mass: float
    t_A: float
    t_B: float
    t_table: np.ndarray = field(repr=False)
    mass_table: np.ndarray = field(repr=False)

    def _density_t(self, t):
        # (1/2) k^(2/3) |gamma'(t)|
        k = self.curve.curvature_t(t)
        return 0.5 * np.cbrt(k * k) * self.curve.speed_t(t)

    def mass_of_t(self, t):
        t = np.asarray(t, dtype=float)
        h = (self.t_B - self.t_A) / N_SIGMA_PANELS
        j = np.clip(((t - self.t_A) / h).astype(int), 0, N_SIGMA_PANELS - 1)
        t0 = self.t_table[j]
        half = 0.5 * (t - t0)
        nodes = t0[..., None] + half[..., None] * (_GL_X + 1.0)
        partial = half * np.sum(_GL_W * self._density_t(nodes), axis=-1)
        return self.mass_table[j] + partial

    def _t_of_mass(self, m):
        m = np.asarray(m, dtype=float)
        t = np.interp(m, self.mass_table, self.t_table)
        for _ in range(8):
            dt = (self.mass_of_t(t) - m) / self._density_t(t)
            t = t - dt
            if np.all(np.abs(dt) <= 1e-16 * (self.t_B - self.t_A)):
                break
        return t

    def sigma(self, s):
        """Normalized sigma of arc length ``s`` (s in ``[s_A, s_B]``)."""
        t = self.curve.t_of_s(np.asarray(s, dtype=float))
        return self.mass_of_t(t) / self.total_mass

    def s_of_sigma(self, sig):
        t = self._t_of_mass(np.asarray(sig, dtype=float) * self.total_mass)
        return self.curve.s_of_t(t)


def build_sigma(curve, arc):
    """Tabulate sigma on ``arc`` by composite Gauss-Legendre quadrature."""
    arc.validate(curve)
    t_A = float(curve.t_of_s(arc.s_A))
    t_B = float(curve.t_of_s(arc.s_B))
    t_table = np.linspace(t_A, t_B, N_SIGMA_PANELS + 1)
    h = (t_B - t_A) / N_SIGMA_PANELS
    nodes = t_table[:-1, None] + 0.5 * h * (_GL_X + 1.0)
    k = curve.curvature_t(nodes)
    dens = 0.5 * np.cbrt(k * k) * curve.speed_t(nodes)
    panel = 0.5 * h * np.sum(_GL_W * dens, axis=-1)
    mass = compensated_cumsum(panel)
    return SigmaMap(curve, arc, float(mass[-1]), t_A, t_B, t_table, mass)


def equipartition_points(sm, n):
    """Arc lengths ``Q_0 = s_A, ..., Q_n = s_B`` with ``sigma(Q_m) = m / n``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    q = np.asarray(sm.s_of_sigma(np.arange(n + 1) / n), dtype=float)
    q[0], q[-1] = sm.arc.s_A, sm.arc.s_B
    return q


@dataclass(frozen=True)
class HamiltonianSample:
    H_norm: float
    phi: float


def hamiltonian_at(curve, sm, x):
    _, _, k = curve.geometry_at(x.s)
    return HamiltonianSample(float(np.cbrt(k) ** -2 * x.phi**2 / sm.total_mass**2), x.phi)


def hamiltonian_norm(curve, sm, s, phi):
    """Vectorized ``k(s)^(-2/3) phi^2 / S_tot^2``."""
    _, _, k = curve.geometry_at(np.asarray(s, dtype=float))
    return np.asarray(phi) ** 2 / np.cbrt(k) ** 2 / sm.total_mass**2


def shift_consistency(curve, sm, trajectory):
    """Compare sigma increments along a trajectory with 1/n and sqrt(H_norm).

    Returns a dict with ``n``, ``max_dsigma_dev`` (max |dsigma_m - 1/n|),
    ``max_sqrtH_dev`` (max |dsigma_m - sqrt(mean H_norm)|) and ``H_spread_rel``
    ((max - min) / mean of H_norm over the orbit points).
    """
    n = trajectory.n
    dsig = np.diff(np.asarray(trajectory.vertex_sigma))
    H = hamiltonian_norm(curve, sm, trajectory.orbit_s, trajectory.orbit_phi)
    Hm = float(np.mean(H))
    return {
        "n": n,
        "max_dsigma_dev": float(np.max(np.abs(dsig - 1.0 / n))),
        "max_sqrtH_dev": float(np.max(np.abs(dsig - np.sqrt(Hm)))),
        "H_spread_rel": float((H.max() - H.min()) / Hm),
    }
