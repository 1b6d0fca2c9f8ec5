"""Billiard ball map on phase coordinates (s, phi)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .curve import TWO_PI
from .errors import DegenerateChord, InvalidPhasePoint, NoConvergence, OrbitError

PHI_MIN = 1e-8
N_SCAN = 256


@dataclass(frozen=True)
class PhasePoint:
    s: float
    phi: float

    def check(self):
        if not (PHI_MIN < self.phi < math.pi - PHI_MIN):
            raise InvalidPhasePoint(f"phi = {self.phi!r} outside ({PHI_MIN}, pi - {PHI_MIN})")
        return self


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _launch(curve, x):
    t = float(curve.t_of_s(x.s % curve.total_length))
    p, tan, nrm, _ = curve.frame_t(t)
    v = math.cos(x.phi) * tan + math.sin(x.phi) * nrm
    return t, p, v


def _hit_parameter(curve, t, p, v):
    """Raw parameter of the second intersection of the ray p + r v with the curve."""

    def f(tau):
        return _cross(v, curve.position_t(tau) - p)

    end = t + TWO_PI
    slope = float(_cross(v, curve.derivatives_t(t)[1]))  # < 0 for inward v

    def g(tau):
        # f / ((tau - t)(t + 2pi - tau)) removes the trivial roots at both ends
        # of the period; the limits are slope / 2pi < 0 and -slope / 2pi > 0.
        if tau <= t:
            return slope / TWO_PI
        if tau >= end:
            return -slope / TWO_PI
        return float(f(tau)) / ((tau - t) * (end - tau))

    taus = t + TWO_PI * np.arange(1, N_SCAN) / N_SCAN
    vals = _cross(v, curve.position_t(taus) - p[:, None]) / ((taus - t) * (end - taus))
    pos = np.flatnonzero(vals >= 0)
    j = int(pos[0]) if pos.size else N_SCAN - 1
    if j < N_SCAN - 1 and vals[j] == 0:
        return float(taus[j])
    lo = t if j == 0 else float(taus[j - 1])
    hi = end if j == N_SCAN - 1 else float(taus[j])
    if not (g(lo) < 0 < g(hi)):
        raise NoConvergence("could not bracket the next intersection")
    tau = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    # Newton polish on the undivided residual
    for _ in range(3):
        _, d1, _ = curve.derivatives_t(tau)
        fp = float(_cross(v, d1))
        if fp == 0.0:
            break
        step = float(f(tau)) / fp
        if not (lo <= tau - step <= hi):
            break
        tau -= step
        if abs(step) < 1e-16:
            break
    return tau


def next_collision(curve, x):
    """Follow the chord from ``x`` to the boundary and reflect.

    The returned angle is the angle between the incoming chord and the
    positive tangent at the hit point, which by the reflection law is also the
    outgoing angle.
    """
    x.check()
    t, p, v = _launch(curve, x)
    tau = _hit_parameter(curve, t, p, v)
    q, tan, nrm, _ = curve.frame_t(tau)
    chord = float(np.hypot(*(q - p)))
    if chord < 1e-12:
        raise DegenerateChord(f"chord length {chord:.3g} below 1e-12")
    phi = math.atan2(-float(np.dot(v, nrm)), float(np.dot(v, tan)))
    s = float(curve.s_of_t(tau)) % curve.total_length
    return PhasePoint(s, phi)


def orbit(curve, x0, n):
    """Phase orbit ``x_0, ..., x_n`` with ``x_{i+1} = F(x_i)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = [x0]
    for i in range(n):
        try:
            out.append(next_collision(curve, out[-1]))
        except (NoConvergence, DegenerateChord, InvalidPhasePoint) as exc:
            raise OrbitError(i, exc) from exc
    return out


def _wrap(ds, L):
    return (ds + 0.5 * L) % L - 0.5 * L


def symplectic_check(curve, x, h=1e-5):
    """Jacobian determinant of F in the coordinates (s, y = -cos phi).

    The form sin(phi) dphi ^ ds equals dy ^ ds, so an area-preserving map
    returns 1 up to O(h^2) truncation and solver noise.
    """
    y0 = -math.cos(x.phi)
    if not (10 * h < x.phi < math.pi - 10 * h and abs(y0) + h < 1.0):
        raise InvalidPhasePoint("phase point too close to phi in {0, pi} for step h")
    L = curve.total_length

    def F(s, y):
        out = next_collision(curve, PhasePoint(s % L, math.acos(-y)))
        return out.s, -math.cos(out.phi)

    sp, yp = F(x.s + h, y0)
    sm, ym = F(x.s - h, y0)
    ds_ds = _wrap(sp - sm, L) / (2 * h)
    dy_ds = (yp - ym) / (2 * h)
    sp, yp = F(x.s, y0 + h)
    sm, ym = F(x.s, y0 - h)
    ds_dy = _wrap(sp - sm, L) / (2 * h)
    dy_dy = (yp - ym) / (2 * h)
    return ds_ds * dy_dy - ds_dy * dy_ds


def reflection_defect(curve, x):
    """Difference between incoming and outgoing tangent angles at F(x)."""
    t, p, v = _launch(curve, x)
    tau = _hit_parameter(curve, t, p, v)
    q, tan, _, _ = curve.frame_t(tau)
    x1 = next_collision(curve, x)
    t1, p1, v1 = _launch(curve, x1)
    incoming = math.acos(max(-1.0, min(1.0, float(np.dot(v, tan)))))
    outgoing = math.acos(max(-1.0, min(1.0, float(np.dot(v1, tan)))))
    return abs(incoming - outgoing)


def orbit_rows(curve, points):
    """Rows ``(index, s, phi, x, y)`` for CSV export."""
    rows = []
    for i, pt in enumerate(points):
        pos = curve.position_t(curve.t_of_s(pt.s % curve.total_length))
        rows.append((i, pt.s, pt.phi, float(pos[0]), float(pos[1])))
    return rows
