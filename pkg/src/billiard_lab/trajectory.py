"""Extremal inscribed polylines T_n from A to B with vertices on the arc.

Interior vertices are free on the arc, endpoints are pinned.  The length
functional is critical exactly when every interior vertex obeys the
equal-angle reflection law, so its critical points are billiard trajectories.
On a convex arc the monotone critical configuration is the maximum of length
among monotone inscribed polylines (the circle case with one interior vertex
already shows this: the midpoint beats every other position), so the solver
climbs the length and the brute-force oracle searches for the grid maximum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded

from .errors import DegenerateSegment, NoConvergence, OrderingViolated, TooLarge
from .lazutkin import equipartition_points

log = logging.getLogger(__name__)

STICK_FRACTION = 1e-6


@dataclass(eq=False)
class Trajectory:
    n: int
    vertex_s: np.ndarray
    vertex_sigma: np.ndarray
    total_length: float
    reflection_residual: float
    phi_list: np.ndarray = field(repr=False)  # (n, 2): angle at chord start, chord end
    iterations: int = 0
    boundary_sticking: bool = False

    @property
    def interior_s(self):
        return self.vertex_s[1:-1]

    @property
    def orbit_s(self):
        return self.vertex_s

    @property
    def orbit_phi(self):
        """Phase angles x_0..x_n: outgoing angle at each vertex, incoming at B."""
        return np.concatenate([self.phi_list[:, 0], self.phi_list[-1:, 1]])

    def to_json(self):
        return {
            "n": self.n,
            "vertex_s": [float(v) for v in self.vertex_s],
            "vertex_sigma": [float(v) for v in self.vertex_sigma],
            "total_length": float(self.total_length),
            "reflection_residual": float(self.reflection_residual),
        }


def _vertices(curve, vertex_s):
    t = curve.t_of_s(np.asarray(vertex_s, dtype=float))
    p, tan, nrm, _ = curve.frame_t(t)
    return p.T, tan.T, nrm.T


def _segments(points):
    seg = np.diff(points, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(lens < 1e-14):
        raise DegenerateSegment("consecutive vertices coincide")
    return seg / lens[:, None], lens


def polyline_length(curve, vertex_s):
    p, _, _ = _vertices(curve, vertex_s)
    return float(math.fsum(np.hypot(*np.diff(p, axis=0).T)))


def length_gradient(curve, vertex_s):
    """d(length)/d(s_i) for the interior vertices: <T_i, u_i - u_{i+1}>."""
    p, tan, _ = _vertices(curve, vertex_s)
    u, _ = _segments(p)
    return np.einsum("ij,ij->i", tan[1:-1], u[:-1] - u[1:])


def chord_angles(curve, vertex_s):
    """Angle each chord makes with the tangent at its start and at its end."""
    p, tan, nrm = _vertices(curve, vertex_s)
    u, _ = _segments(p)
    start = np.arctan2(np.einsum("ij,ij->i", u, nrm[:-1]), np.einsum("ij,ij->i", u, tan[:-1]))
    end = np.arctan2(-np.einsum("ij,ij->i", u, nrm[1:]), np.einsum("ij,ij->i", u, tan[1:]))
    return np.column_stack([start, end])


def initial_guess(sm, n):
    """Interior sigma-equipartition points Q_1..Q_{n-1}."""
    return equipartition_points(sm, n)[1:-1]


def _hessian_bands(curve, s_A, s_B, x, eps):
    """Tridiagonal Hessian of length from three colored central differences."""
    m = x.size
    diag = np.zeros(m)
    off = np.zeros(max(m - 1, 0))
    idx = np.arange(m)
    for color in range(3):
        mask = idx % 3 == color
        if not mask.any():
            continue
        e = np.where(mask, eps, 0.0)
        gp = length_gradient(curve, np.concatenate([[s_A], x + e, [s_B]]))
        gm = length_gradient(curve, np.concatenate([[s_A], x - e, [s_B]]))
        col = (gp - gm) / (2 * eps)
        # row j sees exactly one perturbed index of this color among j-1, j, j+1
        diag[mask] = col[mask]
        up = mask[1:]  # perturbed index j+1 feeds row j
        off[up] += 0.5 * col[:-1][up]
        lo = mask[:-1]  # perturbed index j feeds row j+1
        off[lo] += 0.5 * col[1:][lo]
    return diag, off


def _ascent_direction(diag, off, g):
    """Newton direction for the concave length; gradient if -H is not PD."""
    m = g.size
    ab = np.zeros((2, m))
    ab[1] = -diag
    ab[0, 1:] = -off
    try:
        c = cholesky_banded(ab, lower=False)
        return cho_solve_banded((c, False), g), True
    except np.linalg.LinAlgError:
        return g.copy(), False


def _max_step(full, d):
    """Largest alpha keeping all gaps positive, with a safety factor."""
    dd = np.diff(np.concatenate([[0.0], d, [0.0]]))
    gaps = np.diff(full)
    shrinking = dd < 0
    if not shrinking.any():
        return math.inf
    return 0.5 * float(np.min(gaps[shrinking] / -dd[shrinking]))


def make_trajectory(curve, sm, vertex_s, iterations=0):
    vertex_s = np.asarray(vertex_s, dtype=float)
    n = vertex_s.size - 1
    g = length_gradient(curve, vertex_s) if n >= 2 else np.zeros(0)
    span = sm.arc.s_B - sm.arc.s_A
    sticking = bool(
        n >= 2
        and (
            vertex_s[1] - vertex_s[0] < STICK_FRACTION * span
            or vertex_s[-1] - vertex_s[-2] < STICK_FRACTION * span
        )
    )
    sig = np.asarray(sm.sigma(vertex_s), dtype=float)
    sig[0], sig[-1] = 0.0, 1.0
    return Trajectory(
        n=n,
        vertex_s=vertex_s,
        vertex_sigma=sig,
        total_length=polyline_length(curve, vertex_s),
        reflection_residual=float(np.max(np.abs(g))) if g.size else 0.0,
        phi_list=chord_angles(curve, vertex_s),
        iterations=iterations,
        boundary_sticking=sticking,
    )


def solve_min_polyline(curve, sm, n, tol_grad=1e-12, max_iter=200, step_tol=1e-14):
    """Critical inscribed polyline T_n from the sigma-equipartition start.

    Newton iterations on the interior vertex arc lengths with a tridiagonal
    finite-difference Hessian, a backtracking line search on length and step
    truncation that preserves the vertex ordering.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    s_A, s_B = sm.arc.s_A, sm.arc.s_B
    x = initial_guess(sm, n)
    full = np.concatenate([[s_A], x, [s_B]])
    length = polyline_length(curve, full)
    g = length_gradient(curve, full)
    span = s_B - s_A
    eps = 1e-3 * span / n
    truncated_run = 0
    prev_step = math.inf
    it = 0
    while True:
        gnorm = float(np.max(np.abs(g)))
        diag, off = _hessian_bands(curve, s_A, s_B, x, eps)
        d, newton = _ascent_direction(diag, off, g)
        step = float(np.max(np.abs(d)))
        # The Hessian is a discrete Laplacian, so a smooth displacement leaves a
        # gradient far below tol_grad; the Newton step must be small as well.
        # A step that stops shrinking has reached the round-off floor.
        if gnorm <= tol_grad and newton and (
            step <= step_tol * span or step >= 0.5 * prev_step
        ):
            break
        if it >= max_iter:
            raise NoConvergence(
                f"no convergence after {max_iter} iterations (residual {gnorm:.3g})",
                best=make_trajectory(curve, sm, full, it),
                residual=gnorm,
            )
        it += 1
        prev_step = step
        alpha = 1.0
        amax = _max_step(full, d)
        if amax < alpha:
            alpha = amax
            truncated_run += 1
            if truncated_run > 20:
                raise OrderingViolated("line search keeps hitting the vertex ordering")
        else:
            truncated_run = 0
        slope = float(g @ d)
        accepted = False
        for _ in range(60):
            xn = x + alpha * d
            fulln = np.concatenate([[s_A], xn, [s_B]])
            ln = polyline_length(curve, fulln)
            gn = length_gradient(curve, fulln)
            gain = ln - length
            # near the optimum the length gain drops below round-off, so a
            # smaller gradient is accepted in place of the Armijo test
            if gain >= 1e-4 * alpha * slope or (
                abs(gain) <= 1e-13 * max(1.0, length)
                and np.max(np.abs(gn)) < gnorm
            ):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if gnorm <= tol_grad:
                # round-off floor: no step can improve a point this close
                it -= 1
                break
            raise NoConvergence(
                f"line search failed at iteration {it} (residual {gnorm:.3g})",
                best=make_trajectory(curve, sm, full, it),
                residual=gnorm,
            )
        x, full, length, g = xn, fulln, ln, gn
        log.debug("n=%d it=%d |g|=%.3e newton=%s alpha=%.3g", n, it, gnorm, newton, alpha)
    traj = make_trajectory(curve, sm, full, it)
    if traj.boundary_sticking:
        log.info("n=%d: a vertex sticks to an arc endpoint", n)
    return traj


def brute_force_min(curve, arc, n, grid_size=2001):
    """Exhaustive grid search over monotone interior vertices (n = 2 or 3).

    Returns the grid configuration with the largest length, which is the
    billiard trajectory's grid approximation; see the module docstring for
    why the extremum is a maximum.
    """
    from .lazutkin import build_sigma

    if n not in (2, 3):
        raise TooLarge("brute force is limited to n in {2, 3}")
    grid = np.linspace(arc.s_A, arc.s_B, grid_size)
    pts, _, _ = _vertices(curve, grid)
    A, B = pts[0], pts[-1]
    inner = pts[1:-1]
    dA = np.hypot(*(inner - A).T)
    dB = np.hypot(*(inner - B).T)
    if n == 2:
        j = int(np.argmax(dA + dB))
        vs = [arc.s_A, grid[1 + j], arc.s_B]
    else:
        dij = np.hypot(inner[:, None, 0] - inner[None, :, 0], inner[:, None, 1] - inner[None, :, 1])
        total = dA[:, None] + dij + dB[None, :]
        total[np.tril_indices(inner.shape[0])] = -np.inf
        i, j = np.unravel_index(int(np.argmax(total)), total.shape)
        vs = [arc.s_A, grid[1 + i], grid[1 + j], arc.s_B]
    return make_trajectory(curve, build_sigma(curve, arc), vs)


def shoot_vertices(curve, traj):
    """Interior vertices reproduced by iterating the billiard map from (A, phi_0)."""
    from .billiard_map import PhasePoint, next_collision

    x = PhasePoint(float(traj.vertex_s[0]) % curve.total_length, float(traj.phi_list[0, 0]))
    out = []
    for _ in range(traj.n - 1):
        x = next_collision(curve, x)
        out.append(x.s)
    return np.asarray(out)


def max_sagitta(curve, traj, samples=32):
    """Largest distance from the polyline's chords to the arc they subtend."""
    best = 0.0
    u = np.linspace(0.0, 1.0, samples + 1)[1:-1]
    p, _, _ = _vertices(curve, traj.vertex_s)
    for i in range(traj.n):
        s0, s1 = traj.vertex_s[i], traj.vertex_s[i + 1]
        q, _, _ = _vertices(curve, s0 + u * (s1 - s0))
        a, b = p[i], p[i + 1]
        d = b - a
        dist = np.abs(d[0] * (q[:, 1] - a[1]) - d[1] * (q[:, 0] - a[0])) / np.hypot(*d)
        best = max(best, float(dist.max()))
    return best
