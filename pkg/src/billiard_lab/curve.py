"""Smooth strictly convex closed plane curves with arc-length access.

Curves are parametrized by a raw angle ``t`` in ``[0, 2*pi)``, counterclockwise,
with ``s = 0`` at ``t = 0``.  Arc length is tabulated once on a fine panel grid
and inverted by interpolation followed by Newton refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec, NonConvex, OutOfRange

TWO_PI = 2.0 * math.pi

N_PANELS = 4096
N_CONVEXITY_GRID = 4096

# Gauss-Legendre nodes on [-1, 1]; the speed is analytic so a fixed order per
# panel of width 2*pi/4096 sits far below the 1e-12 budget.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class CurveSpec:
    kind: str
    radius: float | None = None
    a: float | None = None
    b: float | None = None
    r0: float | None = None
    harmonics: tuple = ()

    @classmethod
    def circle(cls, radius=1.0):
        return cls(kind="circle", radius=float(radius))

    @classmethod
    def ellipse(cls, a, b):
        return cls(kind="ellipse", a=float(a), b=float(b))

    @classmethod
    def fourier_circle(cls, r0, harmonics):
        hs = tuple((int(j), float(c), float(d)) for j, c, d in harmonics)
        return cls(kind="fourier_circle", r0=float(r0), harmonics=hs)

    def validate(self):
        if self.kind == "circle":
            if self.radius is None or not self.radius > 0:
                raise InvalidSpec("circle radius must be positive")
        elif self.kind == "ellipse":
            if self.a is None or self.b is None or not self.b > 0:
                raise InvalidSpec("ellipse semi-axes must be positive")
            if self.a < self.b:
                raise InvalidSpec("a ≥ b required")
        elif self.kind == "fourier_circle":
            if self.r0 is None or not self.r0 > 0:
                raise InvalidSpec("fourier_circle base radius r0 must be positive")
            for j, _, _ in self.harmonics:
                if j < 2:
                    raise InvalidSpec(f"harmonic index must be >= 2, got {j}")
        else:
            raise InvalidSpec(f"unknown curve kind {self.kind!r}")

    def to_json(self):
        if self.kind == "circle":
            return {"kind": "circle", "radius": self.radius}
        if self.kind == "ellipse":
            return {"kind": "ellipse", "a": self.a, "b": self.b}
        return {
            "kind": "fourier_circle",
            "r0": self.r0,
            "harmonics": [[j, c, d] for j, c, d in self.harmonics],
        }

    @classmethod
    def from_json(cls, obj):
        """Build from ``{"kind": "ellipse", "a": 2.0, "b": 1.0}`` style objects."""
        kind = obj.get("kind")
        try:
            if kind == "circle":
                spec = cls.circle(obj["radius"])
            elif kind == "ellipse":
                spec = cls.ellipse(obj["a"], obj["b"])
            elif kind == "fourier_circle":
                spec = cls.fourier_circle(obj["r0"], obj.get("harmonics", []))
            else:
                raise InvalidSpec(f"unknown curve kind {kind!r}")
        except (KeyError, TypeError) as exc:
            raise InvalidSpec(f"malformed curve spec: {exc}") from exc
        spec.validate()
        return spec


def compensated_cumsum(values):
    """Running sums with a leading zero, each prefix correctly rounded."""
    out = np.empty(len(values) + 1)
    out[0] = 0.0
    total = 0.0
    comp = 0.0
    for i, v in enumerate(values.tolist()):
        y = v - comp
        nxt = total + y
        comp = (nxt - total) - y
        total = nxt
        out[i + 1] = total
    return out


def _derivatives(spec, t):
    """Position and first two derivatives in the raw parameter, each shape (2, ...)."""
    t = np.asarray(t, dtype=float)
    c, s = np.cos(t), np.sin(t)
    if spec.kind in ("circle", "ellipse"):
        a = spec.radius if spec.kind == "circle" else spec.a
        b = spec.radius if spec.kind == "circle" else spec.b
        if t.ndim == 0:
            # scalar fast path: root finders call this one point at a time
            p = np.array([a * c, b * s])
            return p, np.array([-a * s, b * c]), -p
        p = np.stack([a * c, b * s])
        d1 = np.stack([-a * s, b * c])
        d2 = -p
        return p, d1, d2
    r = np.full_like(t, spec.r0)
    r1 = np.zeros_like(t)
    r2 = np.zeros_like(t)
    for j, cj, dj in spec.harmonics:
        cj_t, sj_t = np.cos(j * t), np.sin(j * t)
        r = r + cj * cj_t + dj * sj_t
        r1 = r1 + j * (-cj * sj_t + dj * cj_t)
        r2 = r2 - j * j * (cj * cj_t + dj * sj_t)
    e = np.array([c, s])
    e_perp = np.array([-s, c])
    p = r * e
    d1 = r1 * e + r * e_perp
    d2 = r2 * e + 2.0 * r1 * e_perp - r * e
    return p, d1, d2


def _radius(spec, t):
    if spec.kind != "fourier_circle":
        return None
    r = np.full_like(np.asarray(t, dtype=float), spec.r0)
    for j, cj, dj in spec.harmonics:
        r = r + cj * np.cos(j * t) + dj * np.sin(j * t)
    return r


@dataclass(frozen=True, eq=False)
class Curve:
    spec: CurveSpec
    total_length: float
    t_table: np.ndarray = field(repr=False)
    s_table: np.ndarray = field(repr=False)
    diameter: float = 0.0

    # -- raw-parameter evaluation -------------------------------------------------

    def derivatives_t(self, t):
        return _derivatives(self.spec, t)

    def position_t(self, t):
        return _derivatives(self.spec, t)[0]

    def speed_t(self, t):
        _, d1, _ = _derivatives(self.spec, t)
        return np.hypot(d1[0], d1[1])

    def curvature_t(self, t):
        _, d1, d2 = _derivatives(self.spec, t)
        sp = np.hypot(d1[0], d1[1])
        return (d1[0] * d2[1] - d1[1] * d2[0]) / sp**3

    def frame_t(self, t):
        """Point, unit tangent, inward unit normal and curvature at raw parameter t."""
        p, d1, d2 = _derivatives(self.spec, t)
        sp = np.hypot(d1[0], d1[1])
        tan = d1 / sp
        nrm = np.stack([-tan[1], tan[0]])
        k = (d1[0] * d2[1] - d1[1] * d2[0]) / sp**3
        return p, tan, nrm, k

    # -- arc length ---------------------------------------------------------------

    def s_of_t(self, t):
        """Arc length of raw parameter t; unwrapped, so ``s(t + 2pi) = s(t) + L``."""
        t = np.asarray(t, dtype=float)
        wraps = np.floor(t / TWO_PI)
        tr = t - wraps * TWO_PI
        h = TWO_PI / N_PANELS
        j = np.clip((tr / h).astype(int), 0, N_PANELS - 1)
        t0 = self.t_table[j]
        half = 0.5 * (tr - t0)
        nodes = t0[..., None] + half[..., None] * (_GL_X + 1.0)
        partial = half * np.sum(_GL_W * self.speed_t(nodes), axis=-1)
        return wraps * self.total_length + self.s_table[j] + partial

    def t_of_s(self, s):
        """Raw parameter of arc length s (unwrapped inverse of :meth:`s_of_t`)."""
        s = np.asarray(s, dtype=float)
        L = self.total_length
        wraps = np.floor(s / L)
        r = s - wraps * L
        t = np.interp(r, self.s_table, self.t_table)
        for _ in range(8):
            dt = (self.s_of_t(t) - r) / self.speed_t(t)
            t = t - dt
            if np.all(np.abs(dt) <= 1e-15 * TWO_PI):
                break
        return t + wraps * TWO_PI

    def geometry_at(self, s):
        """Point, unit tangent and curvature at arc length s (taken modulo L)."""
        t = self.t_of_s(np.mod(s, self.total_length))
        p, tan, _, k = self.frame_t(t)
        return p, tan, k

    def frame_at(self, s):
        t = self.t_of_s(s)
        return self.frame_t(t)


def make_curve(spec):
    """Validate ``spec`` and build the curve with its arc-length table.

    Raises NonConvex when the curvature is not strictly positive on a dense
    grid, InvalidSpec for out-of-range parameters.
    """
    spec.validate()
    grid = np.linspace(0.0, TWO_PI, N_CONVEXITY_GRID, endpoint=False)
    r = _radius(spec, grid)
    if r is not None and np.any(r <= 0):
        raise NonConvex("radial function is not positive")
    _, d1, d2 = _derivatives(spec, grid)
    k = (d1[0] * d2[1] - d1[1] * d2[0]) / np.hypot(d1[0], d1[1]) ** 3
    if np.any(k <= 0):
        bad = int(np.argmin(k))
        raise NonConvex(f"curvature {k[bad]:.3g} <= 0 at t = {grid[bad]:.6f}")

    t_table = np.linspace(0.0, TWO_PI, N_PANELS + 1)
    h = TWO_PI / N_PANELS
    nodes = t_table[:-1, None] + 0.5 * h * (_GL_X + 1.0)
    sp = np.hypot(*_derivatives(spec, nodes)[1])
    panel = 0.5 * h * np.sum(_GL_W * sp, axis=-1)
    s_table = compensated_cumsum(panel)
    total = float(s_table[-1])

    pts = _derivatives(spec, np.linspace(0.0, TWO_PI, 1024, endpoint=False))[0]
    diff = pts[:, :, None] - pts[:, None, :]
    diameter = float(np.sqrt((diff**2).sum(axis=0).max()))
    return Curve(spec, total, t_table, s_table, diameter)


@dataclass(frozen=True)
class ArcSpec:
    s_A: float
    s_B: float

    @property
    def length(self):
        return self.s_B - self.s_A

    def validate(self, curve):
        if not (0.0 <= self.s_A < curve.total_length):
            raise OutOfRange(f"s_A = {self.s_A} outside [0, L)")
        if not (0.0 < self.s_B - self.s_A < curve.total_length):
            raise OutOfRange("need 0 < s_B - s_A < L")
        return self

    @classmethod
    def quarter(cls, curve):
        return cls(0.0, curve.total_length / 4.0)


def arc_coordinates(curve, arc, u):
    """Affine chart ``u in [0, 1] -> s`` on the arc."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u > 1.0)):
        raise OutOfRange("u must lie in [0, 1]")
    return arc.s_A + u * (arc.s_B - arc.s_A)


def arc_parameter(curve, arc, s):
    """Inverse of :func:`arc_coordinates`."""
    u = (np.asarray(s, dtype=float) - arc.s_A) / (arc.s_B - arc.s_A)
    if np.any((u < -1e-15) | (u > 1 + 1e-15)):
        raise OutOfRange("s outside the arc")
    return np.clip(u, 0.0, 1.0)


def geometry_at(curve, s):
    return curve.geometry_at(s)
