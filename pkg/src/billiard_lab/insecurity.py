"""Equidistribution scans and the arithmetic escape from finite blocking sets.

Boundary blockers live in the normalized sigma coordinate of the arc and are
declared either rational (exact ``p/q``) or irrational (a float).  Chord counts
``n_i = 1 + (N + i) Q`` are coprime to every rational denominator, so a
rational blocker can never coincide with a fraction ``m / n_i``; the
irrational ones are beaten by the pigeonhole bound between ``delta Q^2 N / 2``
and ``3 C``.  Numerically we only ever certify that a trajectory is clear of
all blockers by a margin, never that it is blocked.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    BilliardError,
    DenominatorOverflow,
    InfiniteDelta,
    NotFound,
    StaleCertificate,
    ValidationError,
)
from .lazutkin import hamiltonian_norm
from .trajectory import length_gradient, make_trajectory, solve_min_polyline

log = logging.getLogger(__name__)

INT64_MAX = 2**63 - 1
EPS_BOUNDARY = 1e-6
EPS_INTERIOR_REL = 1e-6
RESIDUAL_BOUND = 1e-10
SCREEN_DENOMINATOR = 10**5
SCREEN_TOL = 1e-12
NOISE_FLOOR = 1e-9


# -- blockers -----------------------------------------------------------------


@dataclass(frozen=True)
class Rational:
    p: int
    q: int

    def __post_init__(self):
        if self.q == 0:
            raise ValidationError([("rational", "zero denominator")])
        f = Fraction(self.p, self.q)
        object.__setattr__(self, "p", f.numerator)
        object.__setattr__(self, "q", f.denominator)
        if not 0 < f < 1:
            raise ValidationError([("rational", f"{f} not in (0, 1)")])

    @property
    def value(self):
        return self.p / self.q

    def to_json(self):
        return {"rational": [self.p, self.q]}


@dataclass(frozen=True)
class Irrational:
    value: float

    def __post_init__(self):
        v = float(self.value)
        object.__setattr__(self, "value", v)
        if not 0.0 < v < 1.0:
            raise ValidationError([("irrational", f"{v!r} not in (0, 1)")])
        near = Fraction(v).limit_denominator(SCREEN_DENOMINATOR)
        if abs(v - near) <= SCREEN_TOL:
            raise ValidationError(
                [("irrational", f"{v!r} is within {SCREEN_TOL} of {near}; declare it rational")]
            )

    def to_json(self):
        return {"irrational": self.value}


@dataclass(frozen=True)
class BlockerSet:
    boundary: tuple = ()
    interior: tuple = ()

    @property
    def rationals(self):
        return [b for b in self.boundary if isinstance(b, Rational)]

    @property
    def irrationals(self):
        return [b for b in self.boundary if isinstance(b, Irrational)]

    def boundary_values(self):
        return np.array([b.value for b in self.boundary], dtype=float)

    def to_json(self):
        return {
            "boundary": [b.to_json() for b in self.boundary],
            "interior": [[float(x), float(y)] for x, y in self.interior],
        }

    @classmethod
    def from_json(cls, obj, path="blockers"):
        errors = []
        boundary = []
        if not isinstance(obj, dict):
            raise ValidationError([(path, "expected an object")])
        for key in obj:
            if key not in ("boundary", "interior"):
                errors.append((f"{path}.{key}", "unknown key"))
        for i, entry in enumerate(obj.get("boundary", [])):
            where = f"{path}.boundary[{i}]"
            try:
                if not isinstance(entry, dict) or len(entry) != 1:
                    raise ValidationError([(where, "expected {'rational': [p, q]} or {'irrational': x}")])
                ((kind, val),) = entry.items()
                if kind == "rational":
                    p, q = val
                    if not (isinstance(p, int) and isinstance(q, int)):
                        raise ValidationError([(where, "rational entries must be integers")])
                    boundary.append(Rational(p, q))
                elif kind == "irrational":
                    boundary.append(Irrational(val))
                else:
                    raise ValidationError([(where, f"unknown blocker kind {kind!r}")])
            except ValidationError as exc:
                errors.extend((where, r) for _, r in exc.errors)
            except (TypeError, ValueError) as exc:
                errors.append((where, str(exc)))
        interior = []
        for i, pt in enumerate(obj.get("interior", [])):
            try:
                x, y = pt
                interior.append((float(x), float(y)))
            except (TypeError, ValueError):
                errors.append((f"{path}.interior[{i}]", "expected [x, y]"))
        if errors:
            raise ValidationError(errors)
        return cls(tuple(boundary), tuple(interior))


# -- moduli and delta ---------------------------------------------------------


@dataclass(frozen=True)
class ModuliPlan:
    Q: int
    k: int
    denominators: tuple

    def candidates(self, N):
        out = [1 + (N + i) * self.Q for i in range(self.k + 1)]
        if out[-1] > INT64_MAX:
            raise DenominatorOverflow(f"candidate {out[-1]} exceeds 64-bit range")
        return out

    def coprime(self, N):
        return all(math.gcd(1 + N * self.Q, q) == 1 for q in self.denominators)


def build_moduli(blockers):
    """Q = product of reduced rational denominators, k = number of boundary blockers."""
    dens = tuple(r.q for r in blockers.rationals)
    Q = math.prod(dens)
    if Q > INT64_MAX:
        raise DenominatorOverflow(f"denominator product {Q} exceeds 64-bit range")
    return ModuliPlan(Q=Q, k=len(blockers.boundary), denominators=dens)


@dataclass(frozen=True)
class DeltaReport:
    delta: float
    witness: tuple | None  # (irrational value, Fraction)


def compute_delta(blockers, plan):
    """Distance from the irrational blockers to the fractions m/(jQ), j = 1..k."""
    best = math.inf
    witness = None
    for b in blockers.irrationals:
        for j in range(1, plan.k + 1):
            d = j * plan.Q
            m = min(max(round(b.value * d), 1), d - 1)
            for mm in (m - 1, m, m + 1):
                if 0 < mm < d:
                    dist = abs(b.value - mm / d)
                    if dist < best:
                        best, witness = dist, (b.value, Fraction(mm, d))
    return DeltaReport(best, witness)


def collision_bounds_check(delta, Q, N, C_hat):
    """Pigeonhole bounds: lower = delta Q^2 N / 2 against upper = 3 C_hat."""
    if not math.isfinite(delta):
        raise InfiniteDelta("no irrational blockers; coprimality alone gives the escape")
    lower = delta * Q * Q * N / 2.0
    upper = 3.0 * C_hat
    ratio = 6.0 * C_hat / (delta * Q * Q)
    return {
        "lower": lower,
        "upper": upper,
        "N_threshold": math.floor(ratio) + 1,
        "C_hat_is_empirical": True,
    }


# -- equidistribution ---------------------------------------------------------


@dataclass
class DeviationRow:
    n: int
    D_n: float
    n2Dn: float
    phi_max: float
    H_spread: float
    argmax_m: int
    error: str | None = None


@dataclass
class DeviationTable:
    rows: list
    slope: float | None
    phi_slope: float | None
    C_hat: float
    flag: str | None = None
    trajectories: dict = field(default_factory=dict, repr=False)

    def good_rows(self):
        return [r for r in self.rows if r.error is None]


def deviation(traj):
    n = traj.n
    dev = np.abs(traj.vertex_sigma[1:-1] - np.arange(1, n) / n)
    m = int(np.argmax(dev))
    return float(dev[m]), m + 1


def _fit_slope(ns, ys):
    if len(ns) < 2:
        return None
    return float(np.polyfit(np.log(ns), np.log(ys), 1)[0])


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def equidistribution_scan(curve, sm, n_list, threads=1, keep_trajectories=False):
    """Solve T_n for each n and measure the sigma-discrepancy D_n."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")

    def solve(n):
        try:
            return solve_min_polyline(curve, sm, n)
        except BilliardError as exc:
            return exc

    rows = []
    trajs = {}
    for n, traj in zip(n_list, _map(solve, n_list, threads)):
        if isinstance(traj, Exception):
            rows.append(DeviationRow(n, math.nan, math.nan, math.nan, math.nan, 0, repr(traj)))
            continue
        D, m = deviation(traj)
        H = hamiltonian_norm(curve, sm, traj.orbit_s, traj.orbit_phi)
        rows.append(
            DeviationRow(
                n=n,
                D_n=D,
                n2Dn=n * n * D,
                phi_max=float(np.max(np.abs(traj.phi_list))),
                H_spread=float((H.max() - H.min()) / H.mean()),
                argmax_m=m,
            )
        )
        if keep_trajectories:
            trajs[n] = traj
    good = [r for r in rows if r.error is None]
    flag = None
    if good and all(r.D_n <= NOISE_FLOOR for r in good):
        slope = None
        flag = "degenerate: at noise floor"
    else:
        slope = _fit_slope([r.n for r in good], [r.D_n for r in good])
    phi_slope = _fit_slope([r.n for r in good], [r.phi_max for r in good])
    C_hat = max((r.n2Dn for r in good), default=math.nan)
    return DeviationTable(rows, slope, phi_slope, C_hat, flag, trajs)


# -- escape certificates ------------------------------------------------------


@dataclass
class EscapeCertificate:
    N_used: int
    i_used: int
    n: int
    Q: int
    trajectory: object
    boundary_clearance: float
    interior_clearance: float
    eps_boundary: float
    eps_interior: float

    def to_json(self):
        t = self.trajectory
        return {
            "N_used": self.N_used,
            "i_used": self.i_used,
            "n": self.n,
            "Q": self.Q,
            "boundary_clearance": self.boundary_clearance,
            "interior_clearance": self.interior_clearance,
            "eps_boundary": self.eps_boundary,
            "eps_interior": self.eps_interior,
            "trajectory": t.to_json(),
        }

    @classmethod
    def from_json(cls, obj, curve, sm):
        t = obj["trajectory"]
        traj = make_trajectory(curve, sm, np.asarray(t["vertex_s"], dtype=float))
        return cls(
            N_used=int(obj["N_used"]),
            i_used=int(obj["i_used"]),
            n=int(obj["n"]),
            Q=int(obj["Q"]),
            trajectory=traj,
            boundary_clearance=float(obj["boundary_clearance"]),
            interior_clearance=float(obj["interior_clearance"]),
            eps_boundary=float(obj["eps_boundary"]),
            eps_interior=float(obj["eps_interior"]),
        )


def point_segment_distance(pts, a, b):
    """Distances from each row of ``pts`` to each segment (a[j], b[j]); shape (P, S)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    w = pts[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("psj,sj->ps", w, d) / dd, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * d[None, :, :]
    return np.hypot(*(pts[:, None, :] - proj).transpose(2, 0, 1))


def _clearances(curve, sm, blockers, vertex_s, vertex_sigma=None):
    if vertex_sigma is None:
        vertex_sigma = np.asarray(sm.sigma(vertex_s), dtype=float)
    inner = np.asarray(vertex_sigma)[1:-1]
    vals = blockers.boundary_values()
    bdist = np.abs(inner[None, :] - vals[:, None]) if vals.size else np.zeros((0, inner.size))
    if blockers.interior:
        p = curve.position_t(curve.t_of_s(np.asarray(vertex_s, dtype=float))).T
        idist = point_segment_distance(np.array(blockers.interior), p[:-1], p[1:])
    else:
        idist = np.zeros((0, len(vertex_s) - 1))
    return bdist, idist


def _min(a):
    return float(a.min()) if a.size else math.inf


def escape_search(
    curve,
    sm,
    blockers,
    N_start=1,
    N_max=50,
    eps_boundary=EPS_BOUNDARY,
    eps_interior=None,
    threads=1,
):
    """First (N, i) in lexicographic order whose T_{n_i} clears every blocker."""
    if N_max < N_start:
        raise ValueError("N_max must be >= N_start")
    if eps_interior is None:
        eps_interior = EPS_INTERIOR_REL * curve.diameter
    plan = build_moduli(blockers)
    best = -math.inf
    for N in range(N_start, N_max + 1):
        cands = [(i, n) for i, n in enumerate(plan.candidates(N)) if n >= 2]

        def attempt(item):
            i, n = item
            try:
                traj = solve_min_polyline(curve, sm, n)
            except BilliardError as exc:
                log.info("N=%d i=%d n=%d: solve failed: %s", N, i, n, exc)
                return None
            bdist, idist = _clearances(curve, sm, blockers, traj.vertex_s, traj.vertex_sigma)
            return traj, _min(bdist), _min(idist)

        for (i, n), res in zip(cands, _map(attempt, cands, threads)):
            if res is None:
                continue
            traj, bc, ic = res
            best = max(best, min(bc / eps_boundary, ic / eps_interior))
            log.debug("N=%d i=%d n=%d boundary=%.3g interior=%.3g", N, i, n, bc, ic)
            if bc > eps_boundary and ic > eps_interior:
                return EscapeCertificate(N, i, n, plan.Q, traj, bc, ic, eps_boundary, eps_interior)
    raise NotFound(f"no clear candidate for N in [{N_start}, {N_max}]", best_clearance=best)


@dataclass
class VerificationReport:
    passed: bool
    boundary_distances: list  # per blocker: min sigma-distance over interior vertices
    interior_distances: list  # per blocker: min distance to the polyline
    failing_boundary: list
    failing_interior: list
    vertex_distances: list = field(repr=False, default_factory=list)
    residual: float = 0.0

    def to_json(self):
        return {
            "passed": self.passed,
            "boundary_distances": self.boundary_distances,
            "interior_distances": self.interior_distances,
            "failing_boundary": self.failing_boundary,
            "failing_interior": self.failing_interior,
            "reflection_residual": self.residual,
        }


def verify_certificate(curve, sm, blockers, cert):
    """Recompute every clearance of ``cert`` from its vertex arc lengths alone."""
    vertex_s = np.asarray(cert.trajectory.vertex_s, dtype=float)
    if vertex_s.size != cert.n + 1:
        return VerificationReport(False, [], [], ["vertex count"], [])
    bdist, idist = _clearances(curve, sm, blockers, vertex_s)
    bmin = [float(r.min()) if r.size else math.inf for r in bdist]
    imin = [float(r.min()) for r in idist]
    fail_b = [j for j, d in enumerate(bmin) if not d > cert.eps_boundary]
    fail_i = [j for j, d in enumerate(imin) if not d > cert.eps_interior]

    residual = float(np.max(np.abs(length_gradient(curve, vertex_s)))) if cert.n >= 2 else 0.0
    report = VerificationReport(
        passed=not fail_b and not fail_i,
        boundary_distances=bmin,
        interior_distances=imin,
        failing_boundary=fail_b,
        failing_interior=fail_i,
        vertex_distances=bdist.tolist(),
        residual=residual,
    )
    if report.passed and residual > RESIDUAL_BOUND:
        raise StaleCertificate(
            f"reflection residual {residual:.3g} exceeds {RESIDUAL_BOUND}; not a billiard path"
        )
    return report
