"""Acceptance criteria, one PASS/FAIL line each (printed in the terminal summary).

Two criteria are expected to fail because their stated targets disagree with
the exact geometry; the tests still assert the stated thresholds.
"""

import json
import math
import time

import numpy as np
import pytest

from billiard_lab import (
    ArcSpec,
    BlockerSet,
    Irrational,
    PhasePoint,
    Rational,
    brute_force_min,
    build_moduli,
    build_sigma,
    compute_delta,
    equidistribution_scan,
    escape_search,
    next_collision,
    shift_consistency,
    solve_min_polyline,
    symplectic_check,
    verify_certificate,
)
from billiard_lab.cli import parse_config, run_experiment

SCAN_N = [8, 16, 32, 64, 128, 256]
SQRT2_2 = 0.7071067811865475


@pytest.fixture(scope="module")
def scan(ellipse, quarter_sigma):
    t0 = time.perf_counter()
    table = equidistribution_scan(ellipse, quarter_sigma, SCAN_N)
    return table, time.perf_counter() - t0


def _ratio(vals):
    return max(vals) / min(vals)


def test_c01_circle_closed_form(unit_circle, record):
    rng = np.random.default_rng(1)
    s = rng.uniform(0, 2 * math.pi, 1000)
    phi = rng.uniform(1e-3, math.pi - 1e-3, 1000)
    t0 = time.perf_counter()
    worst = 0.0
    for si, pi in zip(s, phi):
        y = next_collision(unit_circle, PhasePoint(si, pi))
        ds = (y.s - (si + 2 * pi)) % (2 * math.pi)
        worst = max(worst, min(ds, 2 * math.pi - ds), abs(y.phi - pi))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 1.0
    record("1 circle closed form", ok, f"max err {worst:.3g} (tol 1e-10), {dt:.2f} s (< 1 s)")
    assert ok


def test_c02_symplectic(ellipse, record):
    rng = np.random.default_rng(2)
    h = 1e-5
    t0 = time.perf_counter()
    devs = []
    while len(devs) < 100:
        x = PhasePoint(rng.uniform(0, ellipse.total_length), rng.uniform(0.05, math.pi - 0.05))
        devs.append(abs(symplectic_check(ellipse, x, h) - 1.0))
    dt = time.perf_counter() - t0
    worst = max(devs)
    ok = worst <= 1e-4 and dt < 5.0
    record("2 symplecticity", ok, f"max |det-1| {worst:.3g} (tol 1e-4), {dt:.2f} s (< 5 s)")
    assert ok


def test_c03_deviation_rate(scan, record):
    table, dt = scan
    good = {r.n: r for r in table.good_rows()}
    ratio = _ratio([good[n].n2Dn for n in SCAN_N if n >= 32])
    ok = len(good) == len(SCAN_N) and -2.3 <= table.slope <= -1.7 and ratio < 10 and dt < 60
    record(
        "3 D_n rate",
        ok,
        f"slope {table.slope:.5f} in [-2.3, -1.7], n^2 D_n ratio {ratio:.4f} (< 10), {dt:.1f} s (< 60 s)",
    )
    assert ok


def test_c04_angle_rate(scan, record):
    table, _ = scan
    ok = -1.15 <= table.phi_slope <= -0.85
    record("4 phi_max rate", ok, f"slope {table.phi_slope:.5f} in [-1.15, -0.85]")
    assert ok


def test_c05_hamiltonian_spread(scan, record):
    table, _ = scan
    vals = [r.n**2 * r.H_spread for r in table.good_rows() if r.n >= 32]
    ratio = _ratio(vals)
    ok = ratio < 10
    record("5 H spread", ok, f"n^2 spread in [{min(vals):.4f}, {max(vals):.4f}], ratio {ratio:.4f} (< 10)")
    assert ok


def test_c06a_shift_circle(unit_circle, circle_arc_sigma, record):
    worst = 0.0
    for n in range(2, 257):
        traj = solve_min_polyline(unit_circle, circle_arc_sigma, n)
        worst = max(worst, shift_consistency(unit_circle, circle_arc_sigma, traj)["max_sqrtH_dev"])
    ok = worst <= 1e-9
    record("6a shift relation, circle n<=256", ok, f"max |dsigma - sqrt(H)| {worst:.3g} (tol 1e-9)")
    assert ok


def test_c06b_shift_ellipse(ellipse, quarter_sigma, record):
    d = {}
    for n in (16, 32):
        traj = solve_min_polyline(ellipse, quarter_sigma, n)
        d[n] = shift_consistency(ellipse, quarter_sigma, traj)["max_dsigma_dev"]
    factor = d[16] / d[32]
    ok = 3.0 <= factor <= 5.5
    record(
        "6b shift relation, ellipse 16->32",
        ok,
        f"max |dsigma - 1/n| {d[16]:.4g} -> {d[32]:.4g}, factor {factor:.3f} (want [3, 5.5]; "
        "the deviation decays like 1/n^3, so the factor is near 8)",
    )
    assert ok


def test_c07_oracle_equivalence(unit_circle, ellipse, record):
    t0 = time.perf_counter()
    cases = [("circle", unit_circle, ArcSpec(0.0, 1.0)), ("ellipse", ellipse, ArcSpec.quarter(ellipse))]
    ok = True
    parts = []
    for name, curve, arc in cases:
        sm = build_sigma(curve, arc)
        step = arc.length / 2000
        for n in (2, 3):
            b = brute_force_min(curve, arc, n, 2001)
            t = solve_min_polyline(curve, sm, n)
            gap = t.total_length - b.total_length
            vdev = float(np.max(np.abs(t.vertex_s - b.vertex_s)))
            # the critical polyline is the length maximum: exhaustive search may
            # not beat it, and it may beat the grid by the discretization error
            ok &= gap >= -1e-8 and vdev <= step
            parts.append(f"{name} n={n} solver-brute {gap:.2g}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    record("7 oracle equivalence", ok, "; ".join(parts) + f" (solver >= brute - 1e-8, vertices within a grid step), {dt:.1f} s")
    assert ok


def test_c08a_escape_circle_single(unit_circle, circle_arc_sigma, record):
    cert = escape_search(unit_circle, circle_arc_sigma, BlockerSet((Rational(1, 2),)))
    ok = cert.n == 3 and abs(cert.boundary_clearance - 1 / 6) <= 1e-9
    record("8a escape circle {1/2}", ok, f"n={cert.n}, clearance {cert.boundary_clearance:.12f} (1/6 +- 1e-9)")
    assert ok


def test_c08b_escape_circle_pair(unit_circle, circle_arc_sigma, record):
    cert = escape_search(unit_circle, circle_arc_sigma, BlockerSet((Rational(1, 2), Rational(2, 3))))
    ok = cert.n == 7 and cert.boundary_clearance >= 1 / 14 - 1e-9
    record(
        "8b escape circle {1/2, 2/3}",
        ok,
        f"n={cert.n}, clearance {cert.boundary_clearance:.12f} (want >= 1/14; "
        "vertex 5/7 is 1/21 from 2/3)",
    )
    assert ok


def _ellipse_blockers():
    return BlockerSet((Rational(1, 2), Rational(2, 3), Irrational(SQRT2_2)), ((0.5, 0.25),))


def test_c09_escape_ellipse(ellipse, quarter_sigma, record):
    t0 = time.perf_counter()
    b = _ellipse_blockers()
    cert = escape_search(ellipse, quarter_sigma, b, N_max=50)
    report = verify_certificate(ellipse, quarter_sigma, b, cert)
    delta = compute_delta(b, build_moduli(b))
    dt = time.perf_counter() - t0
    ok = (
        report.passed
        and abs(delta.delta - 0.0151154) <= 1e-6
        and delta.witness[1] == delta.witness[1].__class__(13, 18)
        and dt < 60
    )
    record(
        "9 escape ellipse",
        ok,
        f"N={cert.N_used} n={cert.n} verified={report.passed}, delta {delta.delta:.7f} "
        f"witness {delta.witness[1]}, {dt:.2f} s (< 60 s)",
    )
    assert ok


ESCAPE_CONFIG = {
    "curve": {"kind": "ellipse", "a": 2.0, "b": 1.0},
    "arc": {"quarter": True},
    "escape": {
        "blockers": {
            "boundary": [{"rational": [1, 2]}, {"rational": [2, 3]}, {"irrational": SQRT2_2}],
            "interior": [[0.5, 0.25]],
        },
        "N_max": 50,
    },
}


def test_c10_determinism(tmp_path, record):
    cfg = parse_config(json.dumps(ESCAPE_CONFIG))
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "certificate.json").read_bytes()
    b = (tmp_path / "b" / "certificate.json").read_bytes()
    ok = a == b
    record("10 determinism", ok, f"certificate.json identical across runs ({len(a)} bytes)")
    assert ok
