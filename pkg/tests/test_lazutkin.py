import math

import numpy as np
import pytest

from billiard_lab import (
    ArcSpec,
    CurveSpec,
    PhasePoint,
    build_sigma,
    equipartition_points,
    hamiltonian_at,
    make_curve,
    shift_consistency,
    solve_min_polyline,
)

# Independent oracle: composite Simpson with 10^6 panels in the raw parameter
# of (1/2) k^(2/3) |gamma'(t)| for ellipse(2, 1), t in [0, pi/2]; interior
# equipartition points by bisection on 2*10^4-panel Simpson partial integrals.
ORACLE_S_TOT = 0.8558138018567043
ORACLE_SIGMA_AT_S_MID = 0.6889922779088223
ORACLE_Q8 = [
    0.13724835880858308,
    0.2897017649905318,
    0.4744132887085194,
    0.7110560275684598,
    1.019906023637734,
    1.4149713549320873,
    1.8925341891771048,
]


def test_circle_mass_and_affine_sigma(unit_circle, circle_arc_sigma):
    sm = circle_arc_sigma
    assert sm.total_mass == pytest.approx(0.5, abs=1e-13)
    s = np.linspace(0, 1, 101)
    np.testing.assert_allclose(sm.sigma(s), s, atol=1e-12)


@pytest.mark.parametrize("R, ell", [(2.0, 1.5), (0.5, 0.7)])
def test_circle_total_mass_formula(R, ell):
    c = make_curve(CurveSpec.circle(R))
    sm = build_sigma(c, ArcSpec(0.2, 0.2 + ell))
    assert sm.total_mass == pytest.approx(0.5 * R ** (-2 / 3) * ell, rel=1e-12)


def test_quarter_arc_against_simpson_oracle(ellipse, quarter_sigma):
    assert quarter_sigma.total_mass == pytest.approx(ORACLE_S_TOT, abs=1e-12)
    mid = ellipse.total_length / 8
    assert float(quarter_sigma.sigma(mid)) == pytest.approx(ORACLE_SIGMA_AT_S_MID, abs=1e-12)


def test_sigma_monotone_and_normalized(quarter_sigma):
    arc = quarter_sigma.arc
    s = np.linspace(arc.s_A, arc.s_B, 1001)
    sig = quarter_sigma.sigma(s)
    assert sig[0] == pytest.approx(0.0, abs=1e-15)
    assert sig[-1] == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(sig) > 0)
    np.testing.assert_allclose(quarter_sigma.s_of_sigma(sig), s, atol=1e-10 * arc.length)


def test_equipartition_circle(circle_arc_sigma):
    np.testing.assert_allclose(equipartition_points(circle_arc_sigma, 4), [0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)


def test_equipartition_midpoint(quarter_sigma):
    q = equipartition_points(quarter_sigma, 2)
    assert float(quarter_sigma.sigma(q[1])) == pytest.approx(0.5, abs=1e-10)


def test_equipartition_quarter_arc_oracle(quarter_sigma):
    q = equipartition_points(quarter_sigma, 8)
    assert np.all(np.diff(q) > 0)
    np.testing.assert_allclose(q[1:-1], ORACLE_Q8, atol=1e-10)
    np.testing.assert_allclose(quarter_sigma.sigma(q), np.arange(9) / 8, atol=1e-10)


def test_hamiltonian_values(unit_circle, circle_arc_sigma, ellipse, quarter_sigma):
    assert hamiltonian_at(unit_circle, circle_arc_sigma, PhasePoint(0.3, 0.1)).H_norm == pytest.approx(0.04, rel=1e-12)
    assert hamiltonian_at(unit_circle, circle_arc_sigma, PhasePoint(0.3, 0.0)).H_norm == 0.0
    h = hamiltonian_at(ellipse, quarter_sigma, PhasePoint(0.0, 0.1)).H_norm
    assert h == pytest.approx(2 ** (-2 / 3) * 0.01 / ORACLE_S_TOT**2, rel=1e-12)


@pytest.mark.parametrize("n", [2, 5, 16, 64])
def test_shift_consistency_exact_on_circle(unit_circle, circle_arc_sigma, n):
    traj = solve_min_polyline(unit_circle, circle_arc_sigma, n)
    rep = shift_consistency(unit_circle, circle_arc_sigma, traj)
    assert rep["n"] == n
    assert rep["max_dsigma_dev"] <= 1e-9
    assert rep["max_sqrtH_dev"] <= 1e-9
    assert rep["H_spread_rel"] <= 1e-9
    # phi = l / (2n) on the unit circle, so sqrt(H_norm) = phi / S_tot = 1/n
    np.testing.assert_allclose(traj.orbit_phi, 1 / (2 * n), atol=1e-12)


def test_two_chords_telescope(ellipse, quarter_sigma):
    traj = solve_min_polyline(ellipse, quarter_sigma, 2)
    assert np.sum(np.diff(traj.vertex_sigma)) == 1.0


def test_dsigma_deviation_shrinks_faster_than_quadratic(ellipse, quarter_sigma):
    devs = {n: shift_consistency(ellipse, quarter_sigma, solve_min_polyline(ellipse, quarter_sigma, n))["max_dsigma_dev"]
            for n in (32, 64, 128)}
    # measured: n^3 * dev settles near 0.2548
    for n, d in devs.items():
        assert n**3 * d == pytest.approx(0.2548, rel=0.01)


def test_hamiltonian_spread_scaling(ellipse, quarter_sigma):
    vals = []
    for n in (32, 64, 128, 256):
        rep = shift_consistency(ellipse, quarter_sigma, solve_min_polyline(ellipse, quarter_sigma, n))
        vals.append(rep["H_spread_rel"] * n * n)
    assert max(vals) / min(vals) < 10
