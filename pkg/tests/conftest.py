import pytest

from billiard_lab import ArcSpec, CurveSpec, build_sigma, make_curve

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def unit_circle():
    return make_curve(CurveSpec.circle(1.0))


@pytest.fixture(scope="session")
def ellipse():
    return make_curve(CurveSpec.ellipse(2.0, 1.0))


@pytest.fixture(scope="session")
def circle_arc_sigma(unit_circle):
    return build_sigma(unit_circle, ArcSpec(0.0, 1.0))


@pytest.fixture(scope="session")
def quarter_sigma(ellipse):
    return build_sigma(ellipse, ArcSpec.quarter(ellipse))


@pytest.fixture
def record():
    def _record(label, passed, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
