import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wittenexit.potential import make_case

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SPLINE_KNOTS = [[0.0, 0.0], [0.5, 0.125], [1.0, 0.5], [1.5, 1.125], [2.0, 2.0]]

# (name, params) for every catalog entry
CATALOG_CASES = [
    ("harmonic1d", {}),
    ("doublewell1d", {}),
    ("triplewell1d", {}),
    ("polynomial1d", {"coeffs": [0.0, 0.0, 1.0, 0.0, 0.5]}),
    ("flatbottom1d", {}),
    ("multiflat1d", {}),
    ("fig-ok-1d", {}),
    ("fig-notok-1d", {}),
    ("radial2d", {}),
    ("multiwell2d", {}),
    ("radialspline2d", {"knots": SPLINE_KNOTS}),
]
CASE_IDS = [c[0] for c in CATALOG_CASES]


@pytest.fixture(params=CATALOG_CASES, ids=CASE_IDS)
def catalog_case(request):
    name, params = request.param
    f, pair = make_case(name, params)
    return name, f, pair


def random_points(pair, n, rng):
    lo, hi = pair.plus.bbox
    pts = rng.uniform(lo, hi, size=(4 * n, pair.dim))
    inside = pair.plus.inside(pts if pair.dim == 2 else pts[:, 0])
    return pts[np.asarray(inside)][:n]


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
