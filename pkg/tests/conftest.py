import pytest

from rdstatic.elliptic import build_census
from rdstatic.model import build_rate_table
from rdstatic.reaction import bd_polynomials, chafee_infante_params


@pytest.fixture(scope="session")
def ci12():
    return chafee_infante_params(1, 2)


@pytest.fixture(scope="session")
def rates12(ci12):
    return build_rate_table(ci12.rates)


@pytest.fixture(scope="session")
def poly12(rates12):
    return bd_polynomials(rates12)


@pytest.fixture(scope="session")
def poly112():
    return bd_polynomials(build_rate_table(chafee_infante_params(1, 12).rates))


@pytest.fixture(scope="session")
def poly_linear():
    return bd_polynomials(build_rate_table([1.0] * 8))


@pytest.fixture(scope="session")
def census12(poly12):
    return build_census(poly12)


@pytest.fixture(scope="session")
def census112(poly112):
    return build_census(poly112)


@pytest.fixture(scope="session")
def vmat12(poly12, census12):
    from rdstatic.quasipotential import v_matrix

    return v_matrix(census12, poly12, T_grid=(1.0, 2.0, 4.0, 8.0), m=16)


# one summary line per acceptance criterion, printed after the run
_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE[marker.args[0]] = (marker.args[1], rep.outcome, detail, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        name, outcome, detail, dur = _ACCEPTANCE[k]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {k:2d}. {name} ({dur:.1f} s) {detail}")

