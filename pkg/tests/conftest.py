"""Shared test helpers: hand-eliminated oracles and convergence classifiers."""

import numpy as np

_ACCEPTANCE_OUTCOMES = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance.py::test_criterion_" in report.nodeid:
        _ACCEPTANCE_OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    if not _ACCEPTANCE_OUTCOMES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE_OUTCOMES):
        name = nodeid.split("::")[-1].replace("test_criterion_", "")
        label = name.replace("_", " ")
        verdict = "PASS" if _ACCEPTANCE_OUTCOMES[nodeid] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {label}: {verdict}")


def particle_oracle(q0, q1):
    """Independent elimination of the particle step (solved by hand from the
    three difference/constraint equations, no solver machinery)."""
    x0, y0, z0 = q0
    x1, y1, z1 = q1
    y2 = 2 * y1 - y0
    a = 2 * x1 - x0 + y1 * (2 * z1 - z0)
    mu = 0.5 * (y2 + y1)
    x2 = (a - y1 * z1 + y1 * mu * x1) / (1 + y1 * mu)
    z2 = z1 + mu * (x2 - x1)
    return np.array([x2, y2, z2])


def newton_tail_is_quadratic(history, floor=1e-14):
    """Classify the tail of a Newton residual history as quadratic.

    For quadratic contraction the per-transition constants C_i = r_{i+1}/r_i^2
    stay within a factor that is tiny on the scale of the overall drop in r,
    and the log-log slope between consecutive residuals is near 2.  Linear
    contraction fails both measures by a wide margin.  Entries at the roundoff
    floor are discarded; histories too short to classify pass (a solve that
    lands in one shot is not evidence of slow convergence).
    """
    rs = [float(r) for r in history if r > floor]
    if len(rs) < 3:
        return True
    rs = rs[-3:]
    c1 = rs[1] / rs[0] ** 2
    c2 = rs[2] / rs[1] ** 2
    spread = abs(np.log(c2 / c1)) / abs(np.log(rs[2] / rs[0]))
    slope = np.log(rs[2] / rs[1]) / np.log(rs[1] / rs[0])
    return spread < 0.2 and slope >= 1.5
