"""Shared pytest wiring: a terminal summary listing one PASS/FAIL line
per acceptance criterion after the run."""

import re

_CRITERIA = {
    1: "privacy floor on every acceptance ratio (Laplace, eps in {1,2,5})",
    2: "pseudo-marginal estimate is unbiased (closed form and quadrature)",
    3: "noise-convolved kernel matches numerical marginalization",
    4: "collapsed cluster evidence matches conjugate and quadrature oracles",
    5: "all four samplers reproduce the exact n=3 partition posterior",
    6: "posterior mean densities agree across applicable samplers",
    7: "information trend: Hellinger to truth non-increasing in epsilon",
    8: "effective-sample-size ordering of the collapsed and private samplers",
    9: "noise calibration constants",
    10: "histogram release: incremental likelihood and smoothing calibration",
    11: "diagnostics oracles (Hellinger, ESS, ARI)",
}

_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results = {}


def pytest_runtest_logreport(report):
    match = _PATTERN.search(report.nodeid)
    if not match:
        return
    number = int(match.group(1))
    if report.when == "call":
        _results[number] = (report.outcome, report.duration)
    elif report.when == "setup" and report.outcome != "passed":
        _results[number] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        label = _CRITERIA[number]
        if number in _results:
            outcome, duration = _results[number]
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(
                outcome, outcome.upper()
            )
            line = f"criterion {number:>2}: {status}  ({duration:7.1f}s)  {label}"
        else:
            line = f"criterion {number:>2}: NOT RUN          {label}"
        markup = {"green": True} if "PASS" in line else {"red": True}
        terminalreporter.write_line(line, **markup)
