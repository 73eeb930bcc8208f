import numpy as np
import pytest

from ietscope import POC_DISPATCHER, SECOND_DISPATCHER, ScenarioSpec, build_threshold_table, simulate_batch


@pytest.fixture(scope="session")
def no_hv_spec():
    return ScenarioSpec()


@pytest.fixture(scope="session")
def hv_spec(no_hv_spec):
    return no_hv_spec.with_dispatchers(POC_DISPATCHER).cheating_against(no_hv_spec)


@pytest.fixture(scope="session")
def nested_spec(no_hv_spec):
    return no_hv_spec.with_dispatchers(POC_DISPATCHER, SECOND_DISPATCHER).cheating_against(no_hv_spec)


@pytest.fixture(scope="session")
def calibration_batches(no_hv_spec, hv_spec):
    return (
        simulate_batch(no_hv_spec, days=10, repeats=5, base_seed=100, label="no_hv"),
        simulate_batch(hv_spec, days=10, repeats=5, base_seed=100, label="one_hv"),
    )


@pytest.fixture(scope="session")
def calibrated_table(calibration_batches):
    return build_threshold_table(*calibration_batches)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ---------------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")
    config._acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    report = outcome.get_result()
    number, title = marker.args
    results = item.config._acceptance_results
    if report.when == "call" or (report.when == "setup" and report.failed):
        results[number] = (title, "PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, duration = results[number]
        terminalreporter.write_line(f"AC{number:02d} {status}  {title}  ({duration:.2f} s)")
