import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stresscal.dataio import FeatureTable

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_table(X, labels, subjects=None, targets=None, label_set=None, task="classification", names=None):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    return FeatureTable(
        subject_ids=np.asarray(subjects if subjects is not None else ["S1"] * n, dtype=object),
        labels=np.asarray(labels, dtype=object),
        targets=np.asarray(targets if targets is not None else np.zeros(n), dtype=float),
        X=X,
        feature_names=list(names) if names is not None else [f"f{j}" for j in range(X.shape[1])],
        label_set=label_set,
        task_kind=task,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting ---------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        number, title = marker.args
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        details = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        if report.skipped and isinstance(report.longrepr, tuple):
            details = report.longrepr[2].removeprefix("Skipped: ")
        line = f"criterion {number:>2} {status}  {title}" + (f": {details}" if details else "")
        ACCEPTANCE_LINES.append(line)
        print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
