import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SMALL_CONFIG = """\
seed: 3
generator:
  preset: none
  start: "2024-01-29 00:00:00+0000"
  end: "2024-02-01 00:00:00+0000"
  locations: 1
  hosts: 2
  endpoints: 3
  anomaly_specs:
    - {start: "2024-01-31 10:00:00+0000", end: "2024-01-31 12:00:00+0000", locations: [datacenter1]}
split:
  train: "2024-01-29 00:00:00+0000..2024-01-31 00:00:00+0000"
  test: "2024-01-31 00:00:00+0000..2024-02-01 00:00:00+0000"
detector:
  kind: gru
  train: {epochs: 3}
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL_CONFIG)
    return p


_results: dict[int, tuple[str, list[str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    _, outcomes = _results.setdefault(number, (title, []))
    outcomes.append("PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, outcomes = _results[number]
        status = "PASS" if outcomes and all(o == "PASS" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number}: {title}")
