import os

os.environ.setdefault("NEUTRALYZE_DEVICE", "cpu")

import torch  # noqa: E402
from hypothesis import settings  # noqa: E402

settings.register_profile("neutralyze", deadline=None, max_examples=50)
settings.load_profile("neutralyze")
torch.set_num_threads(1)


_DURATIONS: dict[str, float] = {}


def pytest_runtest_logreport(report):
    # fixture setup (e.g. the smoke pipeline) counts toward a criterion's time
    if report.when in ("setup", "call"):
        _DURATIONS[report.nodeid] = _DURATIONS.get(report.nodeid, 0.0) + report.duration


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in file order."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            label = dict(getattr(rep, "user_properties", ())).get("acceptance")
            if label:
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((rep.location[1], f"{status}  {label}  ({_DURATIONS.get(rep.nodeid, rep.duration):.1f}s)"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
