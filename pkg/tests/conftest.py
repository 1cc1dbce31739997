import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    entry = _criteria.setdefault(key, {"title": props.get("title", ""), "outcomes": [], "details": []})
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)
        if props.get("detail") and report.when == "call":
            entry["details"].append(props["detail"])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: (int(k[0]), k)):
        entry = _criteria[key]
        verdict = "PASS" if entry["outcomes"] and all(o == "passed" for o in entry["outcomes"]) else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"[{verdict}] criterion {key}: {entry['title']}" + (f" ({detail})" if detail else ""))


@pytest.fixture
def criterion(request, record_property):
    marker = request.node.get_closest_marker("criterion")
    record_property("criterion", str(marker.args[0]))
    record_property("title", marker.args[1])

    def detail(text):
        record_property("detail", text)

    return detail
