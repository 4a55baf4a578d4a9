import pytest

from pooldispatch.core import Assignment, bundled_exemplar_instance

_checklist: list[str] = []


@pytest.fixture
def checklist():
    """Recorder for one-line guarantees echoed after the run summary."""
    return _checklist.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _checklist:
        terminalreporter.section("acceptance checklist")
        for line in _checklist:
            terminalreporter.write_line(line)


@pytest.fixture
def exemplar():
    return bundled_exemplar_instance()


@pytest.fixture
def exemplar_solution():
    # the worked solution shipped with the exemplar instance: objective 24.36
    return Assignment(x_pairs={(0, 1), (1, 0)}, z_pairs={(1, 2)})
