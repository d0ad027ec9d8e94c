import pytest

_RESULTS: dict[int, str] = {}


class Criterion:
    """Records one acceptance line; ``check`` prints it and then asserts."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title

    def check(self, ok: bool, detail: str = "") -> None:
        line = f"criterion {self.number:2d} {'PASS' if ok else 'FAIL'}  {self.title}" + (f"  [{detail}]" if detail else "")
        _RESULTS[self.number] = line
        print(line)
        assert ok, line


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[n])
