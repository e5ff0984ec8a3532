import pytest

from relquantiles import kernels

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per criterion; printed in the terminal summary."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}"
        if detail:
            line += f" -- {detail}"
        print(line)
        request.config.stash[ACCEPTANCE].append(line)
        return passed

    return record


@pytest.fixture(params=["numba", "numpy"] if kernels.HAVE_NUMBA else ["numpy"])
def kernel(request):
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)
