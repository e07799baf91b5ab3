import pytest

SMALL_CONFIG = """\
[general]
size = 32
[synth]
n_images = 12
width = 48
height = 48
overexposure_fraction = 0.3
[pso]
n_agents = 3
n_iters = 2
n_runs = 1
[enhance]
tune_images = 2
[train]
max_iters = 60
pixels_per_image = 256
tune_beta = false
weak_iters = 30
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL_CONFIG)
    return str(p)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then return the flag."""
    def record(label, ok, detail):
        line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
