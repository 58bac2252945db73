import numpy as np
import pytest

from rvescope.generate import GeneratorSpec, generate

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def disks256():
    return generate(GeneratorSpec(target_vf=0.10, particle_radius=6, seed=42), 256, 256)


@pytest.fixture(scope="session")
def disks512():
    return generate(GeneratorSpec(target_vf=0.10, particle_radius=6, seed=42), 512, 512)


@pytest.fixture
def acceptance_log():
    def record(criterion, passed, detail):
        line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda t: int(t.split()[1].rstrip(':'))):
            terminalreporter.write_line(line)
