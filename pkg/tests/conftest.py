import random

import pytest

from anonpub.crypto import SchnorrGroup, default_group


@pytest.fixture
def toy_group():
    return SchnorrGroup(P=23, Q=11, g=4)


@pytest.fixture(scope="session")
def group256():
    return default_group(256)


@pytest.fixture
def rng():
    return random.Random(20240601)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])
    return lines


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s[6:10]):
            terminalreporter.write_line(line)
