import functools

import numpy as np
import pytest
from hypothesis import settings

from gsplab.hamiltonian import assemble, build_free_chain, build_tfim
from gsplab.spectral import diagonalize

settings.register_profile("lab", max_examples=25, deadline=None)
settings.load_profile("lab")

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def tfim_system(d, coupling=1.0, field=2.0):
    h = build_tfim(d, coupling, field)
    return h, diagonalize(assemble(h))


@functools.lru_cache(maxsize=None)
def free_system(d, field=1.0):
    h = build_free_chain(d, np.diag([0.0, field]))
    return h, diagonalize(assemble(h))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_matrix(rng, dim, hermitian=False):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (m + m.conj().T) / 2 if hermitian else m


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
