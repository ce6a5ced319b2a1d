import math

import numpy as np
import pytest

from contrastbands.coeff import ContrastField, ContrastProfile, Lattice, Mirrored, Periodic, XDefect

LATTICE = Lattice(0.7, 0.5)


@pytest.fixture
def lattice():
    return LATTICE


def periodic(eps=0.04, gamma=0.75, homogeneous=False):
    return ContrastField(LATTICE, ContrastProfile(eps, gamma), Periodic(), homogeneous)


def mirrored(eps=0.04, h=0.35):
    return ContrastField(LATTICE, ContrastProfile(eps), Mirrored(h))


def xdefect(eps=0.04, h1=0.5, h2=0.45):
    return ContrastField(LATTICE, ContrastProfile(eps), XDefect(h1, h2))


def random_hermitian_pencil(n, seed=0, complex_=True):
    """Sparse-ish Hermitian K >= 0 and SPD M of size n."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    k = a @ a.conj().T / n
    b = rng.standard_normal((n, n)) * 0.1
    m = np.eye(n) + b @ b.T / n
    return k, m


PI = math.pi


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
