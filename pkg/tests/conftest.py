import numpy as np
import pytest

from sshbath.lattice import BathSpec


@pytest.fixture
def topo50():
    return BathSpec(50, 0.0, 1.0, 2.0)


@pytest.fixture
def device_trivial8():
    return BathSpec(8, 0.0, 163.0, 122.0)


def char_poly_roots(diag, off):
    """Eigenvalues of a symmetric tridiagonal matrix from its exact
    characteristic polynomial (continuant recurrence, evaluated in sympy)."""
    import sympy as sp

    lam = sp.symbols("lam")
    p_prev, p = sp.Integer(1), sp.nsimplify(diag[0]) - lam
    for k in range(1, len(diag)):
        p_prev, p = p, (sp.nsimplify(diag[k]) - lam) * p - sp.nsimplify(off[k - 1]) ** 2 * p_prev
    return np.array(sorted(float(r) for r in sp.Poly(p, lam).nroots(n=30)))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
