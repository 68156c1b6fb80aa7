import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from sshbath.eigensolve import eigh
from sshbath.lattice import BathSpec, DisorderDraw, DisorderModel, build_bath, sample_disorder
from sshbath.transmission import (ComplexTridiagonalSystem, SingularSystemError, TransmissionCurve,
                                  TransmissionSpec, build_system, s21_squared, solve_tridiagonal,
                                  sweep_curve)


def random_system(rng, n):
    lower = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    upper = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    diag = rng.normal(size=n) + 1j * rng.normal(size=n)
    diag += 3 * np.sign(diag.real)  # keep the instance well conditioned
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    return ComplexTridiagonalSystem(lower, diag, upper, rhs)


def two_site_closed_form(kappa, gamma, j1, delta):
    # |S21|^2 = kappa^2 J^2 / |a^2 + J^2|^2 with a = -j delta - gamma/2 - kappa/2
    a = -1j * delta - gamma / 2 - kappa / 2
    return kappa**2 * j1**2 / abs(a * a + j1**2) ** 2


def test_two_site_system_entries():
    spec = BathSpec(2, 0.0, 0.7, 1.1)
    sys_ = build_system(spec, DisorderDraw.zeros(2), TransmissionSpec(0.4, 0.0, [0.0]), 0.0)
    np.testing.assert_allclose(sys_.diag, [-0.2, -0.2])
    np.testing.assert_allclose(sys_.upper, [0.7j])
    np.testing.assert_allclose(sys_.lower, [0.7j])
    np.testing.assert_allclose(sys_.rhs, [-1j * np.sqrt(0.4), 0])


def test_off_diagonal_alternation():
    sys_ = build_system(BathSpec(4, 0, 1.0, 2.0), DisorderDraw.zeros(4),
                        TransmissionSpec(0.4, 0.01, [0.0]), 0.0)
    np.testing.assert_allclose(sys_.upper, [1j, 2j, 1j])


def test_delta_shift_only_moves_diagonal():
    spec = BathSpec(6, 0, 1.0, 2.0)
    draw = DisorderDraw([0.1, 0, -0.3, 0.2, 0, 0.05])
    t = TransmissionSpec(0.4, 0.02, [0.0])
    a = build_system(spec, draw, t, 0.3)
    b = build_system(spec, draw, t, 0.3 + 1.7)
    np.testing.assert_allclose(b.diag - a.diag, -1.7j * np.ones(6), atol=1e-15)
    np.testing.assert_array_equal(a.upper, b.upper)
    np.testing.assert_array_equal(a.rhs, b.rhs)


def test_identity_like_solve():
    sys_ = ComplexTridiagonalSystem(np.zeros(1), np.ones(2, complex), np.zeros(1), np.array([-1j, 0]))
    np.testing.assert_allclose(solve_tridiagonal(sys_), [-1j, 0])


def test_thomas_matches_dense_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 33))
        s = random_system(rng, n)
        c = solve_tridiagonal(s)
        ref = np.linalg.solve(s.dense(), s.rhs)
        assert np.linalg.norm(c - ref) <= 1e-10 * np.linalg.norm(ref)
        A = s.dense()
        assert np.linalg.norm(A @ c - s.rhs) <= 1e-10 * (np.linalg.norm(A) * np.linalg.norm(c)
                                                         + np.linalg.norm(s.rhs))


def test_zero_pivot_uses_dense_fallback():
    # first pivot is exactly zero: Thomas alone would divide by zero
    s = ComplexTridiagonalSystem(np.array([1.0 + 0j]), np.array([0j, 1.0 + 0j]),
                                 np.array([1.0 + 0j]), np.array([1.0 + 0j, 2.0 + 0j]))
    np.testing.assert_allclose(solve_tridiagonal(s), np.linalg.solve(s.dense(), s.rhs))


def test_lossless_resonance_is_singular():
    spec = BathSpec(4, 0.0, 1.0, 2.0)
    ev = eigh(build_bath(spec)).eigenvalues[0]
    n = spec.n_sites
    off = np.array([1j, 2j, 1j])
    s = ComplexTridiagonalSystem(off, 1j * (0 - ev) * np.ones(n), off, np.r_[-1j, 0, 0, 0])
    with pytest.raises(SingularSystemError):
        solve_tridiagonal(s)


def test_perfect_transmission_two_sites():
    kappa = 0.8
    spec = BathSpec(2, 0.0, kappa / 2, 1.0)
    t = TransmissionSpec(kappa, 0.0, [0.0])
    assert s21_squared(spec, DisorderDraw.zeros(2), t, 0.0) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(kappa=st.floats(0.01, 5), gamma=st.floats(0, 1), j1=st.floats(0.01, 5), delta=st.floats(-10, 10))
def test_two_site_closed_form(kappa, gamma, j1, delta):
    spec = BathSpec(2, 0.0, j1, 1.0)
    val = s21_squared(spec, DisorderDraw.zeros(2), TransmissionSpec(kappa, gamma, [0.0]), delta)
    assert val == pytest.approx(two_site_closed_form(kappa, gamma, j1, delta), rel=1e-10, abs=1e-300)


def test_far_off_resonance_suppressed():
    spec = BathSpec(8, 0.0, 1.0, 2.0)
    t = TransmissionSpec(0.6, 0.006, [0.0])
    far = 1e3 * (1 + 2 + 0.6 + 0.006)
    for d in (-far, far):
        assert s21_squared(spec, DisorderDraw.zeros(8), t, d) <= 1e-5


def test_trivial_eight_site_peaks_and_gap(device_trivial8):
    spec = device_trivial8
    curve = sweep_curve(spec, None, TransmissionSpec.default(spec))
    idx, _ = find_peaks(curve.s21_sq)
    assert idx.size == 8
    peaks = curve.delta_grid[idx]
    inner = peaks[(peaks > -100) & (peaks < 100)]
    # the central dip spans the innermost modes, of order the band gap 2|J1-J2|
    assert inner.size == 2 and inner[1] - inner[0] > 2 * abs(spec.j1 - spec.j2)
    mid = np.abs(curve.delta_grid) < 0.5 * abs(spec.j1 - spec.j2)
    assert curve.s21_sq[mid].max() < 0.05 * curve.s21_sq.max()


def test_topological_eight_site_edge_peaks():
    spec = BathSpec(8, 0.0, 122.0, 163.0)
    curve = sweep_curve(spec, None, TransmissionSpec.default(spec))
    idx, _ = find_peaks(curve.s21_sq)
    peaks = curve.delta_grid[idx]
    half = abs(spec.j1 - spec.j2)
    assert np.count_nonzero(np.abs(peaks) < half) == 2


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        TransmissionSpec(0.4, 0.0, [])
    spec = BathSpec(4, 0, 1, 2)
    with pytest.raises(ValueError):
        sweep_curve(spec, None, TransmissionSpec(0.4, 0.0, [0.0]), grid=np.array([]))


def test_clean_curve_mirror_symmetric():
    spec = BathSpec(8, 0.0, 1.0, 1.6)
    t = TransmissionSpec(0.5, 0.0, np.linspace(-4, 4, 801))
    s = sweep_curve(spec, None, t).s21_sq
    np.testing.assert_allclose(s, s[::-1], atol=1e-9)


def test_sweep_matches_pointwise():
    spec = BathSpec(6, 0.0, 1.0, 1.6)
    draw = sample_disorder(DisorderModel(0.3, 1), 6, 0)
    t = TransmissionSpec(0.5, 0.01, np.linspace(-4, 4, 41))
    batch = sweep_curve(spec, draw, t).s21_sq
    point = [s21_squared(spec, draw, t, d) for d in t.delta_grid]
    np.testing.assert_allclose(batch, point, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 16), seed=st.integers(0, 1000), delta=st.floats(-4, 4))
def test_reciprocity(n, seed, delta):
    spec = BathSpec(n, 0.0, 1.0, 1.7)
    draw = sample_disorder(DisorderModel(0.4, seed), n, 0)
    t = TransmissionSpec(0.5, 0.02, [0.0])
    s = build_system(spec, draw, t, delta)
    A = s.dense()
    back = np.zeros(n, complex)
    back[-1] = -1j * np.sqrt(t.kappa)
    c_rev = np.linalg.solve(A, back)
    forward = s21_squared(spec, draw, t, delta)
    assert t.kappa * abs(c_rev[0]) ** 2 == pytest.approx(forward, rel=1e-10, abs=1e-300)


def test_loss_never_increases_transmission():
    spec = BathSpec(8, 0.0, 1.0, 1.5)
    grid = np.linspace(-3, 3, 601)
    prev = None
    for gamma in [0.0, 0.001, 0.01, 0.05, 0.2, 1.0]:
        s = sweep_curve(spec, None, TransmissionSpec(0.5, gamma, grid)).s21_sq
        if prev is not None:
            assert np.all(s <= prev * (1 + 1e-12) + 1e-300)
        prev = s


@pytest.mark.parametrize("phase", [(1.0, 2.0), (2.0, 1.0)])
def test_lossless_transmission_bounded(phase):
    spec = BathSpec(8, 0.0, *phase)
    t = TransmissionSpec(0.6, 0.0, np.linspace(-4, 4, 20001))
    assert sweep_curve(spec, None, t).s21_sq.max() <= 1 + 1e-6


def test_curve_csv_json_round_trip():
    spec = BathSpec(8, 0.0, 1.0, 1.5)
    c = sweep_curve(spec, sample_disorder(DisorderModel(0.2, 4), 8, 0),
                    TransmissionSpec(0.5, 0.01, np.linspace(-3, 3, 301)))
    text = c.to_csv()
    assert text.splitlines()[0] == "delta_ghz,s21_sq"
    back = TransmissionCurve.from_csv(text)
    assert back.delta_grid.tobytes() == c.delta_grid.tobytes()
    assert back.s21_sq.tobytes() == c.s21_sq.tobytes()
    assert back.to_csv() == text
    j = TransmissionCurve.from_json(c.to_json())
    assert j.s21_sq.tobytes() == c.s21_sq.tobytes()
