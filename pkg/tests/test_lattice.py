import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sshbath.lattice import (BathConfig, BathSpec, DimensionError, DisorderDraw, DisorderModel,
                             EmitterSpec, band_gap, bloch_hamiltonian, build_bath, couple_emitter,
                             dispersion, eta, sample_disorder)

rates = st.floats(0.05, 20.0)


def test_smallest_lattice():
    H = build_bath(BathSpec(2, 0.0, 1.0, 2.0))
    assert np.array_equal(H.entries, [[0, 1], [1, 0]])
    assert H.structure == "tridiagonal"


def test_alternating_hoppings():
    H = build_bath(BathSpec(4, 5.0, 1.0, 2.0)).entries
    assert np.all(np.diag(H) == 5.0)
    assert list(np.diag(H, 1)) == [1.0, 2.0, 1.0]
    assert np.count_nonzero(np.triu(H, 2)) == 0


def test_disorder_only_touches_diagonal():
    spec = BathSpec(4, 5.0, 1.0, 2.0)
    H = build_bath(spec, DisorderDraw([0.1, -0.2, 0.0, 0.3])).entries
    np.testing.assert_allclose(np.diag(H), [5.1, 4.8, 5.0, 5.3])
    assert list(np.diag(H, 1)) == [1.0, 2.0, 1.0]


def test_draw_length_mismatch():
    with pytest.raises(DimensionError):
        build_bath(BathSpec(4, 0.0, 1.0, 2.0), DisorderDraw([0.1, 0.2]))


def test_zero_draw_is_bit_identical():
    spec = BathSpec(7, 3.0, 1.3, 0.7)
    a = build_bath(spec).entries
    b = build_bath(spec, DisorderDraw.zeros(7)).entries
    assert a.tobytes() == b.tobytes()


def test_phase_is_derived():
    assert BathSpec(4, 0, 2, 1).phase == "trivial"
    assert BathSpec(4, 0, 1, 2).phase == "topological"


@pytest.mark.parametrize("kwargs", [dict(n_sites=1, omega0=0, j1=1, j2=1),
                                    dict(n_sites=4, omega0=0, j1=0, j2=1),
                                    dict(n_sites=4, omega0=0, j1=1, j2=-1)])
def test_invalid_bath(kwargs):
    with pytest.raises(ValueError):
        BathSpec(**kwargs)


def test_couple_emitter_definition():
    spec = BathSpec(2, 0.0, 1.0, 2.0)
    H = couple_emitter(build_bath(spec), spec, EmitterSpec(site=1, g=0.3))
    np.testing.assert_array_equal(H.entries, [[0, 1, 0.3], [1, 0, 0], [0.3, 0, 0]])
    assert H.structure == "tridiagonal-plus-one-spur"


def test_emitter_coupling_and_detuning():
    spec = BathSpec(6, 4.0, 1.0, 2.0)
    g = (spec.j1 + spec.j2) / 10
    H = couple_emitter(build_bath(spec), spec, EmitterSpec(site=3, g=g)).entries
    assert H[6, 2] == H[2, 6] == pytest.approx(0.3)
    assert H[6, 6] == spec.omega0
    np.testing.assert_array_equal(H[:6, :6], build_bath(spec).entries)


def test_emitter_site_out_of_range():
    spec = BathSpec(4, 0.0, 1.0, 2.0)
    with pytest.raises(IndexError):
        couple_emitter(build_bath(spec), spec, EmitterSpec(site=5, g=0.1))
    with pytest.raises(IndexError):
        EmitterSpec(site=0, g=0.1)


@pytest.mark.parametrize("k, expected", [(0.0, (-3.0, 3.0)), (np.pi, (-1.0, 1.0))])
def test_dispersion_closed_form(k, expected):
    lo, hi = dispersion(BathSpec(2, 0.0, 1.0, 2.0), k)
    assert (lo, hi) == pytest.approx(expected, abs=1e-14)


def test_dispersion_gapless_point():
    lo, hi = dispersion(BathSpec(2, 0.0, 1.0, 1.0), np.pi)
    assert lo == pytest.approx(0, abs=1e-7) and hi == pytest.approx(0, abs=1e-7)


def test_band_gap():
    assert band_gap(BathSpec(2, 0, 163.0, 122.0)) == pytest.approx(82.0)
    assert band_gap(BathSpec(2, 0, 1.5, 1.5)) == 0.0


def test_bloch_hamiltonian_special_points():
    spec = BathSpec(2, 0.5, 1.0, 2.0)
    np.testing.assert_allclose(bloch_hamiltonian(spec, 0.0), [[0.5, 3], [3, 0.5]])
    assert bloch_hamiltonian(spec, np.pi)[0, 1] == pytest.approx(-1.0)
    w = np.linalg.eigvalsh(bloch_hamiltonian(BathSpec(2, 0, 1, 2), np.pi / 2))
    np.testing.assert_allclose(w, [-np.sqrt(5), np.sqrt(5)], rtol=1e-14)


@settings(max_examples=100, deadline=None)
@given(j1=rates, j2=rates, w0=st.floats(-50, 50), k=st.floats(-np.pi, np.pi))
def test_bloch_eigenvalues_match_dispersion(j1, j2, w0, k):
    spec = BathSpec(2, w0, j1, j2)
    w = np.linalg.eigvalsh(bloch_hamiltonian(spec, k))
    lo, hi = dispersion(spec, k)
    scale = abs(w0) + j1 + j2
    assert abs(w[0] - lo) <= 1e-12 * scale and abs(w[1] - hi) <= 1e-12 * scale
    assert lo <= hi


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 60), j1=rates, j2=rates, w0=st.floats(-100, 100))
def test_chiral_symmetry_clean(n, j1, j2, w0):
    spec = BathSpec(n, w0, j1, j2)
    H = build_bath(spec).entries - w0 * np.eye(n)
    gamma = np.diag([(-1) ** i for i in range(n)]).astype(float)
    assert np.array_equal(gamma @ H @ gamma, -H)


def test_sample_disorder_zero_sigma():
    d = sample_disorder(DisorderModel(0.0, 5), 10, 3)
    assert np.array_equal(d.deltas, np.zeros(10))


def test_sample_disorder_reproducible_and_distinct():
    m = DisorderModel(1.3, 2**63 + 11)
    a = sample_disorder(m, 12, 4)
    b = sample_disorder(m, 12, 4)
    c = sample_disorder(m, 12, 5)
    assert a.deltas.tobytes() == b.deltas.tobytes()
    assert not np.array_equal(a.deltas, c.deltas)


def test_sample_disorder_order_independent():
    m = DisorderModel(1.0, 42)
    forward = [sample_disorder(m, 5, i).deltas for i in range(20)]
    backward = [sample_disorder(m, 5, i).deltas for i in reversed(range(20))][::-1]
    assert all(np.array_equal(a, b) for a, b in zip(forward, backward))


def test_sample_disorder_moments():
    m = DisorderModel(1.0, 7)
    pooled = np.concatenate([sample_disorder(m, 100, i).deltas for i in range(1000)])
    assert pooled.size == 10**5
    assert abs(pooled.mean()) < 0.02
    assert abs(pooled.std() - 1) < 0.02


def test_eta_reference_values():
    spec = BathSpec(2, 0, 163.0, 122.0)
    assert eta(DisorderModel(70.68), spec) == pytest.approx(0.496, abs=0.005)
    assert eta(DisorderModel(8.02), spec) == pytest.approx(0.0563, abs=0.0005)
    assert eta(DisorderModel(0.0), spec) == 0.0


def test_config_json_round_trip():
    cfg = BathConfig(BathSpec(50, 0.0, 1.33, 1.0), DisorderModel(0.1, 9), EmitterSpec(25, 0.233))
    back = BathConfig.from_json(cfg.to_json())
    assert back.bath == cfg.bath and back.disorder == cfg.disorder and back.emitter == cfg.emitter
    assert set(json.loads(cfg.to_json())["bath"]) == {"n_sites", "omega0", "j1", "j2"}
