import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nvdephase.spinmodel import (CONSTANTS, PhysicalConstants, gap_expectation, gap_weights, spin_difference,
                                 spin_expectation, spin_matrices, zeeman_gap)

# tests/oracles/derive.py (CODATA 2018); scipy may ship a later edition, hence rel=1e-8
ZEEMAN_50G_MHZ = -140.124757121
LARMOR_1000G_HZ = 1070840.1910491676

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
tensors = arrays(np.float64, (3, 3), elements=finite).map(lambda m: (m + m.T) / 2)
pairs = st.sampled_from([(-1, 0), (1, 0), (0, -1), (0, 1), (1, -1), (-1, 1)])


def test_sz_is_diagonal():
    s = spin_matrices(1)
    np.testing.assert_array_equal(s.sz, np.diag([1, 0, -1]))
    assert s.basis == (1, 0, -1)
    assert s.qubit_pair == (-1, 0)


def test_commutators_and_casimir():
    s = spin_matrices()
    sx, sy, sz = s.operators
    for a, b, c in ((sx, sy, sz), (sy, sz, sx), (sz, sx, sy)):
        np.testing.assert_allclose(a @ b - b @ a, 1j * c, atol=1e-12)
    np.testing.assert_allclose(sx @ sx + sy @ sy + sz @ sz, 2 * np.eye(3), atol=1e-12)


def test_sx_squared_in_m0():
    # ladder-operator construction in tests/oracles/derive.py gives exactly 1
    s = spin_matrices()
    v = s.state(0)
    assert np.real(v.conj() @ s.sx @ s.sx @ v) == pytest.approx(1.0, abs=1e-15)


def test_unsupported_spin_rejected():
    with pytest.raises(ValueError, match="s = 0.5"):
        spin_matrices(0.5)


@pytest.mark.parametrize("pair", [(0, 0), (2, 0), (1, 1)])
def test_invalid_pair_rejected(pair):
    with pytest.raises(ValueError, match="qubit_pair"):
        spin_matrices(qubit_pair=pair)


def test_gap_of_zero_and_identity():
    assert gap_expectation(np.zeros((3, 3))) == 0.0
    assert gap_expectation(np.eye(3)) == pytest.approx(0.0, abs=1e-15)


def test_gap_axial_traceless():
    assert gap_expectation(np.diag([-1.0, -1.0, 2.0])) == pytest.approx(3.0, abs=1e-14)


def test_gap_nv_tensor():
    # axial NV ground-state tensor; the gap is the D = 2.87 GHz splitting
    assert gap_expectation(np.diag([-0.9567, -0.9567, 1.9133])) == pytest.approx(2.87, abs=1e-12)


def test_gap_weights_default_pair():
    np.testing.assert_allclose(gap_weights(), np.diag([-0.5, -0.5, 1.0]), atol=1e-15)


def test_gap_rejects_non_symmetric():
    m = np.zeros((3, 3))
    m[0, 1] = 1.0
    with pytest.raises(ValueError, match="symmetric"):
        gap_expectation(m)


def test_gap_batch_matches_loop():
    rng = np.random.default_rng(0)
    batch = np.array([(m + m.T) / 2 for m in rng.standard_normal((5, 3, 3))])
    np.testing.assert_allclose(gap_expectation(batch), [gap_expectation(m) for m in batch], rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(tensors, tensors, finite, finite, pairs)
def test_gap_linear(a, b, x, y, pair):
    lhs = gap_expectation(x * a + y * b, pair)
    rhs = x * gap_expectation(a, pair) + y * gap_expectation(b, pair)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (1 + np.abs(a).max() + np.abs(b).max()) * 100)


def _brute_gap(delta, pair):
    s = spin_matrices()
    out = []
    for m in pair:
        v = s.state(m)
        e = sum(delta[i, j] * (v.conj() @ s.operators[i] @ s.operators[j] @ v)
                for i in range(3) for j in range(3))
        out.append(np.real(e))
    return out[0] - out[1]


@settings(max_examples=60, deadline=None)
@given(tensors, st.sampled_from([1, -1]))
def test_traceless_decomposition(delta, sign):
    delta = delta - np.trace(delta) / 3 * np.eye(3)
    pair = (sign, 0)
    brute = _brute_gap(delta, pair)
    closed = 1.5 * delta[2, 2]  # diagonal expectation values see only the axial part
    assert gap_expectation(delta, pair) == pytest.approx(brute, abs=1e-12)
    assert gap_expectation(delta, pair) == pytest.approx(closed, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(tensors, pairs, st.permutations([0, 1, 2]))
def test_basis_order_invariance(delta, pair, order):
    s = spin_matrices(qubit_pair=pair)
    p = s.permuted(tuple(order))
    assert gap_expectation(delta, spin=p) == pytest.approx(gap_expectation(delta, spin=s), abs=1e-12)


def test_axial_identity_to_1e12():
    rng = np.random.default_rng(5)
    for dzz in rng.uniform(-5, 5, 20):
        d = np.diag([-dzz / 2, -dzz / 2, dzz])
        assert abs(gap_expectation(d) - 1.5 * dzz) < 1e-12


def test_spin_expectation_and_difference():
    np.testing.assert_allclose(spin_expectation(-1), [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(spin_difference(), [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(spin_difference((1, -1)), [0, 0, 2], atol=1e-15)


def test_zeeman_cases():
    assert zeeman_gap([0, 0, 0]) == 0.0
    assert zeeman_gap([0, 0, 50.0]) == pytest.approx(ZEEMAN_50G_MHZ, rel=1e-8)
    assert zeeman_gap([30.0, -40.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_zeeman_rejects_nonfinite():
    with pytest.raises(ValueError):
        zeeman_gap([0, 0, np.inf])


def test_constants():
    assert CONSTANTS.gamma_n * 1e3 * 1000 == pytest.approx(LARMOR_1000G_HZ, rel=1e-8)
    with pytest.raises(ValueError, match="positive"):
        PhysicalConstants(hbar=-1.0)


def test_all_pairs_antisymmetric():
    rng = np.random.default_rng(2)
    d = rng.standard_normal((3, 3))
    d = d + d.T
    for a, b in itertools.permutations((-1, 0, 1), 2):
        assert gap_expectation(d, (a, b)) == pytest.approx(-gap_expectation(d, (b, a)), abs=1e-12)
