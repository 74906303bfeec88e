import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import nonsymmetric_eigs, power_lambda2, stationary_by_power
from specgap.chain import (
    check_size,
    chain_from_json,
    chain_to_json,
    direct_product,
    gap,
    make_lazy,
    new_chain,
    product_gap,
    random_reversible,
    spectrum,
    spectrum_of_matrix,
    state_cap,
    symmetrize,
    trivial_chain,
)
from specgap.errors import NonStochastic, NotReversible, Reducible, SizeOverflow
from specgap.permutations import unbiased_adjacent_chain


def test_two_state_uniform_solves_pi():
    ch = new_chain(["a", "b"], [[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(ch.pi, [0.5, 0.5], atol=1e-15)


def test_two_state_detailed_balance_by_hand():
    ch = new_chain(["a", "b"], [[0.75, 0.25], [1 / 3, 2 / 3]])
    # 4/7 * 1/4 = 3/7 * 1/3 = 1/7
    assert ch.pi == pytest.approx([4 / 7, 3 / 7], abs=1e-14)
    assert ch.pi == pytest.approx(stationary_by_power(ch.P), abs=1e-12)
    assert ch.balance_residual() <= 1e-15


def test_row_sum_off_is_rejected():
    with pytest.raises(NonStochastic):
        new_chain(["a", "b"], [[0.5, 0.4], [0.5, 0.5]])


def test_negative_entry_is_rejected():
    with pytest.raises(NonStochastic):
        new_chain(["a", "b"], [[1.1, -0.1], [0.5, 0.5]])


def test_wrong_pi_is_not_reversible():
    with pytest.raises(NotReversible):
        new_chain(["a", "b"], [[0.75, 0.25], [1 / 3, 2 / 3]], pi=[0.5, 0.5])


def test_three_cycle_is_not_reversible():
    P = np.array([[0, 0.9, 0.1], [0.1, 0, 0.9], [0.9, 0.1, 0]])
    with pytest.raises(NotReversible):
        new_chain(["a", "b", "c"], P)


def test_reducible_rejected_unless_allowed():
    with pytest.raises(Reducible):
        new_chain(["a", "b"], np.eye(2), pi=[0.5, 0.5])
    ch = new_chain(["a", "b"], np.eye(2), pi=[0.5, 0.5], reducible_ok=True)
    assert not ch.is_irreducible()


def test_symmetrize_two_state_entry():
    ch = new_chain(["a", "b"], [[0.5, 0.5], [0.75, 0.25]])
    assert ch.pi == pytest.approx([0.6, 0.4], abs=1e-14)
    A = symmetrize(ch).A
    assert A[0, 1] == pytest.approx(math.sqrt(1.5) / 2, abs=1e-14)
    assert A[0, 1] == A[1, 0]
    assert np.sort(np.linalg.eigvalsh(A)) == pytest.approx(np.sort(np.linalg.eigvals(ch.P).real), abs=1e-12)


def test_symmetrize_uniform_pi_and_identity():
    P = np.array([[0.2, 0.8], [0.8, 0.2]])
    assert np.allclose(symmetrize(new_chain(["a", "b"], P)).A, P, atol=1e-15)
    I = new_chain(["a", "b"], np.eye(2), pi=[0.5, 0.5], reducible_ok=True)
    assert np.array_equal(symmetrize(I).A, np.eye(2))


def test_spectrum_of_averaging_matrix():
    sp = spectrum_of_matrix(np.array([[0.5, 0.5], [0.5, 0.5]]))
    assert sp.eigenvalues == pytest.approx([1.0, 0.0], abs=1e-15)
    assert sp.gap == pytest.approx(1.0, abs=1e-15)


def test_single_state_gap_convention():
    sp = spectrum(trivial_chain())
    assert sp.gap == 1.0 and sp.abs_gap == 1.0


def test_s3_gap_quarter():
    assert gap(unbiased_adjacent_chain(3)) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_random_six_state_gap_matches_power_iteration(seed):
    ch = random_reversible(6, 0.7, seed=seed)
    lam2 = power_lambda2(ch.P, ch.pi)
    assert spectrum(ch).lambda2 == pytest.approx(lam2, abs=1e-8)
    assert spectrum(ch).lambda2 == pytest.approx(nonsymmetric_eigs(ch.P)[1], abs=1e-10)


def test_spectrum_sorted_with_orthonormal_vectors():
    ch = random_reversible(12, 0.5, seed=3)
    sp = spectrum(ch)
    assert np.all(np.diff(sp.eigenvalues) <= 0)
    assert np.allclose(sp.eigenvectors.T @ sp.eigenvectors, np.eye(12), atol=1e-10)
    top = sp.eigenvectors[:, 0] * np.sign(sp.eigenvectors[0, 0])
    assert np.allclose(top, np.sqrt(ch.pi), atol=1e-10)
    assert sp.abs_gap == pytest.approx(1 - max(abs(sp.lambda2), abs(sp.lambda_min)), abs=1e-15)


def test_product_single_chain_is_itself():
    ch = random_reversible(5, 0.6, seed=4)
    prod = direct_product([ch], [1.0])
    assert np.allclose(prod.P, ch.P, atol=1e-15)


def test_product_two_averaging_chains():
    avg = new_chain(["0", "1"], [[0.5, 0.5], [0.5, 0.5]])
    prod = direct_product([avg, avg], [0.5, 0.5])
    assert prod.size == 4
    assert gap(prod) == pytest.approx(0.5, abs=1e-12)
    assert 1 - nonsymmetric_eigs(prod.P)[1] == pytest.approx(0.5, abs=1e-12)


def test_product_s2_and_path():
    s2 = unbiased_adjacent_chain(2)
    path = new_chain(["a", "b", "c"], [[0.5, 0.5, 0], [0.25, 0.5, 0.25], [0, 0.5, 0.5]])
    prod = direct_product([s2, path], [0.3, 0.7])
    assert gap(prod) == pytest.approx(product_gap([s2, path], [0.3, 0.7]), abs=1e-10)
    assert gap(prod) == pytest.approx(min(0.3 * gap(s2), 0.7 * gap(path)), abs=1e-10)


def test_product_rejects_bad_probabilities():
    s2 = unbiased_adjacent_chain(2)
    with pytest.raises(ValueError):
        direct_product([s2, s2], [0.5, 0.6])


def test_make_lazy_examples():
    flip = new_chain(["a", "b"], [[0, 1], [1, 0]])
    assert np.allclose(make_lazy(flip).P, 0.5, atol=1e-15)
    I = new_chain(["a", "b"], np.eye(2), pi=[0.5, 0.5], reducible_ok=True)
    assert np.array_equal(make_lazy(I).P, np.eye(2))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 15), density=st.floats(0.25, 1.0), seed=st.integers(0, 10_000))
def test_lazy_maps_eigenvalues(n, density, seed):
    ch = random_reversible(n, density, seed)
    lazy = make_lazy(ch)
    assert lazy.is_lazy()
    ev = spectrum(ch).eigenvalues
    assert spectrum(lazy).eigenvalues == pytest.approx((1 + ev) / 2, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 30), density=st.floats(0.25, 1.0), seed=st.integers(0, 10_000))
def test_random_reversible_invariants(n, density, seed):
    ch = random_reversible(n, density, seed)
    assert ch.balance_residual() <= 1e-12
    assert np.allclose(ch.P.sum(axis=1), 1.0, atol=1e-12)
    assert ch.is_irreducible()
    sp = spectrum(ch)
    assert sp.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(sp.eigenvalues >= -1 - 1e-10)


def test_random_reversible_small_and_deterministic():
    two = random_reversible(2, 1.0, seed=7)
    assert two.size == 2 and two.balance_residual() <= 1e-12
    a = random_reversible(10, 0.4, seed=1)
    b = random_reversible(10, 0.4, seed=1)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.pi, b.pi)


def test_json_round_trip():
    ch = random_reversible(7, 0.5, seed=11)
    back = chain_from_json(chain_to_json(ch))
    assert np.array_equal(back.P, ch.P)
    assert np.array_equal(back.pi, ch.pi)
    assert back.labels == ch.labels


def test_size_cap(monkeypatch):
    assert state_cap(None) == 10080
    monkeypatch.setenv("SPECGAP_CAP", "50")
    assert state_cap(None) == 50
    with pytest.raises(SizeOverflow):
        check_size(51)
    check_size(51, cap=100)
