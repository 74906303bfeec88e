import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_partition
from oracles import decomposition_oracle
from specgap.chain import direct_product, new_chain, random_reversible, spectrum
from specgap.decomposition import (
    Partition,
    bundle_summary,
    complementary_pieces,
    decompose,
    escape_parameter_T,
    overlap_matrix,
    partition_from_json,
    partition_to_json,
)
from specgap.errors import EmptyBlock


def test_partition_rejects_empty_block():
    with pytest.raises(EmptyBlock):
        Partition(np.array([0, 2, 2]), 3)


def test_partition_json_round_trip():
    p = Partition.from_labels([1, 0, 1, 2])
    assert np.array_equal(partition_from_json(partition_to_json(p)).block_of, p.block_of)


def test_one_block_partition(path4):
    b = decompose(path4, Partition.from_labels([0, 0, 0, 0]))
    assert b.m_hat == 1
    assert np.allclose(b.restrictions[0].P, path4.P, atol=1e-15)
    assert b.m_tilde == 4
    assert all(c.size == 1 for c in b.complementary)
    assert list(b.complementary_gaps) == [1.0] * 4
    assert b.projection.size == 1
    assert escape_parameter_T(path4, Partition.from_labels([0, 0, 0, 0])) == 0.0


def test_path4_projection_and_escape(path4):
    part = Partition.from_labels([0, 0, 1, 1])
    b = decompose(path4, part)
    # only edge 2->3 crosses: pi(2) P(2,3) / pi({1,2}) = (1/4 * 1/4) / (1/2)
    assert b.projection.P[0, 1] == pytest.approx(0.125, abs=1e-15)
    assert b.projection.P[1, 0] == pytest.approx(0.125, abs=1e-15)
    assert escape_parameter_T(path4, part) == pytest.approx(0.25, abs=1e-15)
    assert b.T == pytest.approx(0.25, abs=1e-15)
    # complementary pieces: {1}, {2,3}, {4}
    assert [list(m) for m in b.tilde_members] == [[0], [1, 2], [3]]


def test_singleton_blocks_without_self_loops_escape_one():
    ch = new_chain(["a", "b", "c"], [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
    assert escape_parameter_T(ch, Partition.from_labels([0, 1, 2])) == pytest.approx(1.0, abs=1e-15)


def test_pieces_are_ordered_by_smallest_state():
    ch = random_reversible(15, 0.3, seed=5)
    part = random_partition(15, np.random.default_rng(5))
    pieces = complementary_pieces(ch, part)
    mins = [int(p.min()) for p in pieces]
    assert mins == sorted(mins)
    assert sorted(np.concatenate(pieces).tolist()) == list(range(15))


def test_product_overlap_is_rank_one():
    c1 = random_reversible(3, 1.0, seed=1)
    c2 = random_reversible(4, 0.8, seed=2)
    prod = direct_product([c1, c2], [0.5, 0.5])
    part = Partition(np.arange(12) // 4, 3)
    B = overlap_matrix(prod, part)
    sv = np.linalg.svd(B, compute_uv=False)
    assert sv[0] == pytest.approx(1.0, abs=1e-12)
    assert sv[1] <= 1e-10
    b = decompose(prod, part)
    pi_tilde = [prod.pi[m].sum() for m in b.tilde_members]
    assert np.allclose(B, np.sqrt(np.outer(b.projection.pi, pi_tilde)), atol=1e-12)


def test_one_block_overlap_row(path4):
    b = decompose(path4, Partition.from_labels([0, 0, 0, 0]))
    assert b.overlap.shape == (1, 4)
    assert np.allclose(b.overlap[0], np.sqrt(path4.pi), atol=1e-15)
    assert np.linalg.svd(b.overlap, compute_uv=False)[0] == pytest.approx(1.0, abs=1e-14)


def test_reducible_restriction_warns():
    # states 0 and 2 share a block but only talk through state 1
    ch = new_chain(["a", "b", "c"], [[0.5, 0.5, 0], [0.25, 0.5, 0.25], [0, 0.5, 0.5]])
    b = decompose(ch, Partition.from_labels([0, 1, 0]))
    assert any("reducible" in w for w in b.warnings)
    assert b.restriction_gaps[0] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 25), density=st.floats(0.25, 1.0), seed=st.integers(0, 10_000))
def test_bundle_matches_entrywise_oracle(n, density, seed):
    ch = random_reversible(n, density, seed)
    part = random_partition(n, np.random.default_rng(seed))
    b = decompose(ch, part)
    A, Ah, At, H, K = decomposition_oracle(ch.P, ch.pi, part.block_of)
    assert np.max(np.abs(b.A - A)) <= 1e-12
    assert np.max(np.abs(b.A_hat - Ah)) <= 1e-12
    assert np.max(np.abs(b.A_tilde - At)) <= 1e-12
    assert np.max(np.abs(b.hat_basis - H)) <= 1e-12
    assert np.max(np.abs(b.tilde_basis - K)) <= 1e-12
    assert np.max(np.abs(Ah + At - np.eye(n) - A)) <= 1e-12
    # top eigenspace of each block matrix is spanned by its basis
    assert np.allclose(H.T @ Ah, H.T, atol=1e-12)
    assert np.allclose(K.T @ At, K.T, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 25), density=st.floats(0.25, 1.0), seed=st.integers(0, 10_000))
def test_bundle_invariants(n, density, seed):
    ch = random_reversible(n, density, seed)
    part = random_partition(n, np.random.default_rng(seed + 1))
    b = decompose(ch, part)
    # self-loops: diag(P_hat) + diag(P_tilde) = 1 + diag(P)
    loops = np.zeros(n)
    for r, idx in zip(b.restrictions, b.hat_members):
        loops[idx] += np.diag(r.P)
        assert np.allclose(r.P.sum(axis=1), 1.0, atol=1e-12)
    for c, idx in zip(b.complementary, b.tilde_members):
        loops[idx] += np.diag(c.P)
    assert np.max(np.abs(loops - 1.0 - np.diag(ch.P))) <= 1e-12
    # projection is reversible with pi_bar(i) = pi(block i)
    pi_bar = np.array([ch.pi[part.members(i)].sum() for i in range(part.num_blocks)])
    assert np.allclose(b.projection.pi, pi_bar, atol=1e-12)
    assert b.projection.balance_residual() <= 1e-12
    # row-mass identity of the overlap matrix
    pi_tilde = np.array([ch.pi[m].sum() for m in b.tilde_members])
    assert np.allclose(b.overlap @ np.sqrt(pi_tilde), np.sqrt(pi_bar), atol=1e-12)
    assert 0.0 <= b.T <= 1.0
    assert b.mu_min >= 1 - 2 * b.T - 1e-12
    assert b.mu_min == pytest.approx(np.linalg.eigvalsh(b.A_tilde)[0], abs=1e-12)
    assert b.lambda_max == pytest.approx(1 - b.gamma_hat_min, abs=1e-15)
    assert b.gamma_bar == pytest.approx(spectrum(b.projection).gap if b.projection.size > 1 else 1.0, abs=1e-12)


def test_summary_fields(path4):
    s = bundle_summary(decompose(path4, Partition.from_labels([0, 0, 1, 1])))
    assert s["num_states"] == 4
    assert s["restriction_sizes"] == [2, 2]
