"""Restrictions, complementary restrictions and the projection chain of a partitioned chain."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import serialize
from .chain import (
    ReversibleChain,
    StateSpace,
    new_chain,
    spectrum,
    spectrum_of_matrix,
    symmetrize,
)
from .errors import EmptyBlock


@dataclass(frozen=True, eq=False)
class Partition:
    block_of: np.ndarray
    num_blocks: int

    def __post_init__(self):
        b = np.asarray(self.block_of, dtype=int)
        b.setflags(write=False)
        object.__setattr__(self, "block_of", b)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("block_of must be a nonempty 1-d array")
        if b.min() < 0 or b.max() >= self.num_blocks:
            raise EmptyBlock("block indices must be contiguous from 0")
        counts = np.bincount(b, minlength=self.num_blocks)
        if np.any(counts == 0):
            raise EmptyBlock(f"blocks {np.flatnonzero(counts == 0).tolist()} are empty")

    @classmethod
    def from_labels(cls, block_of: Sequence[int]) -> "Partition":
        b = np.asarray(block_of, dtype=int)
        return cls(b, int(b.max()) + 1 if b.size else 0)

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.block_of == i)

    def indicator(self) -> np.ndarray:
        E = np.zeros((self.block_of.size, self.num_blocks))
        E[np.arange(self.block_of.size), self.block_of] = 1.0
        return E


def partition_from_json(text: str) -> Partition:
    return Partition.from_labels(json.loads(text)["block_of"])


def partition_to_json(partition: Partition) -> str:
    return serialize.dumps({"block_of": partition.block_of.tolist()})


@dataclass(frozen=True, eq=False)
class DecompositionBundle:
    chain: ReversibleChain
    partition: Partition
    restrictions: list
    complementary: list
    # state indices of each restriction block / complementary piece
    hat_members: list
    tilde_members: list
    projection: ReversibleChain
    A: np.ndarray
    A_hat: np.ndarray
    A_tilde: np.ndarray
    restriction_gaps: np.ndarray
    complementary_gaps: np.ndarray
    gamma_hat_min: float
    gamma_tilde_min: float
    gamma_bar: float
    lambda_max: float
    mu_min: float
    overlap: np.ndarray
    T: float
    hat_basis: np.ndarray = field(repr=False)
    tilde_basis: np.ndarray = field(repr=False)
    warnings: tuple = ()

    @property
    def lambda_bar(self) -> float:
        return 1.0 - self.gamma_bar

    @property
    def m_hat(self) -> int:
        return len(self.restrictions)

    @property
    def m_tilde(self) -> int:
        return len(self.complementary)

    @property
    def tilde_of(self) -> np.ndarray:
        lab = np.empty(self.chain.size, dtype=int)
        for j, idx in enumerate(self.tilde_members):
            lab[idx] = j
        return lab


def _piece_gap(chain: ReversibleChain) -> float:
    # a single state carries gap 1 by convention
    return 1.0 if chain.size == 1 else spectrum(chain).gap


def _sub_chain(chain: ReversibleChain, idx: np.ndarray, P_full: np.ndarray) -> ReversibleChain:
    sub = P_full[np.ix_(idx, idx)].copy()
    np.fill_diagonal(sub, 0.0)
    np.fill_diagonal(sub, np.maximum(1.0 - sub.sum(axis=1), 0.0))
    pi = chain.pi[idx] / chain.pi[idx].sum()
    labels = tuple(chain.labels[i] for i in idx)
    return new_chain(StateSpace(labels), sub, pi, reducible_ok=True)


def _sym(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    r = np.sqrt(pi)
    A = r[:, None] * P / r[None, :]
    return 0.5 * (A + A.T)


def _sqrt_basis(pi: np.ndarray, groups: list) -> np.ndarray:
    """Columns are the normalized sqrt(pi) restricted to each group."""
    B = np.zeros((pi.size, len(groups)))
    for j, idx in enumerate(groups):
        B[idx, j] = np.sqrt(pi[idx] / pi[idx].sum())
    return B


def escape_parameter_T(chain: ReversibleChain, partition: Partition) -> float:
    """Largest probability of leaving the current block in one step."""
    b = partition.block_of
    cross = b[:, None] != b[None, :]
    # a sum of probabilities; clamp the rounding excess so T stays in [0, 1]
    return min(float(np.max(np.where(cross, chain.P, 0.0).sum(axis=1))), 1.0)


def _overlap(pi: np.ndarray, hat_of: np.ndarray, m_hat: int, tilde_of: np.ndarray, m_tilde: int) -> np.ndarray:
    mass = np.zeros((m_hat, m_tilde))
    np.add.at(mass, (hat_of, tilde_of), pi)
    hat_mass = mass.sum(axis=1)
    tilde_mass = mass.sum(axis=0)
    return mass / np.sqrt(np.outer(hat_mass, tilde_mass))


def complementary_pieces(chain: ReversibleChain, partition: Partition) -> list:
    b = partition.block_of
    cross = (b[:, None] != b[None, :]) & (chain.P > 0)
    _, lab = connected_components(cross, directed=False)
    # order pieces by their smallest state index
    first = {}
    for s, l in enumerate(lab):
        first.setdefault(l, s)
    order = sorted(first, key=first.get)
    return [np.flatnonzero(lab == l) for l in order]


def overlap_matrix(chain: ReversibleChain, partition: Partition) -> np.ndarray:
    pieces = complementary_pieces(chain, partition)
    tilde_of = np.empty(chain.size, dtype=int)
    for j, idx in enumerate(pieces):
        tilde_of[idx] = j
    return _overlap(chain.pi, partition.block_of, partition.num_blocks, tilde_of, len(pieces))


def decompose(chain: ReversibleChain, partition: Partition) -> DecompositionBundle:
    """Build every derived object of the decomposition of ``chain`` along ``partition``."""
    n = chain.size
    b = partition.block_of
    if b.size != n:
        raise ValueError(f"partition covers {b.size} states, chain has {n}")
    P, pi = chain.P, chain.pi
    same = b[:, None] == b[None, :]
    warnings = []

    # restrictions: reject moves that leave the block
    P_hat = np.where(same, P, 0.0)
    np.fill_diagonal(P_hat, 0.0)
    np.fill_diagonal(P_hat, np.maximum(1.0 - P_hat.sum(axis=1), 0.0))
    hat_members = [partition.members(i) for i in range(partition.num_blocks)]
    restrictions = []
    for i, idx in enumerate(hat_members):
        r = _sub_chain(chain, idx, P_hat)
        if not r.is_irreducible():
            warnings.append(f"restriction {i} is reducible")
        restrictions.append(r)

    # complementary restrictions: reject moves that stay inside a block
    P_tilde = np.where(same, 0.0, P)
    np.fill_diagonal(P_tilde, np.maximum(1.0 - P_tilde.sum(axis=1), 0.0))
    tilde_members = complementary_pieces(chain, partition)
    complementary = [_sub_chain(chain, idx, P_tilde) for idx in tilde_members]

    E = partition.indicator()
    pi_bar = E.T @ pi
    flow = E.T @ (pi[:, None] * P) @ E
    flow = 0.5 * (flow + flow.T)
    P_bar = flow / pi_bar[:, None]
    labels = tuple(str(i) for i in range(partition.num_blocks))
    projection = new_chain(StateSpace(labels), P_bar, pi_bar / pi_bar.sum())

    A = symmetrize(chain).A
    A_hat = _sym(P_hat, pi)
    A_tilde = _sym(P_tilde, pi)

    rgaps = np.array([_piece_gap(r) for r in restrictions])
    cgaps = np.array([_piece_gap(c) for c in complementary])
    gamma_bar = _piece_gap(projection)
    mu_min = float(spectrum_of_matrix(A_tilde).lambda_min)

    tilde_of = np.empty(n, dtype=int)
    for j, idx in enumerate(tilde_members):
        tilde_of[idx] = j
    B = _overlap(pi, b, partition.num_blocks, tilde_of, len(tilde_members))

    for a in (A, A_hat, A_tilde, rgaps, cgaps, B):
        a.setflags(write=False)
    return DecompositionBundle(
        chain=chain,
        partition=partition,
        restrictions=restrictions,
        complementary=complementary,
        hat_members=hat_members,
        tilde_members=tilde_members,
        projection=projection,
        A=A,
        A_hat=A_hat,
        A_tilde=A_tilde,
        restriction_gaps=rgaps,
        complementary_gaps=cgaps,
        gamma_hat_min=float(rgaps.min()),
        gamma_tilde_min=float(cgaps.min()),
        gamma_bar=float(gamma_bar),
        lambda_max=float(1.0 - rgaps.min()),
        mu_min=mu_min,
        overlap=B,
        T=escape_parameter_T(chain, partition),
        hat_basis=_sqrt_basis(pi, hat_members),
        tilde_basis=_sqrt_basis(pi, tilde_members),
        warnings=tuple(warnings),
    )


def bundle_summary(bundle: DecompositionBundle) -> dict:
    sv = np.linalg.svd(bundle.overlap, compute_uv=False)
    return {
        "num_states": bundle.chain.size,
        "restriction_sizes": [r.size for r in bundle.restrictions],
        "restriction_gaps": bundle.restriction_gaps.tolist(),
        "complementary_sizes": [c.size for c in bundle.complementary],
        "complementary_gaps": bundle.complementary_gaps.tolist(),
        "gamma_hat_min": bundle.gamma_hat_min,
        "gamma_tilde_min": bundle.gamma_tilde_min,
        "gamma_bar": bundle.gamma_bar,
        "lambda_max": bundle.lambda_max,
        "mu_min": bundle.mu_min,
        "T": bundle.T,
        "overlap_singular_values": sv.tolist(),
        "warnings": list(bundle.warnings),
    }


def bundle_to_json(bundle: DecompositionBundle) -> str:
    return serialize.dumps(bundle_summary(bundle))
