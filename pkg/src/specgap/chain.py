"""Finite reversible Markov chains: construction, symmetrization and exact spectra."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.sparse.csgraph import connected_components

from . import serialize
from .errors import NoConvergence, NonStochastic, NotReversible, Reducible, SizeOverflow

DEFAULT_CAP = 10080
ROW_TOL = 1e-12
BALANCE_TOL = 1e-12


def state_cap(cap: int | None = None) -> int:
    """Resolve the state-space cap: explicit value, then ``SPECGAP_CAP``, then the default."""
    if cap is not None:
        return int(cap)
    env = os.environ.get("SPECGAP_CAP")
    return int(env) if env else DEFAULT_CAP


def check_size(size: int, cap: int | None = None) -> None:
    limit = state_cap(cap)
    if size > limit:
        raise SizeOverflow(size, limit)


@dataclass(frozen=True)
class StateSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 1:
            raise ValueError("state space must be nonempty")
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be unique")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.labels)}


@dataclass(frozen=True, eq=False)
class ReversibleChain:
    space: StateSpace
    P: np.ndarray
    pi: np.ndarray
    reducible_ok: bool = False

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def labels(self) -> tuple[str, ...]:
        return self.space.labels

    def balance_residual(self) -> float:
        flow = self.pi[:, None] * self.P
        return float(np.max(np.abs(flow - flow.T)))

    def is_lazy(self) -> bool:
        return bool(np.all(np.diag(self.P) >= 0.5 - 1e-15))

    def is_irreducible(self) -> bool:
        return _is_irreducible(self.P)


@dataclass(frozen=True, eq=False)
class SymmetricForm:
    A: np.ndarray
    source: ReversibleChain


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    gap: float
    abs_gap: float

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else 0.0

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[-1])


def _is_irreducible(P: np.ndarray) -> bool:
    n_comp, _ = connected_components(P > 0, directed=True, connection="strong")
    return n_comp == 1


def _solve_stationary(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    ns = null_space((P - np.eye(n)).T)
    if ns.shape[1] != 1:
        raise Reducible(f"stationary distribution not unique (null space dimension {ns.shape[1]})")
    v = ns[:, 0]
    v = v / v.sum()
    return np.abs(v)


def new_chain(
    space: StateSpace | Sequence[str],
    P,
    pi=None,
    reducible_ok: bool = False,
) -> ReversibleChain:
    """Validate ``P`` (and ``pi`` if given) and return an immutable chain.

    When ``pi`` is omitted it is solved from the normalized left null space of ``P - I``.
    """
    if not isinstance(space, StateSpace):
        space = StateSpace(tuple(space))
    P = np.array(P, dtype=float)
    n = space.size
    if P.shape != (n, n):
        raise NonStochastic(f"transition matrix shape {P.shape} does not match {n} states")
    if np.any(P < -1e-15) or np.any(P > 1 + 1e-15):
        raise NonStochastic("entries must lie in [0, 1]")
    P = np.clip(P, 0.0, 1.0)
    row_err = np.max(np.abs(P.sum(axis=1) - 1.0))
    if row_err > ROW_TOL:
        raise NonStochastic(f"row sums deviate from 1 by {row_err:.3e}")

    irreducible = _is_irreducible(P)
    if not irreducible and not reducible_ok:
        raise Reducible("transition graph is not strongly connected")
    if pi is None:
        pi = _solve_stationary(P)
    pi = np.array(pi, dtype=float)
    if pi.shape != (n,) or np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise ValueError("pi must be a positive probability vector of matching length")

    P.setflags(write=False)
    pi.setflags(write=False)
    chain = ReversibleChain(space, P, pi, reducible_ok)
    res = chain.balance_residual()
    if res > BALANCE_TOL:
        raise NotReversible(res)
    return chain


def symmetrize(chain: ReversibleChain) -> SymmetricForm:
    """Return A(s,t) = sqrt(pi(s)/pi(t)) P(s,t), symmetric and similar to P."""
    r = np.sqrt(chain.pi)
    A = r[:, None] * chain.P / r[None, :]
    A = 0.5 * (A + A.T)
    A.setflags(write=False)
    return SymmetricForm(A, chain)


def spectrum_of_matrix(A: np.ndarray) -> Spectrum:
    """Full eigendecomposition of a symmetric matrix, eigenvalues in descending order."""
    A = np.asarray(A, dtype=float)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    # descending by value; equal values keep original index order
    order = np.lexsort((np.arange(len(w)), -w))
    w = w[order]
    V = V[:, order]
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    resid = np.linalg.norm(A @ V - V * w[None, :], axis=0)
    if resid.size and resid.max() > 1e-9 * scale:
        raise NoConvergence(f"eigenpair residual {resid.max():.3e}")
    if len(w) == 1:
        gap = abs_gap = 1.0
    else:
        gap = float(1.0 - w[1])
        abs_gap = float(1.0 - max(abs(w[1]), abs(w[-1])))
    w.setflags(write=False)
    V.setflags(write=False)
    return Spectrum(w, V, gap, abs_gap)


def spectrum(symform: SymmetricForm | ReversibleChain) -> Spectrum:
    if isinstance(symform, ReversibleChain):
        symform = symmetrize(symform)
    return spectrum_of_matrix(symform.A)


def gap(chain: ReversibleChain) -> float:
    return spectrum(chain).gap


def make_lazy(chain: ReversibleChain) -> ReversibleChain:
    n = chain.size
    P = 0.5 * (np.eye(n) + chain.P)
    return new_chain(chain.space, P, chain.pi.copy(), reducible_ok=chain.reducible_ok)


def trivial_chain(label: str = "*") -> ReversibleChain:
    return new_chain(StateSpace((label,)), [[1.0]], [1.0])


def direct_product(
    chains: Sequence[ReversibleChain],
    selection_probs: Sequence[float],
    cap: int | None = None,
) -> ReversibleChain:
    """Product chain: with probability ``selection_probs[i]`` move coordinate i by chain i.

    States are ordered lexicographically with the first coordinate most significant.
    """
    probs = np.asarray(selection_probs, dtype=float)
    if len(chains) == 0 or len(probs) != len(chains):
        raise ValueError("need one selection probability per chain")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("selection probabilities must be nonnegative and sum to 1")
    sizes = [c.size for c in chains]
    total = int(np.prod(sizes))
    check_size(total, cap)

    P = np.zeros((total, total))
    for i, (c, w) in enumerate(zip(chains, probs)):
        left = int(np.prod(sizes[:i]))
        right = int(np.prod(sizes[i + 1:]))
        P += w * np.kron(np.kron(np.eye(left), c.P), np.eye(right))
    pi = np.ones(1)
    for c in chains:
        pi = np.kron(pi, c.pi)
    labels = [""]
    for c in chains:
        labels = [f"{a}|{b}" if a else b for a in labels for b in c.labels]
    return new_chain(StateSpace(tuple(labels)), P, pi)


def product_gap(chains: Sequence[ReversibleChain], selection_probs: Sequence[float]) -> float:
    """Gap of the product chain predicted from the slowed components (single-state factors ignored)."""
    gaps = [w * gap(c) for c, w in zip(chains, selection_probs) if c.size > 1]
    return min(gaps) if gaps else 1.0


def random_reversible(num_states: int, density: float, seed: int) -> ReversibleChain:
    """Metropolis walk on a connected random weighted graph with random target weights."""
    if num_states < 2:
        raise ValueError("num_states must be at least 2")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    n = num_states
    while True:
        mask = np.triu(rng.random((n, n)) < density, k=1)
        C = np.where(mask, rng.uniform(0.1, 1.0, size=(n, n)), 0.0)
        C = C + C.T
        n_comp, _ = connected_components(C > 0, directed=False)
        if n_comp == 1:
            break
    w = rng.uniform(0.1, 1.0, size=n)
    Q = C / C.sum(axis=1).max()
    P = Q * np.minimum(w[None, :], w[:, None]) / w[:, None]
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, np.maximum(1.0 - P.sum(axis=1), 0.0))
    labels = tuple(str(i) for i in range(n))
    return new_chain(StateSpace(labels), P, w / w.sum())


def chain_to_dict(chain: ReversibleChain) -> dict:
    d = {"labels": list(chain.labels), "P": chain.P.tolist(), "pi": chain.pi.tolist()}
    if chain.reducible_ok:
        d["reducible_ok"] = True
    return d


def chain_to_json(chain: ReversibleChain) -> str:
    return serialize.dumps(chain_to_dict(chain))


def chain_from_dict(d: dict) -> ReversibleChain:
    return new_chain(
        StateSpace(tuple(d["labels"])),
        d["P"],
        d.get("pi"),
        reducible_ok=bool(d.get("reducible_ok", False)),
    )


def chain_from_json(text: str) -> ReversibleChain:
    return chain_from_dict(json.loads(text))
