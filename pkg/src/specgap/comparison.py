"""Canonical-path comparison of M_T with M_nn, and exact total-variation mixing times."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import serialize
from .chain import ReversibleChain, check_size, spectrum
from .errors import NoNNEdge
from .permutations import KClassParams, build_MT, build_Mnn, parse_word

MAX_MIXING_STEPS = 1_000_000
TV_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """For each edge (x, y) of the fast chain, a list of state indices from x to y in the slow chain."""

    paths: dict

    @property
    def max_length(self) -> int:
        return max((len(p) - 1 for p in self.paths.values()), default=0)


def bubble_path(perm: tuple, i: int, j: int) -> list[tuple]:
    """Swap positions i < j using adjacent transpositions only.

    Move perm[j] left to position i, then move the displaced perm[i] right to position j.
    """
    cur = list(perm)
    out = [tuple(cur)]
    for t in range(j, i, -1):
        cur[t - 1], cur[t] = cur[t], cur[t - 1]
        out.append(tuple(cur))
    for t in range(i + 1, j):
        cur[t], cur[t + 1] = cur[t + 1], cur[t]
        out.append(tuple(cur))
    return out


def _swapped_positions(x: tuple, y: tuple) -> tuple[int, int]:
    diff = [t for t in range(len(x)) if x[t] != y[t]]
    if len(diff) != 2:
        raise ValueError(f"states {x} and {y} do not differ by a transposition")
    return diff[0], diff[1]


def canonical_paths(params: KClassParams, fast: ReversibleChain, slow: ReversibleChain) -> PathEnsemble:
    """Paths in ``slow`` (M_nn) for every off-diagonal edge of ``fast`` (M_T); both on permutations."""
    if fast.labels != slow.labels:
        raise ValueError("both chains must live on the same labelled space")
    states = [parse_word(s) for s in fast.labels]
    index = {s: t for t, s in enumerate(states)}
    paths = {}
    rows, cols = np.nonzero(fast.P)
    for x, y in zip(rows, cols):
        if x == y:
            continue
        i, j = _swapped_positions(states[x], states[y])
        path = [index[s] for s in bubble_path(states[x], i, j)]
        for u, v in zip(path, path[1:]):
            if slow.P[u, v] <= 0:
                raise NoNNEdge(f"no nearest-neighbour move {fast.labels[u]} -> {fast.labels[v]}")
        paths[(int(x), int(y))] = path
    return PathEnsemble(paths)


def validate_paths(ensemble: PathEnsemble, fast: ReversibleChain) -> bool:
    """Every step is one adjacent transposition and every path joins its edge's endpoints."""
    states = [parse_word(s) for s in fast.labels]
    for (x, y), path in ensemble.paths.items():
        if path[0] != x or path[-1] != y:
            return False
        for u, v in zip(path, path[1:]):
            i, j = _swapped_positions(states[u], states[v])
            if j != i + 1:
                return False
    return True


def congestion(ensemble: PathEnsemble, slow: ReversibleChain, fast: ReversibleChain) -> float:
    """Worst slow-chain edge load: max over (z,w) of sum |path| pi(x) P'(x,y) / (pi(z) P(z,w))."""
    load: dict = {}
    for (x, y), path in ensemble.paths.items():
        length = len(path) - 1
        weight = length * fast.pi[x] * fast.P[x, y]
        for e in set(zip(path, path[1:])):
            load[e] = load.get(e, 0.0) + weight
    if not load:
        return 1.0
    return max(w / (slow.pi[z] * slow.P[z, v]) for (z, v), w in load.items())


@dataclass(frozen=True, eq=False)
class MixingReport:
    tv_curve: np.ndarray
    eps: float
    tau_eps: int
    pi_star: float
    lambda_abs: float
    abs_gap: float
    tau_upper: float
    tau_lower: float

    def within_bounds(self, steps: int = 1) -> bool:
        return self.tau_lower - steps <= self.tau_eps <= self.tau_upper + steps

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "tau_eps": self.tau_eps,
            "pi_star": self.pi_star,
            "lambda_abs": self.lambda_abs,
            "abs_gap": self.abs_gap,
            "tau_upper": self.tau_upper,
            "tau_lower": self.tau_lower,
            "tv_curve": self.tv_curve.tolist(),
        }

    def to_json(self) -> str:
        return serialize.dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,tv\n")
        for t, v in enumerate(self.tv_curve):
            buf.write(f"{t},{serialize.format_float(float(v))}\n")
        return buf.getvalue()


def tv_distance(chain: ReversibleChain, Pt: np.ndarray) -> float:
    return float(0.5 * np.max(np.abs(Pt - chain.pi[None, :]).sum(axis=1)))


def exact_mixing(chain: ReversibleChain, eps: float, cap: int | None = None, max_steps: int = MAX_MIXING_STEPS) -> MixingReport:
    """Worst-start total-variation curve up to the mixing time and the spectral bracket around it."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    check_size(chain.size, cap)
    spec = spectrum(chain)
    lam = 1.0 - spec.abs_gap
    pi_star = float(chain.pi.min())
    Pt = np.eye(chain.size)
    curve = [tv_distance(chain, Pt)]
    # worst-start TV is nonincreasing, so the first crossing is the mixing time;
    # the slack keeps rounding noise from missing an exact hit such as TV = 1/8
    while curve[-1] > eps + TV_SLACK:
        if len(curve) > max_steps:
            raise RuntimeError(f"no mixing within {max_steps} steps")
        Pt = Pt @ chain.P
        curve.append(tv_distance(chain, Pt))
    tau = len(curve) - 1
    if spec.abs_gap > 0:
        upper = math.log(1.0 / (pi_star * eps)) / spec.abs_gap
        lower = lam / (2.0 * spec.abs_gap) * math.log(1.0 / (2.0 * eps))
    else:
        upper, lower = math.inf, math.inf
    return MixingReport(np.array(curve), eps, tau, pi_star, lam, spec.abs_gap, upper, lower)


def pi_star_lower(params: KClassParams) -> float:
    """Closed-form lower bound 1 / (q_*^(n choose 2) n!) on the smallest stationary probability."""
    n = params.n
    return 1.0 / (params.q_star ** math.comb(n, 2) * math.factorial(n))


@dataclass(frozen=True)
class ComparisonResult:
    gap_slow: float
    gap_fast: float
    congestion: float
    max_path_length: int
    paths_valid: bool

    @property
    def implied_bound(self) -> float:
        return self.gap_fast / self.congestion

    @property
    def slack(self) -> float:
        return self.gap_slow - self.implied_bound


def compare_nn_to_T(params: KClassParams, cap: int | None = None) -> ComparisonResult:
    check_size(math.factorial(params.n), cap)
    slow = build_Mnn(params, cap=cap)
    fast = build_MT(params, cap=cap)
    ens = canonical_paths(params, fast, slow)
    return ComparisonResult(
        gap_slow=spectrum(slow).gap,
        gap_fast=spectrum(fast).gap,
        congestion=congestion(ens, slow, fast),
        max_path_length=ens.max_length,
        paths_valid=validate_paths(ens, fast),
    )

