"""Vector splits, Rayleigh-quotient parameters and certified lower bounds on the spectral gap."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from .chain import ReversibleChain, product_gap, spectrum
from .decomposition import DecompositionBundle
from .errors import DomainError, NotPerpendicular, NotUnit

UNDEFINED_NORM = 1e-13
GRID_POINTS = 100_000
GRID_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class VectorSplit:
    x: np.ndarray
    alpha: np.ndarray
    x_hat_par: np.ndarray
    x_hat_perp: np.ndarray
    x_tilde_par: np.ndarray
    x_tilde_perp: np.ndarray
    a_vec: np.ndarray
    b_vec: np.ndarray
    c_vec: np.ndarray
    d_vec: np.ndarray


@dataclass(frozen=True)
class DeltaParams:
    delta_perp_hat: float
    delta_perp_tilde: float
    delta_par_hat: float
    delta_par_tilde: float
    delta_tilde_perp_tilde: float
    defined: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BoundCertificate:
    method: str
    value: float
    inputs: dict
    exact_gap: float | None = None

    @property
    def slack(self) -> float | None:
        return None if self.exact_gap is None else self.exact_gap - self.value

    def with_exact(self, exact_gap: float) -> "BoundCertificate":
        return BoundCertificate(self.method, self.value, self.inputs, float(exact_gap))

    def sound(self, tol: float = 1e-9) -> bool:
        return self.exact_gap is None or self.value <= self.exact_gap + tol

    def to_dict(self) -> dict:
        d = {"method": self.method, "value": self.value, "inputs": dict(self.inputs)}
        if self.exact_gap is not None:
            d["exact_gap"] = self.exact_gap
            d["slack"] = self.slack
        return d


def random_admissible(bundle: DecompositionBundle, rng: np.random.Generator) -> np.ndarray:
    """A uniformly random unit vector orthogonal to sqrt(pi)."""
    s = np.sqrt(bundle.chain.pi)
    x = rng.standard_normal(s.size)
    x -= (x @ s) * s
    return x / np.linalg.norm(x)


def split_vector(bundle: DecompositionBundle, x) -> VectorSplit:
    x = np.asarray(x, dtype=float)
    if abs(np.linalg.norm(x) - 1.0) > 1e-10:
        raise NotUnit(f"norm {np.linalg.norm(x):.3e}")
    if abs(x @ np.sqrt(bundle.chain.pi)) > 1e-10:
        raise NotPerpendicular("x must be orthogonal to sqrt(pi)")
    H, K = bundle.hat_basis, bundle.tilde_basis
    alpha = H.T @ x
    x_hat_par = H @ alpha
    x_hat_perp = x - x_hat_par
    x_tilde_par = K @ (K.T @ x)
    x_tilde_perp = x - x_tilde_par
    # K spans the eigenvalue-1 eigenspace of A_tilde
    b = K @ (K.T @ x_hat_par)
    d = K @ (K.T @ x_hat_perp)
    return VectorSplit(
        x=x,
        alpha=alpha,
        x_hat_par=x_hat_par,
        x_hat_perp=x_hat_perp,
        x_tilde_par=x_tilde_par,
        x_tilde_perp=x_tilde_perp,
        a_vec=x_hat_par - b,
        b_vec=b,
        c_vec=x_hat_perp - d,
        d_vec=d,
    )


def _rayleigh(v: np.ndarray, M: np.ndarray) -> tuple[float, bool]:
    nrm = np.linalg.norm(v)
    if nrm < UNDEFINED_NORM:
        return math.nan, False
    return float(v @ M @ v) / nrm**2, True


def delta_params(bundle: DecompositionBundle, split: VectorSplit) -> DeltaParams:
    Ah, At = bundle.A_hat, bundle.A_tilde
    vals = {
        "delta_perp_hat": _rayleigh(split.x_hat_perp, Ah),
        "delta_perp_tilde": _rayleigh(split.x_hat_perp, At),
        "delta_par_hat": _rayleigh(split.x_hat_par, Ah),
        "delta_par_tilde": _rayleigh(split.x_hat_par, At),
        "delta_tilde_perp_tilde": _rayleigh(split.x_tilde_perp, At),
    }
    return DeltaParams(**{k: v[0] for k, v in vals.items()}, defined={k: v[1] for k, v in vals.items()})


def cross_term(bundle: DecompositionBundle, split: VectorSplit) -> tuple[float, float]:
    """Return |<x_hat_perp, x_hat_par A_tilde>| and its Cauchy-Schwarz style bound."""
    lhs = abs(float(split.x_hat_perp @ bundle.A_tilde @ split.x_hat_par))
    dp = delta_params(bundle, split)
    if not (dp.defined["delta_par_tilde"] and dp.defined["delta_perp_tilde"]):
        return lhs, math.nan
    rhs = math.sqrt(max(1.0 - dp.delta_par_tilde, 0.0) * max(1.0 - dp.delta_perp_tilde, 0.0))
    return lhs, rhs * np.linalg.norm(split.x_hat_par) * np.linalg.norm(split.x_hat_perp)


def theorem2_identity_check(bundle: DecompositionBundle, split: VectorSplit) -> float:
    """|(1 - <x,xA>) - ((1-d1)|x_hat_perp|^2 + (1-d2)|x_tilde_perp|^2)|."""
    hp, tp = split.x_hat_perp, split.x_tilde_perp
    if np.linalg.norm(hp) < UNDEFINED_NORM and np.linalg.norm(tp) < UNDEFINED_NORM:
        raise DomainError("both perpendicular parts vanish: x would be a top eigenvector")
    x = split.x
    lhs = 1.0 - float(x @ bundle.A @ x)
    rhs = (hp @ hp - hp @ bundle.A_hat @ hp) + (tp @ tp - tp @ bundle.A_tilde @ tp)
    return abs(lhs - float(rhs))


def _check_unit(name: str, v: float, lo: float = 0.0, hi: float = 1.0, open_lo: bool = False):
    if not math.isfinite(v) or v < lo or v > hi or (open_lo and v <= lo):
        raise DomainError(f"{name}={v} outside {'(' if open_lo else '['}{lo}, {hi}]")


def _theorem1_closed_form(gamma: float, gamma_bar: float, delta: float) -> float:
    r = math.sqrt(gamma_bar)
    s = math.sqrt(max(1.0 - delta, 0.0))
    if s == 0.0 or r == 0.0:
        return min(gamma, gamma_bar) if s == 0.0 else 0.0
    b = (r * r - s * s - gamma) / (r * s)
    # positive root of t^2 + b t - 1 = 0, written to avoid cancellation
    t = 2.0 / (b + math.sqrt(b * b + 4.0)) if b > 0 else (-b + math.sqrt(b * b + 4.0)) / 2.0
    q2 = 1.0 / (1.0 + t * t)
    p2 = 1.0 - q2
    q = math.sqrt(q2)
    p = math.sqrt(p2)
    return gamma * q2 + (s * q - r * p) ** 2


def _theorem1_grid(gamma: float, gamma_bar: float, delta: float, points: int = GRID_POINTS) -> float:
    theta = np.linspace(0.0, math.pi, points, endpoint=False)
    p, q = np.cos(theta), np.sin(theta)
    rho = math.sqrt(max(1.0 - delta, 0.0) / gamma_bar)
    return float(np.min(gamma * q * q + gamma_bar * (q * rho - p) ** 2))


def theorem1_bound(gamma_hat_min: float, gamma_bar: float, delta_lb: float) -> BoundCertificate:
    """Minimum over p^2+q^2=1 of gamma_hat q^2 + gamma_bar (q rho - p)^2, rho = sqrt((1-delta)/gamma_bar).

    ``delta_lb`` must lower-bound the quotient of the block-perpendicular part against A_tilde;
    the smallest eigenvalue of A_tilde and 1 - 2T both qualify.
    """
    _check_unit("gamma_hat_min", gamma_hat_min)
    _check_unit("gamma_bar", gamma_bar, open_lo=True)
    _check_unit("delta", delta_lb, lo=-1.0)
    closed = _theorem1_closed_form(gamma_hat_min, gamma_bar, delta_lb)
    grid = _theorem1_grid(gamma_hat_min, gamma_bar, delta_lb)
    if abs(grid - closed) > GRID_TOL:
        raise ArithmeticError(f"closed form {closed!r} disagrees with grid minimum {grid!r}")
    inputs = {"gamma_hat_min": gamma_hat_min, "gamma_bar": gamma_bar, "delta": delta_lb, "grid_min": grid}
    return BoundCertificate("theorem1", max(closed, 0.0), inputs)


def theorem3_bound(gamma_hat_min: float, gamma_tilde_min: float, epsilon: float) -> BoundCertificate:
    _check_unit("epsilon", epsilon)
    value = min(gamma_hat_min, gamma_tilde_min) * (1.0 - epsilon) ** 2
    inputs = {"gamma_hat_min": gamma_hat_min, "gamma_tilde_min": gamma_tilde_min, "epsilon": epsilon}
    return BoundCertificate("theorem3", max(value, 0.0), inputs)


def corollary_T_bound(gamma_hat_min: float, gamma_bar: float, T: float) -> BoundCertificate:
    _check_unit("T", T)
    _check_unit("gamma_hat_min", gamma_hat_min)
    _check_unit("gamma_bar", gamma_bar, open_lo=True)
    value = min(gamma_bar / 3.0, gamma_hat_min * gamma_bar / (3.0 * T + gamma_bar))
    via_t1 = theorem1_bound(gamma_hat_min, gamma_bar, 1.0 - 2.0 * T).value
    if via_t1 < value - 1e-12:
        raise ArithmeticError(f"escape-parameter bound {value!r} exceeds its parent bound {via_t1!r}")
    inputs = {"gamma_hat_min": gamma_hat_min, "gamma_bar": gamma_bar, "T": T, "theorem1_at_1_minus_2T": via_t1}
    return BoundCertificate("corollary_T", max(value, 0.0), inputs)


def corollary_lazy_bound(chain: ReversibleChain, gamma_hat_min: float, gamma_bar: float) -> BoundCertificate:
    """gamma_hat * gamma_bar / 3, available only for chains whose self-loops are all at least 1/2."""
    if not chain.is_lazy():
        raise DomainError("chain is not lazy")
    _check_unit("gamma_hat_min", gamma_hat_min)
    _check_unit("gamma_bar", gamma_bar, open_lo=True)
    value = gamma_hat_min * gamma_bar / 3.0
    return BoundCertificate("corollary_lazy", value, {"gamma_hat_min": gamma_hat_min, "gamma_bar": gamma_bar})


def min_gap_product(chains: Sequence[ReversibleChain], selection_probs: Sequence[float]) -> BoundCertificate:
    value = product_gap(chains, selection_probs)
    return BoundCertificate("min_gap_product", value, {"selection_probs": list(map(float, selection_probs))})


def _admissible_alpha_basis(bundle: DecompositionBundle) -> np.ndarray:
    """Orthonormal basis of block-coefficient vectors orthogonal to sqrt(pi_bar)."""
    s = np.sqrt(bundle.projection.pi)
    return null_space(s[None, :])


def epsilon_exact(bundle: DecompositionBundle) -> float:
    """Largest norm of the top-eigenspace part of x_hat_par over admissible unit x.

    Equals the second singular value of the overlap matrix.
    """
    Q = _admissible_alpha_basis(bundle)
    if Q.shape[1] == 0:
        return 0.0
    sv = np.linalg.svd(Q.T @ bundle.overlap, compute_uv=False)
    return float(min(sv[0], 1.0)) if sv.size else 0.0


def epsilon_witness(bundle: DecompositionBundle) -> np.ndarray:
    """An admissible unit vector attaining the exact epsilon."""
    Q = _admissible_alpha_basis(bundle)
    if Q.shape[1] == 0:
        raise DomainError("a single block admits no nonzero block-parallel vector")
    U, _, _ = np.linalg.svd(Q.T @ bundle.overlap)
    alpha = Q @ U[:, 0]
    x = bundle.hat_basis @ alpha
    return x / np.linalg.norm(x)


def epsilon_r_bound(bundle: DecompositionBundle) -> float:
    """Square root of sum over (i, j) of mass * (sqrt(r) - 1/sqrt(r))^2, r = mass / (pi_hat(i) pi_tilde(j)).

    Each term is the square of B(i,j) - sqrt(pi_hat(i) pi_tilde(j)), which is how it is evaluated.
    A block and a piece that do not meet still contribute pi_hat(i) pi_tilde(j); dropping those
    terms can push the sum below the exact epsilon.
    """
    pi_hat = bundle.projection.pi
    pi_tilde = np.array([bundle.chain.pi[idx].sum() for idx in bundle.tilde_members])
    V = bundle.overlap - np.sqrt(np.outer(pi_hat, pi_tilde))
    return math.sqrt(float(np.sum(V * V)))


def bundle_certificates(bundle: DecompositionBundle, exact_gap: float | None = None) -> list[BoundCertificate]:
    """Every applicable bound for one decomposition, gaps clamped to [0, 1].

    Clamping is sound: each bound is nondecreasing in the gaps it consumes.
    """
    gh = min(max(bundle.gamma_hat_min, 0.0), 1.0)
    gt = min(max(bundle.gamma_tilde_min, 0.0), 1.0)
    gb = min(max(bundle.gamma_bar, 0.0), 1.0)
    if exact_gap is None:
        exact_gap = spectrum(bundle.chain).gap
    certs = [theorem3_bound(gh, gt, epsilon_exact(bundle))]
    if gb > 0:
        certs.append(theorem1_bound(gh, gb, max(-1.0, min(1.0, bundle.mu_min))))
        certs.append(corollary_T_bound(gh, gb, bundle.T))
        if bundle.chain.is_lazy():
            certs.append(corollary_lazy_bound(bundle.chain, gh, gb))
    return [c.with_exact(exact_gap) for c in certs]
