"""Classical and quantum Fisher information and Cramér-Rao bounds.

The combination figure of merit for a weight vector w is
w^T F w / (w^T w)^2, evaluated verbatim (the GHZ Fisher matrices are
singular, so no inverse-based form is possible). Mixed states get a
convexity upper bound on their quantum Fisher information, never the
exact value; every consumer labels it as a bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import NotNormalized, SingularOutcome, ZeroWeights
from .fock import FockState
from .sensing import OutcomeModel, ScalarOutcomeModel

PROB_FLOOR = 1e-12
DERIV_TOL = 1e-9
FISHER_FLOOR = 1e-14


@dataclass(frozen=True)
class FisherMatrix:
    """Symmetric positive semidefinite information matrix."""

    entries: np.ndarray
    kind: str  # "classical" | "quantum"

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("Fisher matrix must be square")
        if np.max(np.abs(m - m.T)) > 1e-10:
            raise ValueError("Fisher matrix must be symmetric")
        if float(np.min(np.linalg.eigvalsh(m))) < -1e-9:
            raise ValueError("Fisher matrix must be positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class CrbResult:
    """A Cramér-Rao variance bound with loss-scaled effective trials."""

    fisher_scalar: float
    effective_trials: float
    variance_bound: float
    diverged: bool


def cfim(
    model: OutcomeModel,
    theta: Sequence[float],
    *,
    prob_floor: float = PROB_FLOOR,
    deriv_tol: float = DERIV_TOL,
) -> FisherMatrix:
    """Classical Fisher information matrix of the outcome distribution.

    Outcomes whose probability and derivative both vanish contribute
    nothing (the 0/0 limit of an extinguished fringe); a vanishing
    probability with a live derivative sits on the boundary of the
    parameter space and raises :class:`SingularOutcome`.
    """
    probs = model.probabilities(theta)
    derivs = model.derivatives(theta)
    dim = model.n_params
    out = np.zeros((dim, dim))
    for k in range(model.n_outcomes):
        p = probs[k]
        grad = derivs[:, k]
        if p < prob_floor:
            if np.max(np.abs(grad)) < deriv_tol:
                continue
            raise SingularOutcome(
                f"outcome {k}: probability {p:.3g} with derivative "
                f"{np.max(np.abs(grad)):.3g}"
            )
        out += np.outer(grad, grad) / p
    return FisherMatrix(out, "classical")


def combination_scalar(fisher: FisherMatrix | np.ndarray, weights: Sequence[float]) -> float:
    """w^T F w / (w^T w)^2 for the weighted parameter combination."""
    w = np.asarray(weights, dtype=float)
    wtw = float(w @ w)
    if wtw == 0.0:
        raise ZeroWeights("combination weights are all zero")
    m = fisher.entries if isinstance(fisher, FisherMatrix) else np.asarray(fisher, dtype=float)
    return float(w @ m @ w) / wtw**2


def qfim_pure(
    psi: FockState,
    dpsi: Sequence[Mapping[tuple[int, ...], complex]],
    *,
    norm_tol: float = 1e-10,
) -> FisherMatrix:
    """Quantum Fisher information matrix of a normalized pure state.

    ``dpsi`` holds the parameter derivatives of the state as raw amplitude
    maps (they may be zero and need not be normalized):
    F_kl = 4 Re(<d_k|d_l> - <d_k|psi><psi|d_l>).
    """
    if abs(psi.norm - 1.0) > norm_tol:
        raise NotNormalized(f"state norm {psi.norm} is not 1")

    def overlap(a: Mapping, b: Mapping) -> complex:
        small, other = (a, b) if len(a) <= len(b) else (b, a)
        return sum(np.conj(a.get(occ, 0j)) * b.get(occ, 0j) for occ in small)

    amp = dict(psi.amplitudes)
    n = len(dpsi)
    h = np.array([overlap(d, amp) for d in dpsi])
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            val = 4.0 * (overlap(dpsi[i], dpsi[j]) - h[i] * np.conj(h[j])).real
            out[i, j] = out[j, i] = val
    return FisherMatrix(out, "quantum")


def number_phase_derivatives(psi: FockState) -> list[dict[tuple[int, ...], complex]]:
    """Derivatives of U_theta |psi> at theta for per-mode number encoding.

    d_k = i n_k |psi>; independent of theta up to the global unitary, so
    the Fisher matrix can be evaluated at theta = 0.
    """
    return [
        {occ: 1j * occ[mode] * a for occ, a in psi.items() if occ[mode]}
        for mode in range(psi.space.n_modes)
    ]


def qfim_phase_encoded(psi: FockState) -> FisherMatrix:
    """QFIM of a pure state under per-mode phase encoding."""
    return qfim_pure(psi, number_phase_derivatives(psi))


def qfi_bound_mixed(
    p: float, pure_fim: FisherMatrix, weights: Sequence[float]
) -> float:
    """Convexity upper bound on the mixed-state combination QFI.

    For a state that is a GHZ block of weight p plus phase-blind diagonal
    residues, the combination QFI is at most p times the pure-state value.
    This is an upper bound, not the exact quantum Fisher information.
    """
    if not 0.0 <= p <= 1.0 + 1e-12:
        raise ValueError(f"weight p={p} outside [0, 1]")
    return p * combination_scalar(pure_fim, weights)


def crb(fisher_scalar: float, n_trials: float, p_suc: float) -> CrbResult:
    """Variance bound 1/(N' F) with effective trials N' = N * P_suc.

    Divergence (zero information or zero success rate) is reported as a
    value, not an exception.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    if not 0.0 <= p_suc <= 1.0 + 1e-12:
        raise ValueError(f"P_suc={p_suc} outside [0, 1]")
    n_eff = n_trials * p_suc
    if fisher_scalar <= FISHER_FLOOR or n_eff <= 0.0:
        return CrbResult(max(fisher_scalar, 0.0), n_eff, math.inf, True)
    return CrbResult(fisher_scalar, n_eff, 1.0 / (n_eff * fisher_scalar), False)


def scalar_fisher_1d(
    model: ScalarOutcomeModel,
    phi: float,
    *,
    prob_floor: float = PROB_FLOOR,
    deriv_tol: float = DERIV_TOL,
) -> float:
    """Fisher information of the scalar-phase restriction of a model.

    Uses the same vanishing-outcome conventions as :func:`cfim`. For a
    pattern model restricted along its +-1 sign direction with unit scale
    this equals the combination value for the matching weight vector.
    """
    probs = model.probabilities(phi)
    derivs = model.derivative(phi)
    total = 0.0
    for p, d in zip(probs, derivs):
        if p < prob_floor:
            if abs(d) < deriv_tol:
                continue
            raise SingularOutcome(
                f"probability {p:.3g} with derivative {d:.3g} at phi={phi}"
            )
        total += d * d / p
    return total
