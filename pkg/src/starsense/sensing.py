"""Phase encoding and local measurement models.

Each station imprints its phase through the diagonal unitary
|n> -> exp(i n theta) on its kept rail. Local measurements are two-element
POVMs; the joint statistics over four stations form a 16-outcome
distribution P_k(theta) whose value and exact derivatives are needed by
the Fisher-information machinery. Derivatives are analytic (the encoding
is a diagonal unitary), with finite differences reserved for cross-checks
in tests.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import NotEffectivelyScalar, SpaceMismatch
from .fock import DEFAULT_CUTOFF, DensityOperator, Povm

N_STATIONS = 4


def canonical_phase(theta: float) -> float:
    """Wrap a phase into the reporting range (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def as_phase_vector(theta: Sequence[float] | float) -> np.ndarray:
    if np.isscalar(theta):
        raise ValueError("a phase vector needs one entry per station")
    vec = np.asarray(theta, dtype=float)
    if vec.shape != (N_STATIONS,):
        raise ValueError(f"expected {N_STATIONS} phases, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("phases must be finite")
    return vec


def phase_encode(rho: DensityOperator, theta: Sequence[float]) -> DensityOperator:
    """Apply the product of per-mode diagonal phase unitaries.

    Entry (n, m) picks up exp(i theta . (n - m)); populations are
    untouched.
    """
    vec = as_phase_vector(theta)
    if rho.space.n_modes != N_STATIONS:
        raise SpaceMismatch("phase encoding expects a four-mode state")
    basis = rho.space.basis()
    phases = np.exp(1j * np.array([vec @ np.array(occ) for occ in basis]))
    encoded = phases[:, None] * rho.matrix * phases.conj()[None, :]
    return DensityOperator(rho.space, encoded, validate=False)


# --- local POVMs ----------------------------------------------------------------

def sigma_x_povm(cutoff: int = DEFAULT_CUTOFF) -> Povm:
    """Projectors onto (|0> +- |1>)/sqrt(2), padded on higher occupations.

    Occupations above one never occur in the protocol's kept rails; the
    identity on them is split evenly between the two elements so the POVM
    stays complete.
    """
    dim = cutoff + 1
    plus = np.zeros((dim, dim), dtype=complex)
    minus = np.zeros((dim, dim), dtype=complex)
    plus[:2, :2] = 0.5 * np.array([[1, 1], [1, 1]])
    minus[:2, :2] = 0.5 * np.array([[1, -1], [-1, 1]])
    if dim > 2:
        pad = np.eye(dim, dtype=complex)
        pad[:2, :2] = 0.0
        plus += pad / 2.0
        minus += pad / 2.0
    return Povm([plus, minus], label="sigma-x")


def displacement_povm(alpha: complex, cutoff: int = DEFAULT_CUTOFF) -> Povm:
    """Displacement followed by photon counting, truncated to the qubit span.

    Element 0 projects onto the truncated coherent vector
    exp(-|alpha|^2/2) (|0> + alpha |1>); element 1 is its complement.
    The vector is sub-normalized, so both elements are positive.
    """
    alpha = complex(alpha)
    if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
        raise ValueError("alpha must be finite")
    dim = cutoff + 1
    vec = np.zeros(dim, dtype=complex)
    scale = math.exp(-0.5 * abs(alpha) ** 2)
    vec[0] = scale
    if dim > 1:
        vec[1] = scale * alpha
    m0 = np.outer(vec, vec.conj())
    m1 = np.eye(dim, dtype=complex) - m0
    return Povm([m0, m1], label="displacement")


def _as_local_povms(local_povm: Povm | Sequence[Povm]) -> tuple[Povm, ...]:
    if isinstance(local_povm, Povm):
        return (local_povm,) * N_STATIONS
    povms = tuple(local_povm)
    if len(povms) != N_STATIONS:
        raise ValueError(f"need one POVM per station, got {len(povms)}")
    return povms


def coincidence_distribution(
    rho_theta: DensityOperator, local_povm: Povm | Sequence[Povm]
) -> np.ndarray:
    """Joint outcome probabilities P_k = Tr[rho M_k1 x M_k2 x M_k3 x M_k4].

    Outcome index k reads its binary digits (k1 k2 k3 k4) with station 1
    as the most significant bit.
    """
    return outcome_model(rho_theta, local_povm).probabilities([0.0] * N_STATIONS)


class OutcomeModel:
    """Parametrized coincidence distribution with analytic derivatives.

    Built from the state at theta = 0; the phase encoding is the diagonal
    unitary, so each matrix element contributes
    Re[c exp(i theta . delta)] with a constant complex coefficient c and an
    integer occupation difference delta. Evaluation and differentiation
    reduce to sums over these precomputed terms.
    """

    def __init__(self, rho_zero: DensityOperator, local_povm: Povm | Sequence[Povm]) -> None:
        if rho_zero.space.n_modes != N_STATIONS:
            raise SpaceMismatch("outcome models expect four-mode states")
        povms = _as_local_povms(local_povm)
        local_dim = rho_zero.space.cutoff + 1
        for p in povms:
            if p.dim != local_dim:
                raise SpaceMismatch(
                    f"POVM dimension {p.dim} does not match local dimension {local_dim}"
                )
        self.n_params = N_STATIONS
        self.n_outcomes = int(np.prod([len(p) for p in povms]))
        self._outcome_labels: list[tuple[int, ...]] = []
        entries = [
            (occ_r, occ_c, val)
            for occ_r, occ_c, val in rho_zero.nonzero_entries(1e-16)
        ]
        diag: list[float] = []
        terms: list[list[tuple[complex, np.ndarray]]] = []
        counts = [len(p) for p in povms]
        for k in range(self.n_outcomes):
            digits = []
            rem = k
            for c in reversed(counts):
                digits.append(rem % c)
                rem //= c
            digits = tuple(reversed(digits))
            self._outcome_labels.append(digits)
            mats = [povms[i].elements[digits[i]] for i in range(N_STATIONS)]
            d = 0.0
            t: dict[tuple[int, ...], complex] = {}
            for occ_r, occ_c, val in entries:
                elem = complex(val)
                for i in range(N_STATIONS):
                    elem *= mats[i][occ_c[i], occ_r[i]]
                    if elem == 0:
                        break
                if elem == 0:
                    continue
                if occ_r == occ_c:
                    d += elem.real
                elif occ_r < occ_c:
                    delta = tuple(int(r - c) for r, c in zip(occ_r, occ_c))
                    t[delta] = t.get(delta, 0j) + elem
            diag.append(d)
            terms.append([(c, np.array(delta)) for delta, c in t.items()])
        self._diag = np.array(diag)
        self._terms = terms

    @property
    def outcome_labels(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self._outcome_labels)

    def probabilities(self, theta: Sequence[float]) -> np.ndarray:
        vec = as_phase_vector(theta)
        out = np.array(self._diag)
        for k, terms in enumerate(self._terms):
            for c, delta in terms:
                out[k] += 2.0 * (c * np.exp(1j * float(vec @ delta))).real
        return out

    def derivatives(self, theta: Sequence[float]) -> np.ndarray:
        """Rows l = 0..3 hold dP_k / dtheta_l."""
        vec = as_phase_vector(theta)
        out = np.zeros((self.n_params, self.n_outcomes))
        for k, terms in enumerate(self._terms):
            for c, delta in terms:
                rotated = c * np.exp(1j * float(vec @ delta))
                out[:, k] += -2.0 * delta * rotated.imag
        return out


def outcome_model(
    rho_zero: DensityOperator, local_povm: Povm | Sequence[Povm]
) -> OutcomeModel:
    """Build the parametrized outcome distribution for a state at theta=0."""
    return OutcomeModel(rho_zero, local_povm)


class ScalarOutcomeModel:
    """An outcome model restricted to a single scalar phase.

    Station phases follow theta(phi) = phi * scale * direction. The
    restriction is legal only when every coherence of the underlying state
    is parallel to ``direction``, so the distribution depends on theta
    through the single combination direction . theta; otherwise
    :class:`NotEffectivelyScalar` is raised.

    With unit scale and a +-1 direction the coherence phase advances as
    4 phi, so the identifiability window is (-pi/4, pi/4).
    """

    def __init__(
        self,
        model: OutcomeModel,
        direction: Sequence[float],
        scale: float = 1.0,
    ) -> None:
        d = np.asarray(direction, dtype=float)
        if d.shape != (N_STATIONS,) or not np.any(d):
            raise ValueError("direction must be a nonzero four-vector")
        self.model = model
        self.direction = d
        self.scale = float(scale)
        self.n_outcomes = model.n_outcomes
        self._diag = np.array(model._diag)
        terms: list[list[tuple[complex, float]]] = []
        d_norm2 = float(d @ d)
        max_g = 0.0
        symmetric = True
        for k_terms in model._terms:
            row = []
            for c, delta in k_terms:
                proj = float(delta @ d) / d_norm2
                if np.max(np.abs(delta - proj * d)) > 1e-12:
                    raise NotEffectivelyScalar(
                        f"coherence {tuple(delta)} is not parallel to {tuple(d)}"
                    )
                g = float(delta @ d) * self.scale
                row.append((c, g))
                max_g = max(max_g, abs(g))
                if abs(c.imag) > 1e-12:
                    symmetric = False
            terms.append(row)
        self._terms = terms
        self.even_symmetric = symmetric
        self.window = (
            (-math.pi / max_g, math.pi / max_g) if max_g > 0 else (-math.pi, math.pi)
        )

    def station_phases(self, phi: float) -> np.ndarray:
        return float(phi) * self.scale * self.direction

    def probabilities(self, phi: float) -> np.ndarray:
        out = np.array(self._diag)
        for k, terms in enumerate(self._terms):
            for c, g in terms:
                out[k] += 2.0 * (c * np.exp(1j * g * float(phi))).real
        return out

    def derivative(self, phi: float) -> np.ndarray:
        out = np.zeros(self.n_outcomes)
        for k, terms in enumerate(self._terms):
            for c, g in terms:
                out[k] += -2.0 * g * (c * np.exp(1j * g * float(phi))).imag
        return out

    def probabilities_grid(self, phis: np.ndarray) -> np.ndarray:
        """Shape (n_outcomes, len(phis)); vectorized for likelihood scans."""
        phis = np.asarray(phis, dtype=float)
        out = np.repeat(self._diag[:, None], len(phis), axis=1)
        for k, terms in enumerate(self._terms):
            for c, g in terms:
                out[k] += 2.0 * (c.real * np.cos(g * phis) - c.imag * np.sin(g * phis))
        return out


def restrict_to_direction(
    model: OutcomeModel, direction: Sequence[float], scale: float = 1.0
) -> ScalarOutcomeModel:
    """Restrict a model to theta = phi * scale * direction."""
    return ScalarOutcomeModel(model, direction, scale)
