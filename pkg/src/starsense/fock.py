"""Exact few-photon linear optics on sparse Fock states.

Pure states are sparse maps from occupation tuples to complex amplitudes;
density operators are dense matrices over the lexicographic basis of all
occupation tuples whose total photon number does not exceed the space
cutoff. Everything is immutable after construction and all operations are
pure functions, so independent evaluations can run in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import CutoffExceeded, SpaceMismatch, ZeroProbabilityBranch

PRUNE_THRESHOLD = 1e-15
DEFAULT_CUTOFF = 4

Occupation = tuple[int, ...]


@lru_cache(maxsize=None)
def _basis_tuples(n_modes: int, cutoff: int) -> tuple[Occupation, ...]:
    """All occupation tuples with total photons <= cutoff, lexicographic."""
    out: list[Occupation] = []

    def rec(prefix: list[int], budget: int, modes_left: int) -> None:
        if modes_left == 0:
            out.append(tuple(prefix))
            return
        for n in range(budget + 1):
            prefix.append(n)
            rec(prefix, budget - n, modes_left - 1)
            prefix.pop()

    rec([], cutoff, n_modes)
    return tuple(out)


@lru_cache(maxsize=None)
def _basis_index(n_modes: int, cutoff: int) -> dict[Occupation, int]:
    return {occ: i for i, occ in enumerate(_basis_tuples(n_modes, cutoff))}


@dataclass(frozen=True)
class FockSpace:
    """A truncated bosonic space: ``n_modes`` modes, at most ``cutoff``
    photons in total."""

    n_modes: int
    cutoff: int = DEFAULT_CUTOFF

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        if self.cutoff < 0:
            raise ValueError("cutoff must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.basis())

    def basis(self) -> tuple[Occupation, ...]:
        return _basis_tuples(self.n_modes, self.cutoff)

    def index(self, occ: Occupation) -> int:
        return _basis_index(self.n_modes, self.cutoff)[self.validate_occupation(occ)]

    def validate_occupation(self, occ: Iterable[int]) -> Occupation:
        occ = tuple(int(n) for n in occ)
        if len(occ) != self.n_modes:
            raise SpaceMismatch(
                f"occupation {occ} has {len(occ)} modes, space has {self.n_modes}"
            )
        if any(n < 0 for n in occ):
            raise ValueError(f"negative occupation in {occ}")
        if sum(occ) > self.cutoff:
            raise CutoffExceeded(
                f"occupation {occ} holds {sum(occ)} photons, cutoff is {self.cutoff}"
            )
        return occ

    def validate_mode(self, mode: int) -> int:
        if not 0 <= mode < self.n_modes:
            raise ValueError(f"mode {mode} out of range for {self.n_modes} modes")
        return mode


class FockState:
    """Sparse pure state on a :class:`FockSpace`.

    Amplitudes with magnitude below ``PRUNE_THRESHOLD`` are dropped so that
    interference cancellations keep the map sparse. The norm may be below 1
    (sub-normalized branches produced during post-selection) but never
    meaningfully above it.
    """

    __slots__ = ("space", "_amp", "_norm")

    def __init__(
        self,
        space: FockSpace,
        amplitudes: Mapping[Iterable[int], complex],
        *,
        normalize: bool = False,
    ) -> None:
        amp: dict[Occupation, complex] = {}
        for occ, a in amplitudes.items():
            a = complex(a)
            if abs(a) < PRUNE_THRESHOLD:
                continue
            amp[space.validate_occupation(occ)] = a
        if not amp:
            raise ValueError("state has no amplitude above the prune threshold")
        norm = math.sqrt(sum(abs(a) ** 2 for a in amp.values()))
        if normalize:
            amp = {occ: a / norm for occ, a in amp.items()}
            norm = 1.0
        elif norm > 1.0 + 1e-9:
            raise ValueError(f"state norm {norm} exceeds 1")
        self.space = space
        self._amp = amp
        self._norm = norm

    @classmethod
    def basis_state(cls, space: FockSpace, occ: Iterable[int]) -> "FockState":
        return cls(space, {tuple(occ): 1.0})

    @property
    def amplitudes(self) -> Mapping[Occupation, complex]:
        return MappingProxyType(self._amp)

    @property
    def norm(self) -> float:
        return self._norm

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self._norm - 1.0) <= tol

    def amplitude(self, occ: Iterable[int]) -> complex:
        return self._amp.get(self.space.validate_occupation(occ), 0j)

    def items(self) -> Iterator[tuple[Occupation, complex]]:
        return iter(self._amp.items())

    def normalized(self) -> "FockState":
        if self.is_normalized():
            return self
        return FockState(self.space, self._amp, normalize=True)

    def scaled(self, factor: complex) -> "FockState":
        return FockState(self.space, {o: a * factor for o, a in self._amp.items()})

    def tensor(self, other: "FockState") -> "FockState":
        space = FockSpace(
            self.space.n_modes + other.space.n_modes,
            self.space.cutoff + other.space.cutoff,
        )
        amp = {
            occ_a + occ_b: a * b
            for occ_a, a in self._amp.items()
            for occ_b, b in other._amp.items()
        }
        return FockState(space, amp)

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(self.space.dim, dtype=complex)
        index = _basis_index(self.space.n_modes, self.space.cutoff)
        for occ, a in self._amp.items():
            vec[index[occ]] = a
        return vec

    @classmethod
    def from_vector(cls, space: FockSpace, vec: np.ndarray) -> "FockState":
        basis = space.basis()
        return cls(space, {basis[i]: v for i, v in enumerate(vec) if abs(v) >= PRUNE_THRESHOLD})

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        terms = ", ".join(f"{occ}: {a:.4g}" for occ, a in sorted(self._amp.items()))
        return f"FockState({self.space.n_modes} modes, {{{terms}}})"


def inner_product(a: FockState, b: FockState) -> complex:
    """<a|b> over matching spaces."""
    if a.space != b.space:
        raise SpaceMismatch(f"{a.space} vs {b.space}")
    small, large = (a._amp, b._amp) if len(a._amp) <= len(b._amp) else (b._amp, a._amp)
    acc = 0j
    for occ, _ in small.items():
        acc += np.conj(a._amp.get(occ, 0j)) * b._amp.get(occ, 0j)
    return acc


def fidelity(a: FockState, b: FockState) -> float:
    """|<a|b>|^2; equals 1 iff the states agree up to a global phase."""
    return abs(inner_product(a, b)) ** 2


def permute_modes(state: FockState, perm: Iterable[int]) -> FockState:
    """Reorder modes so that new mode ``i`` is old mode ``perm[i]``."""
    perm = tuple(perm)
    if sorted(perm) != list(range(state.space.n_modes)):
        raise ValueError(f"{perm} is not a permutation of the modes")
    return FockState(
        state.space,
        {tuple(occ[p] for p in perm): a for occ, a in state.items()},
    )


# --- beam splitters and interferometers -------------------------------------

CONVENTIONS = ("real-hadamard", "symmetric-i")


@dataclass(frozen=True)
class BeamSplitter:
    """A two-mode beam splitter acting on ``(mode_a, mode_b)``.

    ``transmittance`` is the power transmittance. The 50:50 single-photon
    matrix is the real Hadamard for ``real-hadamard`` and the symmetric
    i-phase matrix for ``symmetric-i``.
    """

    mode_a: int
    mode_b: int
    transmittance: float = 0.5
    convention: str = "real-hadamard"

    def __post_init__(self) -> None:
        if self.mode_a == self.mode_b:
            raise ValueError("beam splitter needs two distinct modes")
        if not 0.0 <= self.transmittance <= 1.0:
            raise ValueError("transmittance must lie in [0, 1]")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown phase convention {self.convention!r}")


def _bs_mode_matrix(transmittance: float, convention: str) -> np.ndarray:
    t = math.sqrt(transmittance)
    r = math.sqrt(1.0 - transmittance)
    if convention == "real-hadamard":
        return np.array([[t, r], [r, -t]], dtype=complex)
    if convention == "symmetric-i":
        return np.array([[t, 1j * r], [1j * r, t]], dtype=complex)
    raise ValueError(f"unknown phase convention {convention!r}")


@lru_cache(maxsize=None)
def _pair_images(
    ni: int, nj: int, u: complex, v: complex, w: complex, x: complex
) -> tuple[tuple[int, int, complex], ...]:
    """Image of |ni, nj> under a two-mode matrix with columns (u,v), (w,x).

    Expands (u a + v b)^ni (w a + x b)^nj and restores Fock normalization.
    """
    acc: dict[tuple[int, int], complex] = {}
    for k in range(ni + 1):
        ci = math.comb(ni, k) * u**k * v ** (ni - k)
        for l in range(nj + 1):
            c = ci * math.comb(nj, l) * w**l * x ** (nj - l)
            p = k + l
            q = ni + nj - p
            acc[(p, q)] = acc.get((p, q), 0j) + c
    base = math.sqrt(math.factorial(ni) * math.factorial(nj))
    return tuple(
        (p, q, c * math.sqrt(math.factorial(p) * math.factorial(q)) / base)
        for (p, q), c in acc.items()
        if abs(c) > 0.0
    )


def beam_splitter_apply(
    state: FockState,
    mode_a: int,
    mode_b: int,
    transmittance: float,
    phase_convention: str = "real-hadamard",
) -> FockState:
    """Apply the two-mode bosonic beam-splitter homomorphism.

    Norm-preserving; photon number is conserved, so a valid input can never
    leave the space (the constructor still enforces the cutoff).
    """
    space = state.space
    space.validate_mode(mode_a)
    space.validate_mode(mode_b)
    if mode_a == mode_b:
        raise ValueError("beam splitter needs two distinct modes")
    m = _bs_mode_matrix(float(transmittance), phase_convention)
    u, v = complex(m[0, 0]), complex(m[1, 0])
    w, x = complex(m[0, 1]), complex(m[1, 1])
    new: dict[Occupation, complex] = {}
    for occ, amp in state.items():
        ni, nj = occ[mode_a], occ[mode_b]
        if ni == 0 and nj == 0:
            new[occ] = new.get(occ, 0j) + amp
            continue
        for p, q, coef in _pair_images(ni, nj, u, v, w, x):
            lst = list(occ)
            lst[mode_a] = p
            lst[mode_b] = q
            key = tuple(lst)
            new[key] = new.get(key, 0j) + amp * coef
    return FockState(space, new)


def apply_interferometer(state: FockState, network: Iterable[BeamSplitter]) -> FockState:
    """Apply beam splitters in sequence; an empty network is the identity."""
    for bs in network:
        state = beam_splitter_apply(
            state, bs.mode_a, bs.mode_b, bs.transmittance, bs.convention
        )
    return state


class ModeUnitary:
    """Single-photon mode-mixing matrix with a unitarity guarantee."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray) -> None:
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("mode unitary must be square")
        dev = np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0])))
        if dev > 1e-12:
            raise ValueError(f"matrix is not unitary (deviation {dev:.3g})")
        m.setflags(write=False)
        self.matrix = m

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0]


def mode_matrix(network: Iterable[BeamSplitter], n_modes: int) -> ModeUnitary:
    """Compose the network into its action on single-photon amplitudes."""
    total = np.eye(n_modes, dtype=complex)
    for bs in network:
        if not (0 <= bs.mode_a < n_modes and 0 <= bs.mode_b < n_modes):
            raise ValueError(f"beam splitter {bs} outside {n_modes} modes")
        m = _bs_mode_matrix(bs.transmittance, bs.convention)
        step = np.eye(n_modes, dtype=complex)
        step[bs.mode_a, bs.mode_a] = m[0, 0]
        step[bs.mode_a, bs.mode_b] = m[0, 1]
        step[bs.mode_b, bs.mode_a] = m[1, 0]
        step[bs.mode_b, bs.mode_b] = m[1, 1]
        total = step @ total
    return ModeUnitary(total)


# --- density operators -------------------------------------------------------

class DensityOperator:
    """Dense Hermitian operator over the enumerated basis of a space.

    Constructors validate Hermiticity (1e-12), trace in (0, 1 + 1e-12]
    and positivity (minimum eigenvalue >= -1e-10).
    """

    __slots__ = ("space", "_m")

    def __init__(self, space: FockSpace, matrix: np.ndarray, *, validate: bool = True) -> None:
        m = np.array(matrix, dtype=complex)
        if m.shape != (space.dim, space.dim):
            raise SpaceMismatch(
                f"matrix shape {m.shape} does not match space dimension {space.dim}"
            )
        if validate:
            herm_dev = float(np.max(np.abs(m - m.conj().T)))
            if herm_dev > 1e-12:
                raise ValueError(f"matrix is not Hermitian (deviation {herm_dev:.3g})")
            tr = float(np.real(np.trace(m)))
            if not 0.0 < tr <= 1.0 + 1e-12:
                raise ValueError(f"trace {tr} outside (0, 1]")
            min_eig = float(np.min(np.linalg.eigvalsh(m)))
            if min_eig < -1e-10:
                raise ValueError(f"matrix is not positive (min eigenvalue {min_eig:.3g})")
        m.setflags(write=False)
        self.space = space
        self._m = m

    @classmethod
    def from_pure(cls, state: FockState) -> "DensityOperator":
        vec = state.to_vector()
        return cls(state.space, np.outer(vec, vec.conj()))

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    def trace(self) -> float:
        return float(np.real(np.trace(self._m)))

    def entry(self, occ_row: Iterable[int], occ_col: Iterable[int]) -> complex:
        return complex(self._m[self.space.index(tuple(occ_row)), self.space.index(tuple(occ_col))])

    def nonzero_entries(self, tol: float = 0.0) -> Iterator[tuple[Occupation, Occupation, complex]]:
        basis = self.space.basis()
        rows, cols = np.nonzero(np.abs(self._m) > tol)
        for r, c in zip(rows, cols):
            yield basis[r], basis[c], complex(self._m[r, c])

    def expectation_pure(self, state: FockState) -> float:
        """<psi| rho |psi>, the fidelity with a pure state."""
        vec = state.to_vector()
        return float(np.real(vec.conj() @ self._m @ vec))


def tensor_operators(a: DensityOperator, b: DensityOperator) -> DensityOperator:
    """Tensor product, re-expressed on the joint truncated basis."""
    space = FockSpace(a.space.n_modes + b.space.n_modes, a.space.cutoff + b.space.cutoff)
    dim = space.dim
    out = np.zeros((dim, dim), dtype=complex)
    for occ_ar, occ_ac, va in a.nonzero_entries(1e-18):
        for occ_br, occ_bc, vb in b.nonzero_entries(1e-18):
            out[space.index(occ_ar + occ_br), space.index(occ_ac + occ_bc)] = va * vb
    return DensityOperator(space, out, validate=False)


def partial_trace(rho: DensityOperator, traced_modes: Iterable[int]) -> DensityOperator:
    """Trace out the given modes, returning an operator on the rest."""
    traced = sorted(set(rho.space.validate_mode(m) for m in traced_modes))
    keep = [m for m in range(rho.space.n_modes) if m not in traced]
    if not keep:
        raise ValueError("cannot trace out every mode")
    out_space = FockSpace(len(keep), rho.space.cutoff)
    out = np.zeros((out_space.dim, out_space.dim), dtype=complex)
    basis = rho.space.basis()
    kept_index = _basis_index(out_space.n_modes, out_space.cutoff)
    for r, occ_r in enumerate(basis):
        tr_r = tuple(occ_r[m] for m in traced)
        kr = kept_index[tuple(occ_r[m] for m in keep)]
        for c, occ_c in enumerate(basis):
            if tuple(occ_c[m] for m in traced) != tr_r:
                continue
            kc = kept_index[tuple(occ_c[m] for m in keep)]
            out[kr, kc] += rho._m[r, c]
    return DensityOperator(out_space, out, validate=False)


def _embed_local(space: FockSpace, mode: int, element: np.ndarray) -> np.ndarray:
    """Lift a single-mode operator to the full truncated basis."""
    local_dim = space.cutoff + 1
    el = np.asarray(element, dtype=complex)
    if el.shape != (local_dim, local_dim):
        raise SpaceMismatch(
            f"local element shape {el.shape}, expected {(local_dim, local_dim)}"
        )
    basis = space.basis()
    dim = space.dim
    groups: dict[tuple[int, ...], list[tuple[int, int]]] = {}
    for i, occ in enumerate(basis):
        rest = occ[:mode] + occ[mode + 1 :]
        groups.setdefault(rest, []).append((occ[mode], i))
    out = np.zeros((dim, dim), dtype=complex)
    for members in groups.values():
        for n_r, i_r in members:
            for n_c, i_c in members:
                out[i_r, i_c] = el[n_r, n_c]
    return out


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def measure_and_condition(
    rho: DensityOperator,
    mode: int,
    element: np.ndarray,
    *,
    strict: bool = False,
) -> tuple[float, DensityOperator | None]:
    """Measure one POVM element on a mode and condition on it.

    Returns ``(probability, conditional c state on the remaining modes)``.
    A zero-probability outcome yields ``(0.0, None)`` rather than dividing
    by zero; with ``strict=True`` it raises :class:`ZeroProbabilityBranch`.
    """
    rho.space.validate_mode(mode)
    full = _embed_local(rho.space, mode, element)
    prob = float(np.real(np.trace(full @ rho.matrix)))
    if prob < 1e-14:
        if strict:
            raise ZeroProbabilityBranch(
                f"outcome on mode {mode} has probability {prob:.3g}"
            )
        return 0.0, None
    k = _psd_sqrt(full)
    post = k @ rho.matrix @ k.conj().T
    reduced = partial_trace(DensityOperator(rho.space, post, validate=False), [mode])
    return prob, DensityOperator(reduced.space, reduced.matrix / prob)


def loss_channel(rho: DensityOperator, mode: int, eta: float) -> DensityOperator:
    """Pure-loss channel with power transmittance ``eta`` on one mode.

    Kraus operators: <n-m|K_m|n> = sqrt(C(n,m)) sqrt(eta^(n-m)) sqrt((1-eta)^m).
    Trace preserving.
    """
    rho.space.validate_mode(mode)
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    space = rho.space
    basis = space.basis()
    index = _basis_index(space.n_modes, space.cutoff)
    dim = space.dim
    out = np.zeros((dim, dim), dtype=complex)
    for m in range(space.cutoff + 1):
        k = np.zeros((dim, dim), dtype=complex)
        populated = False
        for i, occ in enumerate(basis):
            n = occ[mode]
            if n < m:
                continue
            coef = math.sqrt(math.comb(n, m) * eta ** (n - m) * (1.0 - eta) ** m)
            if coef == 0.0:
                continue
            target = list(occ)
            target[mode] = n - m
            k[index[tuple(target)], i] = coef
            populated = True
        if populated:
            out += k @ rho.matrix @ k.conj().T
    return DensityOperator(space, out, validate=False)


class Povm:
    """A positive operator-valued measure on a single-mode space.

    Elements are validated to be positive semidefinite within 1e-10 and to
    sum to the identity within 1e-10.
    """

    __slots__ = ("elements", "label")

    def __init__(self, elements: Iterable[np.ndarray], label: str = "") -> None:
        els = [np.asarray(e, dtype=complex) for e in elements]
        if not els:
            raise ValueError("POVM needs at least one element")
        dim = els[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for e in els:
            if e.shape != (dim, dim):
                raise SpaceMismatch("POVM elements have mismatched shapes")
            if np.max(np.abs(e - e.conj().T)) > 1e-10:
                raise ValueError("POVM element is not Hermitian")
            if float(np.min(np.linalg.eigvalsh(e))) < -1e-10:
                raise ValueError("POVM element is not positive semidefinite")
            e.setflags(write=False)
            total += e
        if np.max(np.abs(total - np.eye(dim))) > 1e-10:
            raise ValueError("POVM elements do not sum to the identity")
        self.elements = tuple(els)
        self.label = label

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)
