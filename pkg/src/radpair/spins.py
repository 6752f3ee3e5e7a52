"""Hilbert-space construction for a radical pair: two electron spins plus nuclei.

Basis convention (fixed so that serialized matrices are reproducible):
subspaces are ordered electron 1, electron 2, then nuclei in declaration
order; each spin multiplet is ordered by decreasing magnetic quantum number
(m = s, s-1, ..., -s).  The electron singlet is |S> = (|ud> - |du>)/sqrt(2).
Units are natural: hbar = 1, couplings and rates share one inverse-time unit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvariantViolation

_ALLOWED_NUCLEAR_SPINS = (0.5, 1.0, 1.5)

HERMITICITY_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-9
TRACE_CEILING = 1.0 + 1e-9

STATE_NAMES = (
    "singlet",
    "triplet_0",
    "triplet_plus",
    "triplet_minus",
    "coherent_plus",
    "coherent_minus",
    "mixed_ST",
    "custom",
)


@dataclass(frozen=True)
class NuclearSpec:
    """One nuclear spin: quantum number and the electron it couples to (1 or 2)."""

    spin: float
    coupled_electron: int = 1

    def __post_init__(self):
        if self.spin not in _ALLOWED_NUCLEAR_SPINS:
            raise ValueError(
                f"nuclear spin {self.spin} unsupported; allowed: {_ALLOWED_NUCLEAR_SPINS}"
            )
        if self.coupled_electron not in (1, 2):
            raise ValueError(f"coupled_electron must be 1 or 2, got {self.coupled_electron}")

    @property
    def multiplicity(self) -> int:
        return int(round(2 * self.spin + 1))


@dataclass(frozen=True)
class SpinSystem:
    """Two spin-1/2 electrons and an ordered tuple of nuclear spins.

    The total dimension is 4 times the product of the nuclear multiplicities.
    Instances are immutable and hashable, so derived operators are cached.
    """

    nuclei: tuple[NuclearSpec, ...] = ()

    electron_count = 2

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))

    @property
    def subspace_dims(self) -> tuple[int, ...]:
        return (2, 2) + tuple(n.multiplicity for n in self.nuclei)

    @property
    def nuclear_dim(self) -> int:
        d = 1
        for n in self.nuclei:
            d *= n.multiplicity
        return d

    @property
    def total_dim(self) -> int:
        return 4 * self.nuclear_dim

    @property
    def n_subspaces(self) -> int:
        return 2 + len(self.nuclei)


def spin_operators(spin: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular-momentum matrices (Sx, Sy, Sz) for a single spin.

    Sz is diagonal with entries spin, spin-1, ..., -spin and the triple
    satisfies the cyclic commutators [Sx, Sy] = i Sz.
    """
    two_s = 2 * spin
    if two_s < 0 or abs(two_s - round(two_s)) > 1e-12:
        raise ValueError(f"invalid spin {spin}: 2*spin must be a non-negative integer")
    d = int(round(two_s)) + 1
    m = np.arange(spin, -spin - 1, -1)
    sz = np.diag(m).astype(complex)
    sp = np.zeros((d, d), dtype=complex)
    for i in range(d - 1):
        mm = m[i + 1]
        sp[i, i + 1] = np.sqrt(spin * (spin + 1) - mm * (mm + 1))
    sm = sp.conj().T
    sx = (sp + sm) / 2
    sy = (sp - sm) / 2j
    return sx, sy, sz


def embed(system: SpinSystem, subspace_index: int, op: np.ndarray) -> np.ndarray:
    """Lift an operator on one subspace to the full space (identity elsewhere).

    Subspace indices are 1-based: 1 and 2 are the electrons, 3 onwards the
    nuclei in declaration order.
    """
    dims = system.subspace_dims
    if not 1 <= subspace_index <= len(dims):
        raise IndexError(f"subspace index {subspace_index} out of range 1..{len(dims)}")
    op = np.asarray(op, dtype=complex)
    d = dims[subspace_index - 1]
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match subspace dim {d}")
    full = np.eye(1, dtype=complex)
    for i, di in enumerate(dims, start=1):
        full = np.kron(full, op if i == subspace_index else np.eye(di, dtype=complex))
    return full


def electron_spin_ops(system: SpinSystem, electron: int) -> tuple[np.ndarray, ...]:
    """Embedded (Sx, Sy, Sz) of electron 1 or 2."""
    if electron not in (1, 2):
        raise ValueError(f"electron must be 1 or 2, got {electron}")
    return tuple(embed(system, electron, s) for s in spin_operators(0.5))


def nuclear_spin_ops(system: SpinSystem, nucleus: int) -> tuple[np.ndarray, ...]:
    """Embedded (Ix, Iy, Iz) of the nucleus-th nuclear spin (1-based)."""
    if not 1 <= nucleus <= len(system.nuclei):
        raise IndexError(f"nucleus index {nucleus} out of range 1..{len(system.nuclei)}")
    spin = system.nuclei[nucleus - 1].spin
    return tuple(embed(system, 2 + nucleus, s) for s in spin_operators(spin))


@lru_cache(maxsize=64)
def singlet_projector(system: SpinSystem) -> np.ndarray:
    """Projector onto the electron-singlet subspace, Q_S = (1/4 - s1.s2) x 1_nuc."""
    s1 = electron_spin_ops(system, 1)
    s2 = electron_spin_ops(system, 2)
    dot = sum(a @ b for a, b in zip(s1, s2))
    q = 0.25 * np.eye(system.total_dim, dtype=complex) - dot
    q.flags.writeable = False
    return q


@lru_cache(maxsize=64)
def triplet_projector(system: SpinSystem) -> np.ndarray:
    """Complement projector Q_T = 1 - Q_S."""
    q = np.eye(system.total_dim, dtype=complex) - singlet_projector(system)
    q.flags.writeable = False
    return q


# Electron-pair basis vectors in the product basis |m1 m2>, ordered uu, ud, du, dd.
_SQ2 = 1.0 / np.sqrt(2.0)
_ELECTRON_VECTORS = {
    "singlet": np.array([0, _SQ2, -_SQ2, 0], dtype=complex),
    "triplet_0": np.array([0, _SQ2, _SQ2, 0], dtype=complex),
    "triplet_plus": np.array([1, 0, 0, 0], dtype=complex),
    "triplet_minus": np.array([0, 0, 0, 1], dtype=complex),
}
_ELECTRON_VECTORS["coherent_plus"] = _SQ2 * (
    _ELECTRON_VECTORS["singlet"] + _ELECTRON_VECTORS["triplet_0"]
)
_ELECTRON_VECTORS["coherent_minus"] = _SQ2 * (
    _ELECTRON_VECTORS["singlet"] - _ELECTRON_VECTORS["triplet_0"]
)


def electron_state_vector(name: str) -> np.ndarray:
    """4-component electron-pair vector for a named pure state."""
    try:
        return _ELECTRON_VECTORS[name].copy()
    except KeyError:
        raise ValueError(f"no pure electron state named {name!r}") from None


@dataclass
class DensityState:
    """A density matrix bound to its spin system.

    Treated as immutable after construction; `validate` enforces hermiticity,
    positivity and the trace window required of a (sub-normalized) state.
    """

    matrix: np.ndarray
    system: SpinSystem

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.shape != (self.system.total_dim, self.system.total_dim):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match system dim {self.system.total_dim}"
            )

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, context: str = "density matrix") -> "DensityState":
        m = self.matrix
        drift = float(np.max(np.abs(m - m.conj().T)))
        if drift > HERMITICITY_TOL:
            raise InvariantViolation(f"{context}: hermiticity defect {drift:.3e} > {HERMITICITY_TOL:.0e}")
        eigs = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if eigs[0] < EIGENVALUE_FLOOR:
            raise InvariantViolation(f"{context}: min eigenvalue {eigs[0]:.3e} < {EIGENVALUE_FLOOR:.0e}")
        tr = self.trace
        if tr < -1e-12 or tr > TRACE_CEILING:
            raise InvariantViolation(f"{context}: trace {tr!r} outside [0, 1]")
        return self


def named_state(
    system: SpinSystem,
    name: str,
    amplitudes: np.ndarray | None = None,
) -> DensityState:
    """Build a standard initial state on the full Hilbert space.

    Named electron states are tensored with maximally mixed nuclear
    subspaces.  ``custom`` takes a normalized amplitude vector, either of
    length 4 (electron pair, nuclei maximally mixed) or of the full
    dimension (a pure state of the whole system).
    """
    if name not in STATE_NAMES:
        raise ValueError(f"unknown state {name!r}; known: {', '.join(STATE_NAMES)}")

    d_nuc = system.nuclear_dim
    nuc_mixed = np.eye(d_nuc, dtype=complex) / d_nuc

    if name == "custom":
        if amplitudes is None:
            raise ValueError("custom state requires an amplitude vector")
        amp = np.asarray(amplitudes, dtype=complex).ravel()
        norm = float(np.linalg.norm(amp))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"custom amplitudes not normalized: |psi| = {norm!r}")
        if amp.size == 4:
            rho = np.kron(np.outer(amp, amp.conj()), nuc_mixed)
        elif amp.size == system.total_dim:
            rho = np.outer(amp, amp.conj())
        else:
            raise ValueError(
                f"custom amplitude length {amp.size} must be 4 or {system.total_dim}"
            )
        return DensityState(rho, system).validate("custom state")

    if amplitudes is not None:
        raise ValueError("amplitudes are only accepted with name='custom'")

    if name == "mixed_ST":
        s = _ELECTRON_VECTORS["singlet"]
        t = _ELECTRON_VECTORS["triplet_0"]
        rho_e = (np.outer(s, s.conj()) + np.outer(t, t.conj())) / 2
    else:
        v = _ELECTRON_VECTORS[name]
        rho_e = np.outer(v, v.conj())
    return DensityState(np.kron(rho_e, nuc_mixed), system).validate(f"{name} state")
