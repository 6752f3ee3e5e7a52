"""Magnetic Hamiltonian of the pair and its singlet/triplet block structure.

Terms supported: Zeeman coupling of a static field to both electrons (with
optional per-electron g-scale), isotropic or full-tensor hyperfine couplings,
exchange J s1.s2, and a z-axis g-difference term w (s1z - s2z).  The last one
is the minimal interaction that mixes |S> and |T0>, so it is first-class here.
All couplings are angular frequencies (hbar = 1); the Hamiltonian is
time-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spins import SpinSystem, electron_spin_ops, nuclear_spin_ops

_HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class HyperfineCoupling:
    """Coupling s_e . A . I_n between one electron and one nucleus (1-based indices).

    ``coupling`` is either an isotropic constant or a real 3x3 tensor given as
    nested tuples.  Antisymmetric tensor parts are kept as given; hermiticity
    of the total Hamiltonian holds for any real tensor.
    """

    nucleus: int
    electron: int
    coupling: float | tuple[tuple[float, float, float], ...]

    def tensor(self) -> np.ndarray:
        if isinstance(self.coupling, (int, float)):
            return float(self.coupling) * np.eye(3)
        t = np.asarray(self.coupling, dtype=float)
        if t.shape != (3, 3):
            raise ValueError(f"hyperfine tensor shape {t.shape} must be (3, 3)")
        return t


@dataclass(frozen=True)
class HamiltonianSpec:
    """Declarative description of the magnetic interactions."""

    field: tuple[float, float, float] = (0.0, 0.0, 0.0)
    g1: float = 1.0
    g2: float = 1.0
    hyperfine: tuple[HyperfineCoupling, ...] = ()
    exchange_j: float = 0.0
    delta_g_z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "field", tuple(float(b) for b in self.field))
        object.__setattr__(self, "hyperfine", tuple(self.hyperfine))
        if len(self.field) != 3:
            raise ValueError("field must be a 3-vector")
        values = [*self.field, self.g1, self.g2, self.exchange_j, self.delta_g_z]
        for hf in self.hyperfine:
            values.extend(np.asarray(hf.tensor()).ravel())
        if not np.all(np.isfinite(values)):
            raise ValueError("all coupling magnitudes must be finite")


def build_hamiltonian(system: SpinSystem, spec: HamiltonianSpec) -> np.ndarray:
    """Assemble the full-space Hamiltonian matrix from a spec.

    H = B.(g1 s1 + g2 s2) + sum s_e.A.I_n + J s1.s2 + w (s1z - s2z)
    """
    dim = system.total_dim
    h = np.zeros((dim, dim), dtype=complex)
    s1 = electron_spin_ops(system, 1)
    s2 = electron_spin_ops(system, 2)

    b = spec.field
    if any(b):
        for axis in range(3):
            if b[axis]:
                h += b[axis] * (spec.g1 * s1[axis] + spec.g2 * s2[axis])

    for hf in spec.hyperfine:
        if not 1 <= hf.nucleus <= len(system.nuclei):
            raise IndexError(f"hyperfine nucleus index {hf.nucleus} out of range")
        if hf.electron not in (1, 2):
            raise IndexError(f"hyperfine electron index {hf.electron} must be 1 or 2")
        se = s1 if hf.electron == 1 else s2
        iops = nuclear_spin_ops(system, hf.nucleus)
        a = hf.tensor()
        if not np.isrealobj(a) and np.any(np.abs(a.imag) > 0):
            raise ValueError("hyperfine tensors must be real")
        for i in range(3):
            for j in range(3):
                if a[i, j]:
                    h += a[i, j] * (se[i] @ iops[j])

    if spec.exchange_j:
        h += spec.exchange_j * sum(a @ b_ for a, b_ in zip(s1, s2))

    if spec.delta_g_z:
        h += spec.delta_g_z * (s1[2] - s2[2])

    defect = float(np.max(np.abs(h - h.conj().T)))
    if defect > _HERMITICITY_TOL * max(1.0, float(np.max(np.abs(h)))):
        raise AssertionError(f"assembled Hamiltonian not Hermitian: defect {defect:.3e}")
    return h


@dataclass
class HamiltonianBlocks:
    """The four sandwich blocks H_ab = Q_a H Q_b with a, b in {S, T}."""

    h_ss: np.ndarray
    h_st: np.ndarray
    h_ts: np.ndarray
    h_tt: np.ndarray

    def validate(self, h: np.ndarray, tol: float = 1e-12) -> "HamiltonianBlocks":
        scale = max(1.0, float(np.max(np.abs(h))))
        if np.max(np.abs(self.h_ss + self.h_st + self.h_ts + self.h_tt - h)) > tol * scale:
            raise AssertionError("block decomposition does not sum back to H")
        if np.max(np.abs(self.h_ts - self.h_st.conj().T)) > tol * scale:
            raise AssertionError("H_TS is not the adjoint of H_ST")
        return self


def block_decompose(h: np.ndarray, q_s: np.ndarray, q_t: np.ndarray) -> HamiltonianBlocks:
    """Split a Hermitian operator into its S/T sandwich blocks."""
    h = np.asarray(h, dtype=complex)
    if h.shape != q_s.shape:
        raise ValueError(f"operator shape {h.shape} does not match projector shape {q_s.shape}")
    qs_h = q_s @ h
    qt_h = q_t @ h
    return HamiltonianBlocks(
        h_ss=qs_h @ q_s,
        h_st=qs_h @ q_t,
        h_ts=qt_h @ q_s,
        h_tt=qt_h @ q_t,
    ).validate(h)
