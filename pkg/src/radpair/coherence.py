"""Singlet-triplet coherence: block decomposition of rho and the measure p_coh.

p_coh = Tr{rho_ST rho_TS} / (Tr{rho_SS} Tr{rho_TT}) lies in [0, 1]: it is 1
for any pure superposition a|S> + b|T> and 0 for incoherent S/T mixtures.
The time-averaged variant damps the measure when a singlet-triplet energy
splitting makes the off-diagonal blocks precess: the integrand picks up
phases e^{-i(Ei-Ej)tau} which average away over a window covering many
precession periods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spins import DensityState, singlet_projector, triplet_projector

#: window = min(GAP_CYCLES / smallest nonzero gap, REACTION_FRACTION / (k_S + k_T));
#: GAP_CYCLES phase radians guarantee |mean phase| <= 2 / GAP_CYCLES = 0.05.
GAP_CYCLES = 40.0
REACTION_FRACTION = 0.8


@dataclass
class RhoBlocks:
    """Sandwich blocks rho_ab = Q_a rho Q_b; the off-diagonal pair is traceless."""

    rho_ss: np.ndarray
    rho_tt: np.ndarray
    rho_st: np.ndarray
    rho_ts: np.ndarray

    def validate(self, rho: np.ndarray, tol: float = 1e-12) -> "RhoBlocks":
        scale = max(1.0, float(np.max(np.abs(rho))))
        if np.max(np.abs(self.rho_ss + self.rho_tt + self.rho_st + self.rho_ts - rho)) > tol * scale:
            raise AssertionError("blocks do not sum back to rho")
        if abs(np.trace(self.rho_st)) > tol * scale or abs(np.trace(self.rho_ts)) > tol * scale:
            raise AssertionError("off-diagonal blocks are not traceless")
        if np.max(np.abs(self.rho_ts - self.rho_st.conj().T)) > tol * scale:
            raise AssertionError("rho_TS is not the adjoint of rho_ST")
        return self


@dataclass(frozen=True)
class CoherenceConfig:
    """Guards and quadrature for the coherence measure.

    ``epsilon_denominator`` declares the denominator underflow threshold
    (relative to Tr{rho}^2) below which p_coh is defined as 0.
    ``tau_window`` of None selects the automatic window; ``tau_samples`` is
    the number of uniform quadrature points of the time average.
    """

    epsilon_denominator: float = 1e-12
    tau_window: float | None = None
    tau_samples: int = 257

    def __post_init__(self):
        if self.epsilon_denominator <= 0:
            raise ValueError("epsilon_denominator must be positive")
        if self.tau_window is not None and self.tau_window < 0:
            raise ValueError("tau_window must be non-negative")
        if self.tau_samples < 8:
            raise ValueError("tau_samples must be at least 8")


DEFAULT_COHERENCE = CoherenceConfig()


def _resolve(state, q_s, q_t):
    if isinstance(state, DensityState):
        if q_s is None:
            q_s = singlet_projector(state.system)
            q_t = triplet_projector(state.system)
        return np.asarray(state.matrix, dtype=complex), q_s, q_t
    rho = np.asarray(state, dtype=complex)
    if q_s is None:
        raise ValueError("projectors are required when passing a bare matrix")
    if q_t is None:
        q_t = np.eye(q_s.shape[0], dtype=complex) - q_s
    return rho, q_s, q_t


def decompose(state, q_s: np.ndarray | None = None, q_t: np.ndarray | None = None) -> RhoBlocks:
    """Split a density matrix into its four S/T sandwich blocks."""
    rho, q_s, q_t = _resolve(state, q_s, q_t)
    qs_rho = q_s @ rho
    qt_rho = q_t @ rho
    return RhoBlocks(
        rho_ss=qs_rho @ q_s,
        rho_tt=qt_rho @ q_t,
        rho_st=qs_rho @ q_t,
        rho_ts=qt_rho @ q_s,
    ).validate(rho)


def _p_from_parts(num: float, tr_ss: float, tr_tt: float, tr: float, eps: float) -> float:
    denom = tr_ss * tr_tt
    if denom <= eps * tr * tr:
        return 0.0
    p = num / denom
    return 0.0 if p < 0.0 else (1.0 if p > 1.0 else p)


def p_coh(
    state,
    q_s: np.ndarray | None = None,
    q_t: np.ndarray | None = None,
    config: CoherenceConfig = DEFAULT_COHERENCE,
) -> float:
    """Instantaneous singlet-triplet coherence fraction of a Hermitian rho.

    Returns 0 when the denominator underflows (state essentially confined to
    one subspace); the result is clamped to [0, 1].  Raises on Tr{rho} <= 0.
    """
    rho, q_s, q_t = _resolve(state, q_s, q_t)
    tr = float(np.trace(rho).real)
    if tr <= 0.0:
        raise ValueError(f"p_coh undefined for Tr(rho) = {tr!r} <= 0")
    qs_rho = q_s @ rho
    tr_ss = float(np.trace(qs_rho).real)
    tr_tt = tr - tr_ss
    rho_st = qs_rho - qs_rho @ q_s
    # Tr{rho_ST rho_TS} = ||rho_ST||_F^2 for Hermitian rho
    num = float(np.sum(np.abs(rho_st) ** 2))
    return _p_from_parts(num, tr_ss, tr_tt, tr, config.epsilon_denominator)


def default_tau_window(h_eigenvalues: np.ndarray, k_total: float = 0.0) -> float:
    """Automatic averaging window for the time-averaged coherence measure.

    Long enough to cover GAP_CYCLES phase radians of the slowest level
    splitting, but at most REACTION_FRACTION of a reaction time.  Returns 0
    when the spectrum has no resolvable gap (the average degenerates to the
    instantaneous measure).
    """
    e = np.sort(np.asarray(h_eigenvalues, dtype=float))
    scale = max(1.0, float(np.max(np.abs(e))) if e.size else 1.0)
    diffs = np.abs(e[:, None] - e[None, :]).ravel()
    gaps = diffs[diffs > 1e-12 * scale]
    if gaps.size == 0:
        return 0.0
    window = GAP_CYCLES / float(gaps.min())
    if k_total > 0.0:
        window = min(window, REACTION_FRACTION / k_total)
    return window


def phase_average_matrix(
    eigenvalues: np.ndarray, tau_window: float, tau_samples: int
) -> np.ndarray:
    """Trapezoid-rule time average of exp(-i (Ei - Ej) tau) over [0, window]."""
    e = np.asarray(eigenvalues, dtype=float)
    gaps = e[:, None] - e[None, :]
    taus = np.linspace(0.0, tau_window, tau_samples)
    weights = np.full(tau_samples, 1.0 / (tau_samples - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    phases = np.exp(-1j * gaps[..., None] * taus)
    return phases @ weights


def averaged_overlap(
    rho_st: np.ndarray, eigenvectors: np.ndarray, phase_avg: np.ndarray
) -> float:
    """|<<Tr{rho_ST(t) rho_TS(t + tau)}>>| given precomputed eigenbasis data."""
    a = eigenvectors.conj().T @ rho_st @ eigenvectors
    # Tr{A B(tau)} with B = A^dagger picks up phase e^{-i(Ej-Ei)tau} on (i,j)
    return float(np.abs(np.sum((np.abs(a) ** 2) * phase_avg.T)))


def p_coh_averaged(
    state,
    h: np.ndarray,
    q_s: np.ndarray | None = None,
    q_t: np.ndarray | None = None,
    config: CoherenceConfig = DEFAULT_COHERENCE,
    k_total: float = 0.0,
) -> float:
    """Time-averaged coherence fraction under the Hamiltonian h.

    The off-diagonal block is propagated to rho_TS(t + tau) =
    exp(-iH tau) rho_TS exp(iH tau); the modulus is taken outside a uniform
    quadrature over tau in [0, window].  With h = 0 (or zero window) this
    reduces exactly to the instantaneous measure.
    """
    rho, q_s, q_t = _resolve(state, q_s, q_t)
    tr = float(np.trace(rho).real)
    if tr <= 0.0:
        raise ValueError(f"p_coh_averaged undefined for Tr(rho) = {tr!r} <= 0")
    h = np.asarray(h, dtype=complex)
    evals, evecs = np.linalg.eigh(h)
    window = config.tau_window
    if window is None:
        window = default_tau_window(evals, k_total)
    qs_rho = q_s @ rho
    tr_ss = float(np.trace(qs_rho).real)
    tr_tt = tr - tr_ss
    rho_st = qs_rho - qs_rho @ q_s
    if window == 0.0:
        num = float(np.sum(np.abs(rho_st) ** 2))
    else:
        phase_avg = phase_average_matrix(evals, window, config.tau_samples)
        num = averaged_overlap(rho_st, evecs, phase_avg)
    return _p_from_parts(num, tr_ss, tr_tt, tr, config.epsilon_denominator)
