"""Master-equation integrators and reaction-yield accounting.

Three right-hand sides share one fixed-step classical RK4 driver:

* ``nonreacting`` - trace-preserving evolution of unrecombined pairs: the
  commutator plus a projective-measurement dephasing term at rate
  (k_S + k_T)/2 acting on the S/T off-diagonal blocks.
* ``kominis`` - the full interpolated equation: dephasing plus a reaction
  term that is a p_coh-weighted convex combination of projecting out the
  reacted subpopulations (incoherent extreme) and removing whole
  single-molecule copies rho/Tr{rho} (coherent extreme).  Nonlinear in rho.
* ``traditional`` - the kominis form with p_coh forced to 0; algebraically
  identical to the anticommutator (Haberkorn) kinetics.

The coherence weight is re-evaluated at every RK stage because the
nonlinearity is part of the flow; freezing it per step would bias the
integration at first order in dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coherence import (
    CoherenceConfig,
    DEFAULT_COHERENCE,
    averaged_overlap,
    default_tau_window,
    phase_average_matrix,
)
from .errors import ConfigError, InvariantViolation
from .spins import DensityState, electron_state_vector, singlet_projector

THEORIES = ("kominis", "traditional", "nonreacting")
COHERENCE_MODES = ("instantaneous", "averaged")

#: dt * max(k_S + k_T, ||H||_2) may not exceed this.
STEP_SIZE_BOUND = 0.05
#: runtime positivity floor for intermediate states (looser than the
#: construction-time floor to absorb discretization transients).
RUNTIME_EIGENVALUE_FLOOR = -1e-7
HERMITICITY_DRIFT_TOL = 1e-12


@dataclass(frozen=True)
class ReactionParams:
    """Singlet and triplet recombination rates (inverse time)."""

    k_s: float
    k_t: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.k_s) and np.isfinite(self.k_t)):
            raise ValueError("recombination rates must be finite")
        if self.k_s < 0 or self.k_t < 0:
            raise ValueError("recombination rates must be non-negative")

    @property
    def k_total(self) -> float:
        return self.k_s + self.k_t


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01
    t_max: float = 20.0
    trace_floor: float = 1e-9
    theory: str = "kominis"
    coherence_mode: str = "instantaneous"
    coherence: CoherenceConfig = field(default_factory=CoherenceConfig)

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if self.t_max < 0:
            raise ConfigError(f"t_max must be non-negative, got {self.t_max!r}")
        if self.trace_floor <= 0:
            raise ConfigError(f"trace_floor must be positive, got {self.trace_floor!r}")
        if self.theory not in THEORIES:
            raise ConfigError(
                f"theory {self.theory!r} not supported; choose one of: {', '.join(THEORIES)}"
            )
        if self.coherence_mode not in COHERENCE_MODES:
            raise ConfigError(
                f"coherence_mode {self.coherence_mode!r} not supported; "
                f"choose one of: {', '.join(COHERENCE_MODES)}"
            )


@dataclass
class SimulationRecord:
    """Per-step observables plus final yields of one integration."""

    theory: str
    t: np.ndarray
    trace: np.ndarray
    tr_qs: np.ndarray
    tr_qt: np.ndarray
    p_coh: np.ndarray
    dns_cum: np.ndarray
    dnt_cum: np.ndarray
    y_s: float
    y_t: float
    survival: float
    rho_final: np.ndarray

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t": self.t,
            "trace": self.trace,
            "tr_QS": self.tr_qs,
            "tr_QT": self.tr_qt,
            "p_coh": self.p_coh,
            "dnS_cum": self.dns_cum,
            "dnT_cum": self.dnt_cum,
        }


def spectral_norm(h: np.ndarray | None) -> float:
    if h is None:
        return 0.0
    h = np.asarray(h)
    if not np.any(h):
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(h))))


def _hermitian_prep(rho: np.ndarray, q_s: np.ndarray):
    """Shared products: Q_S rho, rho Q_S, Q_S rho Q_S, traces."""
    qs_rho = q_s @ rho
    rho_qs = qs_rho.conj().T
    qs_rho_qs = qs_rho @ q_s
    tr = float(np.trace(rho).real)
    tr_s = float(np.trace(qs_rho).real)
    return qs_rho, rho_qs, qs_rho_qs, tr, tr_s


def _p_instantaneous(qs_rho, qs_rho_qs, tr, tr_s, tr_t, eps):
    denom = tr_s * tr_t
    if denom <= eps * tr * tr:
        return 0.0
    diff = qs_rho - qs_rho_qs
    num = np.vdot(diff, diff).real  # ||rho_ST||_F^2
    p = num / denom
    return 0.0 if p < 0.0 else (1.0 if p > 1.0 else p)


class _AveragedCoherence:
    """p_coh with the quadrature time average, eigendata precomputed once."""

    def __init__(self, h: np.ndarray | None, dim: int, cfg: CoherenceConfig, k_total: float):
        if h is None or not np.any(h):
            self.identity = True
            return
        self.identity = False
        evals, evecs = np.linalg.eigh(np.asarray(h, dtype=complex))
        window = cfg.tau_window
        if window is None:
            window = default_tau_window(evals, k_total)
        self.window = window
        self.evecs = evecs
        self.phase_avg = None if window == 0.0 else phase_average_matrix(
            evals, window, cfg.tau_samples
        )

    def __call__(self, qs_rho, qs_rho_qs, tr, tr_s, tr_t, eps):
        if self.identity or self.phase_avg is None:
            return _p_instantaneous(qs_rho, qs_rho_qs, tr, tr_s, tr_t, eps)
        denom = tr_s * tr_t
        if denom <= eps * tr * tr:
            return 0.0
        num = averaged_overlap(qs_rho - qs_rho_qs, self.evecs, self.phase_avg)
        p = num / denom
        return 0.0 if p < 0.0 else (1.0 if p > 1.0 else p)


def _make_rhs(theory, h, q_s, params, p_eval, eps):
    """Build rhs(rho) -> (drho/dt, dnS_rate, dnT_rate) for Hermitian rho."""
    k_s, k_t = params.k_s, params.k_t
    k_tot = params.k_total
    h_active = h is not None and np.any(h)
    h = np.asarray(h, dtype=complex) if h_active else None

    def rhs(rho):
        qs_rho, rho_qs, qs_rho_qs, tr, tr_s = _hermitian_prep(rho, q_s)
        tr_t = tr - tr_s
        out = -0.5 * k_tot * (qs_rho + rho_qs - 2.0 * qs_rho_qs)
        if h_active:
            h_rho = h @ rho
            out = out - 1j * (h_rho - h_rho.conj().T)
        if theory == "nonreacting":
            return out, 0.0, 0.0
        dns = k_s * tr_s
        dnt = k_t * tr_t
        p = 0.0 if theory == "traditional" else p_eval(
            qs_rho, qs_rho_qs, tr, tr_s, tr_t, eps
        )
        if p < 1.0:
            qt_rho_qt = rho - qs_rho - rho_qs + qs_rho_qs
            out = out - (1.0 - p) * (k_s * qs_rho_qs + k_t * qt_rho_qt)
        if p > 0.0 and tr > 0.0:
            out = out - (p * (dns + dnt) / tr) * rho
        return out, dns, dnt

    return rhs


def rhs_nonreacting(rho, h, q_s, params: ReactionParams) -> np.ndarray:
    """Trace-preserving rhs: -i[H, rho] - ((kS+kT)/2)(rho Q_S + Q_S rho - 2 Q_S rho Q_S)."""
    rho = np.asarray(rho, dtype=complex)
    rhs = _make_rhs("nonreacting", h, np.asarray(q_s, dtype=complex), params, None, 0.0)
    return rhs(rho)[0]


def rhs_kominis(
    rho,
    h,
    q_s,
    params: ReactionParams,
    coherence_mode: str = "instantaneous",
    config: CoherenceConfig = DEFAULT_COHERENCE,
):
    """Full nonlinear rhs and the product formation rates (dnS, dnT).

    The trace of the returned matrix equals -(dnS + dnT): the ensemble loses
    exactly the molecules that reacted.
    """
    if coherence_mode not in COHERENCE_MODES:
        raise ValueError(f"unknown coherence_mode {coherence_mode!r}")
    rho = np.asarray(rho, dtype=complex)
    q_s = np.asarray(q_s, dtype=complex)
    if coherence_mode == "averaged":
        p_eval = _AveragedCoherence(h, rho.shape[0], config, params.k_total)
    else:
        p_eval = _p_instantaneous
    rhs = _make_rhs("kominis", h, q_s, params, p_eval, config.epsilon_denominator)
    return rhs(rho)


def rhs_traditional(rho, h, q_s, params: ReactionParams):
    """Linear (anticommutator) rhs and product rates; kominis with p_coh = 0."""
    rho = np.asarray(rho, dtype=complex)
    rhs = _make_rhs("traditional", h, np.asarray(q_s, dtype=complex), params, None, 0.0)
    return rhs(rho)


def check_step_size(dt: float, params: ReactionParams, h_norm: float) -> None:
    stiff = max(params.k_total, h_norm)
    if dt * stiff > STEP_SIZE_BOUND * (1.0 + 1e-9):
        raise ConfigError(
            f"dt = {dt} violates dt * max(k_S + k_T, ||H||) <= {STEP_SIZE_BOUND}: "
            f"dt * {stiff} = {dt * stiff:.4g}"
        )


def integrate(
    state0: DensityState,
    h: np.ndarray | None,
    params: ReactionParams,
    config: IntegratorConfig,
) -> SimulationRecord:
    """Fixed-step RK4 integration of the selected theory.

    Records one row per step until t_max or until the trace falls below the
    floor; remaining trace is reported as unreacted survival, never folded
    into a yield.  Every recorded state is checked for hermiticity drift,
    positivity and trace bounds; violations raise with the step identified.
    """
    state0.validate("initial state")
    if abs(state0.trace - 1.0) > 1e-9:
        raise ValueError(f"initial state must have unit trace, got {state0.trace!r}")
    q_s = singlet_projector(state0.system)
    h_norm = spectral_norm(h)
    check_step_size(config.dt, params, h_norm)

    eps = config.coherence.epsilon_denominator
    if config.coherence_mode == "averaged":
        p_record = _AveragedCoherence(h, state0.system.total_dim, config.coherence, params.k_total)
    else:
        p_record = _p_instantaneous

    theory = config.theory
    k_s, k_t = params.k_s, params.k_t
    k_tot = params.k_total
    h_active = h is not None and np.any(h)
    h_arr = np.asarray(h, dtype=complex) if h_active else None
    reacting = theory != "nonreacting"
    nonlinear = theory == "kominis"

    def stage(rho, want_p):
        """One rhs evaluation; returns (drho, dnS, dnT, trace, tr_S, p)."""
        qs_rho = q_s @ rho
        rho_qs = qs_rho.conj().T
        qs_rho_qs = qs_rho @ q_s
        tr = rho.trace().real
        tr_s = qs_rho.trace().real
        tr_t = tr - tr_s
        out = qs_rho + rho_qs
        out -= qs_rho_qs
        out -= qs_rho_qs
        out *= -0.5 * k_tot
        if h_active:
            h_rho = h_arr @ rho
            out -= 1j * (h_rho - h_rho.conj().T)
        p = 0.0
        if (nonlinear or want_p) and tr > 0.0:
            p = p_record(qs_rho, qs_rho_qs, tr, tr_s, tr_t, eps)
        if not reacting:
            return out, 0.0, 0.0, tr, tr_s, p
        dns = k_s * tr_s
        dnt = k_t * tr_t
        p_flow = p if nonlinear else 0.0
        if p_flow < 1.0:
            out -= ((1.0 - p_flow) * k_s) * qs_rho_qs
            if k_t != 0.0:
                qt_rho_qt = rho - qs_rho - rho_qs + qs_rho_qs
                out -= ((1.0 - p_flow) * k_t) * qt_rho_qt
        if p_flow > 0.0 and tr > 0.0:
            out -= (p_flow * (dns + dnt) / tr) * rho
        return out, dns, dnt, tr, tr_s, p

    n_full = int(np.floor(config.t_max / config.dt + 1e-12))
    dt_last = config.t_max - n_full * config.dt
    steps = n_full + (1 if dt_last > 1e-15 else 0)

    rows = np.zeros((steps + 1, 7))
    rho = state0.matrix.astype(complex, copy=True)
    ns = 0.0
    nt = 0.0
    t = 0.0
    sixth = 1.0 / 6.0

    i = 0
    while True:
        k1, a1, b1, trace, tr_s, p = stage(rho, want_p=True)
        rows[i] = (t, trace, tr_s, trace - tr_s, p, ns, nt)
        if trace < -1e-9 or trace > 1.0 + 1e-9:
            raise InvariantViolation(f"step {i} (t={t:.6g}): trace {trace!r} outside [0, 1]")
        if i == steps or trace < config.trace_floor:
            break
        i += 1
        dt = config.dt if i <= n_full else dt_last
        k2, a2, b2, _, _, _ = stage(rho + (0.5 * dt) * k1, want_p=False)
        k3, a3, b3, _, _, _ = stage(rho + (0.5 * dt) * k2, want_p=False)
        k4, a4, b4, _, _, _ = stage(rho + dt * k3, want_p=False)
        k2 += k3
        k2 *= 2.0
        k1 += k4
        k1 += k2
        k1 *= dt * sixth
        rho = rho + k1
        ns += (dt * sixth) * (a1 + 2.0 * (a2 + a3) + a4)
        nt += (dt * sixth) * (b1 + 2.0 * (b2 + b3) + b4)
        t += dt

        drift = float(np.max(np.abs(rho - rho.conj().T)))
        if drift > HERMITICITY_DRIFT_TOL:
            raise InvariantViolation(
                f"step {i} (t={t:.6g}): hermiticity drift {drift:.3e} > {HERMITICITY_DRIFT_TOL:.0e}"
            )
        rho = (rho + rho.conj().T) / 2.0
        min_eig = float(np.linalg.eigvalsh(rho)[0])
        if min_eig < RUNTIME_EIGENVALUE_FLOOR:
            raise InvariantViolation(
                f"step {i} (t={t:.6g}): min eigenvalue {min_eig:.3e} < {RUNTIME_EIGENVALUE_FLOOR:.0e}"
            )

    rows = rows[: i + 1]
    return SimulationRecord(
        theory=config.theory,
        t=rows[:, 0],
        trace=rows[:, 1],
        tr_qs=rows[:, 2],
        tr_qt=rows[:, 3],
        p_coh=rows[:, 4],
        dns_cum=rows[:, 5],
        dnt_cum=rows[:, 6],
        y_s=float(ns),
        y_t=float(nt),
        survival=float(rows[-1, 1]),
        rho_final=rho,
    )


@dataclass
class OneStepReport:
    """Single-interval ensemble update d(rho) of both theories vs their
    first-order closed forms, for an N-molecule maximally coherent ensemble."""

    n_molecules: float
    dt: float
    dn_s: float
    d_rho_kominis: np.ndarray
    d_rho_traditional: np.ndarray
    formula_kominis: np.ndarray
    formula_traditional: np.ndarray
    residual_kominis: float
    residual_traditional: float
    traditional_shift_tt: float


def one_step_comparison(
    n_molecules: float,
    state1: DensityState,
    params: ReactionParams,
    dt: float,
    substeps: int = 32,
) -> OneStepReport:
    """Evolve the unnormalized ensemble N*rho1 for one interval dt and compare.

    The interpolated theory loses dn_S whole copies of rho1 and additionally
    damps the coherence by (k_S dt / 2); the anticommutator theory instead
    shifts the surviving molecules toward the triplet by N k_S dt / 4.  Both
    closed forms are first-order: the returned residuals scale as dt^2.

    Restricted to the bare two-electron system with a closed triplet channel,
    which is where the closed forms below hold.
    """
    if params.k_t != 0.0:
        raise ValueError("one_step_comparison requires k_t = 0")
    if state1.system.nuclei:
        raise ValueError("one_step_comparison is defined on the bare two-electron system")
    state1.validate("one-step input")

    q_s = singlet_projector(state1.system)
    rho1 = state1.matrix
    rho_ens = n_molecules * rho1
    qs_rho = q_s @ rho1
    qs_rho_qs = qs_rho @ q_s
    rho1_coh = (qs_rho - qs_rho_qs) + (qs_rho - qs_rho_qs).conj().T
    dn_s = n_molecules * params.k_s * dt * float(np.trace(qs_rho).real)

    def fine_step(theory):
        rhs = _make_rhs(
            theory, None, q_s, params,
            _p_instantaneous if theory == "kominis" else None, 1e-12,
        )
        rho = rho_ens.copy()
        sub = dt / substeps
        for _ in range(substeps):
            k1, _, _ = rhs(rho)
            k2, _, _ = rhs(rho + (0.5 * sub) * k1)
            k3, _, _ = rhs(rho + (0.5 * sub) * k2)
            k4, _, _ = rhs(rho + sub * k3)
            rho = rho + (sub / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return rho - rho_ens

    d_kom = fine_step("kominis")
    d_trad = fine_step("traditional")

    formula_kom = -dn_s * rho1 - (params.k_s * dt / 2.0) * n_molecules * rho1_coh
    qt_rho_qt = rho1 - qs_rho - qs_rho.conj().T + qs_rho_qs
    # |T><T| - |S><S| expressed through the sandwich blocks of rho1 (each
    # block of the maximally coherent state is half the corresponding dyad)
    shift_term = n_molecules * (params.k_s * dt / 2.0) * (qt_rho_qt - qs_rho_qs)
    formula_trad = -dn_s * rho1 + shift_term

    t0 = electron_state_vector("triplet_0")
    return OneStepReport(
        n_molecules=n_molecules,
        dt=dt,
        dn_s=dn_s,
        d_rho_kominis=d_kom,
        d_rho_traditional=d_trad,
        formula_kominis=formula_kom,
        formula_traditional=formula_trad,
        residual_kominis=float(np.max(np.abs(d_kom - formula_kom))),
        residual_traditional=float(np.max(np.abs(d_trad - formula_trad))),
        traditional_shift_tt=float((t0.conj() @ shift_term @ t0).real),
    )
