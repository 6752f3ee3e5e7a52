"""Single-molecule quantum-trajectory Monte Carlo.

Each trajectory is a pure state interrupted by measurement-induced quantum
jumps and a terminal recombination event.  Per step of length dt, with
q = <Q_S>:

* recombine through the singlet channel with probability k_S dt q, through
  the triplet channel with probability k_T dt (1 - q);
* otherwise project onto the singlet subspace with probability
  ((k_S + k_T)/2) dt q, onto the triplet subspace with probability
  ((k_S + k_T)/2) dt (1 - q), renormalizing; otherwise evolve unitarily by
  exp(-iH dt).

Averaged over trajectories with the recombination channel disabled, the
scheme reproduces the trace-preserving master equation to first order in dt,
which is what `mean_state_vs_master` verifies.  Yields are the fractions of
trajectories absorbed by each channel, giving an ensemble-free oracle for the
reaction kinetics.

Randomness is counter-based: trajectories are processed in fixed-size blocks
and block b of a run seeded with s draws from Philox keyed by (s, b).  The
per-block results are therefore pure functions of (seed, block), and reports
are bit-identical no matter how many workers execute the blocks.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .evolve import IntegratorConfig, ReactionParams, integrate, spectral_norm
from .spins import DensityState, SpinSystem, singlet_projector

#: fixed block width of the deterministic trajectory partition (not tunable:
#: changing it changes which Philox stream a trajectory consumes).
BLOCK_SIZE = 65536

#: dt * (k_S + k_T) bound keeping first-order event probabilities small.
TRAJECTORY_STEP_BOUND = 0.01

THREADS_ENV_VAR = "RADPAIR_TRAJECTORY_THREADS"


class TrajectoryStatus(enum.Enum):
    ALIVE = "alive"
    RECOMBINED_SINGLET = "recombined_singlet"
    RECOMBINED_TRIPLET = "recombined_triplet"


@dataclass
class TrajectoryState:
    """One molecule: a normalized pure state, its fate so far, and its clock."""

    psi: np.ndarray
    status: TrajectoryStatus = TrajectoryStatus.ALIVE
    t: float = 0.0


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float = 1e-3
    t_max: float = 20.0
    n_trajectories: int = 10000
    seed: int = 0
    record_mean_state: bool = False
    mean_state_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"trajectory dt must be positive, got {self.dt!r}")
        if self.n_trajectories < 1:
            raise ConfigError("n_trajectories must be at least 1")
        object.__setattr__(self, "mean_state_times", tuple(self.mean_state_times))


def check_trajectory_step(dt: float, params: ReactionParams) -> None:
    if dt * params.k_total > TRAJECTORY_STEP_BOUND * (1.0 + 1e-9):
        raise ConfigError(
            f"trajectory dt = {dt} violates dt * (k_S + k_T) <= {TRAJECTORY_STEP_BOUND}"
        )


def _propagator(h: np.ndarray | None, dt: float, dim: int) -> np.ndarray | None:
    if h is None or not np.any(h):
        return None
    evals, evecs = np.linalg.eigh(np.asarray(h, dtype=complex))
    return (evecs * np.exp(-1j * evals * dt)) @ evecs.conj().T


def trajectory_step(
    state: TrajectoryState,
    h: np.ndarray | None,
    q_s: np.ndarray,
    params: ReactionParams,
    dt: float,
    rng: np.random.Generator,
) -> TrajectoryState:
    """Advance a single trajectory by one interval dt.

    Recombination is sampled before the measurement jump; the order is fixed
    so that a given random stream always replays the same history.
    """
    if state.status is not TrajectoryStatus.ALIVE:
        return state
    psi = state.psi
    qs_psi = q_s @ psi
    q = float(np.real(np.vdot(psi, qs_psi)))

    u = rng.random()
    p_rs = params.k_s * dt * q
    p_rt = params.k_t * dt * (1.0 - q)
    if u < p_rs:
        return TrajectoryState(psi, TrajectoryStatus.RECOMBINED_SINGLET, state.t + dt)
    if u < p_rs + p_rt:
        return TrajectoryState(psi, TrajectoryStatus.RECOMBINED_TRIPLET, state.t + dt)

    v = rng.random()
    half_rate = 0.5 * params.k_total * dt
    q_jump_s = half_rate * q
    q_jump_t = half_rate * (1.0 - q)
    if v < q_jump_s:
        new = qs_psi / np.linalg.norm(qs_psi)
    elif v < q_jump_s + q_jump_t:
        rest = psi - qs_psi
        new = rest / np.linalg.norm(rest)
    else:
        u_dt = _propagator(h, dt, psi.size)
        new = psi if u_dt is None else u_dt @ psi
    return TrajectoryState(new, TrajectoryStatus.ALIVE, state.t + dt)


@dataclass
class MeanStateStat:
    """Trajectory average of |psi><psi| at one time, with per-entry standard errors."""

    t: float
    mean: np.ndarray
    se_real: np.ndarray
    se_imag: np.ndarray


@dataclass
class EnsembleReport:
    n_trajectories: int
    seed: int
    dt: float
    t_max: float
    n_singlet: int
    n_triplet: int
    n_alive: int
    y_s: float
    y_t: float
    survival: float
    se_y_s: float
    se_y_t: float
    se_survival: float
    first_step_singlet_jumps: int
    mean_states: list[MeanStateStat] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "n_trajectories": self.n_trajectories,
            "seed": self.seed,
            "dt": self.dt,
            "t_max": self.t_max,
            "counts": {
                "recombined_singlet": self.n_singlet,
                "recombined_triplet": self.n_triplet,
                "alive": self.n_alive,
            },
            "y_s": self.y_s,
            "y_t": self.y_t,
            "survival": self.survival,
            "se_y_s": self.se_y_s,
            "se_y_t": self.se_y_t,
            "se_survival": self.se_survival,
            "first_step_singlet_jumps": self.first_step_singlet_jumps,
        }


def _pure_components(initial, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Flatten the initial condition into sampling weights and unit vectors.

    Accepts a unit vector, a DensityState (spectral decomposition, eigenvalue
    weights, descending order), or an explicit [(weight, vector)] list.  For
    degenerate mixed states the spectral basis is a numerical convention;
    pass explicit components when the preparation history matters.
    """
    if isinstance(initial, DensityState):
        evals, evecs = np.linalg.eigh(initial.matrix)
        order = np.argsort(evals)[::-1]
        evals = evals[order]
        evecs = evecs[:, order]
        keep = evals > 1e-12
        w = evals[keep]
        w = w / w.sum()
        return w, evecs[:, keep].T.copy()
    if isinstance(initial, np.ndarray) and initial.ndim == 1:
        psi = initial.astype(complex)
        norm = float(np.linalg.norm(psi))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"initial vector not normalized: |psi| = {norm!r}")
        return np.array([1.0]), psi[None, :]
    weights = []
    vectors = []
    for w, item in initial:
        if w < 0:
            raise ValueError("component weights must be non-negative")
        if isinstance(item, DensityState):
            sub_w, sub_v = _pure_components(item, dim)
            weights.extend(float(w) * sub_w)
            vectors.extend(sub_v)
            continue
        psi = np.asarray(item, dtype=complex).ravel()
        if psi.size != dim:
            raise ValueError(f"component dimension {psi.size} != {dim}")
        norm = float(np.linalg.norm(psi))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"component vector not normalized: |psi| = {norm!r}")
        weights.append(float(w))
        vectors.append(psi)
    w = np.asarray(weights)
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"component weights sum to {w.sum()!r}, expected 1")
    return w / w.sum(), np.asarray(vectors)


def _block_key(seed: int, block_index: int) -> np.ndarray:
    return np.array([seed & 0xFFFFFFFFFFFFFFFF, block_index], dtype=np.uint64)


def _run_block(
    block_index: int,
    count: int,
    seed: int,
    cum_weights: np.ndarray,
    vectors: np.ndarray,
    q_s: np.ndarray,
    u_dt: np.ndarray | None,
    params: ReactionParams,
    dt: float,
    n_steps: int,
    recombine: bool,
    checkpoint_steps: set[int],
):
    """Evolve one block of trajectories; a pure function of (seed, block_index)."""
    gen = np.random.Generator(np.random.Philox(key=_block_key(seed, block_index)))
    comp = np.searchsorted(cum_weights, gen.random(count), side="right")
    psis = vectors[comp].copy()
    first_step_singlet_jumps = 0

    h_zero = u_dt is None
    u_dt_t = None if h_zero else np.ascontiguousarray(u_dt.T)
    q_s_t = np.ascontiguousarray(q_s.T)
    # freezing removes trajectories whose state can never change again
    # (exact subspace eigenstate, closed opposite channel, no Hamiltonian)
    freeze_triplet = recombine and h_zero and params.k_t == 0.0
    freeze_singlet = recombine and h_zero and params.k_s == 0.0
    k_s, k_t = params.k_s, params.k_t
    half_rate = 0.5 * params.k_total * dt

    n_s = 0
    n_t = 0
    live = np.ones(count, dtype=bool)  # undecided rows of the compact array
    n_dead = 0
    # with no Hamiltonian the singlet expectation only changes at jumps, and
    # when no states are recorded the vectors themselves are never consulted
    track_psi = (not h_zero) or bool(checkpoint_steps)
    if h_zero:
        q = np.einsum("bi,bi->b", psis.conj(), psis @ q_s_t).real

    checkpoints = {}
    for step in range(n_steps + 1):
        if step in checkpoint_steps:
            # only the recombination-free mode records states, so every
            # trajectory is still present in the compact array here
            checkpoints[step] = _mean_state_sums(psis)
        if step == n_steps:
            break
        if n_dead == psis.shape[0] and not checkpoint_steps:
            break

        if h_zero:
            qs_psi = None
        else:
            qs_psi = psis @ q_s_t
            q = np.einsum("bi,bi->b", psis.conj(), qs_psi).real

        if freeze_triplet:
            fr = live & (q < 1e-15)
            k = int(np.count_nonzero(fr))
            if k:
                live &= ~fr
                n_dead += k
        if freeze_singlet:
            fr = live & (q > 1.0 - 1e-15)
            k = int(np.count_nonzero(fr))
            if k:
                live &= ~fr
                n_dead += k

        u = gen.random((psis.shape[0], 2))
        if recombine:
            edge = k_s * dt * q
            rec_s = live & (u[:, 0] < edge)
            rec_t = live & ~rec_s & (u[:, 0] < edge + k_t * dt * (1.0 - q))
            k = int(np.count_nonzero(rec_s))
            if k:
                n_s += k
                live &= ~rec_s
                n_dead += k
            k = int(np.count_nonzero(rec_t))
            if k:
                n_t += k
                live &= ~rec_t
                n_dead += k

        q_jump_s = half_rate * q
        jump_s = live & (u[:, 1] < q_jump_s)
        jump_t = live & ~jump_s & (u[:, 1] < q_jump_s + half_rate * (1.0 - q))
        if step == 0:
            first_step_singlet_jumps = int(np.count_nonzero(jump_s))

        any_s = jump_s.any()
        any_t = jump_t.any()
        if track_psi:
            if any_s:
                proj = psis[jump_s] @ q_s_t if qs_psi is None else qs_psi[jump_s]
                proj = proj / np.linalg.norm(proj, axis=1)[:, None]
            if any_t:
                rows = psis[jump_t]
                rest = rows - (rows @ q_s_t if qs_psi is None else qs_psi[jump_t])
                rest = rest / np.linalg.norm(rest, axis=1)[:, None]
            if not h_zero:
                # unitary drift for everyone, then overwrite the jumped rows
                psis = psis @ u_dt_t
            if any_s:
                psis[jump_s] = proj
            if any_t:
                psis[jump_t] = rest
        if h_zero:
            if any_s:
                q[jump_s] = 1.0
            if any_t:
                q[jump_t] = 0.0

        if n_dead > 256 and n_dead * 4 > psis.shape[0] and not checkpoint_steps:
            psis = psis[live]
            if h_zero:
                q = q[live]
            live = np.ones(psis.shape[0], dtype=bool)
            n_dead = 0

    n_alive = count - n_s - n_t
    return n_s, n_t, n_alive, first_step_singlet_jumps, checkpoints


def _mean_state_sums(psis: np.ndarray):
    """Outer-product first and second moments over all rows."""
    dim = psis.shape[1]
    s1 = np.zeros((dim, dim), dtype=complex)
    s2_re = np.zeros((dim, dim))
    s2_im = np.zeros((dim, dim))
    for lo in range(0, psis.shape[0], 8192):
        chunk = psis[lo : lo + 8192]
        outer = chunk[:, :, None] * chunk.conj()[:, None, :]
        s1 += outer.sum(axis=0)
        s2_re += (outer.real**2).sum(axis=0)
        s2_im += (outer.imag**2).sum(axis=0)
    return psis.shape[0], s1, s2_re, s2_im


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None


def run_ensemble(
    initial,
    h: np.ndarray | None,
    params: ReactionParams,
    config: TrajectoryConfig,
    recombine: bool = True,
    system: SpinSystem | None = None,
) -> EnsembleReport:
    """Run the full trajectory ensemble and aggregate yields.

    ``initial`` may be a unit vector, a DensityState, or [(weight, vector)]
    components; mixed states are sampled molecule-by-molecule from their
    pure-state decomposition.  Standard errors are binomial.  Results are
    reproducible bit-for-bit from (seed, n_trajectories) alone.
    """
    check_trajectory_step(config.dt, params)
    if isinstance(initial, DensityState):
        system = initial.system
    elif system is None:
        system = SpinSystem()  # bare vectors/components default to the electron pair
    q_s = singlet_projector(system)
    dim = system.total_dim

    weights, vectors = _pure_components(initial, dim)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    u_dt = _propagator(h, config.dt, dim)
    q_s_arr = np.ascontiguousarray(q_s)

    n_steps = int(round(config.t_max / config.dt))
    effective_recombine = recombine and params.k_total > 0
    checkpoint_steps: set[int] = set()
    if config.record_mean_state:
        if effective_recombine:
            raise ConfigError(
                "mean-state recording is defined for the recombination-free mode"
            )
        for t_req in config.mean_state_times:
            s = int(round(t_req / config.dt))
            if abs(s * config.dt - t_req) > 1e-9:
                raise ConfigError(f"mean-state time {t_req} is not a multiple of dt {config.dt}")
            checkpoint_steps.add(s)

    n = config.n_trajectories
    blocks = [
        (b, min(BLOCK_SIZE, n - b * BLOCK_SIZE))
        for b in range((n + BLOCK_SIZE - 1) // BLOCK_SIZE)
    ]

    def task(args):
        b, count = args
        return _run_block(
            b, count, config.seed, cum, vectors, q_s_arr, u_dt, params,
            config.dt, n_steps, effective_recombine, checkpoint_steps,
        )

    workers = _worker_count()
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, blocks))
    else:
        results = [task(b) for b in blocks]

    n_s = sum(r[0] for r in results)
    n_t = sum(r[1] for r in results)
    n_alive = sum(r[2] for r in results)
    first_jumps = sum(r[3] for r in results)

    def se(k):
        p = k / n
        return float(np.sqrt(p * (1.0 - p) / n))

    mean_states = []
    if config.record_mean_state:
        for step in sorted(checkpoint_steps):
            total = 0
            s1 = np.zeros((dim, dim), dtype=complex)
            s2_re = np.zeros((dim, dim))
            s2_im = np.zeros((dim, dim))
            for r in results:
                cnt, b1, b2r, b2i = r[4][step]
                total += cnt
                s1 += b1
                s2_re += b2r
                s2_im += b2i
            mean = s1 / total
            var_re = np.maximum(s2_re / total - mean.real**2, 0.0)
            var_im = np.maximum(s2_im / total - mean.imag**2, 0.0)
            mean_states.append(
                MeanStateStat(
                    t=step * config.dt,
                    mean=mean,
                    se_real=np.sqrt(var_re / total),
                    se_imag=np.sqrt(var_im / total),
                )
            )

    return EnsembleReport(
        n_trajectories=n,
        seed=config.seed,
        dt=config.dt,
        t_max=config.t_max,
        n_singlet=n_s,
        n_triplet=n_t,
        n_alive=n_alive,
        y_s=n_s / n,
        y_t=n_t / n,
        survival=n_alive / n,
        se_y_s=se(n_s),
        se_y_t=se(n_t),
        se_survival=se(n_alive),
        first_step_singlet_jumps=first_jumps,
        mean_states=mean_states,
    )


@dataclass
class MeanStateComparison:
    times: tuple[float, ...]
    trajectory_means: list[np.ndarray]
    master_states: list[np.ndarray]
    se_real: list[np.ndarray]
    se_imag: list[np.ndarray]
    max_abs_deviation: float
    max_sigma: float
    within_3se: bool


def mean_state_vs_master(
    initial: DensityState,
    h: np.ndarray | None,
    params: ReactionParams,
    config: TrajectoryConfig,
    times: tuple[float, ...],
    bias_floor: float | None = None,
) -> MeanStateComparison:
    """Jump-only trajectory average against the trace-preserving equation.

    Trajectories run with the recombination channel disabled (jumps stay on
    at rate (k_S + k_T)/2); their mean conditional state is compared
    entrywise, at the requested times, with the deterministic integration.

    The per-entry tolerance is 3 standard errors plus ``bias_floor``, the
    allowance for the scheme's first-order event probabilities.  Entries
    whose value is a rare-event statistic can have a sampling SE far below
    the O(dt) discretization scale, so a pure multiple-of-SE bound would
    reject a correct simulation there; the default floor is
    dt * (k_S + k_T + ||H||) / 10, which vanishes with the step size.
    """
    times = tuple(times)
    cfg = TrajectoryConfig(
        dt=config.dt,
        t_max=max(times),
        n_trajectories=config.n_trajectories,
        seed=config.seed,
        record_mean_state=True,
        mean_state_times=times,
    )
    report = run_ensemble(initial, h, params, cfg, recombine=False)

    h_norm = spectral_norm(h)
    if bias_floor is None:
        bias_floor = config.dt * (params.k_total + h_norm) / 10.0
    dt_master = config.dt
    bound = 0.04 / max(params.k_total, h_norm, 1e-30)
    if dt_master > bound:
        dt_master = bound

    master_states = []
    for t_req in times:
        rec = integrate(
            initial, h, params,
            IntegratorConfig(dt=dt_master, t_max=t_req, theory="nonreacting"),
        )
        master_states.append(rec.rho_final)

    max_dev = 0.0
    max_sigma = 0.0
    ok = True
    for stat, ref in zip(report.mean_states, master_states):
        diff = stat.mean - ref
        max_dev = max(max_dev, float(np.max(np.abs(diff))))
        sig_re = np.abs(diff.real) / (3.0 * stat.se_real + bias_floor)
        sig_im = np.abs(diff.imag) / (3.0 * stat.se_imag + bias_floor)
        worst = float(max(sig_re.max(), sig_im.max())) * 3.0
        max_sigma = max(max_sigma, worst)
        if np.any(sig_re > 1.0) or np.any(sig_im > 1.0):
            ok = False
    return MeanStateComparison(
        times=times,
        trajectory_means=[s.mean for s in report.mean_states],
        master_states=master_states,
        se_real=[s.se_real for s in report.mean_states],
        se_imag=[s.se_imag for s in report.mean_states],
        max_abs_deviation=max_dev,
        max_sigma=max_sigma,
        within_3se=ok,
    )
