import numpy as np
import pytest

from radpair import (
    HamiltonianSpec,
    HyperfineCoupling,
    ReactionParams,
    TrajectoryConfig,
    TrajectoryState,
    TrajectoryStatus,
    build_hamiltonian,
    electron_state_vector,
    mean_state_vs_master,
    named_state,
    run_ensemble,
    singlet_projector,
    trajectory_step,
)
from radpair.errors import ConfigError
from radpair.trajectories import THREADS_ENV_VAR

SINGLET_ONLY = ReactionParams(k_s=1.0, k_t=0.0)


class TestTrajectoryStep:
    def test_pure_singlet_never_projects_to_triplet(self, sys_bare):
        q_s = singlet_projector(sys_bare)
        rng = np.random.default_rng(1)
        state = TrajectoryState(electron_state_vector("singlet"))
        for _ in range(2000):
            state = trajectory_step(state, None, q_s, SINGLET_ONLY, 1e-3, rng)
            if state.status is not TrajectoryStatus.ALIVE:
                assert state.status is TrajectoryStatus.RECOMBINED_SINGLET
                break
            np.testing.assert_allclose(
                np.abs(state.psi), np.abs(electron_state_vector("singlet")), atol=1e-12
            )
        else:
            pytest.fail("singlet trajectory survived implausibly long")

    def test_triplet_with_closed_channel_is_absorbing(self, sys_bare):
        q_s = singlet_projector(sys_bare)
        rng = np.random.default_rng(2)
        t0 = electron_state_vector("triplet_0")
        state = TrajectoryState(t0.copy())
        for _ in range(500):
            state = trajectory_step(state, None, q_s, SINGLET_ONLY, 1e-3, rng)
            assert state.status is TrajectoryStatus.ALIVE
        np.testing.assert_allclose(state.psi, t0, atol=1e-12)

    def test_recombined_state_is_terminal(self, sys_bare):
        q_s = singlet_projector(sys_bare)
        rng = np.random.default_rng(3)
        state = TrajectoryState(
            electron_state_vector("singlet"), TrajectoryStatus.RECOMBINED_SINGLET, 1.0
        )
        after = trajectory_step(state, None, q_s, SINGLET_ONLY, 1e-3, rng)
        assert after is state

    def test_jump_renormalizes(self, sys_bare):
        q_s = singlet_projector(sys_bare)
        rng = np.random.default_rng(4)
        state = TrajectoryState(electron_state_vector("coherent_plus"))
        for _ in range(3000):
            state = trajectory_step(state, None, q_s, SINGLET_ONLY, 5e-3, rng)
            if state.status is not TrajectoryStatus.ALIVE:
                break
            assert np.linalg.norm(state.psi) == pytest.approx(1.0, abs=1e-12)


class TestRunEnsemble:
    def test_benchmark_yield(self, sys_bare):
        state = named_state(sys_bare, "coherent_plus")
        report = run_ensemble(
            state, None, SINGLET_ONLY,
            TrajectoryConfig(dt=1e-3, t_max=20.0, n_trajectories=20000, seed=42),
        )
        assert abs(report.y_s - 0.75) < 3 * report.se_y_s
        assert report.n_singlet + report.n_triplet + report.n_alive == 20000

    def test_pure_singlet_all_react(self, sys_bare):
        report = run_ensemble(
            electron_state_vector("singlet"), None, SINGLET_ONLY,
            TrajectoryConfig(dt=1e-3, t_max=20.0, n_trajectories=5000, seed=9),
        )
        assert report.y_s == 1.0
        assert report.survival == 0.0

    def test_explicit_mixture_components(self, sys_bare):
        # 50/50 preparation of pure singlet and pure triplet-zero molecules
        comps = [
            (0.5, electron_state_vector("singlet")),
            (0.5, electron_state_vector("triplet_0")),
        ]
        report = run_ensemble(
            comps, None, SINGLET_ONLY,
            TrajectoryConfig(dt=1e-3, t_max=20.0, n_trajectories=20000, seed=5),
        )
        assert abs(report.y_s - 0.5) < 3 * report.se_y_s
        assert abs(report.survival - 0.5) < 3 * report.se_survival

    def test_first_step_jump_statistics(self, sys_bare):
        state = named_state(sys_bare, "coherent_plus")
        n = 100000
        dt = 0.01
        report = run_ensemble(
            state, None, SINGLET_ONLY,
            TrajectoryConfig(dt=dt, t_max=0.05, n_trajectories=n, seed=77),
        )
        # singlet projection rate on the first step: survivors times (k/2) dt <Q_S>
        expected = (1 - 0.5 * dt) * 0.25 * dt
        se = np.sqrt(expected * (1 - expected) / n)
        assert abs(report.first_step_singlet_jumps / n - expected) < 3 * se

    def test_same_seed_bit_identical(self, sys_bare):
        state = named_state(sys_bare, "coherent_plus")
        cfg = TrajectoryConfig(dt=1e-3, t_max=5.0, n_trajectories=4000, seed=123)
        a = run_ensemble(state, None, SINGLET_ONLY, cfg)
        b = run_ensemble(state, None, SINGLET_ONLY, cfg)
        assert a.summary() == b.summary()

    def test_worker_count_does_not_change_result(self, sys_bare, monkeypatch):
        # shrink the block width so the run spans many blocks
        import radpair.trajectories as traj_mod

        monkeypatch.setattr(traj_mod, "BLOCK_SIZE", 512)
        state = named_state(sys_bare, "coherent_plus")
        cfg = TrajectoryConfig(dt=1e-3, t_max=5.0, n_trajectories=4000, seed=321)
        monkeypatch.setenv(THREADS_ENV_VAR, "1")
        a = run_ensemble(state, None, SINGLET_ONLY, cfg)
        monkeypatch.setenv(THREADS_ENV_VAR, "4")
        b = run_ensemble(state, None, SINGLET_ONLY, cfg)
        assert a.summary() == b.summary()

    def test_seed_changes_result(self, sys_bare):
        state = named_state(sys_bare, "coherent_plus")
        a = run_ensemble(state, None, SINGLET_ONLY,
                         TrajectoryConfig(dt=1e-3, t_max=5.0, n_trajectories=4000, seed=1))
        b = run_ensemble(state, None, SINGLET_ONLY,
                         TrajectoryConfig(dt=1e-3, t_max=5.0, n_trajectories=4000, seed=2))
        assert a.summary() != b.summary()

    def test_step_bound_enforced(self, sys_bare):
        with pytest.raises(ConfigError, match="dt"):
            run_ensemble(
                named_state(sys_bare, "coherent_plus"), None,
                ReactionParams(k_s=20.0, k_t=0.0),
                TrajectoryConfig(dt=1e-3, t_max=1.0, n_trajectories=10, seed=0),
            )

    def test_bad_thread_env(self, sys_bare, monkeypatch):
        monkeypatch.setenv(THREADS_ENV_VAR, "many")
        with pytest.raises(ConfigError, match=THREADS_ENV_VAR):
            run_ensemble(
                named_state(sys_bare, "coherent_plus"), None, SINGLET_ONLY,
                TrajectoryConfig(dt=1e-3, t_max=0.01, n_trajectories=10, seed=0),
            )


class TestMeanStateOracle:
    def test_coherence_decay_closed_form(self, sys_bare):
        # under the trace-preserving equation the S/T off-diagonal element
        # decays at (k_S + k_T)/2; equal rates give exp(-t)/2
        params = ReactionParams(k_s=1.0, k_t=1.0)
        state = named_state(sys_bare, "coherent_plus")
        comparison = mean_state_vs_master(
            state, None, params,
            TrajectoryConfig(dt=2e-3, n_trajectories=20000, seed=2),
            times=(0.5, 1.0, 2.0),
        )
        assert comparison.within_3se
        s = electron_state_vector("singlet")
        t0 = electron_state_vector("triplet_0")
        for t_i, mean in zip(comparison.times, comparison.trajectory_means):
            offdiag = (s.conj() @ mean @ t0).real
            assert offdiag == pytest.approx(np.exp(-t_i) / 2, abs=0.01)

    def test_singlet_initial_state_is_constant(self, sys_bare):
        comparison = mean_state_vs_master(
            named_state(sys_bare, "singlet"), None, SINGLET_ONLY,
            TrajectoryConfig(dt=2e-3, n_trajectories=2000, seed=3),
            times=(1.0,),
        )
        np.testing.assert_allclose(
            comparison.trajectory_means[0],
            named_state(sys_bare, "singlet").matrix,
            atol=1e-12,
        )

    def test_random_mixed_state_agreement(self, sys_bare):
        rng = np.random.default_rng(19)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        from radpair import DensityState

        state = DensityState(rho, sys_bare)
        comparison = mean_state_vs_master(
            state, None, SINGLET_ONLY,
            TrajectoryConfig(dt=2e-3, n_trajectories=20000, seed=2),
            times=(0.5, 1.5),
        )
        assert comparison.within_3se

    def test_hyperfine_system_agreement(self, sys_one_nucleus):
        h = build_hamiltonian(
            sys_one_nucleus, HamiltonianSpec(hyperfine=(HyperfineCoupling(1, 1, 1.0),))
        )
        comparison = mean_state_vs_master(
            named_state(sys_one_nucleus, "coherent_plus"), h, SINGLET_ONLY,
            TrajectoryConfig(dt=2e-3, n_trajectories=20000, seed=2),
            times=(0.5, 1.0, 2.0),
        )
        assert comparison.within_3se
