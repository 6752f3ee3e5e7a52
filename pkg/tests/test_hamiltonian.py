import numpy as np
import pytest

from conftest import random_density, random_hermitian
from radpair import (
    HamiltonianSpec,
    HyperfineCoupling,
    IntegratorConfig,
    ReactionParams,
    block_decompose,
    build_hamiltonian,
    decompose,
    electron_state_vector,
    integrate,
    named_state,
    rhs_nonreacting,
    singlet_projector,
    triplet_projector,
)


class TestBuildHamiltonian:
    def test_zero_spec(self, sys_bare):
        h = build_hamiltonian(sys_bare, HamiltonianSpec())
        np.testing.assert_allclose(h, 0, atol=1e-15)

    def test_exchange_spectrum(self, sys_bare):
        j = 2.5
        h = build_hamiltonian(sys_bare, HamiltonianSpec(exchange_j=j))
        evals = np.sort(np.linalg.eigvalsh(h))
        np.testing.assert_allclose(evals, [-0.75 * j, 0.25 * j, 0.25 * j, 0.25 * j], atol=1e-12)
        assert evals[-1] - evals[0] == pytest.approx(j)

    def test_delta_g_maps_singlet_to_triplet_zero(self, sys_bare):
        w = 3.0
        h = build_hamiltonian(sys_bare, HamiltonianSpec(delta_g_z=w))
        s = electron_state_vector("singlet")
        t0 = electron_state_vector("triplet_0")
        np.testing.assert_allclose(h @ s, w * t0, atol=1e-12)
        np.testing.assert_allclose(h @ t0, w * s, atol=1e-12)

    def test_hermitian_for_random_specs(self, sys_two_nuclei):
        rng = np.random.default_rng(11)
        for _ in range(25):
            spec = HamiltonianSpec(
                field=tuple(rng.normal(size=3)),
                g1=rng.uniform(0.5, 2.0),
                g2=rng.uniform(0.5, 2.0),
                hyperfine=(
                    HyperfineCoupling(1, 1, float(rng.normal())),
                    # deliberately non-symmetric tensor
                    HyperfineCoupling(2, 2, tuple(tuple(rng.normal(size=3)) for _ in range(3))),
                ),
                exchange_j=float(rng.normal()),
                delta_g_z=float(rng.normal()),
            )
            h = build_hamiltonian(sys_two_nuclei, spec)
            assert np.max(np.abs(h - h.conj().T)) < 1e-12 * max(1.0, np.max(np.abs(h)))

    def test_bad_nucleus_index(self, sys_bare):
        spec = HamiltonianSpec(hyperfine=(HyperfineCoupling(1, 1, 1.0),))
        with pytest.raises(IndexError):
            build_hamiltonian(sys_bare, spec)

    def test_bad_electron_index(self, sys_one_nucleus):
        spec = HamiltonianSpec(hyperfine=(HyperfineCoupling(1, 3, 1.0),))
        with pytest.raises(IndexError):
            build_hamiltonian(sys_one_nucleus, spec)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            HamiltonianSpec(field=(np.inf, 0.0, 0.0))


class TestBlockDecompose:
    def test_exchange_has_no_st_block(self, sys_bare):
        h = build_hamiltonian(sys_bare, HamiltonianSpec(exchange_j=4.0))
        blocks = block_decompose(h, singlet_projector(sys_bare), triplet_projector(sys_bare))
        np.testing.assert_allclose(blocks.h_st, 0, atol=1e-12)
        np.testing.assert_allclose(blocks.h_ts, 0, atol=1e-12)

    def test_delta_g_is_purely_off_diagonal(self, sys_bare):
        h = build_hamiltonian(sys_bare, HamiltonianSpec(delta_g_z=2.0))
        blocks = block_decompose(h, singlet_projector(sys_bare), triplet_projector(sys_bare))
        np.testing.assert_allclose(blocks.h_ss, 0, atol=1e-12)
        np.testing.assert_allclose(blocks.h_tt, 0, atol=1e-12)
        assert np.max(np.abs(blocks.h_st)) > 0.5

    def test_zero_operator(self, sys_bare):
        blocks = block_decompose(
            np.zeros((4, 4)), singlet_projector(sys_bare), triplet_projector(sys_bare)
        )
        for block in (blocks.h_ss, blocks.h_st, blocks.h_ts, blocks.h_tt):
            np.testing.assert_allclose(block, 0, atol=1e-15)

    def test_blocks_sum_and_adjoint(self, sys_one_nucleus):
        rng = np.random.default_rng(3)
        h = random_hermitian(8, rng, 2.0)
        blocks = block_decompose(
            h, singlet_projector(sys_one_nucleus), triplet_projector(sys_one_nucleus)
        )
        np.testing.assert_allclose(
            blocks.h_ss + blocks.h_st + blocks.h_ts + blocks.h_tt, h, atol=1e-12
        )
        np.testing.assert_allclose(blocks.h_ts, blocks.h_st.conj().T, atol=1e-12)

    def test_dimension_mismatch(self, sys_bare):
        with pytest.raises(ValueError):
            block_decompose(np.eye(8), singlet_projector(sys_bare), triplet_projector(sys_bare))


class TestCoherenceGeneration:
    """The S/T off-diagonal flow of the trace-preserving equation equals its
    block-decomposed closed form: dissipation at (k_S+k_T)/2 plus generation
    through the off-diagonal Hamiltonian blocks."""

    @pytest.mark.parametrize("dim,system_fixture", [(4, "sys_bare"), (8, "sys_one_nucleus")])
    def test_block_identity_random(self, dim, system_fixture, request):
        system = request.getfixturevalue(system_fixture)
        q_s = singlet_projector(system)
        q_t = triplet_projector(system)
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(100):
            rho = random_density(dim, rng)
            h = random_hermitian(dim, rng, rng.uniform(0.2, 3.0))
            params = ReactionParams(k_s=rng.uniform(0, 3), k_t=rng.uniform(0, 3))
            hb = block_decompose(h, q_s, q_t)
            rb = decompose(rho, q_s, q_t)
            closed = -1j * (
                hb.h_ts @ rb.rho_ss - rb.rho_ss @ hb.h_st
                + hb.h_st @ rb.rho_tt - rb.rho_tt @ hb.h_ts
                + hb.h_ss @ rb.rho_st - rb.rho_st @ hb.h_tt
                + hb.h_tt @ rb.rho_ts - rb.rho_ts @ hb.h_ss
            ) - 0.5 * params.k_total * (rb.rho_st + rb.rho_ts)
            full = rhs_nonreacting(rho, h, q_s, params)
            off_diag = q_s @ full @ q_t + q_t @ full @ q_s
            worst = max(worst, float(np.max(np.abs(closed - off_diag))))
        assert worst < 1e-10

    def test_no_coherence_generated_without_st_block(self, sys_bare):
        # exchange plus a uniform field leave the S/T off-diagonal block of H empty
        spec = HamiltonianSpec(field=(0.0, 0.0, 1.3), exchange_j=0.8)
        h = build_hamiltonian(sys_bare, spec)
        q_s = singlet_projector(sys_bare)
        q_t = triplet_projector(sys_bare)
        blocks = block_decompose(h, q_s, q_t)
        np.testing.assert_allclose(blocks.h_st, 0, atol=1e-12)

        state = named_state(sys_bare, "mixed_ST")
        record = integrate(
            state,
            h,
            ReactionParams(k_s=1.0, k_t=0.0),
            IntegratorConfig(dt=0.01, t_max=10.0, theory="nonreacting"),
        )
        rho_t = record.rho_final
        coherent_part = q_s @ rho_t @ q_t + q_t @ rho_t @ q_s
        assert np.max(np.abs(coherent_part)) < 1e-9
