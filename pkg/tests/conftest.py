import numpy as np
import pytest

from radpair import NuclearSpec, SpinSystem


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random density matrix (Ginibre construction)."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: np.random.Generator, norm: float = 1.0) -> np.ndarray:
    """Random Hermitian matrix rescaled to the requested spectral norm."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (a + a.conj().T) / 2
    scale = np.max(np.abs(np.linalg.eigvalsh(h)))
    return (norm / scale) * h


@pytest.fixture
def sys_bare() -> SpinSystem:
    return SpinSystem()


@pytest.fixture
def sys_one_nucleus() -> SpinSystem:
    return SpinSystem(nuclei=(NuclearSpec(spin=0.5, coupled_electron=1),))


@pytest.fixture
def sys_two_nuclei() -> SpinSystem:
    return SpinSystem(
        nuclei=(
            NuclearSpec(spin=0.5, coupled_electron=1),
            NuclearSpec(spin=1.0, coupled_electron=2),
        )
    )
