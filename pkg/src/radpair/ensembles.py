"""Proper versus improper mixtures under a nonlinear evolution.

A proper mixture is an ensemble in which every molecule occupies a definite
pure state and only the bookkeeping is classical; an improper mixture is a
genuinely decohered density matrix.  A linear equation cannot tell them
apart, the nonlinear one can: evolving weighted sub-ensembles independently
and summing observables is in general NOT the same as evolving the summed
density matrix.  The reaction acts molecule by molecule, so the proper path
is the physical one whenever the preparation history is known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolve import IntegratorConfig, ReactionParams, SimulationRecord, integrate
from .spins import DensityState


@dataclass
class ProperMixture:
    """Weighted pure (or otherwise definite) sub-ensembles of one spin system."""

    components: tuple[tuple[float, DensityState], ...]

    def __post_init__(self):
        self.components = tuple((float(w), s) for w, s in self.components)
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        weights = np.array([w for w, _ in self.components])
        if np.any(weights < 0):
            raise ValueError("mixture weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {weights.sum()!r}, expected 1")
        systems = {s.system for _, s in self.components}
        if len(systems) != 1:
            raise ValueError("all mixture components must share one spin system")
        for _, s in self.components:
            s.validate("mixture component")

    @property
    def system(self):
        return self.components[0][1].system

    def summed_state(self) -> DensityState:
        """The improper (weight-summed) density matrix of the same ensemble."""
        rho = sum(w * s.matrix for w, s in self.components)
        return DensityState(rho, self.system)


@dataclass
class MixtureRecord:
    """Weight-summed observables plus the per-component records behind them."""

    aggregate: SimulationRecord
    weights: tuple[float, ...]
    components: list[SimulationRecord]


def _pad_hold(arr: np.ndarray, n: int) -> np.ndarray:
    """Extend a column to n rows by holding its last value (terminated runs)."""
    if arr.size >= n:
        return arr[:n]
    out = np.empty(n)
    out[: arr.size] = arr
    out[arr.size :] = arr[-1]
    return out


def evolve_proper(
    mixture: ProperMixture,
    h: np.ndarray | None,
    params: ReactionParams,
    config: IntegratorConfig,
) -> MixtureRecord:
    """Integrate each sub-ensemble independently and weight-sum observables.

    The aggregate p_coh column is the weighted mean of the per-component
    coherence (a per-molecule quantity); the aggregate final state is the
    weighted sum of the surviving component states.
    """
    records = [
        integrate(state, h, params, config) for _, state in mixture.components
    ]
    weights = tuple(w for w, _ in mixture.components)
    n = max(r.t.size for r in records)
    longest = max(records, key=lambda r: r.t.size)

    def wsum(get):
        return sum(w * _pad_hold(get(r), n) for w, r in zip(weights, records))

    aggregate = SimulationRecord(
        theory=config.theory,
        t=longest.t.copy(),
        trace=wsum(lambda r: r.trace),
        tr_qs=wsum(lambda r: r.tr_qs),
        tr_qt=wsum(lambda r: r.tr_qt),
        p_coh=wsum(lambda r: r.p_coh),
        dns_cum=wsum(lambda r: r.dns_cum),
        dnt_cum=wsum(lambda r: r.dnt_cum),
        y_s=float(sum(w * r.y_s for w, r in zip(weights, records))),
        y_t=float(sum(w * r.y_t for w, r in zip(weights, records))),
        survival=float(sum(w * r.survival for w, r in zip(weights, records))),
        rho_final=sum(w * r.rho_final for w, r in zip(weights, records)),
    )
    return MixtureRecord(aggregate=aggregate, weights=weights, components=records)


def evolve_improper(
    rho_mixed: DensityState,
    h: np.ndarray | None,
    params: ReactionParams,
    config: IntegratorConfig,
) -> SimulationRecord:
    """Evolve the single summed density matrix (the improper-mixture reading).

    Provided for side-by-side comparison with `evolve_proper`; it is exactly
    `integrate` on the summed state.
    """
    return integrate(rho_mixed, h, params, config)
