"""Run-configuration schema: a strict TOML tree with full-default echo.

Every key is validated against the documented schema; unknown keys are
rejected with their location so a typo never silently falls back to a
default.  `emit_config` writes the canonical form with all defaults applied,
and `parse_config(emit_config(cfg))` reconstructs an equal RunConfig.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .coherence import CoherenceConfig
from .errors import ConfigError
from .evolve import (
    IntegratorConfig,
    ReactionParams,
    check_step_size,
    spectral_norm,
)
from .hamiltonian import HamiltonianSpec, HyperfineCoupling, build_hamiltonian
from .spins import STATE_NAMES, DensityState, NuclearSpec, SpinSystem, named_state
from .trajectories import check_trajectory_step


@dataclass(frozen=True)
class MixtureComponentSpec:
    """One sub-ensemble of a proper mixture: weight plus a state recipe."""

    weight: float
    name: str | None = None
    amplitudes: tuple[complex, ...] | None = None


@dataclass(frozen=True)
class InitialStateSpec:
    """Exactly one of: a named state, custom amplitudes, or a proper mixture."""

    name: str | None = None
    amplitudes: tuple[complex, ...] | None = None
    mixture: tuple[MixtureComponentSpec, ...] | None = None

    def __post_init__(self):
        forms = sum(x is not None for x in (self.name, self.amplitudes, self.mixture))
        if forms != 1:
            raise ConfigError(
                "[initial_state] exactly one of name / amplitudes / mixture is required"
            )


@dataclass(frozen=True)
class TrajectorySection:
    enabled: bool = False
    n: int = 100000
    seed: int = 1
    dt: float = 1e-3
    record_mean_state: bool = False
    mean_state_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class OutputsSection:
    csv: str | None = None
    json: str | None = None
    plot: str | None = None
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("[outputs] stride must be a positive integer")


@dataclass(frozen=True)
class RunConfig:
    system: SpinSystem
    hamiltonian: HamiltonianSpec
    reaction: ReactionParams
    initial_state: InitialStateSpec
    integrator: IntegratorConfig
    trajectories: TrajectorySection
    outputs: OutputsSection


def _require_table(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def _reject_unknown(table: dict, allowed: tuple[str, ...], where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"[{where}] unknown key {key!r}; allowed: {', '.join(allowed)}")


def _get(table: dict, key: str, kind, where: str, default=None, required: bool = False):
    if key not in table:
        if required:
            raise ConfigError(f"[{where}] missing required key {key!r}")
        return default
    value = table[key]
    if kind is float and isinstance(value, bool):
        raise ConfigError(f"[{where}].{key} must be a number")
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"[{where}].{key} has wrong type {type(value).__name__}")
    return value


def _parse_amplitudes(raw, where: str) -> tuple[complex, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"[{where}] amplitudes must be a non-empty array")
    out = []
    for item in raw:
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            out.append(complex(float(item), 0.0))
        elif (
            isinstance(item, list)
            and len(item) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in item)
        ):
            out.append(complex(float(item[0]), float(item[1])))
        else:
            raise ConfigError(
                f"[{where}] amplitude entries must be numbers or [re, im] pairs"
            )
    return tuple(out)


def parse_config(text: str) -> RunConfig:
    """Parse and validate the TOML run configuration."""
    try:
        data = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None

    _reject_unknown(
        data,
        ("system", "hamiltonian", "reaction", "initial_state", "integrator",
         "trajectories", "outputs"),
        "config",
    )

    sys_table = _require_table(data, "system")
    _reject_unknown(sys_table, ("nuclei",), "system")
    nuclei = []
    for i, entry in enumerate(sys_table.get("nuclei", [])):
        where = f"system.nuclei[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"[{where}] must be a table")
        _reject_unknown(entry, ("spin", "electron"), where)
        spin = _get(entry, "spin", float, where, required=True)
        electron = _get(entry, "electron", int, where, default=1)
        try:
            nuclei.append(NuclearSpec(spin=spin, coupled_electron=electron))
        except ValueError as exc:
            raise ConfigError(f"[{where}] {exc}") from None
    system = SpinSystem(nuclei=tuple(nuclei))

    ham_table = _require_table(data, "hamiltonian")
    _reject_unknown(
        ham_table,
        ("field", "g1", "g2", "exchange_j", "delta_g_z", "hyperfine"),
        "hamiltonian",
    )
    raw_field = ham_table.get("field", [0.0, 0.0, 0.0])
    if not (isinstance(raw_field, list) and len(raw_field) == 3):
        raise ConfigError("[hamiltonian].field must be a 3-element array")
    hyperfine = []
    for i, entry in enumerate(ham_table.get("hyperfine", [])):
        where = f"hamiltonian.hyperfine[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"[{where}] must be a table")
        _reject_unknown(entry, ("nucleus", "electron", "a", "tensor"), where)
        nucleus = _get(entry, "nucleus", int, where, required=True)
        electron = _get(entry, "electron", int, where, required=True)
        if ("a" in entry) == ("tensor" in entry):
            raise ConfigError(f"[{where}] exactly one of 'a' or 'tensor' is required")
        if "a" in entry:
            coupling = _get(entry, "a", float, where, required=True)
        else:
            t = entry["tensor"]
            if not (isinstance(t, list) and len(t) == 3 and all(
                isinstance(row, list) and len(row) == 3 for row in t
            )):
                raise ConfigError(f"[{where}].tensor must be a 3x3 array")
            coupling = tuple(tuple(float(x) for x in row) for row in t)
        if not 1 <= nucleus <= len(system.nuclei):
            raise ConfigError(f"[{where}] nucleus index {nucleus} out of range")
        hyperfine.append(HyperfineCoupling(nucleus=nucleus, electron=electron, coupling=coupling))
    try:
        hamiltonian = HamiltonianSpec(
            field=tuple(float(b) for b in raw_field),
            g1=_get(ham_table, "g1", float, "hamiltonian", default=1.0),
            g2=_get(ham_table, "g2", float, "hamiltonian", default=1.0),
            hyperfine=tuple(hyperfine),
            exchange_j=_get(ham_table, "exchange_j", float, "hamiltonian", default=0.0),
            delta_g_z=_get(ham_table, "delta_g_z", float, "hamiltonian", default=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"[hamiltonian] {exc}") from None

    if "reaction" not in data:
        raise ConfigError("[reaction] section is required")
    reac_table = _require_table(data, "reaction")
    _reject_unknown(reac_table, ("k_s", "k_t"), "reaction")
    try:
        reaction = ReactionParams(
            k_s=_get(reac_table, "k_s", float, "reaction", required=True),
            k_t=_get(reac_table, "k_t", float, "reaction", default=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"[reaction] {exc}") from None

    if "initial_state" not in data:
        raise ConfigError("[initial_state] section is required")
    init_table = _require_table(data, "initial_state")
    _reject_unknown(init_table, ("name", "amplitudes", "mixture"), "initial_state")
    name = _get(init_table, "name", str, "initial_state")
    if name is not None and name not in STATE_NAMES:
        raise ConfigError(
            f"[initial_state] unknown state {name!r}; known: {', '.join(STATE_NAMES)}"
        )
    amplitudes = None
    if "amplitudes" in init_table:
        amplitudes = _parse_amplitudes(init_table["amplitudes"], "initial_state")
    mixture = None
    if "mixture" in init_table:
        comps = []
        for i, entry in enumerate(init_table["mixture"]):
            where = f"initial_state.mixture[{i}]"
            if not isinstance(entry, dict):
                raise ConfigError(f"[{where}] must be a table")
            _reject_unknown(entry, ("weight", "name", "amplitudes"), where)
            weight = _get(entry, "weight", float, where, required=True)
            cname = _get(entry, "name", str, where)
            if cname is not None and cname not in STATE_NAMES:
                raise ConfigError(f"[{where}] unknown state {cname!r}")
            camps = None
            if "amplitudes" in entry:
                camps = _parse_amplitudes(entry["amplitudes"], where)
            if (cname is None) == (camps is None):
                raise ConfigError(f"[{where}] exactly one of name / amplitudes is required")
            comps.append(MixtureComponentSpec(weight=weight, name=cname, amplitudes=camps))
        mixture = tuple(comps)
    initial_state = InitialStateSpec(name=name, amplitudes=amplitudes, mixture=mixture)

    integ_table = _require_table(data, "integrator")
    _reject_unknown(
        integ_table,
        ("dt", "t_max", "trace_floor", "theory", "coherence_mode",
         "epsilon_denominator", "tau_window", "tau_samples"),
        "integrator",
    )
    try:
        coherence = CoherenceConfig(
            epsilon_denominator=_get(
                integ_table, "epsilon_denominator", float, "integrator", default=1e-12
            ),
            tau_window=_get(integ_table, "tau_window", float, "integrator"),
            tau_samples=_get(integ_table, "tau_samples", int, "integrator", default=257),
        )
        integrator = IntegratorConfig(
            dt=_get(integ_table, "dt", float, "integrator", default=0.01),
            t_max=_get(integ_table, "t_max", float, "integrator", default=20.0),
            trace_floor=_get(integ_table, "trace_floor", float, "integrator", default=1e-9),
            theory=_get(integ_table, "theory", str, "integrator", default="kominis"),
            coherence_mode=_get(
                integ_table, "coherence_mode", str, "integrator", default="instantaneous"
            ),
            coherence=coherence,
        )
    except ValueError as exc:
        raise ConfigError(f"[integrator] {exc}") from None

    traj_table = _require_table(data, "trajectories")
    _reject_unknown(
        traj_table,
        ("enabled", "n", "seed", "dt", "record_mean_state", "mean_state_times"),
        "trajectories",
    )
    raw_times = traj_table.get("mean_state_times", [])
    if not isinstance(raw_times, list):
        raise ConfigError("[trajectories].mean_state_times must be an array")
    trajectories = TrajectorySection(
        enabled=_get(traj_table, "enabled", bool, "trajectories", default=False),
        n=_get(traj_table, "n", int, "trajectories", default=100000),
        seed=_get(traj_table, "seed", int, "trajectories", default=1),
        dt=_get(traj_table, "dt", float, "trajectories", default=1e-3),
        record_mean_state=_get(
            traj_table, "record_mean_state", bool, "trajectories", default=False
        ),
        mean_state_times=tuple(float(t) for t in raw_times),
    )

    out_table = _require_table(data, "outputs")
    _reject_unknown(out_table, ("csv", "json", "plot", "stride"), "outputs")
    outputs = OutputsSection(
        csv=_get(out_table, "csv", str, "outputs"),
        json=_get(out_table, "json", str, "outputs"),
        plot=_get(out_table, "plot", str, "outputs"),
        stride=_get(out_table, "stride", int, "outputs", default=1),
    )

    cfg = RunConfig(
        system=system,
        hamiltonian=hamiltonian,
        reaction=reaction,
        initial_state=initial_state,
        integrator=integrator,
        trajectories=trajectories,
        outputs=outputs,
    )
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: RunConfig) -> None:
    h = build_hamiltonian(cfg.system, cfg.hamiltonian)
    try:
        check_step_size(cfg.integrator.dt, cfg.reaction, spectral_norm(h))
    except ConfigError as exc:
        raise ConfigError(f"[integrator] {exc}") from None
    if cfg.trajectories.enabled:
        try:
            check_trajectory_step(cfg.trajectories.dt, cfg.reaction)
        except ConfigError as exc:
            raise ConfigError(f"[trajectories] {exc}") from None
    if cfg.initial_state.amplitudes is not None:
        n = len(cfg.initial_state.amplitudes)
        if n not in (4, cfg.system.total_dim):
            raise ConfigError(
                f"[initial_state] amplitude length {n} must be 4 or {cfg.system.total_dim}"
            )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None


# ---------------------------------------------------------------------------
# canonical emission


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r}")


def _amp_pairs(amps: tuple[complex, ...]) -> list[list[float]]:
    return [[z.real, z.imag] for z in amps]


def config_to_dict(cfg: RunConfig) -> dict:
    """Nested plain-data mirror of the config with all defaults applied."""
    ham = cfg.hamiltonian
    out: dict = {
        "system": {
            "nuclei": [
                {"spin": n.spin, "electron": n.coupled_electron} for n in cfg.system.nuclei
            ]
        },
        "hamiltonian": {
            "field": list(ham.field),
            "g1": ham.g1,
            "g2": ham.g2,
            "exchange_j": ham.exchange_j,
            "delta_g_z": ham.delta_g_z,
            "hyperfine": [
                {
                    "nucleus": hf.nucleus,
                    "electron": hf.electron,
                    **(
                        {"a": hf.coupling}
                        if isinstance(hf.coupling, (int, float))
                        else {"tensor": [list(row) for row in hf.coupling]}
                    ),
                }
                for hf in ham.hyperfine
            ],
        },
        "reaction": {"k_s": cfg.reaction.k_s, "k_t": cfg.reaction.k_t},
        "initial_state": {},
        "integrator": {
            "dt": cfg.integrator.dt,
            "t_max": cfg.integrator.t_max,
            "trace_floor": cfg.integrator.trace_floor,
            "theory": cfg.integrator.theory,
            "coherence_mode": cfg.integrator.coherence_mode,
            "epsilon_denominator": cfg.integrator.coherence.epsilon_denominator,
            "tau_samples": cfg.integrator.coherence.tau_samples,
        },
        "trajectories": {
            "enabled": cfg.trajectories.enabled,
            "n": cfg.trajectories.n,
            "seed": cfg.trajectories.seed,
            "dt": cfg.trajectories.dt,
            "record_mean_state": cfg.trajectories.record_mean_state,
            "mean_state_times": list(cfg.trajectories.mean_state_times),
        },
        "outputs": {"stride": cfg.outputs.stride},
    }
    if cfg.integrator.coherence.tau_window is not None:
        out["integrator"]["tau_window"] = cfg.integrator.coherence.tau_window
    init = cfg.initial_state
    if init.name is not None:
        out["initial_state"]["name"] = init.name
    if init.amplitudes is not None:
        out["initial_state"]["amplitudes"] = _amp_pairs(init.amplitudes)
    if init.mixture is not None:
        out["initial_state"]["mixture"] = [
            {
                "weight": c.weight,
                **({"name": c.name} if c.name is not None else {}),
                **(
                    {"amplitudes": _amp_pairs(c.amplitudes)}
                    if c.amplitudes is not None
                    else {}
                ),
            }
            for c in init.mixture
        ]
    for key in ("csv", "json", "plot"):
        value = getattr(cfg.outputs, key)
        if value is not None:
            out["outputs"][key] = value
    return out


def emit_config(cfg: RunConfig) -> str:
    """Serialize the canonical TOML text (round-trips through parse_config)."""
    tree = config_to_dict(cfg)
    lines: list[str] = []

    def emit_table(name: str, table: dict, array_keys: tuple[str, ...] = ()):
        scalar = {k: v for k, v in table.items() if k not in array_keys}
        lines.append(f"[{name}]")
        for k, v in scalar.items():
            lines.append(f"{k} = {_fmt(v)}")
        for k in array_keys:
            for entry in table.get(k, []):
                lines.append(f"[[{name}.{k}]]")
                for ek, ev in entry.items():
                    lines.append(f"{ek} = {_fmt(ev)}")
        lines.append("")

    emit_table("system", tree["system"], array_keys=("nuclei",))
    emit_table("hamiltonian", tree["hamiltonian"], array_keys=("hyperfine",))
    emit_table("reaction", tree["reaction"])
    emit_table("initial_state", tree["initial_state"], array_keys=("mixture",))
    emit_table("integrator", tree["integrator"])
    emit_table("trajectories", tree["trajectories"])
    emit_table("outputs", tree["outputs"])
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# building runtime objects


def _component_state(system: SpinSystem, name, amplitudes) -> DensityState:
    if name is not None:
        return named_state(system, name)
    return named_state(system, "custom", np.asarray(amplitudes, dtype=complex))


def build_initial_state(cfg: RunConfig):
    """DensityState for single-form configs, ProperMixture for mixtures."""
    from .ensembles import ProperMixture

    init = cfg.initial_state
    if init.mixture is not None:
        comps = tuple(
            (c.weight, _component_state(cfg.system, c.name, c.amplitudes))
            for c in init.mixture
        )
        try:
            return ProperMixture(components=comps)
        except ValueError as exc:
            raise ConfigError(f"[initial_state.mixture] {exc}") from None
    try:
        return _component_state(cfg.system, init.name, init.amplitudes)
    except ValueError as exc:
        raise ConfigError(f"[initial_state] {exc}") from None


def build_hamiltonian_matrix(cfg: RunConfig) -> np.ndarray:
    return build_hamiltonian(cfg.system, cfg.hamiltonian)
