"""Command-line surface: simulate | trajectories | compare | coherence.

Exit statuses are a stable contract: 0 success, 1 configuration or usage
error, 2 runtime/invariant failure.  All numbers are serialized as decimal
text with 13 significant digits so output files are platform-stable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .coherence import p_coh, p_coh_averaged
from .config import (
    RunConfig,
    build_hamiltonian_matrix,
    build_initial_state,
    config_to_dict,
    load_config,
)
from .ensembles import ProperMixture, evolve_proper
from .errors import ConfigError, InvariantViolation
from .evolve import SimulationRecord, integrate
from .trajectories import TrajectoryConfig, mean_state_vs_master, run_ensemble

CSV_HEADER = "t,trace,tr_QS,tr_QT,p_coh,dnS_cum,dnT_cum"
_NUM = "{:.12e}"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via ConfigError (exit status 1)."""

    def error(self, message):
        raise ConfigError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="radpair", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="path to the TOML run configuration")
    common.add_argument("--out-dir", help="directory that output paths are resolved against")

    p_sim = sub.add_parser("simulate", parents=[common], help="integrate one theory")
    p_sim.add_argument("--theory", help="override [integrator].theory")

    p_traj = sub.add_parser("trajectories", parents=[common], help="Monte Carlo ensemble")
    p_traj.add_argument("--seed", type=int, help="override [trajectories].seed")

    sub.add_parser("compare", parents=[common], help="kominis vs traditional side by side")

    p_coh_cmd = sub.add_parser("coherence", parents=[common], help="evaluate the coherence measure")
    p_coh_cmd.add_argument(
        "--averaged", action="store_true", help="also print the time-averaged measure"
    )
    return parser


def _resolve_outputs(cfg: RunConfig, out_dir: str | None) -> RunConfig:
    if out_dir is None:
        return cfg
    os.makedirs(out_dir, exist_ok=True)
    outputs = cfg.outputs
    def reroot(path):
        return None if path is None else os.path.join(out_dir, os.path.basename(path))
    return replace(
        cfg,
        outputs=replace(
            outputs, csv=reroot(outputs.csv), json=reroot(outputs.json), plot=reroot(outputs.plot)
        ),
    )


def _strided_rows(record: SimulationRecord, stride: int) -> np.ndarray:
    cols = record.columns()
    data = np.column_stack(list(cols.values()))
    idx = list(range(0, data.shape[0], stride))
    if idx[-1] != data.shape[0] - 1:
        idx.append(data.shape[0] - 1)
    return data[idx]


def write_csv(path: str, record: SimulationRecord, stride: int) -> None:
    rows = _strided_rows(record, stride)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(_NUM.format(v) for v in row) + "\n")


def write_compare_csv(path: str, kom: SimulationRecord, trad: SimulationRecord, stride: int) -> None:
    a = _strided_rows(kom, stride)
    b = _strided_rows(trad, stride)
    n = min(a.shape[0], b.shape[0])
    a, b = a[:n], b[:n]
    names = CSV_HEADER.split(",")[1:]
    header = ["t"]
    for name in names:
        header += [f"{name}_kominis", f"{name}_traditional", f"{name}_diff"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            cells = [_NUM.format(a[i, 0])]
            for j in range(1, a.shape[1]):
                cells += [
                    _NUM.format(a[i, j]),
                    _NUM.format(b[i, j]),
                    _NUM.format(abs(a[i, j] - b[i, j])),
                ]
            fh.write(",".join(cells) + "\n")


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_plot(path: str, records: dict[str, SimulationRecord]) -> None:
    """Two-panel static vector plot of tr_QS / tr_QT for each theory."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    styles = {"kominis": "-", "traditional": "--", "nonreacting": ":"}
    fig, (ax_s, ax_t) = plt.subplots(2, 1, figsize=(6, 7), sharex=True)
    for name, rec in records.items():
        style = styles.get(name, "-")
        ax_s.plot(rec.t, rec.tr_qs, style, label=name)
        ax_t.plot(rec.t, rec.tr_qt, style, label=name)
    ax_s.set_ylabel("singlet population")
    ax_t.set_ylabel("triplet population")
    ax_t.set_xlabel("time (units of 1/k)")
    ax_s.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _record_summary(record: SimulationRecord) -> dict:
    return {
        "theory": record.theory,
        "y_s": record.y_s,
        "y_t": record.y_t,
        "survival": record.survival,
        "final": {
            "t": float(record.t[-1]),
            "trace": float(record.trace[-1]),
            "tr_QS": float(record.tr_qs[-1]),
            "tr_QT": float(record.tr_qt[-1]),
            "p_coh": float(record.p_coh[-1]),
        },
    }


def _integrate_config(cfg: RunConfig, theory: str | None = None) -> SimulationRecord:
    integ = cfg.integrator if theory is None else replace(cfg.integrator, theory=theory)
    h = build_hamiltonian_matrix(cfg)
    initial = build_initial_state(cfg)
    if isinstance(initial, ProperMixture):
        return evolve_proper(initial, h, cfg.reaction, integ).aggregate
    return integrate(initial, h, cfg.reaction, integ)


def _cmd_simulate(cfg: RunConfig, theory_override: str | None) -> int:
    if theory_override is not None:
        cfg = replace(cfg, integrator=replace(cfg.integrator, theory=theory_override))
    record = _integrate_config(cfg)
    outputs = cfg.outputs
    if outputs.csv:
        write_csv(outputs.csv, record, outputs.stride)
    if outputs.json:
        payload = {
            "command": "simulate",
            "config": config_to_dict(cfg),
            **_record_summary(record),
        }
        if cfg.trajectories.enabled:
            payload["trajectories"] = _run_trajectories(cfg).summary()
        write_json(outputs.json, payload)
    if outputs.plot:
        records = {record.theory: record}
        overlay = {"kominis": "traditional", "traditional": "kominis"}.get(record.theory)
        if overlay:
            records[overlay] = _integrate_config(cfg, theory=overlay)
        write_plot(outputs.plot, records)
    print(
        f"simulate[{record.theory}]: Y_S = {record.y_s:.6f}  Y_T = {record.y_t:.6f}  "
        f"survival = {record.survival:.6f}"
    )
    return 0


def _run_trajectories(cfg: RunConfig):
    traj = cfg.trajectories
    h = build_hamiltonian_matrix(cfg)
    initial = build_initial_state(cfg)
    if isinstance(initial, ProperMixture):
        ensemble_initial = list(initial.components)
    else:
        ensemble_initial = initial
    tcfg = TrajectoryConfig(
        dt=traj.dt,
        t_max=cfg.integrator.t_max,
        n_trajectories=traj.n,
        seed=traj.seed,
    )
    return run_ensemble(ensemble_initial, h, cfg.reaction, tcfg, system=initial.system)


def _cmd_trajectories(cfg: RunConfig, seed_override: int | None) -> int:
    if seed_override is not None:
        cfg = replace(cfg, trajectories=replace(cfg.trajectories, seed=seed_override))
    report = _run_trajectories(cfg)
    payload = {
        "command": "trajectories",
        "config": config_to_dict(cfg),
        "report": report.summary(),
    }
    traj = cfg.trajectories
    if traj.record_mean_state and traj.mean_state_times:
        initial = build_initial_state(cfg)
        if isinstance(initial, ProperMixture):
            initial = initial.summed_state()
        comparison = mean_state_vs_master(
            initial,
            build_hamiltonian_matrix(cfg),
            cfg.reaction,
            TrajectoryConfig(dt=traj.dt, n_trajectories=traj.n, seed=traj.seed),
            tuple(traj.mean_state_times),
        )
        payload["mean_state_check"] = {
            "times": list(comparison.times),
            "max_abs_deviation": comparison.max_abs_deviation,
            "within_3se": comparison.within_3se,
        }
    if cfg.outputs.json:
        write_json(cfg.outputs.json, payload)
    print(
        f"trajectories[n={report.n_trajectories}, seed={report.seed}]: "
        f"Y_S = {report.y_s:.6f} +- {report.se_y_s:.6f}  survival = {report.survival:.6f}"
    )
    return 0


def _cmd_compare(cfg: RunConfig) -> int:
    kom = _integrate_config(cfg, theory="kominis")
    trad = _integrate_config(cfg, theory="traditional")
    names = CSV_HEADER.split(",")[1:]
    n = min(kom.t.size, trad.t.size)
    discrepancy = {}
    kom_cols = kom.columns()
    trad_cols = trad.columns()
    for name in names:
        a = kom_cols[name][:n]
        b = trad_cols[name][:n]
        discrepancy[name] = float(np.max(np.abs(a - b))) if n else 0.0
    outputs = cfg.outputs
    if outputs.csv:
        write_compare_csv(outputs.csv, kom, trad, outputs.stride)
    if outputs.json:
        write_json(
            outputs.json,
            {
                "command": "compare",
                "config": config_to_dict(cfg),
                "kominis": _record_summary(kom),
                "traditional": _record_summary(trad),
                "max_discrepancy": discrepancy,
            },
        )
    if outputs.plot:
        write_plot(outputs.plot, {"kominis": kom, "traditional": trad})
    print(
        f"compare: Y_S kominis = {kom.y_s:.6f}, traditional = {trad.y_s:.6f}; "
        f"max column discrepancy = {max(discrepancy.values()):.3e}"
    )
    return 0


def _cmd_coherence(cfg: RunConfig, averaged: bool) -> int:
    h = build_hamiltonian_matrix(cfg)
    initial = build_initial_state(cfg)
    if isinstance(initial, ProperMixture):
        state = initial.summed_state()  # the measure acts on one density matrix
    else:
        state = initial
    value = p_coh(state, config=cfg.integrator.coherence)
    print(f"p_coh = {value:.12f}")
    payload = {"command": "coherence", "config": config_to_dict(cfg), "p_coh": value}
    if averaged or np.any(h):
        avg = p_coh_averaged(
            state, h, config=cfg.integrator.coherence, k_total=cfg.reaction.k_total
        )
        print(f"p_coh_averaged = {avg:.12f}")
        payload["p_coh_averaged"] = avg
    if cfg.outputs.json:
        write_json(cfg.outputs.json, payload)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        cfg = _resolve_outputs(cfg, args.out_dir)
        if args.command == "simulate":
            return _cmd_simulate(cfg, args.theory)
        if args.command == "trajectories":
            return _cmd_trajectories(cfg, args.seed)
        if args.command == "compare":
            return _cmd_compare(cfg)
        if args.command == "coherence":
            return _cmd_coherence(cfg, args.averaged)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"radpair: config error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"radpair: invariant violation: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"radpair: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
