"""Command-line front end: simulate | riccati | diagnose | ensemble.

Exit codes are a stable contract: 0 success (including a well-posed
"no stabilizing solution" answer from ``riccati``), 1 diagnostics criteria
failed, 2 configuration problems, 3 trajectory divergence, 4 numerical
failure.  The output directory comes from ``--output-dir``, else the
``ADGAME_OUTPUT_DIR`` environment variable, else the config's output block.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

import numpy as np

from . import __version__, diagnostics
from .config import ConfigError, ExperimentConfig, apply_override, load_config, serialize_config
from .errors import (
    ContractViolationError,
    DivergenceError,
    InapplicableExperimentError,
    NumericalFailureError,
)
from .riccati import nash_gains, nash_value, solve_game_are
from .sim import simulate_adaptive

__all__ = ["main", "cmd_simulate", "cmd_riccati", "cmd_diagnose", "cmd_ensemble"]

EXIT_OK = 0
EXIT_CRITERIA_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_NUMERICAL = 4

OUTPUT_DIR_ENV = "ADGAME_OUTPUT_DIR"

_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render payoff and estimate-error curves from trajectory/epoch CSVs.\"\"\"
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

traj_path = sys.argv[1] if len(sys.argv) > 1 else "trajectory.csv"
epochs_path = sys.argv[2] if len(sys.argv) > 2 else "epochs.csv"

with open(traj_path) as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
payoff = [float(r["running_payoff"]) for r in rows]

with open(epochs_path) as fh:
    erows = list(csv.DictReader(fh))
ek = [int(r["epoch"]) for r in erows]
err = [float(r["estimate_error"]) for r in erows]

fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 7), sharex=False)
ax1.plot(t, payoff)
ax1.set_xlabel("t")
ax1.set_ylabel("running payoff average")
ax2.plot(ek, err)
ax2.set_xlabel("epoch")
ax2.set_ylabel("estimate error")
ax2.set_yscale("log")
fig.tight_layout()
fig.savefig("curves.png", dpi=150)
print("wrote curves.png")
"""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adgame", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"adgame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to a TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="config override block.key=value (repeatable)",
        )
        p.add_argument("--output-dir", default=None, help="directory for output artifacts")

    p = sub.add_parser("simulate", help="run one adaptive trajectory")
    common(p)
    p.add_argument(
        "--emit-plot-script",
        action="store_true",
        help="also write a self-contained plotting script next to the CSVs",
    )

    p = sub.add_parser("riccati", help="solve the game Riccati equation for the model block")
    common(p)

    p = sub.add_parser("diagnose", help="run one diagnostic experiment suite")
    p.add_argument(
        "experiment",
        choices=["stability", "consistency", "nash-value", "nash-gap", "dither"],
    )
    common(p)
    p.add_argument("--seeds", type=int, default=None, help="ensemble size override")
    p.add_argument(
        "--no-dither", action="store_true", help="disable the excitation (ablation control)"
    )

    p = sub.add_parser("ensemble", help="run n seeded trajectories and aggregate")
    common(p)
    p.add_argument("--seeds", type=int, default=20, help="number of seeds")
    p.add_argument("--threads", type=int, default=1, help="worker threads across seeds")
    p.add_argument("--emit-plot-script", action="store_true")

    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    for spec in args.override:
        cfg = apply_override(cfg, spec)
    if args.seed is not None:
        cfg = apply_override(cfg, f"sim.seed={int(args.seed)}")
    return cfg


def _output_dir(args, cfg: ExperimentConfig) -> str:
    if args.output_dir:
        out = args.output_dir
    elif os.environ.get(OUTPUT_DIR_ENV):
        out = os.environ[OUTPUT_DIR_ENV]
    else:
        out = cfg["output"]["directory"]
    os.makedirs(out, exist_ok=True)
    return out


def _run_one(cfg: ExperimentConfig, seed: int | None = None):
    model = cfg.to_model()
    sim_cfg = cfg.to_sim_config(seed=seed)
    est_init = cfg.to_estimator_init()
    sb = cfg["strategy"]
    return simulate_adaptive(
        model,
        sim_cfg,
        est_init=est_init,
        T0=sb["T0"],
        gamma_floor=sb["gamma_floor_epoch"],
    )


def _summary_text(cfg: ExperimentConfig, traj) -> str:
    modes: dict[str, int] = {}
    for er in traj.epoch_records:
        modes[er.mode] = modes.get(er.mode, 0) + 1
    sb = cfg["sim"]
    lines = [
        f"T = {sb['T']:.12g}",
        f"h = {sb['h']:.12g}",
        f"seed = {sb['seed']}",
        f"diverged = {traj.diverged}",
        f"payoff_average = {traj.payoff_average:.12g}",
        f"stability_average = {traj.stability_average:.12g}",
        f"final_estimate_error = "
        + ("" if traj.final_estimate_error is None else f"{traj.final_estimate_error:.12g}"),
        f"guard_activations = {traj.guard_activations}",
        "mode_histogram = " + ", ".join(f"{k}:{v}" for k, v in sorted(modes.items())),
    ]
    return "\n".join(lines) + "\n"


def _write_run_artifacts(out: str, cfg: ExperimentConfig, traj, prefix: str = "") -> None:
    traj.to_csv(os.path.join(out, f"{prefix}trajectory.csv"))
    traj.epochs_to_csv(os.path.join(out, f"{prefix}epochs.csv"))
    with open(os.path.join(out, f"{prefix}summary.txt"), "w") as fh:
        fh.write(_summary_text(cfg, traj))


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _output_dir(args, cfg)
    with open(os.path.join(out, "config_resolved.toml"), "w") as fh:
        fh.write(serialize_config(cfg))
    if args.emit_plot_script:
        with open(os.path.join(out, "plot_results.py"), "w") as fh:
            fh.write(_PLOT_SCRIPT)
    try:
        traj = _run_one(cfg)
    except DivergenceError as exc:
        if exc.trajectory is not None:
            _write_run_artifacts(out, cfg, exc.trajectory)
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    _write_run_artifacts(out, cfg, traj)
    print(_summary_text(cfg, traj), end="")
    print(f"artifacts written to {out}")
    return EXIT_OK


def _fmt_matrix(name: str, M: np.ndarray) -> str:
    rows = ["  [" + ", ".join(f"{v:.10g}" for v in row) + "]" for row in np.atleast_2d(M)]
    return f"{name} =\n" + "\n".join(rows)


def cmd_riccati(args) -> int:
    cfg = _load(args)
    model = cfg.to_model()
    sol = solve_game_are(model.A, model.B1, model.B2, model.Qw, model.R1, model.R2)
    if not sol:
        print(f"NoStabilizingSolution({sol.reason})")
        return EXIT_OK
    L1, L2 = nash_gains(sol, model.B1, model.B2, model.R1, model.R2)
    print(_fmt_matrix("P1", sol.P1))
    print(_fmt_matrix("P2", sol.P2))
    print(_fmt_matrix("L1", L1))
    print(_fmt_matrix("L2", L2))
    eig_full = np.linalg.eigvals(sol.A_cl_P)
    eig_real = np.linalg.eigvals(sol.A_cl_P1)
    print("closed-loop eigenvalues (full P):", ", ".join(f"{v:.10g}" for v in eig_full))
    print("closed-loop eigenvalues (P1):   ", ", ".join(f"{v:.10g}" for v in eig_real))
    print(f"residual = {sol.residual:.6g}")
    print(f"value tr(D^T P1 D) = {nash_value(sol.P1, model.D):.10g}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _load(args)
    if args.no_dither:
        cfg = apply_override(cfg, "strategy.dither=false")
    out = _output_dir(args, cfg)
    model = cfg.to_model()
    sim_cfg = cfg.to_sim_config()
    est_init = cfg.to_estimator_init()
    db = cfg["diagnostics"]
    n_seeds = args.seeds if args.seeds is not None else db["n_seeds"]
    T0 = cfg["strategy"]["T0"]

    if args.experiment == "stability":
        rep = diagnostics.check_stability(model, sim_cfg, est_init, n_seeds=n_seeds, T0=T0)
    elif args.experiment == "consistency":
        rep = diagnostics.check_consistency(
            model,
            sim_cfg,
            est_init,
            n_seeds=n_seeds,
            checkpoints=tuple(db["checkpoints"]),
            threshold_frac=db["consistency_threshold_frac"],
            T0=T0,
        )
    elif args.experiment == "nash-value":
        rep = diagnostics.check_nash_value(
            model, sim_cfg, est_init, n_seeds=n_seeds, rel_tol=db["nash_rel_tol"], T0=T0
        )
    elif args.experiment == "nash-gap":
        rep = diagnostics.check_nash_gap(
            model,
            sim_cfg,
            est_init,
            deviations=tuple(db["deviations"]),
            n_seeds=n_seeds,
            T0=T0,
        )
    else:
        m1 = model.dims[1]
        rep = diagnostics.check_dither_energy(
            h=db["dither_h"],
            n_epochs=db["dither_epochs"],
            n_seeds=n_seeds,
            m=m1,
            seed=cfg["sim"]["seed"],
            milestones=tuple(db["dither_milestones"]),
        )

    text = rep.to_text()
    print(text)
    with open(os.path.join(out, f"diagnostics_{rep.experiment}.txt"), "w") as fh:
        fh.write(text + "\n")
    rep.per_seed_csv(os.path.join(out, f"diagnostics_{rep.experiment}_seeds.csv"))
    if not rep.passed and rep.notes:
        # ablation controls are expected to fail; the report says so
        print("criteria failed (see notes above)")
    return EXIT_OK if rep.passed else EXIT_CRITERIA_FAILED


def cmd_ensemble(args) -> int:
    cfg = _load(args)
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    out = _output_dir(args, cfg)
    with open(os.path.join(out, "config_resolved.toml"), "w") as fh:
        fh.write(serialize_config(cfg))
    if args.emit_plot_script:
        with open(os.path.join(out, "plot_results.py"), "w") as fh:
            fh.write(_PLOT_SCRIPT)
    base_seed = cfg["sim"]["seed"]
    seeds = [base_seed + i for i in range(args.seeds)]

    def run(seed: int):
        try:
            return seed, _run_one(cfg, seed=seed), None
        except DivergenceError as exc:
            return seed, exc.trajectory, "diverged"

    if args.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    any_divergence = False
    rows = []
    for seed, traj, flag in results:
        if traj is not None:
            _write_run_artifacts(out, cfg, traj, prefix=f"seed{seed}_")
        if flag == "diverged":
            any_divergence = True
        rows.append((seed, traj, flag))

    with open(os.path.join(out, "ensemble.csv"), "w", newline="") as fh:
        fh.write(
            "seed,diverged,payoff_average,stability_average,final_estimate_error,"
            "guard_activations\n"
        )
        for seed, traj, flag in rows:
            if traj is None:
                fh.write(f"{seed},1,,,,\n")
                continue
            err = (
                ""
                if traj.final_estimate_error is None
                else f"{traj.final_estimate_error:.12g}"
            )
            fh.write(
                f"{seed},{int(flag == 'diverged')},{traj.payoff_average:.12g},"
                f"{traj.stability_average:.12g},{err},{traj.guard_activations}\n"
            )

    ok = [t for _, t, f in rows if t is not None and f is None]
    if ok:
        med_p = float(np.median([t.payoff_average for t in ok]))
        med_s = float(np.median([t.stability_average for t in ok]))
        print(f"seeds = {len(rows)}, completed = {len(ok)}")
        print(f"median payoff_average = {med_p:.12g}")
        print(f"median stability_average = {med_s:.12g}")
    print(f"artifacts written to {out}")
    return EXIT_DIVERGENCE if any_divergence else EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "riccati":
            return cmd_riccati(args)
        if args.command == "diagnose":
            return cmd_diagnose(args)
        return cmd_ensemble(args)
    except (ConfigError, InapplicableExperimentError, ContractViolationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (NumericalFailureError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
