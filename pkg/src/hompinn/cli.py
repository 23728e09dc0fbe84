"""Command-line entry point.

Subcommands map one-to-one onto the experiment operations:

* generate-obs: solve the ground-truth oracle and sample observations
* train:        run the (multi-process) inverse pipeline
* sweep-m:      output-group-count selection sweep
* robustness:   repeated recovery from random DE-parameter starts
* discover:     residual-only solution discovery at fixed parameters
* report:       join training records into one summary table

Configuration is one JSON document with a strict schema (unknown keys are
rejected); every subcommand echoes the fully resolved configuration so a
run can be replayed exactly.  All emitted CSVs have a fixed column order
and round-trip float formatting, so reruns of the same resolved config
produce byte-identical files.  Environment overrides: HOMPINN_OUT (output
directory), HOMPINN_WORKERS (worker count).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle as orc
from . import trainer as tr
from .exceptions import ConfigError, ContractViolationError
from .loss import HomotopySchedule
from .network import MLPConfig, forward, save_params
from .problems import get_problem

_REQUIRED = object()

# static schema: section -> key -> (type(s), default); None defaults may be
# filled from the per-problem table below
_SCHEMA = {
    "problem": {
        "name": (str, _REQUIRED),
        "lambda_true": ((list, type(None)), None),
    },
    "network": {
        "hidden_widths": ((list, type(None)), None),
        "output_groups": ((int, type(None)), None),
    },
    "schedule": {
        "alpha0": ((int, float), 1.0),
        "decay": ((int, float), 0.6),
        "steps": (int, 11),
    },
    "trainer": {
        "iterations_per_step": ((int, type(None)), None),
        "learning_rate": ((int, float), 1e-3),
        "lambda_learning_rate": ((int, float, type(None)), None),
        "lambda_init": ((list, type(None)), None),
        "n_collocation": ((int, type(None)), None),
        "n_boundary": ((int, type(None)), None),
        "test_fraction": ((int, float), 0.2),
        "processes": (int, 1),
        "plateau_exit": (bool, True),
        "plateau_window": (int, 500),
        "plateau_rtol": ((int, float), 1e-9),
        "carry_adam_moments": (bool, False),
        "reseed_dead_groups": (bool, True),
        "record_wall_time": (bool, False),
        "checkpoint_each_step": (bool, False),
    },
    "oracle": {
        "grid_n": ((int, type(None)), None),
        "n_observations": ((int, type(None)), None),
        "subset": ((list, type(None)), None),
        "observations_path": ((str, type(None)), None),
        "solution_table_path": ((str, type(None)), None),
    },
    "seeds": {
        "network": (int, 0),
        "observations": (int, 7),
        "split": (int, 1),
        "study": (int, 10000),
    },
    "output": {
        "dir": ((str, type(None)), None),
    },
}

_PROBLEM_DEFAULTS = {
    "ex1-bratu-quartic": {
        "hidden_widths": [30, 30, 30], "output_groups": 2,
        "lambda_init": [1.0], "iterations_per_step": 5000,
        "n_collocation": 200, "n_boundary": 2, "grid_n": 2001,
        "n_observations": 80,
    },
    "ex2-quartic-quadratic": {
        "hidden_widths": [30, 30, 30], "output_groups": 7,
        "lambda_init": [10.0], "iterations_per_step": 5000,
        "n_collocation": 200, "n_boundary": 2, "grid_n": 2001,
        "n_observations": 210,
    },
    "gray-scott-steady": {
        "hidden_widths": [128] * 6, "output_groups": 4,
        "lambda_init": [1e-5, 2e-5, 1e-3, 1e-3], "iterations_per_step": 20000,
        "n_collocation": 32, "n_boundary": 32, "grid_n": 64,
        "n_observations": 5000,
    },
}


def load_config(path, seed_override=None, out_override=None) -> dict:
    """Validate against the strict schema and materialize every default."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for section in raw:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key in raw[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")

    def type_ok(val, types):
        types = types if isinstance(types, tuple) else (types,)
        if isinstance(val, bool):
            return bool in types
        return isinstance(val, types)

    cfg = {}
    for section, keys in _SCHEMA.items():
        cfg[section] = {}
        for key, (types, default) in keys.items():
            if key in raw.get(section, {}):
                val = raw[section][key]
                if not type_ok(val, types):
                    raise ConfigError(f"{section}.{key} has wrong type")
                cfg[section][key] = val
            elif default is _REQUIRED:
                raise ConfigError(f"missing required key {section}.{key}")
            else:
                cfg[section][key] = default

    name = cfg["problem"]["name"]
    problem = get_problem(name)  # raises on unknown problem names
    pdef = _PROBLEM_DEFAULTS[name]
    for key in ("hidden_widths", "output_groups"):
        if cfg["network"][key] is None:
            cfg["network"][key] = pdef[key]
    for key in ("iterations_per_step", "lambda_init", "n_collocation", "n_boundary"):
        if cfg["trainer"][key] is None:
            cfg["trainer"][key] = pdef[key]
    for key in ("grid_n", "n_observations"):
        if cfg["oracle"][key] is None:
            cfg["oracle"][key] = pdef[key]
    if cfg["output"]["dir"] is None:
        cfg["output"]["dir"] = f"runs/{name}"

    if seed_override is not None:
        cfg["seeds"] = {"network": seed_override, "observations": seed_override + 1,
                        "split": seed_override + 2, "study": seed_override + 3}
    env_out = os.environ.get("HOMPINN_OUT")
    if out_override is not None:
        cfg["output"]["dir"] = out_override
    elif env_out:
        cfg["output"]["dir"] = env_out

    if len(cfg["trainer"]["lambda_init"]) != problem.lambda_dim:
        raise ConfigError(f"trainer.lambda_init must have {problem.lambda_dim} entries")
    if (cfg["problem"]["lambda_true"] is not None
            and len(cfg["problem"]["lambda_true"]) != problem.lambda_dim):
        raise ConfigError(f"problem.lambda_true must have {problem.lambda_dim} entries")
    return cfg


def train_config_from(cfg: dict, out_dir: Path | None = None) -> tr.TrainConfig:
    t, n, s = cfg["trainer"], cfg["network"], cfg["schedule"]
    problem = get_problem(cfg["problem"]["name"])
    mlp = MLPConfig(
        input_dim=problem.dim,
        hidden_widths=tuple(n["hidden_widths"]),
        output_groups=n["output_groups"],
        components_per_group=problem.components,
    )
    ckpt_dir = None
    if out_dir is not None and t["checkpoint_each_step"]:
        ckpt_dir = str(out_dir / "checkpoints")
        Path(ckpt_dir).mkdir(parents=True, exist_ok=True)
    lam_true = cfg["problem"]["lambda_true"]
    return tr.TrainConfig(
        problem=cfg["problem"]["name"],
        mlp=mlp,
        schedule=HomotopySchedule(s["alpha0"], s["decay"], s["steps"]),
        iterations_per_step=t["iterations_per_step"],
        lambda_init=np.asarray(t["lambda_init"], dtype=np.float64),
        learning_rate=t["learning_rate"],
        lambda_learning_rate=t["lambda_learning_rate"],
        n_collocation=t["n_collocation"],
        n_boundary=t["n_boundary"],
        test_fraction=t["test_fraction"],
        processes=t["processes"],
        seed_network=cfg["seeds"]["network"],
        seed_split=cfg["seeds"]["split"],
        plateau_exit=t["plateau_exit"],
        plateau_window=t["plateau_window"],
        plateau_rtol=t["plateau_rtol"],
        carry_adam_moments=t["carry_adam_moments"],
        reseed_dead_groups=t["reseed_dead_groups"],
        lambda_true=None if lam_true is None else np.asarray(lam_true, dtype=np.float64),
        record_wall_time=t["record_wall_time"],
        checkpoint_dir=ckpt_dir,
    )


def _prepare_out(cfg: dict) -> Path:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "resolved_config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _solution_table(cfg: dict, out: Path) -> orc.SolutionTable:
    path = cfg["oracle"]["solution_table_path"]
    if path is None:
        path = out / "solution_table.bin"
    path = Path(path)
    if path.exists():
        return orc.SolutionTable.load(path)
    name = cfg["problem"]["name"]
    lam_true = cfg["problem"]["lambda_true"]
    if lam_true is None:
        raise ConfigError("problem.lambda_true is needed to generate ground truth")
    if name == "gray-scott-steady":
        table = orc.solve_gray_scott_steady(lam_true, grid_n=cfg["oracle"]["grid_n"])
    else:
        table = orc.solve_multisolution_1d(name, lam_true,
                                           grid_n=cfg["oracle"]["grid_n"])
    table.save(path)
    return table


def _load_observations(cfg: dict, out: Path) -> orc.ObservationSet:
    path = cfg["oracle"]["observations_path"]
    if path is None:
        path = out / "observations.csv"
    path = Path(path)
    if not path.exists():
        raise ConfigError(
            f"observation file {path} not found; run generate-obs first")
    return orc.ObservationSet.from_csv(path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate_obs(cfg: dict) -> int:
    out = _prepare_out(cfg)
    table = _solution_table(cfg, out)
    subset = cfg["oracle"]["subset"]
    obs = orc.sample_observations(table, cfg["oracle"]["n_observations"],
                                  seed=cfg["seeds"]["observations"], subset=subset)
    obs.to_csv(out / "observations.csv")
    with open(out / "obs_meta.json", "w") as fh:
        json.dump(obs.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    labels = np.asarray(obs.meta["source_labels"])
    print(f"solution table: {table.num_solutions} distinct solutions "
          f"(residual rms {', '.join('%.1e' % r for r in table.residual_rms)})")
    for si in sorted(set(labels.tolist())):
        print(f"  solution {si}: {(labels == si).sum()} observations")
    print(f"wrote {out / 'observations.csv'}")
    return 0


def _dump_predictions(params, problem, out_path):
    m, c = params.config.output_groups, params.config.components_per_group
    lo, hi = problem.domain[0]
    if problem.dim == 1:
        pts = np.linspace(lo, hi, 501).reshape(-1, 1)
        header = ["x"]
    else:
        ax = np.linspace(lo, hi, 101)
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        header = ["x", "y"]
    comp_names = ["u"] if c == 1 else ["A", "S"]
    for g in range(1, m + 1):
        for cn in comp_names:
            header.append(f"{cn}_{g}")
    vals = forward(params, pts)
    with open(out_path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row_x, row_v in zip(pts, vals):
            fh.write(",".join(repr(float(v)) for v in (*row_x, *row_v)) + "\n")


def cmd_train(cfg: dict) -> int:
    out = _prepare_out(cfg)
    obs = _load_observations(cfg, out)
    tcfg = train_config_from(cfg, out)
    result = tr.run_inverse_pipeline(tcfg, obs)
    result.record.to_csv(out / "record.csv",
                         record_wall_time=tcfg.record_wall_time)
    if result.forward_record is not None and result.forward_record.rows:
        result.forward_record.to_csv(out / "forward_record.csv",
                                     record_wall_time=tcfg.record_wall_time)
    tr.save_checkpoint(out / "final.ckpt", result.params, result.lam)
    save_params(out / "final_params.bin", result.params)
    _dump_predictions(result.params, get_problem(tcfg.problem),
                      out / "predictions.csv")
    lam_str = ", ".join(f"{get_problem(tcfg.problem).lambda_labels[i]}={v:.6g}"
                        for i, v in enumerate(result.lam))
    print(f"final DE parameters: {lam_str}")
    last = result.record.rows[-1]
    print(f"train loss {last.train_loss:.3e}, test loss {last.test_loss:.3e}")
    if result.diverged:
        print(f"DIVERGED: {result.record.divergence_report}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep_m(cfg: dict, m_range) -> int:
    out = _prepare_out(cfg)
    obs = _load_observations(cfg, out)
    tcfg = train_config_from(cfg, out)
    sweep = tr.m_selection_sweep(tcfg, obs, m_range)
    p = get_problem(tcfg.problem).lambda_dim
    cols = (["M"] + [f"lambda_{i}" for i in range(p)] + [f"err_{i}" for i in range(p)]
            + ["train_loss", "test_loss", "failed"])
    with open(out / "sweep.csv", "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in sweep.rows:
            lam = row.lam if row.lam is not None else [float("nan")] * p
            err = row.err if row.err is not None else [float("nan")] * p
            vals = [str(row.m)] + [repr(float(v)) for v in lam]
            vals += [repr(float(v)) for v in err]
            vals += [repr(row.train_loss), repr(row.test_loss), str(int(row.failed))]
            fh.write(",".join(vals) + "\n")
    print(f"recommended M = {sweep.recommended_m}")
    return 0


def cmd_robustness(cfg: dict, trials: int, workers: int) -> int:
    out = _prepare_out(cfg)
    obs = _load_observations(cfg, out)
    tcfg = train_config_from(cfg, out)
    res = tr.robustness_study(tcfg, obs, trials,
                              seed_base=cfg["seeds"]["study"], workers=workers)
    p = tcfg.lambda_init.size
    cols = ["trial", "k"] + [f"lambda_{i}" for i in range(p)]
    with open(out / "trajectories.csv", "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for t in range(trials):
            for k in range(res.trajectories.shape[1]):
                vals = [str(t), str(k + 1)]
                vals += [repr(float(v)) for v in res.trajectories[t, k]]
                fh.write(",".join(vals) + "\n")
    n_conv = int(res.converged.sum())
    print(f"converged: {n_conv}/{trials} ({100.0 * res.fraction:.1f}%)")
    return 0


def cmd_discover(cfg: dict, lam, groups: int | None, restarts: int) -> int:
    out = _prepare_out(cfg)
    tcfg = train_config_from(cfg, out)
    m_large = groups if groups is not None else tcfg.mlp.output_groups
    table = tr.discover_solutions(tcfg, lam, m_large, restarts,
                                  seed_base=cfg["seeds"]["study"])
    problem = get_problem(tcfg.problem)
    ax = table.grid_axis()
    with open(out / "discovered.csv", "w", newline="") as fh:
        if problem.dim == 1:
            cols = ["x"] + [f"s{j}" for j in range(table.num_solutions)]
            fh.write(",".join(cols) + "\n")
            for i, xv in enumerate(ax):
                vals = [repr(float(xv))]
                vals += [repr(float(sol[0, i])) for sol in table.solutions]
                fh.write(",".join(vals) + "\n")
        else:
            cols = ["x", "y"]
            for j in range(table.num_solutions):
                cols += [f"A{j}", f"S{j}"]
            fh.write(",".join(cols) + "\n")
            for i, xv in enumerate(ax):
                for j, yv in enumerate(ax):
                    vals = [repr(float(xv)), repr(float(yv))]
                    for sol in table.solutions:
                        vals += [repr(float(sol[0, i, j])), repr(float(sol[1, i, j]))]
                    fh.write(",".join(vals) + "\n")
    table.save(out / "discovered_table.bin")
    print(f"found {table.num_solutions} distinct solutions "
          f"(network residual rms: {', '.join('%.1e' % r for r in table.residual_rms)})")
    return 0


def cmd_report(record_paths, out_path) -> int:
    rows = []
    for path in record_paths:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            last_by_process = {}
            for line in fh:
                vals = line.strip().split(",")
                if not vals or not vals[0]:
                    continue
                last_by_process[vals[0]] = vals
        for proc in sorted(last_by_process):
            rows.append([str(path), proc] + last_by_process[proc][1:])
    cols = ["record", "process"] + header[1:]
    with open(out_path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hompinn",
        description="homotopy physics-informed networks for multi-solution "
                    "inverse problems")
    parser.add_argument("--workers", type=int,
                        default=int(os.environ.get("HOMPINN_WORKERS", "1")),
                        help="worker processes for sweep/robustness trials")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed override (replaces the seeds section)")
        p.add_argument("--out", default=None, help="output directory override")

    add_common(sub.add_parser("generate-obs", help="oracle + observation sampling"))
    add_common(sub.add_parser("train", help="run the inverse pipeline"))
    p_sweep = sub.add_parser("sweep-m", help="output-group-count sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--m-range", type=int, nargs="+", required=True)
    p_rob = sub.add_parser("robustness", help="random-initialization study")
    add_common(p_rob)
    p_rob.add_argument("--trials", type=int, default=50)
    p_disc = sub.add_parser("discover", help="residual-only solution discovery")
    add_common(p_disc)
    p_disc.add_argument("--lam", type=float, nargs="+", required=True,
                        help="fixed DE parameter values")
    p_disc.add_argument("--groups", type=int, default=None)
    p_disc.add_argument("--restarts", type=int, default=10)
    p_rep = sub.add_parser("report", help="summarize training records")
    p_rep.add_argument("--inputs", nargs="+", required=True)
    p_rep.add_argument("--out", default="summary.csv")

    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.inputs, args.out)
        cfg = load_config(args.config, seed_override=args.seed,
                          out_override=args.out)
        if args.command == "generate-obs":
            return cmd_generate_obs(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "sweep-m":
            return cmd_sweep_m(cfg, args.m_range)
        if args.command == "robustness":
            return cmd_robustness(cfg, args.trials, args.workers)
        if args.command == "discover":
            return cmd_discover(cfg, args.lam, args.groups, args.restarts)
    except (ConfigError, ContractViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
