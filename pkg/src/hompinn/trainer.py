"""Training orchestration: the homotopy loop, the warm-started two-process
refinement, the M-selection sweep, the initialization-robustness study, and
residual-only solution discovery.

One homotopy process runs K steps; step k sets the residual weight
alpha_k = alpha0 * r^(k-1), warm-starts parameters from step k-1, and runs
T Adam iterations on the total loss (the tape is rebuilt every iteration,
since the data-term assignment may change).  Adam moments are reset at each
step by default: the objective changes with alpha_k, so stale curvature
estimates are not carried over (a flag restores carrying).
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tape, tape_backward
from .exceptions import ContractViolationError, DivergenceError
from .loss import HomotopySchedule, LossAssembler, data_loss, per_group_residual_rms
from .network import MLPConfig, NetworkParams, forward, hidden_features, init_he
from .optimizer import AdamState, adam_step
from .oracle import ObservationSet, SolutionTable, dedup_solutions, test_split
from .problems import DEProblem, get_problem

__all__ = [
    "TrainConfig",
    "RecordRow",
    "TrainingRecord",
    "PipelineResult",
    "run_homotopy_process",
    "run_forward_mode",
    "run_inverse_pipeline",
    "reseed_dead_groups",
    "m_selection_sweep",
    "recommended_m",
    "robustness_study",
    "discover_solutions",
    "save_checkpoint",
    "load_checkpoint",
]

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    problem: str
    mlp: MLPConfig
    schedule: HomotopySchedule
    iterations_per_step: int
    lambda_init: np.ndarray
    learning_rate: float = 1e-3
    lambda_learning_rate: float | None = None
    n_collocation: int = 200          # total points in 1-D, per axis in 2-D
    n_boundary: int = 2               # endpoints in 1-D, per edge in 2-D
    test_fraction: float = 0.2
    processes: int = 1
    seed_network: int = 0
    seed_split: int = 1
    plateau_exit: bool = True
    plateau_window: int = 500
    plateau_rtol: float = 1e-9
    carry_adam_moments: bool = False
    reseed_dead_groups: bool = True
    lambda_true: np.ndarray | None = None
    record_wall_time: bool = False
    checkpoint_dir: str | None = None

    def __post_init__(self):
        self.lambda_init = np.atleast_1d(np.asarray(self.lambda_init, dtype=np.float64))
        if self.lambda_true is not None:
            self.lambda_true = np.atleast_1d(np.asarray(self.lambda_true, dtype=np.float64))
        if self.iterations_per_step < 1:
            raise ContractViolationError("iterations_per_step must be >= 1")
        if self.processes not in (1, 2):
            raise ContractViolationError("processes must be 1 or 2")
        problem = get_problem(self.problem)
        if self.lambda_init.size != problem.lambda_dim:
            raise ContractViolationError(
                f"{self.problem} needs {problem.lambda_dim} DE parameters")


@dataclass
class RecordRow:
    process: int
    k: int
    alpha: float
    lam: np.ndarray
    err: np.ndarray | None
    train_loss: float
    test_loss: float
    wall_time_s: float


@dataclass
class TrainingRecord:
    rows: list[RecordRow] = field(default_factory=list)
    diverged: bool = False
    divergence_report: str = ""

    def extend(self, other: "TrainingRecord"):
        self.rows.extend(other.rows)
        if other.diverged:
            self.diverged = True
            self.divergence_report = other.divergence_report

    def to_csv(self, path, record_wall_time: bool = False):
        """Stable column order; wall time is written as 0.0 unless enabled
        so that reruns of one config produce byte-identical files."""
        if not self.rows:
            raise ContractViolationError("cannot serialize an empty record")
        p = len(self.rows[0].lam)
        cols = (["process", "k", "alpha"]
                + [f"lambda_{i}" for i in range(p)]
                + [f"err_{i}" for i in range(p)]
                + ["train_loss", "test_loss", "wall_time_s"])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                err = row.err if row.err is not None else [float("nan")] * p
                wall = row.wall_time_s if record_wall_time else 0.0
                vals = [str(row.process), str(row.k), repr(row.alpha)]
                vals += [repr(float(v)) for v in row.lam]
                vals += [repr(float(v)) for v in err]
                vals += [repr(row.train_loss), repr(row.test_loss), repr(wall)]
                fh.write(",".join(vals) + "\n")


@dataclass
class PipelineResult:
    params: NetworkParams
    lam: np.ndarray
    record: TrainingRecord                 # inverse processes only
    forward_record: TrainingRecord | None  # lambda-frozen refinement (P=2)
    obs_train: ObservationSet
    obs_test: ObservationSet

    @property
    def diverged(self) -> bool:
        return self.record.diverged or (
            self.forward_record is not None and self.forward_record.diverged)


# ---------------------------------------------------------------------------
# point sets and the core phase loop

def collocation_points(problem: DEProblem, n_collocation: int) -> np.ndarray:
    lo, hi = problem.domain[0]
    if problem.dim == 1:
        return np.linspace(lo, hi, n_collocation).reshape(-1, 1)
    ax = np.linspace(lo, hi, n_collocation)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _make_assembler(cfg: TrainConfig, problem: DEProblem,
                    obs: ObservationSet | None) -> LossAssembler:
    col = collocation_points(problem, cfg.n_collocation)
    groups = problem.boundary_point_groups(cfg.n_boundary)
    if obs is None:
        return LossAssembler(problem, cfg.mlp, None, None, col, groups)
    return LossAssembler(problem, cfg.mlp, obs.x, obs.u, col, groups)


def _train_phase(cfg: TrainConfig, problem: DEProblem, asm: LossAssembler,
                 params: NetworkParams, lam: np.ndarray, lam_trainable: bool,
                 process_index: int, obs_test: ObservationSet | None,
                 include_data: bool = True, step_callback=None) -> tuple:
    """K homotopy steps of T Adam iterations; returns (params, lam, record)."""
    mlp = cfg.mlp
    n_theta = mlp.num_params
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64)).copy()
    flat = np.concatenate([params.flatten(), lam]) if lam_trainable else params.flatten()

    # per-layer views into the flat vector; adam updates them in place
    views, off = [], 0
    for fi, fo in mlp.layer_dims:
        views.append(flat[off:off + fi * fo].reshape(fi, fo))
        off += fi * fo
        views.append(flat[off:off + fo])
        off += fo
    lam_view = flat[n_theta:] if lam_trainable else lam

    lr = cfg.learning_rate
    if lam_trainable and cfg.lambda_learning_rate is not None:
        lr = np.full(flat.size, cfg.learning_rate)
        lr[n_theta:] = cfg.lambda_learning_rate
    lower = np.asarray(problem.lambda_lower)
    clamp = lam_trainable and np.any(np.isfinite(lower))

    record = TrainingRecord()
    last_good = flat.copy()
    adam = AdamState.init(flat.size, lr=lr)
    loss_hist = np.empty(cfg.iterations_per_step)
    n_layers = len(views) // 2

    for k in range(1, cfg.schedule.steps + 1):
        alpha = cfg.schedule.alpha_at(k)
        if not cfg.carry_adam_moments or k == 1:
            adam = AdamState.init(flat.size, lr=lr)
        t0 = time.perf_counter()
        for it in range(cfg.iterations_per_step):
            tape = Tape()
            wts = [tape.variable(views[2 * i]) for i in range(n_layers)]
            bss = [tape.variable(views[2 * i + 1]) for i in range(n_layers)]
            if lam_trainable:
                lam_t = [tape.variable(v) for v in lam_view]
            else:
                lam_t = [float(v) for v in lam_view]
            _, _, _, total, _ = asm.build(tape, wts, bss, lam_t, alpha,
                                          include_data=include_data)
            loss_val = float(total.value)
            if not np.isfinite(loss_val):
                flat[:] = last_good
                record.diverged = True
                record.divergence_report = (
                    f"process {process_index} step {k} iteration {it}: "
                    f"non-finite loss; restored last finite checkpoint")
                logger.warning(record.divergence_report)
                return (NetworkParams.from_flat(mlp, flat[:n_theta]),
                        (flat[n_theta:] if lam_trainable else lam).copy(), record)
            adj = tape_backward(total)
            grad = np.empty(flat.size)
            pos = 0
            for i in range(n_layers):
                for t in (wts[i], bss[i]):
                    g = adj[t.node_id]
                    grad[pos:pos + g.size] = g.ravel()
                    pos += g.size
            if lam_trainable:
                for t in lam_t:
                    grad[pos] = float(adj[t.node_id])
                    pos += 1
            try:
                adam_step(adam, grad, flat)
            except DivergenceError as exc:
                flat[:] = last_good
                record.diverged = True
                record.divergence_report = (
                    f"process {process_index} step {k} iteration {it}: {exc}; "
                    f"restored last finite checkpoint")
                logger.warning(record.divergence_report)
                return (NetworkParams.from_flat(mlp, flat[:n_theta]),
                        (flat[n_theta:] if lam_trainable else lam).copy(), record)
            if clamp:
                np.maximum(lam_view, lower, out=lam_view)
            loss_hist[it] = loss_val
            if (cfg.plateau_exit and it >= cfg.plateau_window):
                prev = loss_hist[it - cfg.plateau_window]
                if abs(loss_val - prev) <= cfg.plateau_rtol * max(abs(prev), 1e-300):
                    break
        wall = time.perf_counter() - t0
        last_good = flat.copy()

        params_now = NetworkParams.from_flat(mlp, flat[:n_theta])
        lam_now = (flat[n_theta:] if lam_trainable else lam).copy()
        tape = Tape()
        wts = [tape.variable(views[2 * i]) for i in range(n_layers)]
        bss = [tape.variable(views[2 * i + 1]) for i in range(n_layers)]
        _, _, _, total, _ = asm.build(tape, wts, bss, [float(v) for v in lam_now],
                                      alpha, include_data=include_data)
        train_loss = float(total.value)
        if obs_test is not None and len(obs_test):
            test_loss, _ = data_loss(params_now, obs_test.x, obs_test.u)
        else:
            test_loss = float("nan")
        err = (np.abs(lam_now - cfg.lambda_true)
               if cfg.lambda_true is not None else None)
        record.rows.append(RecordRow(process_index, k, alpha, lam_now, err,
                                     train_loss, test_loss, wall))
        if cfg.checkpoint_dir is not None:
            path = f"{cfg.checkpoint_dir}/p{process_index}_k{k:02d}.ckpt"
            save_checkpoint(path, params_now, lam_now, adam)
        if step_callback is not None:
            step_callback(k, params_now, lam_now)

    losses = [r.train_loss for r in record.rows]
    if any(b > a for a, b in zip(losses, losses[1:])):
        logger.warning(
            "process %d: train loss increased between homotopy steps "
            "(can happen on hard instances; treat as a soft warning)",
            process_index)
    return (NetworkParams.from_flat(mlp, flat[:n_theta]),
            (flat[n_theta:] if lam_trainable else lam).copy(), record)


def run_homotopy_process(cfg: TrainConfig, init_params: NetworkParams,
                         init_lam, obs: ObservationSet,
                         obs_test: ObservationSet | None = None,
                         process_index: int = 1,
                         step_callback=None):
    """One full inverse homotopy process; returns (params, lam, record)."""
    problem = get_problem(cfg.problem)
    asm = _make_assembler(cfg, problem, obs)
    return _train_phase(cfg, problem, asm, init_params, init_lam,
                        lam_trainable=True, process_index=process_index,
                        obs_test=obs_test, step_callback=step_callback)


def run_forward_mode(cfg: TrainConfig, init_params: NetworkParams,
                     lam_fixed, obs: ObservationSet,
                     obs_test: ObservationSet | None = None):
    """Identical loop with the DE parameters frozen; returns (params, record)."""
    lam_fixed = np.atleast_1d(np.asarray(lam_fixed, dtype=np.float64))
    if not np.all(np.isfinite(lam_fixed)):
        raise ContractViolationError("frozen DE parameters must be finite")
    problem = get_problem(cfg.problem)
    asm = _make_assembler(cfg, problem, obs)
    params, _, record = _train_phase(cfg, problem, asm, init_params, lam_fixed,
                                     lam_trainable=False, process_index=0,
                                     obs_test=obs_test)
    return params, record


def reseed_dead_groups(params: NetworkParams, obs_x, obs_u,
                       min_orphans: int = 3) -> tuple[NetworkParams, int]:
    """Rescue output groups the assignment gradient can never reach.

    Hard-argmin routing starves a group once no observation selects it: a
    duplicated group parked on an already-covered solution receives no data
    gradient from the observations it should explain.  In the style of
    k-means++ re-seeding, each round takes the most redundant group (the
    one whose removal costs the least) and re-fits its output-layer column
    by trimmed least squares on the shared trunk features to the
    observations no group currently explains.  Returns the adjusted
    parameters and the number of re-seeded groups.
    """
    params = params.copy()
    cfg = params.config
    m, c = cfg.output_groups, cfg.components_per_group
    if m < 2:
        return params, 0
    obs_x = np.asarray(obs_x, dtype=np.float64)
    obs_u = np.asarray(obs_u, dtype=np.float64)
    n = len(obs_x)
    feats = np.column_stack([hidden_features(params, obs_x), np.ones(n)])
    reseeded = 0
    for _ in range(m):
        vals = forward(params, obs_x).reshape(n, m, c)
        dists = ((vals - obs_u[:, None, :]) ** 2).sum(axis=2)
        order = np.argsort(dists, axis=1)
        best = dists[np.arange(n), order[:, 0]]
        runner_up = dists[np.arange(n), order[:, 1]]
        orphan = best > max(100.0 * float(np.median(best)), 1e-4)
        if orphan.sum() < min_orphans:
            break
        # redundancy: how much the data loss would grow without the group
        score = np.zeros(m)
        np.add.at(score, order[:, 0], runner_up - best)
        candidate = int(np.argmin(score))
        if score[candidate] > 0.1 * float(best[orphan].sum()):
            break  # every group is load-bearing; do not thrash
        # trimmed least squares: fit, drop the worse half, re-fit
        sel = np.flatnonzero(orphan)
        for _ in range(2):
            coef, *_ = np.linalg.lstsq(feats[sel], obs_u[sel], rcond=None)
            err = ((feats[sel] @ coef - obs_u[sel]) ** 2).sum(axis=1)
            keep = err <= np.median(err)
            if keep.sum() < min_orphans or keep.all():
                break
            sel = sel[keep]
        cols = slice(candidate * c, (candidate + 1) * c)
        params.weights[-1][:, cols] = coef[:-1]
        params.biases[-1][cols] = coef[-1]
        reseeded += 1
    if reseeded:
        logger.info("re-seeded %d redundant output group(s)", reseeded)
    return params, reseeded


def run_inverse_pipeline(cfg: TrainConfig, obs: ObservationSet) -> PipelineResult:
    """P=1: one inverse process.  P=2: inverse, then a lambda-frozen
    refinement of the network at the identified parameters, then a second
    inverse process warm-started from the refined state.  Before the
    refinement, redundant output groups are re-seeded onto unexplained
    observations (see ``reseed_dead_groups``)."""
    obs_train, obs_test = test_split(obs, cfg.test_fraction, cfg.seed_split)
    params = init_he(cfg.mlp, cfg.seed_network)
    lam = cfg.lambda_init.copy()

    record = TrainingRecord()
    params, lam, rec1 = run_homotopy_process(cfg, params, lam, obs_train,
                                             obs_test, process_index=1)
    record.extend(rec1)
    forward_record = None
    if cfg.processes == 2 and not record.diverged:
        if cfg.reseed_dead_groups:
            params, _ = reseed_dead_groups(params, obs_train.x, obs_train.u)
        params, forward_record = run_forward_mode(cfg, params, lam,
                                                  obs_train, obs_test)
        if not forward_record.diverged:
            params, lam, rec2 = run_homotopy_process(cfg, params, lam, obs_train,
                                                     obs_test, process_index=2)
            record.extend(rec2)
    return PipelineResult(params, lam, record, forward_record,
                          obs_train, obs_test)


# ---------------------------------------------------------------------------
# studies

@dataclass
class SweepRow:
    m: int
    lam: np.ndarray | None
    err: np.ndarray | None
    train_loss: float
    test_loss: float
    failed: bool = False


@dataclass
class SweepResult:
    rows: list[SweepRow]
    recommended_m: int


def recommended_m(ms, train_losses) -> int:
    """Stabilization rule: the smallest candidate M such that no later
    increment of M improves the train loss by a factor of 10 or more."""
    if len(ms) != len(train_losses) or not ms:
        raise ContractViolationError("need matching, non-empty sweep results")
    for i, m in enumerate(ms):
        stable = all(train_losses[j + 1] >= train_losses[j] / 10.0
                     for j in range(i, len(ms) - 1))
        if stable:
            return m
    return ms[-1]


def m_selection_sweep(cfg: TrainConfig, obs: ObservationSet, m_range) -> SweepResult:
    """Run the pipeline for each candidate M and pick the smallest M after
    which adding output groups stops buying factor-10 train-loss drops."""
    m_range = list(m_range)
    if not m_range or any(b <= a for a, b in zip(m_range, m_range[1:])):
        raise ContractViolationError("m_range must be non-empty and ascending")
    rows = []
    for m in m_range:
        mlp = replace(cfg.mlp, output_groups=m)
        sub = replace(cfg, mlp=mlp)
        try:
            result = run_inverse_pipeline(sub, obs)
            if result.diverged:
                raise DivergenceError(result.record.divergence_report, index=-1)
            last = result.record.rows[-1]
            rows.append(SweepRow(m, result.lam, last.err,
                                 last.train_loss, last.test_loss))
        except Exception as exc:  # keep sweeping, flag the row
            logger.warning("M-sweep: M=%d failed: %s", m, exc)
            rows.append(SweepRow(m, None, None, float("nan"), float("nan"),
                                 failed=True))
    ok = [(r.m, r.train_loss) for r in rows if not r.failed]
    if not ok:
        raise ContractViolationError("every M in the sweep failed")
    rec = recommended_m([m for m, _ in ok], [l for _, l in ok])
    return SweepResult(rows, rec)


@dataclass
class RobustnessResult:
    lam_initials: np.ndarray        # (trials, p)
    trajectories: np.ndarray        # (trials, K, p); NaN rows after divergence
    converged: np.ndarray           # (trials,) bool
    fraction: float


def _robustness_trial(args):
    cfg, trial, mean, std, seed_base, tolerance = args
    rng = np.random.default_rng(seed_base + trial)
    lam0 = rng.normal(mean, std, size=cfg.lambda_init.size)
    sub = replace(cfg, lambda_init=lam0, seed_network=cfg.seed_network + trial)
    params = init_he(sub.mlp, sub.seed_network)
    k_steps = sub.schedule.steps
    traj = np.full((k_steps, lam0.size), np.nan)
    try:
        _, lam, record = run_homotopy_process(sub, params, lam0,
                                              _ROBUSTNESS_OBS[0], None)
        for row in record.rows:
            traj[row.k - 1] = row.lam
        converged = (not record.diverged
                     and bool(np.all(np.abs(lam - sub.lambda_true) <= tolerance)))
    except Exception as exc:
        logger.warning("robustness trial %d failed: %s", trial, exc)
        converged = False
    return lam0, traj, converged


_ROBUSTNESS_OBS: list = [None]


def robustness_study(cfg: TrainConfig, obs: ObservationSet, trials: int,
                     lambda_mean: float = 0.0, lambda_std: float = 10.0,
                     tolerance: float = 0.01, seed_base: int = 10_000,
                     workers: int = 1) -> RobustnessResult:
    """Repeat the single-process recovery from random DE-parameter starts.

    Each trial samples lambda_0 ~ N(mean, std^2) and a fresh network seed;
    the study reports the fraction landing within ``tolerance`` of the
    configured ground truth.  Diverged trials count as non-converged.
    """
    if trials < 1:
        raise ContractViolationError("trials must be >= 1")
    if cfg.lambda_true is None:
        raise ContractViolationError("robustness study needs lambda_true")
    obs_train, _ = test_split(obs, cfg.test_fraction, cfg.seed_split)
    _ROBUSTNESS_OBS[0] = obs_train
    jobs = [(cfg, t, lambda_mean, lambda_std, seed_base, tolerance)
            for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_robustness_init,
                                 initargs=(obs_train,)) as pool:
            results = list(pool.map(_robustness_trial, jobs))
    else:
        results = [_robustness_trial(job) for job in jobs]
    lam0s = np.stack([r[0] for r in results])
    trajs = np.stack([r[1] for r in results])
    conv = np.array([r[2] for r in results])
    return RobustnessResult(lam0s, trajs, conv, float(conv.mean()))


def _robustness_init(obs):
    _ROBUSTNESS_OBS[0] = obs


def discover_solutions(cfg: TrainConfig, lam_fixed, m_large: int,
                       restarts: int, iterations: int | None = None,
                       residual_tol: float = 1e-4,
                       dedup_threshold: float = 1e-2,
                       grid_n: int = 501, seed_base: int = 50_000) -> SolutionTable:
    """Residual-only search for solutions at fixed DE parameters.

    Trains ``restarts`` networks with the data term dropped (physics and
    boundary penalties only) from random initializations whose output-layer
    scale is randomized, so different heads start at different amplitudes.
    Candidate curves are kept when their autodiff residual RMS over the
    collocation grid is below ``residual_tol``, then deduplicated on a
    reference grid.  The returned table stores that network residual RMS
    per solution (not a finite-difference one).
    """
    if restarts < 1:
        raise ContractViolationError("restarts must be >= 1")
    lam_fixed = np.atleast_1d(np.asarray(lam_fixed, dtype=np.float64))
    problem = get_problem(cfg.problem)
    mlp = replace(cfg.mlp, output_groups=m_large)
    sub = replace(cfg, mlp=mlp,
                  schedule=HomotopySchedule(1.0, 0.6, 1),
                  iterations_per_step=(iterations or cfg.iterations_per_step))
    asm = _make_assembler(sub, problem, None)
    col = collocation_points(problem, sub.n_collocation)
    lo, hi = problem.domain[0]
    if problem.dim == 1:
        ref = np.linspace(lo, hi, grid_n).reshape(-1, 1)
    else:
        ax = np.linspace(lo, hi, grid_n)
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        ref = np.column_stack([xx.ravel(), yy.ravel()])

    candidates, rms_vals = [], []
    for r in range(restarts):
        seed = seed_base + r
        params = init_he(mlp, seed)
        amp_rng = np.random.default_rng(seed + 1)
        params.weights[-1] *= amp_rng.uniform(0.5, 6.0)
        params.biases[-1] += amp_rng.normal(0.0, 0.4, size=params.biases[-1].shape)
        params, _, _ = _train_phase(sub, problem, asm, params, lam_fixed,
                                    lam_trainable=False, process_index=0,
                                    obs_test=None, include_data=False)
        head_rms = per_group_residual_rms(params, lam_fixed, problem, col)
        vals = forward(params, ref)
        c = problem.components
        for m in range(m_large):
            if head_rms[m] > residual_tol:
                continue
            cols = vals[:, m * c:(m + 1) * c].T
            if problem.dim == 2:
                cols = cols.reshape(c, grid_n, grid_n)
            candidates.append(np.ascontiguousarray(cols))
            rms_vals.append(float(head_rms[m]))
    order = np.argsort(rms_vals, kind="stable")  # best representatives first
    candidates = [candidates[i] for i in order]
    rms_vals = [rms_vals[i] for i in order]
    kept, kept_rms = dedup_solutions(candidates, dedup_threshold, extras=rms_vals)
    logger.info("discover_solutions: %d distinct solutions from %d restarts",
                len(kept), restarts)
    return SolutionTable(problem.name, lam_fixed, grid_n, kept, kept_rms)


# ---------------------------------------------------------------------------
# checkpoints: JSON header line + raw float64 blocks

_CKPT_MAGIC = "hompinn-checkpoint-v1"


def save_checkpoint(path, params: NetworkParams, lam: np.ndarray,
                    adam: AdamState | None = None):
    cfg = params.config
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    lr_vec = None
    if adam is not None:
        lr_vec = np.broadcast_to(np.asarray(adam.lr, dtype=np.float64),
                                 adam.m.shape).copy()
    header = {
        "format": _CKPT_MAGIC,
        "mlp": {
            "input_dim": cfg.input_dim,
            "hidden_widths": list(cfg.hidden_widths),
            "output_groups": cfg.output_groups,
            "components_per_group": cfg.components_per_group,
        },
        "lambda_dim": int(lam.size),
        "adam": None if adam is None else {
            "t": adam.t, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "size": int(adam.m.size),
        },
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(params.flatten().astype("<f8").tobytes())
        fh.write(lam.astype("<f8").tobytes())
        if adam is not None:
            fh.write(adam.m.astype("<f8").tobytes())
            fh.write(adam.v.astype("<f8").tobytes())
            fh.write(lr_vec.astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, lam, adam-or-None); bit-exact round trip."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("format") != _CKPT_MAGIC:
            raise ContractViolationError(f"not a checkpoint file: {path}")
        m = header["mlp"]
        mlp = MLPConfig(m["input_dim"], tuple(m["hidden_widths"]),
                        m["output_groups"], m["components_per_group"])

        def block(count):
            return np.frombuffer(fh.read(count * 8), dtype="<f8").copy()

        params = NetworkParams.from_flat(mlp, block(mlp.num_params))
        lam = block(header["lambda_dim"])
        adam = None
        if header["adam"] is not None:
            meta = header["adam"]
            mvec = block(meta["size"])
            vvec = block(meta["size"])
            lr = block(meta["size"])
            adam = AdamState(m=mvec, v=vvec, t=meta["t"], lr=lr,
                             beta1=meta["beta1"], beta2=meta["beta2"],
                             eps=meta["eps"])
    return params, lam, adam
