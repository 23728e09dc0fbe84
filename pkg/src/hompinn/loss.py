"""Training objective: min-assignment data term, residual and boundary
penalties, and the homotopy weighting that ties them together.

total = data + alpha_k * (residual + boundary)

* data: (1/N_o) sum_i min_m ||u_hat_m(x_i) - u_i||^2 over the C components;
  the argmin is taken on primal values and routed through a select node, so
  gradient flows only through the chosen group (ties break toward the
  lowest group index).
* residual: (1/(M N_c)) sum_{j,m} of the squared DE residuals of group m at
  collocation point j (the C equations of a system are summed per (j, m)).
* boundary: same normalization over boundary points, (1/(M N_b)).

Point batches are evaluated on a single vectorized tape; the reduction
order over points is fixed, so repeated evaluations are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import network as net
from .autodiff import Jet2, Tape, reduce_sum, reshape, select, square
from .exceptions import ContractViolationError
from .problems import DEProblem

__all__ = [
    "HomotopySchedule",
    "LossBreakdown",
    "alpha_at",
    "data_loss",
    "residual_loss",
    "boundary_loss",
    "total_loss",
    "LossAssembler",
]


@dataclass(frozen=True)
class HomotopySchedule:
    """Exponentially decaying residual weight alpha_k = alpha0 * r^(k-1)."""

    alpha0: float = 1.0
    decay: float = 0.6
    steps: int = 11

    def __post_init__(self):
        if self.alpha0 <= 0:
            raise ContractViolationError("alpha0 must be positive")
        if not 0.0 < self.decay < 1.0:
            raise ContractViolationError("decay rate must lie in (0, 1)")
        if self.steps < 1:
            raise ContractViolationError("step count must be positive")

    def alpha_at(self, k: int) -> float:
        if not 1 <= k <= self.steps:
            raise ContractViolationError(f"step {k} outside 1..{self.steps}")
        return self.alpha0 * self.decay ** (k - 1)


def alpha_at(schedule: HomotopySchedule, k: int) -> float:
    return schedule.alpha_at(k)


@dataclass
class LossBreakdown:
    data_term: float
    residual_term: float
    boundary_term: float
    alpha: float
    total: float
    assignment: np.ndarray  # 1-based group index per observation


class LossAssembler:
    """Builds the taped objective for fixed point sets.

    Collocation and boundary points share one jet forward pass (stacked
    rows); observations get a value-only pass.  ``build`` records the whole
    objective on the caller's tape so a single reverse sweep yields
    gradients with respect to the network parameters and the DE parameters.
    """

    def __init__(self, problem: DEProblem, config: net.MLPConfig,
                 obs_x: np.ndarray | None, obs_u: np.ndarray | None,
                 collocation: np.ndarray, boundary_groups):
        if config.components_per_group != problem.components:
            raise ContractViolationError(
                "network components per group must match the problem")
        self.problem = problem
        self.config = config
        self.obs_x = None if obs_x is None else np.asarray(obs_x, dtype=np.float64)
        self.obs_u = None if obs_u is None else np.asarray(obs_u, dtype=np.float64)
        if self.obs_x is not None and len(self.obs_x) == 0:
            raise ContractViolationError("observation set must not be empty")
        self.collocation = np.asarray(collocation, dtype=np.float64)
        if len(self.collocation) == 0:
            raise ContractViolationError("need at least one collocation point")
        self.boundary_groups = [
            (np.asarray(pts, dtype=np.float64), list(conds))
            for pts, conds in boundary_groups
        ]
        self.n_boundary = sum(len(p) for p, _ in self.boundary_groups)
        rows = [self.collocation] + [p for p, _ in self.boundary_groups]
        self.jet_points = np.concatenate(rows, axis=0)

    # -- helpers ----------------------------------------------------------

    def _group_channels(self, tensor):
        """(N, M*C) channel -> per-component (N, M) views."""
        m, c = self.config.output_groups, self.config.components_per_group
        if c == 1:
            return [tensor]
        cube = reshape(tensor, (tensor.value.shape[0], m, c))
        return [ad.index(cube, (slice(None), slice(None), comp)) for comp in range(c)]

    def _component_jets(self, jet: Jet2, rows: slice) -> list[Jet2]:
        def cut(ch):
            return ad.index(ch, rows) if ch.value.ndim else ch
        vals = self._group_channels(cut(jet.value))
        d1s = [self._group_channels(cut(ch)) for ch in jet.d1]
        d2s = [self._group_channels(cut(ch)) for ch in jet.d2]
        return [
            Jet2(vals[c],
                 tuple(d1s[a][c] for a in range(len(jet.d1))),
                 tuple(d2s[a][c] for a in range(len(jet.d2))))
            for c in range(len(vals))
        ]

    # -- the objective ----------------------------------------------------

    def build(self, tape: Tape, weights, biases, lam, alpha: float,
              include_data: bool = True):
        """Returns (data, residual, boundary, total) tensors + assignment."""
        m = self.config.output_groups
        zero = tape.constant(0.0)

        # data term
        assignment = np.zeros(0, dtype=np.int64)
        data = zero
        if include_data and self.obs_x is not None:
            vals = net.taped_values(tape, weights, biases, self.obs_x)
            n_o, c = len(self.obs_x), self.config.components_per_group
            cube = reshape(vals, (n_o, m, c))
            diff = cube - tape.constant(self.obs_u.reshape(n_o, 1, c))
            dists = reduce_sum(square(diff), axis=2)
            idx = np.argmin(dists.value, axis=1)
            data = reduce_sum(select(dists, idx)) * (1.0 / n_o)
            assignment = idx + 1

        # one jet pass over collocation + boundary rows
        jet = net.taped_jets(tape, weights, biases, self.jet_points,
                             axes=self.problem.dim)
        n_c = len(self.collocation)
        col_jets = self._component_jets(jet, slice(0, n_c))
        res_parts = self.problem.residual(col_jets, self.collocation, lam)
        res_sum = zero
        for r in res_parts:
            res_sum = res_sum + reduce_sum(square(r))
        residual = res_sum * (1.0 / (m * n_c))

        boundary = zero
        if self.n_boundary:
            bnd_sum = zero
            offset = n_c
            for pts, conds in self.boundary_groups:
                rows = slice(offset, offset + len(pts))
                jets_here = self._component_jets(jet, rows)
                for bc in conds:
                    j = jets_here[bc.component]
                    ch = j.value if bc.kind == "dirichlet-zero" else j.d1[bc.axis]
                    bnd_sum = bnd_sum + reduce_sum(square(ch))
                offset += len(pts)
            boundary = bnd_sum * (1.0 / (m * self.n_boundary))

        total = data + alpha * (residual + boundary)
        return data, residual, boundary, total, assignment


def _tape_with_params(params: net.NetworkParams, lam):
    tape = Tape()
    wts = [tape.variable(w) for w in params.weights]
    bss = [tape.variable(b) for b in params.biases]
    lam_t = None if lam is None else [tape.variable(v) for v in np.atleast_1d(lam)]
    return tape, wts, bss, lam_t


def data_loss(params: net.NetworkParams, obs_x, obs_u):
    """Mean over observations of the squared distance to the closest group.

    Returns (loss, assignment) with 1-based argmin indices.  With a single
    output group this reduces to the plain mean squared error.
    """
    obs_x = np.asarray(obs_x, dtype=np.float64)
    obs_u = np.asarray(obs_u, dtype=np.float64)
    if obs_x.size == 0:
        raise ContractViolationError("observation set must not be empty")
    m, c = params.config.output_groups, params.config.components_per_group
    vals = net.forward(params, obs_x)
    n_o = vals.shape[0]
    diff = vals.reshape(n_o, m, c) - obs_u.reshape(n_o, 1, c)
    dists = (diff * diff).sum(axis=2)
    idx = np.argmin(dists, axis=1)
    loss = float(dists[np.arange(n_o), idx].sum() / n_o)
    return loss, idx + 1


def _assembler_for(problem, params, collocation=None, boundary_points=True,
                   obs_x=None, obs_u=None):
    if collocation is None:
        collocation = np.array([[0.5] * problem.dim])
    collocation = np.asarray(collocation, dtype=np.float64).reshape(-1, problem.dim)
    groups = []
    if boundary_points is True:
        groups = problem.boundary_point_groups(2 if problem.dim == 1 else 4)
    elif boundary_points is not None:
        pts = np.asarray(boundary_points, dtype=np.float64).reshape(-1, problem.dim)
        for p in pts:
            matched = [bc for bc in problem.boundary_conditions
                       if abs(p[bc.axis] - bc.side) <= 1e-12]
            if not matched:
                raise ContractViolationError(f"{p} is not on the boundary of {problem.name}")
            groups.append((p.reshape(1, -1), matched))
    return LossAssembler(problem, params.config, obs_x, obs_u, collocation, groups)


def residual_loss(params: net.NetworkParams, lam, problem: DEProblem, collocation):
    """Mean squared DE residual across all groups and collocation points."""
    asm = _assembler_for(problem, params, collocation=collocation, boundary_points=None)
    tape, wts, bss, lam_t = _tape_with_params(params, lam)
    _, residual, _, _, _ = asm.build(tape, wts, bss, lam_t, alpha=1.0, include_data=False)
    return float(residual.value)


def boundary_loss(params: net.NetworkParams, problem: DEProblem, boundary_points):
    """Mean squared boundary-condition violation over points and groups."""
    asm = _assembler_for(problem, params, boundary_points=boundary_points)
    lam = np.zeros(problem.lambda_dim)
    tape, wts, bss, lam_t = _tape_with_params(params, lam)
    _, _, boundary, _, _ = asm.build(tape, wts, bss, lam_t, alpha=1.0, include_data=False)
    return float(boundary.value)


def total_loss(params: net.NetworkParams, lam, problem: DEProblem,
               obs_x, obs_u, collocation, boundary_points, alpha: float) -> LossBreakdown:
    """Full objective at one homotopy weight; see the module docstring."""
    asm = _assembler_for(problem, params, collocation=collocation,
                         boundary_points=boundary_points, obs_x=obs_x, obs_u=obs_u)
    tape, wts, bss, lam_t = _tape_with_params(params, lam)
    data, residual, boundary, total, assignment = asm.build(
        tape, wts, bss, lam_t, alpha=alpha)
    return LossBreakdown(
        data_term=float(data.value),
        residual_term=float(residual.value),
        boundary_term=float(boundary.value),
        alpha=alpha,
        total=float(total.value),
        assignment=assignment,
    )


def per_group_residual_rms(params: net.NetworkParams, lam, problem: DEProblem,
                           collocation) -> np.ndarray:
    """RMS DE residual of each output group over the collocation points."""
    asm = _assembler_for(problem, params, collocation=collocation, boundary_points=None)
    tape, wts, bss, lam_t = _tape_with_params(params, lam)
    jet = net.taped_jets(tape, wts, bss, asm.jet_points, axes=problem.dim)
    jets = asm._component_jets(jet, slice(0, len(asm.collocation)))
    parts = problem.residual(jets, asm.collocation, lam_t)
    sq = np.zeros(params.config.output_groups)
    for r in parts:
        v = r.value.reshape(len(asm.collocation), -1)
        sq += (v * v).mean(axis=0)
    return np.sqrt(sq)
