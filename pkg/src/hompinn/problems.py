"""Benchmark differential-equation problems: domains, residuals, boundaries.

Residual evaluators consume second-order jets and are pure functions of the
value/d1/d2 channels; they work equally on taped tensors and on plain
constants lifted onto a scratch tape.  The channels may carry any batch
shape (points, or points x groups), so one call evaluates every candidate
solution group at once.

The DE parameter vector (lambda) is an ordered float64 array; per-problem
labels and positivity clamps live on the problem definition.  Boundary
conditions are enforced by penalty downstream, not hard-wired into the
network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Jet2, pow_int, square
from .exceptions import ContractViolationError

__all__ = [
    "DEProblem",
    "BoundaryCondition",
    "residual_ex1",
    "residual_ex2",
    "residual_gs",
    "boundary_residual",
    "get_problem",
    "PROBLEM_NAMES",
]

# DEParams is a plain float64 vector ordered as documented per problem:
# ex1/ex2: [lambda]; gray-scott-steady: [D_A, D_S, rho, mu].


@dataclass(frozen=True)
class BoundaryCondition:
    """One zero condition on one field component at one domain face.

    ``axis``/``side`` locate the face (e.g. axis=0, side=1.0 is x=1).
    ``kind`` is "dirichlet-zero" (value vanishes) or "neumann-zero" (the
    d1 channel along ``axis`` — the outward normal direction — vanishes).
    """

    axis: int
    side: float
    kind: str
    component: int


@dataclass(frozen=True)
class DEProblem:
    name: str
    dim: int
    components: int
    lambda_dim: int
    lambda_labels: tuple[str, ...]
    domain: tuple[tuple[float, float], ...]
    residual: Callable  # (jets per component, x, lambda entries) -> list of residual tensors
    boundary_conditions: tuple[BoundaryCondition, ...]
    lambda_lower: tuple[float, ...]  # post-step clamp, -inf = unclamped

    def boundary_point_groups(self, n_boundary: int):
        """Boundary sample points grouped by face.

        Returns a list of (points (K, dim), conditions-on-that-face).  For
        1-D problems ``n_boundary`` must be 2 (the endpoints); in 2-D it is
        the per-edge count and points are placed strictly inside each edge
        so corners carry no doubled conditions.
        """
        if self.dim == 1:
            if n_boundary != 2:
                raise ContractViolationError("1-D problems have exactly 2 boundary points")
            groups = []
            for axis, side in ((0, self.domain[0][0]), (0, self.domain[0][1])):
                conds = [bc for bc in self.boundary_conditions
                         if bc.axis == axis and bc.side == side]
                groups.append((np.array([[side]]), conds))
            return groups
        groups = []
        faces = {(bc.axis, bc.side) for bc in self.boundary_conditions}
        for axis, side in sorted(faces):
            (lo0, hi0), (lo1, hi1) = self.domain
            t = np.linspace(0.0, 1.0, n_boundary + 2)[1:-1]
            pts = np.empty((n_boundary, 2))
            if axis == 0:
                pts[:, 0] = side
                pts[:, 1] = lo1 + t * (hi1 - lo1)
            else:
                pts[:, 0] = lo0 + t * (hi0 - lo0)
                pts[:, 1] = side
            conds = [bc for bc in self.boundary_conditions
                     if bc.axis == axis and bc.side == side]
            groups.append((pts, conds))
        return groups


# ---------------------------------------------------------------------------
# residual evaluators

def residual_ex1(u: Jet2, x, lam: Sequence):
    """u'' + lambda * (1 + u^4); zero exactly where the first 1-D DE holds."""
    if u.axes != 1:
        raise ContractViolationError("residual_ex1 expects jets with one axis")
    return u.d2[0] + lam[0] * (1.0 + pow_int(u.value, 4))


def residual_ex2(u: Jet2, x, lam: Sequence):
    """u'' - (u^4 - lambda * u^2); the second 1-D DE, zero at its 7 solutions."""
    if u.axes != 1:
        raise ContractViolationError("residual_ex2 expects jets with one axis")
    u2 = square(u.value)
    return u.d2[0] - (square(u2) - lam[0] * u2)


def residual_gs(a: Jet2, s: Jet2, x, lam: Sequence):
    """Steady Gray-Scott pair for activator A and substrate S.

    r_A = D_A lap(A) + S A^2 - (mu + rho) A
    r_S = D_S lap(S) - S A^2 + rho (1 - S)
    """
    if a.axes != 2 or s.axes != 2:
        raise ContractViolationError("residual_gs expects jets with two axes")
    d_a, d_s, rho, mu = lam
    lap_a = a.d2[0] + a.d2[1]
    lap_s = s.d2[0] + s.d2[1]
    sa2 = s.value * square(a.value)
    r_a = d_a * lap_a + sa2 - (mu + rho) * a.value
    r_s = d_s * lap_s - sa2 + rho * (1.0 - s.value)
    return r_a, r_s


def _residual_groups_ex1(jets, x, lam):
    return [residual_ex1(jets[0], x, lam)]


def _residual_groups_ex2(jets, x, lam):
    return [residual_ex2(jets[0], x, lam)]


def _residual_groups_gs(jets, x, lam):
    return list(residual_gs(jets[0], jets[1], x, lam))


def boundary_residual(problem: DEProblem, jets: Sequence[Jet2], x_b):
    """Boundary residuals of one candidate group at one boundary point.

    ``jets`` holds one jet per field component evaluated at ``x_b``.
    Dirichlet-zero conditions return the value channel, Neumann-zero the
    d1 channel along the face's outward axis.
    """
    x_b = np.asarray(x_b, dtype=np.float64).reshape(-1)
    if x_b.size != problem.dim:
        raise ContractViolationError(f"boundary point must have {problem.dim} coordinates")
    matched = [bc for bc in problem.boundary_conditions
               if abs(x_b[bc.axis] - bc.side) <= 1e-12]
    if not matched:
        raise ContractViolationError(f"{x_b} is not on a declared boundary of {problem.name}")
    out = []
    for bc in matched:
        jet = jets[bc.component]
        out.append(jet.value if bc.kind == "dirichlet-zero" else jet.d1[bc.axis])
    return out


_EX1 = DEProblem(
    name="ex1-bratu-quartic",
    dim=1,
    components=1,
    lambda_dim=1,
    lambda_labels=("lambda",),
    domain=((0.0, 1.0),),
    residual=_residual_groups_ex1,
    boundary_conditions=(
        BoundaryCondition(axis=0, side=0.0, kind="neumann-zero", component=0),
        BoundaryCondition(axis=0, side=1.0, kind="dirichlet-zero", component=0),
    ),
    lambda_lower=(-np.inf,),
)

_EX2 = DEProblem(
    name="ex2-quartic-quadratic",
    dim=1,
    components=1,
    lambda_dim=1,
    lambda_labels=("lambda",),
    domain=((0.0, 1.0),),
    residual=_residual_groups_ex2,
    boundary_conditions=(
        BoundaryCondition(axis=0, side=0.0, kind="neumann-zero", component=0),
        BoundaryCondition(axis=0, side=1.0, kind="dirichlet-zero", component=0),
    ),
    lambda_lower=(-np.inf,),
)

# diffusion coefficients stay positive via a post-step clamp
_GS = DEProblem(
    name="gray-scott-steady",
    dim=2,
    components=2,
    lambda_dim=4,
    lambda_labels=("D_A", "D_S", "rho", "mu"),
    domain=((0.0, 1.0), (0.0, 1.0)),
    residual=_residual_groups_gs,
    boundary_conditions=tuple(
        BoundaryCondition(axis=axis, side=side, kind="neumann-zero", component=comp)
        for axis in (0, 1) for side in (0.0, 1.0) for comp in (0, 1)
    ),
    lambda_lower=(1e-12, 1e-12, -np.inf, -np.inf),
)

_REGISTRY = {p.name: p for p in (_EX1, _EX2, _GS)}
PROBLEM_NAMES = tuple(_REGISTRY)


def get_problem(name: str) -> DEProblem:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ContractViolationError(
            f"unknown problem {name!r}; available: {', '.join(PROBLEM_NAMES)}"
        ) from None
