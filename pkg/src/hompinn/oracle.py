"""Classical ground truth: enumerate the distinct solutions of each problem
at a fixed DE parameter value, and sample unlabeled observation sets from
them.

1-D problems are solved by second-order finite differences (one-sided
stencil for the Neumann end, Dirichlet row at the other) with damped Newton
from a sweep of initial guesses; an optional deflation mode suppresses
already-found roots.  The steady Gray-Scott states come from semi-implicit
time marching of the time-dependent system from a library of seeded spot
patterns, followed by a Newton polish of the steady equations.

Newton targets a discrete residual RMS of 1e-10 and stops at float64
stagnation (differencing noise scales like eps/h^2, so the target is not
always reachable in natural units); solutions are admitted to a table only
below the documented residual bounds (1e-8 in 1-D, 1e-6 in 2-D).
Distinctness uses a guarded relative L2 distance
``|a - b| / (1 + max(|a|, |b|))`` so the zero solution compares sanely.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from .exceptions import ContractViolationError
from .problems import DEProblem, get_problem

__all__ = [
    "SolutionTable",
    "ObservationSet",
    "solve_multisolution_1d",
    "solve_gray_scott_steady",
    "sample_observations",
    "test_split",
    "default_guesses",
    "default_gs_seeds",
    "dedup_solutions",
    "relative_l2",
]

logger = logging.getLogger(__name__)

NEWTON_TARGET_RMS = 1e-10
ADMIT_RMS_1D = 1e-8
ADMIT_RMS_2D = 1e-6
DEDUP_THRESHOLD = 1e-3


# ---------------------------------------------------------------------------
# tables and observations

@dataclass
class SolutionTable:
    """Grid values of every distinct solution found at one parameter value.

    ``solutions[i]`` has shape (C, n) in 1-D or (C, n, n) in 2-D, with the
    grid uniform over the problem domain.  ``residual_rms[i]`` is the
    discrete interior residual RMS of the stored values.
    """

    problem: str
    lam: np.ndarray
    grid_n: int
    solutions: list[np.ndarray] = field(repr=False)
    residual_rms: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return get_problem(self.problem).dim

    @property
    def num_solutions(self) -> int:
        return len(self.solutions)

    def grid_axis(self) -> np.ndarray:
        lo, hi = get_problem(self.problem).domain[0]
        return np.linspace(lo, hi, self.grid_n)

    def interpolate(self, index: int, points: np.ndarray) -> np.ndarray:
        """Values of one stored solution at arbitrary points, (N, C).

        Cubic interpolation in 1-D, bilinear in 2-D; both keep the
        interpolation error far below the training tolerances at the
        default grids.
        """
        sol = self.solutions[index]
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        ax = self.grid_axis()
        if self.dim == 1:
            cols = [CubicSpline(ax, comp)(pts[:, 0]) for comp in sol]
        else:
            cols = [
                RegularGridInterpolator((ax, ax), comp, method="linear")(pts)
                for comp in sol
            ]
        return np.stack(cols, axis=1)

    def save(self, path):
        header = {
            "format": "hompinn-solution-table-v1",
            "problem": self.problem,
            "lambda": [float(v) for v in self.lam],
            "grid_n": self.grid_n,
            "num_solutions": self.num_solutions,
            "shape": list(self.solutions[0].shape) if self.solutions else [],
            "residual_rms": [float(r) for r in self.residual_rms],
        }
        with open(path, "wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
            for sol in self.solutions:
                fh.write(sol.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SolutionTable":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("ascii"))
            if header.get("format") != "hompinn-solution-table-v1":
                raise ContractViolationError(f"not a solution table: {path}")
            shape = tuple(header["shape"])
            count = int(np.prod(shape)) if shape else 0
            sols = []
            for _ in range(header["num_solutions"]):
                data = np.frombuffer(fh.read(count * 8), dtype="<f8")
                sols.append(data.reshape(shape).copy())
        return cls(
            problem=header["problem"],
            lam=np.asarray(header["lambda"], dtype=np.float64),
            grid_n=header["grid_n"],
            solutions=sols,
            residual_rms=list(header["residual_rms"]),
        )


@dataclass
class ObservationSet:
    """Unlabeled samples (x_i, u_i) drawn across multiple solutions.

    ``meta`` records how the set was generated (seed, source subset, and
    per-observation source labels).  The labels exist for verification
    only; training code never reads them.
    """

    x: np.ndarray
    u: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.x)

    def to_csv(self, path):
        dim, comps = self.x.shape[1], self.u.shape[1]
        cols = ["x", "y"][:dim] + (["u"] if comps == 1 else ["A", "S"])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for xi, ui in zip(self.x, self.u):
                fh.write(",".join(repr(float(v)) for v in (*xi, *ui)) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ObservationSet":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = np.array([[float(v) for v in line.split(",")]
                             for line in fh if line.strip()])
        dim = 2 if header[:2] == ["x", "y"] else 1
        return cls(x=rows[:, :dim], u=rows[:, dim:], meta={"source": str(path)})


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    """Guarded relative L2 distance used for solution dedup."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    return float(np.linalg.norm(a - b)
                 / (1.0 + max(np.linalg.norm(a), np.linalg.norm(b))))


def dedup_solutions(solutions, threshold=DEDUP_THRESHOLD, extras=None):
    """Keep the first representative of each distinct solution.

    ``extras`` (e.g. per-solution residuals) is filtered in lockstep;
    returns (kept_solutions, kept_extras).
    """
    kept, kept_extras = [], []
    for i, sol in enumerate(solutions):
        if any(relative_l2(sol, other) < threshold for other in kept):
            continue
        kept.append(sol)
        if extras is not None:
            kept_extras.append(extras[i])
    return kept, kept_extras if extras is not None else None


# ---------------------------------------------------------------------------
# 1-D finite-difference Newton

def _rhs_1d(name: str):
    # u'' = f(u, x; lambda), written independently of the jet evaluators so
    # the oracle stays a second route for cross-checks.
    if name == "ex1-bratu-quartic":
        return (lambda u, x, lam: -lam[0] * (1.0 + u ** 4),
                lambda u, x, lam: -4.0 * lam[0] * u ** 3)
    if name == "ex2-quartic-quadratic":
        return (lambda u, x, lam: u ** 4 - lam[0] * u ** 2,
                lambda u, x, lam: 4.0 * u ** 3 - 2.0 * lam[0] * u)
    raise ContractViolationError(f"no 1-D oracle for problem {name!r}")


def _residual_1d(u, x, h, f, lam):
    r = np.empty_like(u)
    r[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    r[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / (h * h) - f(u[1:-1], x[1:-1], lam)
    r[-1] = u[-1]
    return r


def _jacobian_banded_1d(u, x, h, f_du, lam):
    n = len(u)
    ab = np.zeros((4, n))  # solve_banded layout for (l, u) = (1, 2)
    inv_h2 = 1.0 / (h * h)
    ab[2, 1:-1] = -2.0 * inv_h2 - f_du(u[1:-1], x[1:-1], lam)  # diagonal
    ab[1, 2:] = inv_h2       # A[i, i+1]
    ab[3, :-2] = inv_h2      # A[i, i-1]
    ab[3, -2] = 0.0          # Dirichlet row has no subdiagonal entry
    # Neumann row at x = 0: (-3 u0 + 4 u1 - u2) / (2h)
    ab[2, 0] = -3.0 / (2.0 * h)
    ab[1, 1] = 4.0 / (2.0 * h)
    ab[0, 2] = -1.0 / (2.0 * h)
    # Dirichlet row at x = 1
    ab[2, -1] = 1.0
    return ab


def _deflation_factor(u, roots):
    """M(u) = prod_k (1/|u-u_k|^2 + 1) and its gradient."""
    m = 1.0
    dm = np.zeros_like(u)
    for root in roots:
        d = u - root
        q = float(d @ d)
        if q < 1e-24:
            return None, None
        m *= 1.0 / q + 1.0
        dm += (-2.0 / (q * q)) / (1.0 / q + 1.0) * d
    return m, m * dm


def _damped_newton_1d(u0, x, h, f, f_du, lam, deflated_roots=(), max_iter=100):
    """Backtracking Newton; returns the iterate or None on failure.

    With deflation the residual becomes G = M(u) F(u).  Its Newton system
    (M J + F grad(M)^T) s = -M F collapses via Sherman-Morrison to the
    plain step scaled by M / (M + grad(M) . J^{-1} F), so one banded solve
    still suffices.
    """
    u = np.array(u0, dtype=np.float64)

    def merit(v):
        r = _residual_1d(v, x, h, f, lam)
        if deflated_roots:
            m, _ = _deflation_factor(v, deflated_roots)
            if m is None:
                return None, np.inf
            r = r * m
        return r, float(np.sqrt(np.mean(r * r)))

    _, rms = merit(u)
    for _ in range(max_iter):
        if rms <= NEWTON_TARGET_RMS:
            break
        r = _residual_1d(u, x, h, f, lam)
        ab = _jacobian_banded_1d(u, x, h, f_du, lam)
        try:
            w = solve_banded((1, 2), ab, r)  # J^{-1} F
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(w)):
            return None
        step = -w
        if deflated_roots:
            m, dm = _deflation_factor(u, deflated_roots)
            if m is None:
                return None
            beta = float(dm @ w)
            if abs(m + beta) < 1e-300:
                return None
            step = -w * (m / (m + beta))
        alpha, improved = 1.0, False
        for _ in range(40):
            _, rms_t = merit(u + alpha * step)
            if rms_t < rms:
                u = u + alpha * step
                rms = rms_t
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break  # float64 stagnation
    r = _residual_1d(u, x, h, f, lam)
    final = float(np.sqrt(np.mean(r * r)))
    return u if final <= ADMIT_RMS_1D else None


def default_guesses(problem_name: str, x: np.ndarray) -> list[np.ndarray]:
    """Initial-guess library for the 1-D sweeps.

    Constants plus scaled (multi-lobe) cosine modes a*cos((2j-1) pi x / 2),
    all of which satisfy u'(0) = u(1) = 0.
    """
    guesses = []
    if problem_name == "ex1-bratu-quartic":
        for c in (-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0):
            guesses.append(np.full_like(x, c))
        for a in (0.5, 1.0, 2.0, 4.0):
            guesses.append(a * np.cos(0.5 * np.pi * x))
    elif problem_name == "ex2-quartic-quadratic":
        guesses.append(np.zeros_like(x))
        for j in (1, 2, 3):
            mode = np.cos((2 * j - 1) * 0.5 * np.pi * x)
            for a in (-5.0, -4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0):
                guesses.append(a * mode)
        # mixed two-lobe mode reaching the plateau-then-dip branch
        guesses.append(2.0 * np.cos(0.5 * np.pi * x) + 4.0 * np.cos(1.5 * np.pi * x))
        for c in (-4.0, -1.0, 1.0, 4.0):
            guesses.append(np.full_like(x, c))
    else:
        raise ContractViolationError(f"no guess library for {problem_name!r}")
    return guesses


def solve_multisolution_1d(problem: DEProblem | str, lam, grid_n: int = 2001,
                           initial_guesses=None, deflate: bool = False) -> SolutionTable:
    """All distinct solutions of a 1-D problem at fixed lambda.

    Sweeps ``initial_guesses`` (default library) with damped Newton; with
    ``deflate=True`` each converged root is deflated and the sweep retried
    from the same guess, which can rescue sparse guess sets.  Guesses that
    fail to converge (or hit a singular Jacobian) are skipped and logged.
    """
    if isinstance(problem, str):
        problem = get_problem(problem)
    if problem.dim != 1:
        raise ContractViolationError("solve_multisolution_1d needs a 1-D problem")
    if grid_n < 101:
        raise ContractViolationError("grid_n must be at least 101")
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    lo, hi = problem.domain[0]
    x = np.linspace(lo, hi, grid_n)
    h = x[1] - x[0]
    f, f_du = _rhs_1d(problem.name)
    guesses = (initial_guesses if initial_guesses is not None
               else default_guesses(problem.name, x))
    if not len(guesses):
        raise ContractViolationError("need at least one initial guess")

    found: list[np.ndarray] = []
    for gi, guess in enumerate(guesses):
        guess = np.asarray(guess, dtype=np.float64)
        u = _damped_newton_1d(guess, x, h, f, f_du, lam)
        if u is None:
            logger.info("1-D oracle: guess %d did not converge; skipped", gi)
            continue
        found.append(u)
        while deflate:
            u2 = _damped_newton_1d(guess, x, h, f, f_du, lam, deflated_roots=found)
            if u2 is None:
                break
            found.append(u2)

    rms_all = []
    for u in found:
        r = _residual_1d(u, x, h, f, lam)
        rms_all.append(float(np.sqrt(np.mean(r[1:-1] ** 2))))
    kept, kept_rms = dedup_solutions(found, DEDUP_THRESHOLD, extras=rms_all)
    order = np.argsort([float(np.linalg.norm(s)) for s in kept], kind="stable")
    solutions = [kept[i].reshape(1, -1) for i in order]
    rms_list = [kept_rms[i] for i in order]
    return SolutionTable(problem.name, lam, grid_n, solutions, rms_list)


# ---------------------------------------------------------------------------
# steady Gray-Scott in 2-D

def _gs_reaction(a, s, lam):
    d_a, d_s, rho, mu = lam
    sa2 = s * a * a
    return sa2 - (mu + rho) * a, -sa2 + rho * (1.0 - s)


def _mirror_lap(u, h):
    p = np.pad(u, 1, mode="reflect")
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * u) / (h * h)


def _gs_march_residual_rms(a, s, lam, h):
    ra, rs = _gs_reaction(a, s, lam)
    ra = ra + lam[0] * _mirror_lap(a, h)
    rs = rs + lam[1] * _mirror_lap(s, h)
    return float(np.sqrt(np.mean(ra * ra) + np.mean(rs * rs)))


def _laplacian_1d(n: int, h: float, mirror: bool) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    t = sp.diags([off, main, off], (-1, 0, 1), format="lil")
    if mirror:
        t[0, 1] += 1.0
        t[-1, -2] += 1.0
    return (t.tocsr() / (h * h))


def _laplacian_2d(n: int, h: float, mirror: bool) -> sp.csr_matrix:
    t = _laplacian_1d(n, h, mirror)
    eye = sp.identity(n, format="csr")
    return (sp.kron(t, eye) + sp.kron(eye, t)).tocsr()


def default_gs_seeds(grid_n: int, rng_seed: int = 0):
    """Ten seeded (name, A, S) starting patterns: spots, stripes, blobs."""
    ax = np.linspace(0.0, 1.0, grid_n)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")

    def bump(cx, cy, width=0.06):
        return np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * width ** 2))

    def from_activator(a):
        a = np.clip(a, 0.0, 1.0)
        return a, 1.0 - 0.5 * a

    def spots(centers):
        a = np.zeros_like(xx)
        for cx, cy in centers:
            a += bump(cx, cy)
        return from_activator(a)

    seeds = [
        ("homogeneous", np.zeros_like(xx), np.ones_like(xx)),
        ("center-spot", *spots([(0.5, 0.5)])),
        ("off-center-spot", *spots([(0.3, 0.3)])),
        ("opposite-corners", *from_activator(
            bump(0.0, 0.0, 0.10) + bump(1.0, 1.0, 0.10))),
        ("four-spots", *spots([(0.25, 0.25), (0.25, 0.75),
                               (0.75, 0.25), (0.75, 0.75)])),
        ("corner-spot", *spots([(0.12, 0.12)])),
        ("edge-spot", *spots([(0.06, 0.5)])),
        ("stripe", *from_activator(np.exp(-((yy - 0.5) / 0.05) ** 2))),
        ("ring", *from_activator(
            np.exp(-((np.hypot(xx - 0.5, yy - 0.5) - 0.25) / 0.05) ** 2))),
    ]
    rng = np.random.default_rng(rng_seed)
    blob = np.zeros_like(xx)
    for _ in range(6):
        blob += bump(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                     width=rng.uniform(0.04, 0.08))
    seeds.append(("random-blobs", *from_activator(blob)))
    return seeds


def _gs_polish_newton(a, s, lam, h, max_iter=30):
    """Newton on the steady system with explicit one-sided Neumann rows.

    Interior nodes carry the centered PDE rows; edge nodes carry the
    second-order one-sided normal derivative (corners: sum of both), so
    stored fields satisfy exactly the conditions verified downstream.
    """
    n = a.shape[0]
    d_a, d_s, rho, mu = lam
    nn = n * n
    idx = np.arange(nn).reshape(n, n)
    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    imask = interior.ravel()
    bmask = ~imask

    rows, cols, vals = [], [], []
    c1, c2, c3 = -3.0 / (2 * h), 4.0 / (2 * h), -1.0 / (2 * h)

    def one_sided(r, p0, p1, p2):
        rows.extend((r, r, r))
        cols.extend((p0, p1, p2))
        vals.extend((c1, c2, c3))

    for i in range(n):
        for j in range(n):
            if interior[i, j]:
                continue
            r = idx[i, j]
            if i == 0:
                one_sided(r, idx[0, j], idx[1, j], idx[2, j])
            elif i == n - 1:
                one_sided(r, idx[-1, j], idx[-2, j], idx[-3, j])
            if j == 0:
                one_sided(r, idx[i, 0], idx[i, 1], idx[i, 2])
            elif j == n - 1:
                one_sided(r, idx[i, -1], idx[i, -2], idx[i, -3])
    bc_block = sp.coo_matrix((vals, (rows, cols)), shape=(nn, nn)).tocsr()
    lap = _laplacian_2d(n, h, mirror=False)
    int_diag = sp.diags(imask.astype(float))
    lap_int = (int_diag @ lap).tocsr()

    def residual(av, sv):
        am, sm = av.reshape(n, n), sv.reshape(n, n)
        rxa, rxs = _gs_reaction(am, sm, lam)
        ra = d_a * (lap_int @ av) + np.where(imask, rxa.ravel(), 0.0)
        rs = d_s * (lap_int @ sv) + np.where(imask, rxs.ravel(), 0.0)
        ra[bmask] = (bc_block @ av)[bmask]
        rs[bmask] = (bc_block @ sv)[bmask]
        return ra, rs

    def rms_of(av, sv):
        ra, rs = residual(av, sv)
        return float(np.sqrt(np.mean(ra * ra) + np.mean(rs * rs)))

    bc_rows = sp.diags(bmask.astype(float)) @ bc_block
    av, sv = a.ravel().copy(), s.ravel().copy()
    rms = rms_of(av, sv)
    for _ in range(max_iter):
        if rms <= NEWTON_TARGET_RMS:
            break
        ra, rs = residual(av, sv)
        daa = np.where(imask, 2.0 * sv * av - (mu + rho), 0.0)
        das = np.where(imask, av * av, 0.0)
        dsa = np.where(imask, -2.0 * sv * av, 0.0)
        dss = np.where(imask, -av * av - rho, 0.0)
        j_aa = d_a * lap_int + sp.diags(daa) + bc_rows
        j_ss = d_s * lap_int + sp.diags(dss) + bc_rows
        jac = sp.bmat([[j_aa, sp.diags(das)], [sp.diags(dsa), j_ss]], format="csc")
        try:
            step = splu(jac).solve(-np.concatenate([ra, rs]))
        except RuntimeError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        alpha, improved = 1.0, False
        for _ in range(30):
            ta, ts = av + alpha * step[:nn], sv + alpha * step[nn:]
            rms_t = rms_of(ta, ts)
            if rms_t < rms:
                av, sv, rms = ta, ts, rms_t
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
    if rms > ADMIT_RMS_2D:
        return None
    return av.reshape(n, n), sv.reshape(n, n), rms


def solve_gray_scott_steady(lam, grid_n: int = 64, seeds=None,
                            march_dt: float = 1.0, march_tmax: float = 8000.0,
                            symmetry_quotient: bool = False) -> SolutionTable:
    """Distinct steady Gray-Scott states at fixed parameters.

    Each seeded pattern is marched with implicit diffusion / explicit
    reaction until the steady residual RMS drops below 1e-6 (seeds that
    never settle are skipped), then polished by Newton.  Results are
    deduplicated; with ``symmetry_quotient`` states related by the square's
    flips and rotations count as one.
    """
    if grid_n < 32:
        raise ContractViolationError("grid_n must be at least 32")
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (4,):
        raise ContractViolationError("Gray-Scott lambda has 4 entries")
    h = 1.0 / (grid_n - 1)
    if seeds is None:
        seeds = default_gs_seeds(grid_n)

    lapm = _laplacian_2d(grid_n, h, mirror=True)
    eye = sp.identity(grid_n * grid_n, format="csr")
    solve_a = splu((eye - march_dt * lam[0] * lapm).tocsc())
    solve_s = splu((eye - march_dt * lam[1] * lapm).tocsc())

    found, rms_list = [], []
    for name, a0, s0 in seeds:
        a, s = a0.copy(), s0.copy()
        rms = _gs_march_residual_rms(a, s, lam, h)
        best, stalled = rms, 0
        check_every = 100
        for step in range(1, int(march_tmax / march_dt) + 1):
            ra, rs = _gs_reaction(a, s, lam)
            a = solve_a.solve((a + march_dt * ra).ravel()).reshape(a.shape)
            s = solve_s.solve((s + march_dt * rs).ravel()).reshape(s.shape)
            if step % check_every == 0:
                rms = _gs_march_residual_rms(a, s, lam, h)
                if rms <= 1e-6:
                    break
                if rms < 0.98 * best:
                    best, stalled = rms, 0
                else:
                    stalled += 1
                    if stalled > 40:  # oscillating or wandering
                        break
        rms = _gs_march_residual_rms(a, s, lam, h)
        if rms > 1e-4:
            logger.info("Gray-Scott oracle: seed %r not steady (rms %.2e); skipped",
                        name, rms)
            continue
        polished = _gs_polish_newton(a, s, lam, h)
        if polished is None:
            logger.info("Gray-Scott oracle: polish failed for seed %r; skipped", name)
            continue
        a, s, rms = polished
        found.append(np.stack([a, s]))
        rms_list.append(rms)

    if symmetry_quotient:
        kept, extras = _dedup_with_symmetry(found, rms_list)
    else:
        kept, extras = dedup_solutions(found, DEDUP_THRESHOLD, extras=rms_list)
    return SolutionTable("gray-scott-steady", lam, grid_n, kept, extras or [])


def _dedup_with_symmetry(solutions, extras):
    def variants(sol):
        out = []
        for k in range(4):
            r = np.rot90(sol, k, axes=(1, 2))
            out.append(r)
            out.append(r[:, ::-1, :])
        return out

    kept, kept_extras = [], []
    for sol, extra in zip(solutions, extras):
        dup = any(
            min(relative_l2(v, other) for v in variants(sol)) < DEDUP_THRESHOLD
            for other in kept
        )
        if not dup:
            kept.append(sol)
            kept_extras.append(extra)
    return kept, kept_extras


# ---------------------------------------------------------------------------
# observation sampling

def sample_observations(table: SolutionTable, n_obs: int, seed: int,
                        subset=None) -> ObservationSet:
    """Unlabeled observations: x_i uniform over the domain, u_i interpolated
    from a uniformly chosen source solution.

    ``subset`` restricts the source solutions (0-based indices into the
    table).  Deterministic for a given seed: locations are drawn first,
    then the per-observation sources.
    """
    if n_obs < 1:
        raise ContractViolationError("n_obs must be at least 1")
    if subset is None:
        subset = list(range(table.num_solutions))
    subset = list(subset)
    if not subset:
        raise ContractViolationError("subset of source solutions must not be empty")
    if any(i < 0 or i >= table.num_solutions for i in subset):
        raise ContractViolationError("subset index outside the solution table")
    problem = get_problem(table.problem)
    rng = np.random.default_rng(seed)
    lows = [lo for lo, _ in problem.domain]
    highs = [hi for _, hi in problem.domain]
    x = rng.uniform(lows, highs, size=(n_obs, problem.dim))
    sources = np.asarray(subset)[rng.integers(0, len(subset), size=n_obs)]
    u = np.empty((n_obs, problem.components))
    for si in np.unique(sources):
        mask = sources == si
        u[mask] = table.interpolate(int(si), x[mask])
    return ObservationSet(
        x=x, u=u,
        meta={"seed": int(seed), "subset": [int(i) for i in subset],
              "n_obs": int(n_obs), "source_labels": sources.tolist()},
    )


def test_split(obs: ObservationSet, fraction: float, seed: int):
    """Disjoint deterministic train/test split; test gets round(N * fraction)."""
    if not 0.0 < fraction < 1.0:
        raise ContractViolationError("fraction must lie strictly between 0 and 1")
    n = len(obs)
    n_test = int(round(n * fraction))
    if n_test == 0 or n_test == n:
        raise ContractViolationError("split would leave an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    labels = obs.meta.get("source_labels")

    def part(idx):
        meta = dict(obs.meta)
        if labels is not None:
            meta["source_labels"] = [labels[i] for i in idx]
        meta["split_of"] = n
        return ObservationSet(x=obs.x[idx], u=obs.u[idx], meta=meta)

    return part(train_idx), part(test_idx)
