import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hompinn.exceptions import ContractViolationError
from hompinn.loss import (
    HomotopySchedule,
    alpha_at,
    boundary_loss,
    data_loss,
    residual_loss,
    total_loss,
)
from hompinn.network import MLPConfig, NetworkParams, init_he
from hompinn.problems import get_problem

EX1 = get_problem("ex1-bratu-quartic")
EX2 = get_problem("ex2-quartic-quadratic")


def _zero_net(m=1, hidden=(5,)) -> NetworkParams:
    cfg = MLPConfig(1, hidden, m)
    return NetworkParams(cfg, [np.zeros((fi, fo)) for fi, fo in cfg.layer_dims],
                         [np.zeros(fo) for _, fo in cfg.layer_dims])


def _linear_net() -> NetworkParams:
    # u = 2x + 1 through a near-linear tanh unit
    cfg = MLPConfig(1, (1,), 1)
    eps = 1e-5
    return NetworkParams(cfg, [np.array([[eps]]), np.array([[2.0 / eps]])],
                         [np.zeros(1), np.array([1.0])])


def test_alpha_at_closed_form():
    sched = HomotopySchedule(1.0, 0.6, 11)
    assert alpha_at(sched, 1) == 1.0
    assert alpha_at(sched, 2) == 0.6
    assert alpha_at(sched, 11) == 1.0 * 0.6 ** 10  # ~6.047e-3
    for k in range(1, 12):
        assert alpha_at(sched, k) == 1.0 * 0.6 ** (k - 1)


def test_alpha_at_out_of_range():
    sched = HomotopySchedule(1.0, 0.6, 11)
    for k in (0, 12, -1):
        with pytest.raises(ContractViolationError):
            alpha_at(sched, k)


def test_schedule_validation():
    with pytest.raises(ContractViolationError):
        HomotopySchedule(0.0, 0.6, 11)
    with pytest.raises(ContractViolationError):
        HomotopySchedule(1.0, 1.0, 11)
    with pytest.raises(ContractViolationError):
        HomotopySchedule(1.0, 0.6, 0)


@settings(max_examples=30, deadline=None)
@given(a0=st.floats(0.01, 10), r=st.floats(0.01, 0.99), k=st.integers(1, 19))
def test_schedule_strictly_decreasing(a0, r, k):
    sched = HomotopySchedule(a0, r, 20)
    assert alpha_at(sched, k + 1) < alpha_at(sched, k)


def test_data_loss_two_group_example():
    # one observation u = 2.9 against outputs (1.0, 3.0)
    cfg = MLPConfig(1, (1,), 2)
    params = NetworkParams(cfg, [np.zeros((1, 1)), np.zeros((1, 2))],
                           [np.zeros(1), np.array([1.0, 3.0])])
    loss, assign = data_loss(params, np.array([[0.5]]), np.array([[2.9]]))
    assert loss == pytest.approx(0.01)
    assert assign.tolist() == [2]


def test_data_loss_single_group_is_plain_mse():
    cfg = MLPConfig(1, (1,), 1)
    params = NetworkParams(cfg, [np.zeros((1, 1)), np.zeros((1, 1))],
                           [np.zeros(1), np.array([1.0])])
    loss, assign = data_loss(params, np.array([[0.2]]), np.array([[2.9]]))
    assert loss == pytest.approx(3.61)
    assert assign.tolist() == [1]

    params_r = init_he(MLPConfig(1, (6,), 1), seed=3)
    x = np.linspace(0, 1, 13).reshape(-1, 1)
    u = np.random.default_rng(0).normal(size=(13, 1))
    loss, _ = data_loss(params_r, x, u)
    from hompinn.network import forward
    mse = float(np.mean((forward(params_r, x) - u) ** 2))
    assert loss == pytest.approx(mse, rel=1e-12)


def test_data_loss_empty_observations_rejected():
    with pytest.raises(ContractViolationError):
        data_loss(_zero_net(), np.zeros((0, 1)), np.zeros((0, 1)))


def test_argmin_ties_break_low():
    cfg = MLPConfig(1, (1,), 2)
    params = NetworkParams(cfg, [np.zeros((1, 1)), np.zeros((1, 2))],
                           [np.zeros(1), np.array([2.0, 2.0])])
    _, assign = data_loss(params, np.array([[0.1]]), np.array([[2.0]]))
    assert assign.tolist() == [1]


@pytest.mark.parametrize("m,n_c", [(1, 10), (3, 57), (2, 200)])
def test_residual_loss_zero_network_ex1(m, n_c):
    params = _zero_net(m)
    col = np.linspace(0, 1, n_c).reshape(-1, 1)
    assert residual_loss(params, [1.2], EX1, col) == pytest.approx(1.44)


def test_residual_loss_zero_network_ex2():
    params = _zero_net(2)
    col = np.linspace(0, 1, 40).reshape(-1, 1)
    assert residual_loss(params, [18.0], EX2, col) == 0.0


def test_boundary_loss_cases():
    assert boundary_loss(_zero_net(), EX1, [[0.0], [1.0]]) == 0.0
    # u = 2x + 1: (u'(0))^2 = 4 and (u(1))^2 = 9, mean 6.5
    got = boundary_loss(_linear_net(), EX1, [[0.0], [1.0]])
    assert got == pytest.approx(6.5, rel=1e-6)


def test_total_loss_composition():
    params = _zero_net()
    obs_x, obs_u = np.array([[0.5]]), np.array([[0.0]])
    col = np.array([[0.5]])
    bnd = [[0.0], [1.0]]
    lb1 = total_loss(params, [1.2], EX1, obs_x, obs_u, col, bnd, alpha=1.0)
    assert lb1.total == pytest.approx(1.44)
    assert lb1.data_term == 0.0 and lb1.boundary_term == 0.0
    lb2 = total_loss(params, [1.2], EX1, obs_x, obs_u, col, bnd, alpha=0.6)
    assert lb2.total == pytest.approx(0.864)
    assert lb2.assignment.tolist() == [1]


def test_total_loss_affine_recombination_exact():
    params = init_he(MLPConfig(1, (8,), 2), seed=6)
    obs_x = np.linspace(0.1, 0.9, 7).reshape(-1, 1)
    obs_u = np.random.default_rng(1).normal(size=(7, 1))
    col = np.linspace(0, 1, 23).reshape(-1, 1)
    lb = total_loss(params, [1.2], EX1, obs_x, obs_u, col, [[0.0], [1.0]], alpha=0.36)
    assert lb.total == lb.data_term + lb.alpha * (lb.residual_term + lb.boundary_term)


def test_assignment_invariant_under_alpha_scaling():
    params = init_he(MLPConfig(1, (8,), 3), seed=2)
    obs_x = np.linspace(0, 1, 29).reshape(-1, 1)
    obs_u = np.random.default_rng(4).normal(size=(29, 1))
    col = np.linspace(0, 1, 11).reshape(-1, 1)
    assigns = [
        total_loss(params, [1.2], EX1, obs_x, obs_u, col, [[0.0], [1.0]], alpha=a).assignment
        for a in (1e-3, 1.0, 17.0)
    ]
    for other in assigns[1:]:
        np.testing.assert_array_equal(assigns[0], other)


def test_total_loss_gradient_matches_finite_differences():
    # both network and DE parameters, central differences at step 1e-5
    from hompinn.autodiff import Tape, tape_backward
    from hompinn.loss import LossAssembler

    params = init_he(MLPConfig(1, (7, 5), 2), seed=11)
    lam = np.array([1.7])
    obs_x = np.linspace(0.1, 0.9, 9).reshape(-1, 1)
    obs_u = np.random.default_rng(2).normal(size=(9, 1))
    col = np.linspace(0, 1, 17).reshape(-1, 1)
    asm = LossAssembler(EX1, params.config, obs_x, obs_u, col,
                        EX1.boundary_point_groups(2))

    def value(p, l):
        return total_loss(p, l, EX1, obs_x, obs_u, col, [[0.0], [1.0]], 0.6).total

    tape = Tape()
    wts = [tape.variable(w) for w in params.weights]
    bss = [tape.variable(b) for b in params.biases]
    lam_t = [tape.variable(v) for v in lam]
    _, _, _, tot, _ = asm.build(tape, wts, bss, lam_t, 0.6)
    adj = tape_backward(tot)

    eps = 1e-5
    rng = np.random.default_rng(9)
    for _ in range(25):
        li = rng.integers(0, len(params.weights))
        w = params.weights[li]
        ix = tuple(rng.integers(0, s) for s in w.shape)
        orig = w[ix]
        w[ix] = orig + eps
        lp = value(params, lam)
        w[ix] = orig - eps
        lm = value(params, lam)
        w[ix] = orig
        fd = (lp - lm) / (2 * eps)
        assert abs(adj[wts[li].node_id][ix] - fd) <= 1e-5 * max(abs(fd), 1e-3)
    lp = value(params, lam + eps)
    lm = value(params, lam - eps)
    fd = (lp - lm) / (2 * eps)
    assert abs(float(adj[lam_t[0].node_id]) - fd) <= 1e-5 * max(abs(fd), 1e-3)


def test_zero_network_interpolates_the_zero_solution():
    # the zero network reproduces the u = 0 solution exactly, so its
    # residual loss vanishes: the interpolating-network bound holds at 0
    params = _zero_net(m=1, hidden=(30, 30, 30))
    col = np.linspace(0, 1, 200).reshape(-1, 1)
    assert residual_loss(params, [18.0], EX2, col) <= 1e-6


def test_gray_scott_loss_smoke():
    problem = get_problem("gray-scott-steady")
    params = init_he(MLPConfig(2, (12, 12), 3, components_per_group=2), seed=1)
    rng = np.random.default_rng(5)
    obs_x = rng.uniform(0, 1, size=(20, 2))
    obs_u = rng.normal(size=(20, 2))
    ax = np.linspace(0, 1, 6)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    col = np.column_stack([xx.ravel(), yy.ravel()])
    lam = np.array([2.5e-4, 5e-4, 0.04, 0.065])
    groups = problem.boundary_point_groups(4)
    bpts = np.concatenate([p for p, _ in groups])
    lb = total_loss(params, lam, problem, obs_x, obs_u, col, bpts, alpha=0.6)
    assert np.isfinite(lb.total)
    assert lb.total == lb.data_term + lb.alpha * (lb.residual_term + lb.boundary_term)
    assert lb.assignment.min() >= 1 and lb.assignment.max() <= 3
