"""Reverse-mode tape with second-order forward jets.

The engine has two layers:

* A ``Tape`` of array-valued nodes.  Every primitive (add, mul, tanh, ...)
  is evaluated eagerly when it is recorded, so a node always carries its
  primal value; ``tape_backward`` then runs one reverse sweep and returns
  the adjoint of every node with respect to a scalar loss.  Node values are
  numpy arrays so a single node can hold one value per point of a batch;
  semantically the tape is a stack of identical per-point scalar graphs
  evaluated in lockstep, and parameter adjoints are the (deterministic,
  left-to-right) sum over that stack.

* ``Jet2`` triples (value, first, and pure second derivative per tracked
  input axis).  Jet arithmetic implements the first- and second-order chain
  rules, and every channel of a jet is itself a tape node.  Propagating
  jets through a network therefore records the derivative computation on
  the tape, and the reverse sweep differentiates straight through it: one
  backward pass yields d(residual)/d(parameters) even though the residual
  involves d2 channels.

Mixed second derivatives are not propagated; the differential operators in
this package only need pure per-axis second derivatives (Laplacians).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolationError, SingularEvaluationError

__all__ = [
    "Tape",
    "Tensor",
    "Jet2",
    "tape_eval",
    "tape_backward",
    "tanh",
    "square",
    "pow_int",
    "matmul",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "index",
    "select",
    "jet2_add",
    "jet2_sub",
    "jet2_mul",
    "jet2_tanh",
    "jet2_const",
]


class _Node:
    __slots__ = ("op", "parents", "value", "aux", "needs_grad")

    def __init__(self, op, parents, value, aux=None, needs_grad=False):
        self.op = op
        self.parents = parents
        self.value = value
        self.aux = aux
        self.needs_grad = needs_grad


class Tensor:
    """Handle to one tape node. Supports numpy-style arithmetic."""

    __slots__ = ("tape", "node_id")

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.node_id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.node_id].value

    @property
    def shape(self):
        return self.tape.nodes[self.node_id].value.shape

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            if other.tape is not self.tape:
                raise ContractViolationError("operands live on different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return self.tape._record("add", (self, self._coerce(other)))

    def __radd__(self, other):
        return self.tape._record("add", (self._coerce(other), self))

    def __sub__(self, other):
        return self.tape._record("sub", (self, self._coerce(other)))

    def __rsub__(self, other):
        return self.tape._record("sub", (self._coerce(other), self))

    def __mul__(self, other):
        return self.tape._record("mul", (self, self._coerce(other)))

    def __rmul__(self, other):
        return self.tape._record("mul", (self._coerce(other), self))

    def __truediv__(self, other):
        return self.tape._record("div", (self, self._coerce(other)))

    def __rtruediv__(self, other):
        return self.tape._record("div", (self._coerce(other), self))

    def __neg__(self):
        return self.tape._record("neg", (self,))

    def __repr__(self):
        return f"Tensor(node={self.node_id}, value={self.value!r})"


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tape:
    """Append-only, topologically ordered record of primitive operations.

    A tape is confined to a single worker and is rebuilt from scratch for
    every optimizer iteration (the data-term assignment can change between
    iterations, so the recorded graph can too).
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, node: _Node) -> Tensor:
        self.nodes.append(node)
        return Tensor(self, len(self.nodes) - 1)

    def constant(self, value) -> Tensor:
        return self._append(_Node("constant", (), _asarray(value)))

    def variable(self, value) -> Tensor:
        return self._append(_Node("variable", (), _asarray(value), needs_grad=True))

    def _record(self, op: str, parents: tuple, aux=None) -> Tensor:
        nodes = self.nodes
        pv = [nodes[p.node_id].value for p in parents]
        value = _EVAL[op](pv, aux)
        ids = tuple(p.node_id for p in parents)
        ng = any(nodes[i].needs_grad for i in ids)
        return self._append(_Node(op, ids, value, aux, ng))


# ---------------------------------------------------------------------------
# primitive forward rules

def _ev_add(p, aux):
    return p[0] + p[1]


def _ev_sub(p, aux):
    return p[0] - p[1]


def _ev_mul(p, aux):
    return p[0] * p[1]


def _ev_div(p, aux):
    if np.any(p[1] == 0.0):
        raise SingularEvaluationError("division by zero at a div node")
    return p[0] / p[1]


def _ev_neg(p, aux):
    return -p[0]


def _ev_tanh(p, aux):
    return np.tanh(p[0])


def _ev_square(p, aux):
    return p[0] * p[0]


def _ev_pow_int(p, aux):
    return p[0] ** aux


def _ev_matmul(p, aux):
    return p[0] @ p[1]


def _ev_sum(p, aux):
    return np.asarray(p[0].sum(axis=aux))


def _ev_reshape(p, aux):
    return p[0].reshape(aux)


def _ev_index(p, aux):
    return np.ascontiguousarray(p[0][aux])


def _ev_select(p, aux):
    return np.take_along_axis(p[0], aux[..., None], axis=-1)[..., 0]


_EVAL = {
    "add": _ev_add,
    "sub": _ev_sub,
    "mul": _ev_mul,
    "div": _ev_div,
    "neg": _ev_neg,
    "tanh": _ev_tanh,
    "square": _ev_square,
    "pow_int": _ev_pow_int,
    "matmul": _ev_matmul,
    "sum": _ev_sum,
    "reshape": _ev_reshape,
    "index": _ev_index,
    "select": _ev_select,
}


# ---------------------------------------------------------------------------
# public functional ops

def tanh(x: Tensor) -> Tensor:
    return x.tape._record("tanh", (x,))


def square(x: Tensor) -> Tensor:
    return x.tape._record("square", (x,))


def pow_int(x: Tensor, n: int) -> Tensor:
    if not isinstance(n, int) or n < 1:
        raise ContractViolationError("pow_int exponent must be a positive integer")
    return x.tape._record("pow_int", (x,), aux=n)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a.tape._record("matmul", (a, a._coerce(b)))


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    return x.tape._record("sum", (x,), aux=axis)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.value.size if axis is None else x.value.shape[axis]
    return reduce_sum(x, axis) * (1.0 / n)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    return x.tape._record("reshape", (x,), aux=tuple(shape))


def index(x: Tensor, key) -> Tensor:
    """Basic (slice/integer) indexing; gradient scatters back into place."""
    return x.tape._record("index", (x,), aux=key)


def select(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather one entry along the last axis per leading position.

    ``idx`` has shape ``x.shape[:-1]`` and is computed on primal values
    before taping (e.g. an argmin).  The local partial is 1 for the
    selected entry and exactly 0 for every other candidate, so gradient
    flows only to the selected branch.
    """
    idx = np.asarray(idx)
    if idx.shape != x.value.shape[:-1]:
        raise ContractViolationError(
            f"select index shape {idx.shape} does not match {x.value.shape[:-1]}"
        )
    return x.tape._record("select", (x,), aux=idx)


def tape_eval(expr: Tensor) -> np.ndarray:
    """Primal value of a taped expression (cached at record time)."""
    return expr.value


# ---------------------------------------------------------------------------
# reverse sweep

def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Gradients:
    """Adjoint map from one reverse sweep; unused nodes read as zero."""

    def __init__(self, tape: Tape, adj: dict[int, np.ndarray]):
        self._tape = tape
        self._adj = adj

    def __getitem__(self, node_id: int) -> np.ndarray:
        got = self._adj.get(node_id)
        if got is None:
            got = np.zeros_like(self._tape.nodes[node_id].value)
            self._adj[node_id] = got
        return got

    def wrt(self, t: Tensor) -> np.ndarray:
        return self[t.node_id]


def tape_backward(loss: Tensor) -> Gradients:
    """One reverse sweep from a scalar loss node.

    Returns adjoints for every node at or below ``loss``; nodes the loss
    does not depend on read as 0.  Running the sweep again returns the same
    result (adjoints are never accumulated across calls).  Subtrees with no
    variable underneath are skipped.
    """
    if not isinstance(loss, Tensor):
        raise ContractViolationError("loss must be a taped tensor")
    tape = loss.tape
    nodes = tape.nodes
    lid = loss.node_id
    if lid >= len(nodes):
        raise ContractViolationError("loss node is not on the tape")
    if nodes[lid].value.size != 1:
        raise ContractViolationError("loss node must be scalar")

    adj: dict[int, np.ndarray] = {lid: np.ones_like(nodes[lid].value)}

    def acc(pid, arr, fresh):
        # `fresh` marks buffers this sweep owns; aliased ones are copied on
        # first write so later += cannot corrupt another node's adjoint.
        # numpy returns immutable scalars for 0-d operands, so those are
        # rewrapped as writable 0-d arrays before they become accumulators.
        cur = adj.get(pid)
        if cur is None:
            if not isinstance(arr, np.ndarray):
                adj[pid] = np.asarray(arr)
            else:
                adj[pid] = arr if fresh else arr.copy()
        else:
            cur += arr

    def acc_unbroadcast(pid, arr, shape, fresh):
        out = _unbroadcast(arr, shape)
        acc(pid, out, fresh or out is not arr)

    for i in range(lid, -1, -1):
        node = nodes[i]
        if not node.needs_grad:
            continue
        g = adj.get(i)
        if g is None:
            continue  # not on a path to the loss
        op = node.op
        if op == "variable":
            continue
        pids = node.parents
        pv = [nodes[p].value for p in pids]
        want = [nodes[p].needs_grad for p in pids]
        if op == "add":
            if want[0]:
                acc_unbroadcast(pids[0], g, pv[0].shape, False)
            if want[1]:
                acc_unbroadcast(pids[1], g, pv[1].shape, False)
        elif op == "sub":
            if want[0]:
                acc_unbroadcast(pids[0], g, pv[0].shape, False)
            if want[1]:
                acc_unbroadcast(pids[1], -g, pv[1].shape, True)
        elif op == "mul":
            if want[0]:
                acc_unbroadcast(pids[0], g * pv[1], pv[0].shape, True)
            if want[1]:
                acc_unbroadcast(pids[1], g * pv[0], pv[1].shape, True)
        elif op == "div":
            if want[0]:
                acc_unbroadcast(pids[0], g / pv[1], pv[0].shape, True)
            if want[1]:
                acc_unbroadcast(pids[1], -g * pv[0] / (pv[1] * pv[1]),
                                pv[1].shape, True)
        elif op == "neg":
            acc(pids[0], -g, True)
        elif op == "tanh":
            acc(pids[0], g * (1.0 - node.value * node.value), True)
        elif op == "square":
            acc(pids[0], g * (2.0 * pv[0]), True)
        elif op == "pow_int":
            n = node.aux
            acc(pids[0], g * (n * pv[0] ** (n - 1)), True)
        elif op == "matmul":
            if want[0]:
                acc(pids[0], g @ pv[1].T, True)
            if want[1]:
                acc(pids[1], pv[0].T @ g, True)
        elif op == "sum":
            if node.aux is None:
                cur = adj.get(pids[0])
                if cur is None:
                    adj[pids[0]] = np.full(pv[0].shape, float(g))
                else:
                    cur += g
            else:
                expanded = np.expand_dims(g, node.aux)
                cur = adj.get(pids[0])
                if cur is None:
                    adj[pids[0]] = np.broadcast_to(expanded, pv[0].shape).copy()
                else:
                    cur += expanded
        elif op == "reshape":
            acc(pids[0], g.reshape(pv[0].shape), False)
        elif op == "index":
            buf = np.zeros_like(pv[0])
            buf[node.aux] += g
            acc(pids[0], buf, True)
        elif op == "select":
            buf = np.zeros_like(pv[0])
            np.put_along_axis(buf, node.aux[..., None], g[..., None], axis=-1)
            acc(pids[0], buf, True)
        else:  # pragma: no cover
            raise AssertionError(f"unknown op {op!r}")
    return Gradients(tape, adj)


# ---------------------------------------------------------------------------
# second-order forward jets

@dataclass(frozen=True)
class Jet2:
    """Value plus first and pure second derivative per tracked input axis.

    Channels are tape tensors, so reverse-mode gradients of any channel
    with respect to upstream variables are available via ``tape_backward``.
    ``d1`` and ``d2`` have one entry per tracked spatial axis.
    """

    value: Tensor
    d1: tuple[Tensor, ...]
    d2: tuple[Tensor, ...]

    @property
    def axes(self) -> int:
        return len(self.d1)

    def __post_init__(self):
        if len(self.d1) != len(self.d2):
            raise ContractViolationError("d1 and d2 must track the same axes")


def _check_axes(a: Jet2, b: Jet2):
    if a.axes != b.axes:
        raise ContractViolationError(
            f"jet axis counts differ: {a.axes} vs {b.axes}"
        )


def jet2_add(a: Jet2, b: Jet2) -> Jet2:
    _check_axes(a, b)
    return Jet2(
        a.value + b.value,
        tuple(x + y for x, y in zip(a.d1, b.d1)),
        tuple(x + y for x, y in zip(a.d2, b.d2)),
    )


def jet2_sub(a: Jet2, b: Jet2) -> Jet2:
    _check_axes(a, b)
    return Jet2(
        a.value - b.value,
        tuple(x - y for x, y in zip(a.d1, b.d1)),
        tuple(x - y for x, y in zip(a.d2, b.d2)),
    )


def jet2_mul(a: Jet2, b: Jet2) -> Jet2:
    """Product rule up to second order: (fg)'' = f''g + 2 f'g' + fg''."""
    _check_axes(a, b)
    value = a.value * b.value
    d1 = tuple(ad * b.value + a.value * bd for ad, bd in zip(a.d1, b.d1))
    d2 = tuple(
        add * b.value + 2.0 * ad * bd + a.value * bdd
        for ad, add, bd, bdd in zip(a.d1, a.d2, b.d1, b.d2)
    )
    return Jet2(value, d1, d2)


def jet2_tanh(a: Jet2) -> Jet2:
    """Chain rule through tanh; tanh''(z) = -2 tanh(z) (1 - tanh(z)^2)."""
    t = tanh(a.value)
    s = 1.0 - square(t)  # tanh'
    tdd = -2.0 * t * s   # tanh''
    d1 = tuple(s * ad for ad in a.d1)
    d2 = tuple(s * add + tdd * square(ad) for ad, add in zip(a.d1, a.d2))
    return Jet2(t, d1, d2)


def jet2_const(value: Tensor, axes: int) -> Jet2:
    """Lift a quantity with no dependence on the tracked inputs to a jet."""
    zero = value.tape.constant(0.0)
    return Jet2(value, (zero,) * axes, (zero,) * axes)
