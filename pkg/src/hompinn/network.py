"""Multi-output fully connected network with spatial-derivative outputs.

One shared tanh trunk feeds a linear output layer of width M*C: M candidate
solution groups, each with C field components, concatenated group-by-group.
The DE parameter vector is deliberately *not* a network input; it only
enters the training objective through the residual term.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Jet2, Tape, Tensor, jet2_tanh, matmul
from .exceptions import ContractViolationError, EvaluationError

__all__ = [
    "MLPConfig",
    "NetworkParams",
    "init_he",
    "forward",
    "forward_with_derivatives",
    "save_params",
    "load_params",
]


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_groups: int
    components_per_group: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        if self.input_dim < 1:
            raise ContractViolationError("input_dim must be >= 1")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ContractViolationError("hidden_widths must be non-empty, all >= 1")
        if self.output_groups < 1 or self.components_per_group < 1:
            raise ContractViolationError("output_groups and components_per_group must be >= 1")

    @property
    def output_dim(self) -> int:
        return self.output_groups * self.components_per_group

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_params(self) -> int:
        return sum((fi + 1) * fo for fi, fo in self.layer_dims)


@dataclass
class NetworkParams:
    """Per-layer weight matrices and bias vectors (float64)."""

    config: MLPConfig
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        for (fi, fo), w, b in zip(self.config.layer_dims, self.weights, self.biases):
            if w.shape != (fi, fo) or b.shape != (fo,):
                raise ContractViolationError("parameter shapes inconsistent with config")

    @property
    def num_params(self) -> int:
        return self.config.num_params

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, config: MLPConfig, flat: np.ndarray) -> "NetworkParams":
        if flat.size != config.num_params:
            raise ContractViolationError(
                f"flat vector has {flat.size} entries, config needs {config.num_params}"
            )
        flat = np.asarray(flat, dtype=np.float64)
        weights, biases, off = [], [], 0
        for fi, fo in config.layer_dims:
            weights.append(flat[off:off + fi * fo].reshape(fi, fo).copy())
            off += fi * fo
            biases.append(flat[off:off + fo].copy())
            off += fo
        return cls(config, weights, biases)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.config,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def init_he(config: MLPConfig, seed: int) -> NetworkParams:
    """Weights ~ N(0, 2/fan_in), biases zero; deterministic for a seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fi, fo in config.layer_dims:
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fi), size=(fi, fo)))
        biases.append(np.zeros(fo))
    return NetworkParams(config, weights, biases)


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        # a single point when it has `dim` coordinates, else a 1-D batch
        pts = pts.reshape(1, -1) if (pts.size == dim and dim > 1) else pts.reshape(-1, 1)
    if pts.shape[1] != dim:
        raise ContractViolationError(f"points must have {dim} coordinates, got shape {pts.shape}")
    return pts


def _check_finite(params: NetworkParams):
    for w, b in zip(params.weights, params.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise EvaluationError("network parameters contain non-finite entries")


def forward(params: NetworkParams, x) -> np.ndarray:
    """Plain evaluation: (N, M*C) outputs, groups contiguous by m.

    Performs the exact same float operations as the value channel of the
    taped forward, so the two agree bit for bit.
    """
    _check_finite(params)
    h = _as_points(x, params.config.input_dim)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i != last:
            h = np.tanh(h)
    return h


def hidden_features(params: NetworkParams, x) -> np.ndarray:
    """Activations of the last hidden layer, (N, width): the shared trunk
    features that the output layer combines linearly."""
    _check_finite(params)
    h = _as_points(x, params.config.input_dim)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
    return h


def taped_values(tape: Tape, weights: list[Tensor], biases: list[Tensor],
                 x: np.ndarray) -> Tensor:
    """Value channel only: batched forward pass recorded on the tape."""
    h = tape.constant(x)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = matmul(h, w) + b
        if i != last:
            h = ad.tanh(h)
    return h


def taped_jets(tape: Tape, weights: list[Tensor], biases: list[Tensor],
               x: np.ndarray, axes: int) -> Jet2:
    """Forward pass propagating value/d1/d2 jets per input axis.

    Channels are (N, width) tensors.  Affine layers map each channel
    independently (weights carry no input dependence); tanh applies the
    second-order chain rule.  Everything is on the tape, so one reverse
    sweep differentiates residuals built from d1/d2 through to the weights.
    """
    n_in = x.shape[1]
    val = matmul(tape.constant(x), weights[0]) + biases[0]
    d1, d2 = [], []
    for a in range(axes):
        seed = np.zeros((1, n_in))
        seed[0, a] = 1.0
        d1.append(matmul(tape.constant(seed), weights[0]))
        d2.append(tape.constant(0.0))
    jet = Jet2(val, tuple(d1), tuple(d2))
    for w, b in zip(weights[1:], biases[1:]):
        jet = jet2_tanh(jet)
        jet = Jet2(
            matmul(jet.value, w) + b,
            tuple(matmul(d, w) for d in jet.d1),
            tuple(matmul(d, w) for d in jet.d2),
        )
    return jet


def forward_with_derivatives(params: NetworkParams, x) -> list[Jet2]:
    """Per-output-column jets: value, d(u)/dx_a and d2(u)/dx_a2 channels.

    Returns M*C jets whose channels are (N,) tensors on a fresh tape with
    the parameters registered as variables, so callers can also reverse-
    sweep any channel.
    """
    _check_finite(params)
    pts = _as_points(x, params.config.input_dim)
    tape = Tape()
    wts = [tape.variable(w) for w in params.weights]
    bss = [tape.variable(b) for b in params.biases]
    jet = taped_jets(tape, wts, bss, pts, axes=params.config.input_dim)
    out = []
    for col in range(params.config.output_dim):
        key = (slice(None), col)
        out.append(Jet2(
            ad.index(jet.value, key),
            tuple(ad.index(d, key) if d.value.ndim else d for d in jet.d1),
            tuple(ad.index(d, key) if d.value.ndim else d for d in jet.d2),
        ))
    return out


# ---------------------------------------------------------------------------
# checkpoint format: one JSON header line, then raw little-endian float64
# of all parameters in layer order (W0 row-major, b0, W1, b1, ...).

_MAGIC = "hompinn-params-v1"


def save_params(path, params: NetworkParams):
    cfg = params.config
    header = {
        "format": _MAGIC,
        "input_dim": cfg.input_dim,
        "hidden_widths": list(cfg.hidden_widths),
        "output_groups": cfg.output_groups,
        "components_per_group": cfg.components_per_group,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(params.flatten().astype("<f8").tobytes())


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("format") != _MAGIC:
            raise ContractViolationError(f"not a parameter checkpoint: {path}")
        cfg = MLPConfig(
            input_dim=header["input_dim"],
            hidden_widths=tuple(header["hidden_widths"]),
            output_groups=header["output_groups"],
            components_per_group=header["components_per_group"],
        )
        flat = np.frombuffer(fh.read(), dtype="<f8")
    return NetworkParams.from_flat(cfg, flat)
