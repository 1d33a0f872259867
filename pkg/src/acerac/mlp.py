"""Small feedforward networks over a flat parameter vector, with ADAM.

Hidden layers use tanh, the output layer is linear.  Parameters for layer
``k`` are stored as the weight matrix (fan_in x fan_out, row-major) followed
by the bias, and layers are concatenated in order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_layers: tuple[int, ...] = (256, 256)

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if min(self.sizes) < 1:
            raise ValueError(f"all layer widths must be >= 1, got {self.sizes}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.output_dim)

    @property
    def n_params(self) -> int:
        s = self.sizes
        return sum(s[k] * s[k + 1] + s[k + 1] for k in range(len(s) - 1))

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views (W, b) into ``params`` for each layer."""
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        layers, pos, s = [], 0, self.sizes
        for k in range(len(s) - 1):
            n_w = s[k] * s[k + 1]
            w = params[pos : pos + n_w].reshape(s[k], s[k + 1])
            pos += n_w
            b = params[pos : pos + s[k + 1]]
            pos += s[k + 1]
            layers.append((w, b))
        return layers

    def init_params(self, rng: np.random.Generator, output_scale: float = 0.1) -> np.ndarray:
        """Glorot-uniform weights, zero biases; output layer shrunk by ``output_scale``."""
        params = np.zeros(self.n_params)
        layers = self.unpack(params)
        for k, (w, _) in enumerate(layers):
            limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[...] = rng.uniform(-limit, limit, size=w.shape)
            if k == len(layers) - 1:
                w *= output_scale
        return params

    def _check_input(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.ndim != 2 or x2.shape[1] != self.input_dim:
            raise ValueError(f"input has shape {x.shape}, expected (..., {self.input_dim})")
        return x2, single

    def forward(self, params: np.ndarray, x) -> np.ndarray:
        """Network output for one input vector or a batch of row vectors."""
        x2, single = self._check_input(x)
        layers = self.unpack(params)
        h = x2
        for w, b in layers[:-1]:
            h = np.tanh(h @ w + b)
        w, b = layers[-1]
        out = h @ w + b
        return out[0] if single else out

    def forward_cached(self, params: np.ndarray, x) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward that also returns the layer inputs needed by ``backward_cached``."""
        x2, _ = self._check_input(x)
        layers = self.unpack(params)
        acts = [x2]
        h = x2
        for w, b in layers[:-1]:
            h = np.tanh(h @ w + b)
            acts.append(h)
        w, b = layers[-1]
        return h @ w + b, acts

    def backward_cached(
        self, params: np.ndarray, acts: list[np.ndarray], upstream: np.ndarray
    ) -> np.ndarray:
        """Sum over the batch of (d output / d params)^T upstream."""
        layers = self.unpack(params)
        upstream = np.asarray(upstream, dtype=float)
        if upstream.shape != (acts[0].shape[0], self.output_dim):
            raise ValueError(
                f"upstream has shape {upstream.shape}, expected ({acts[0].shape[0]}, {self.output_dim})"
            )
        grad = np.empty(self.n_params)
        grad_layers = self.unpack(grad)
        delta = upstream
        for k in range(len(layers) - 1, -1, -1):
            w, _ = layers[k]
            gw, gb = grad_layers[k]
            gw[...] = acts[k].T @ delta
            gb[...] = delta.sum(axis=0)
            if k:
                # acts[k] = tanh(pre-activation)
                delta = (delta @ w.T) * (1.0 - acts[k] ** 2)
        return grad

    def backward(self, params: np.ndarray, x, upstream) -> np.ndarray:
        x2, single = self._check_input(x)
        up = np.asarray(upstream, dtype=float)
        if single:
            up = up[None, :] if up.ndim == 1 else up
        _, acts = self.forward_cached(params, x2)
        return self.backward_cached(params, acts, up)


@dataclass
class Adam:
    """ADAM state for one flat parameter vector.  ``step`` ascends when sign=+1."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, params: np.ndarray, grad: np.ndarray, sign: float = 1.0) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        if grad.shape != params.shape:
            raise ValueError("gradient and parameter shapes differ")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params + sign * self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class Checkpoint:
    """Named networks with their flat parameters plus free-form metadata."""

    nets: dict[str, MlpSpec]
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """JSON header line, then all parameter vectors as little-endian float64.

    Layout: 8-byte little-endian header length, UTF-8 JSON header, raw data.
    """
    header = {
        "format": "acerac-checkpoint",
        "version": 1,
        "dtype": "<f8",
        "nets": [
            {
                "name": name,
                "input_dim": spec.input_dim,
                "hidden_layers": list(spec.hidden_layers),
                "output_dim": spec.output_dim,
                "n_params": spec.n_params,
            }
            for name, spec in ckpt.nets.items()
        ],
        "meta": ckpt.meta,
    }
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    data = np.concatenate([ckpt.params[name] for name in ckpt.nets]).astype("<f8")
    with open(Path(path), "wb") as fh:
        fh.write(struct.pack("<Q", len(text)))
        fh.write(text)
        fh.write(data.tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated checkpoint")
    (n,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8 : 8 + n].decode("utf-8"))
    if header.get("format") != "acerac-checkpoint":
        raise ValueError(f"{path}: not a checkpoint file")
    data = np.frombuffer(raw[8 + n :], dtype="<f8").astype(float)
    nets, params, pos = {}, {}, 0
    for entry in header["nets"]:
        spec = MlpSpec(entry["input_dim"], entry["output_dim"], tuple(entry["hidden_layers"]))
        if spec.n_params != entry["n_params"]:
            raise ValueError(f"{path}: parameter count mismatch for {entry['name']}")
        nets[entry["name"]] = spec
        params[entry["name"]] = data[pos : pos + spec.n_params].copy()
        pos += spec.n_params
    if pos != data.size:
        raise ValueError(f"{path}: expected {pos} values, found {data.size}")
    return Checkpoint(nets, params, header.get("meta", {}))
