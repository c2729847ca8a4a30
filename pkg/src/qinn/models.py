"""The five model families plus variable accounting and checkpoints.

Architectures: plain and weight-constrained dense nets (input -> 16 -> 64 ->
classes), plain and weight-constrained conv nets (conv 8x3x3 -> pool 2 ->
dense 64 -> classes), and the hybrid nets whose first stage is a simulated
circuit with angle or amplitude encoding feeding a linear head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from math import comb, prod
from pathlib import Path

import numpy as np

from . import qsim
from .errors import CapacityError, ConfigurationError
from .layers import (Activation, ConstrainedLinear, Conv2d, Flatten, Layer,
                     Linear, MaxPool2d, QuantumFeatures)
from .seeding import rng_for
from .tensor import Tensor, softmax

ARCHITECTURES = ("fnn", "wc_fnn", "cnn", "wc_cnn", "hnn_angle", "hnn_amplitude")


@dataclass(frozen=True)
class ModelSpec:
    architecture: str
    input_shape: tuple[int, ...]
    classes: int = 5
    hidden: tuple[int, ...] = (16, 64)
    activation: str = "tanh"
    n_pool: int | None = None          # N of the combination pool
    subset_size: int | None = None     # r
    conv_filters: int = 8
    conv_kernel: int = 3
    conv_stride: int = 1
    pool_window: int = 2
    circuit_layers: int = 2
    reuploads: int = 2

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(
                f"unknown architecture {self.architecture!r}")
        if self.classes < 2:
            raise ConfigurationError(f"need >= 2 classes, got {self.classes}")
        if self.architecture.startswith("wc_") and (
                self.n_pool is None or self.subset_size is None):
            raise ConfigurationError(
                "weight-constrained architectures need n_pool and subset_size")
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def n_features(self) -> int:
        return prod(self.input_shape)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        return cls(**{k: tuple(v) if k in ("input_shape", "hidden") else v
                      for k, v in doc.items()})


class Model:
    """A layer stack with shared forward/predict plumbing."""

    def __init__(self, spec: ModelSpec, layers: list[Layer]):
        self.spec = spec
        self.layers = layers
        self.droppable = spec.architecture.startswith(("wc_", "hnn"))

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def forward(self, x: Tensor, dropout_p: float = 0.0,
                rng: np.random.Generator | None = None) -> Tensor:
        ctx = {"dropout_p": dropout_p}
        if dropout_p > 0.0:
            if not self.droppable:
                raise ConfigurationError(
                    f"{self.spec.architecture} has no droppable weights")
            if rng is None:
                raise ConfigurationError("dropout_p > 0 needs an rng")
            ctx["rng"] = rng
            if self.spec.architecture.startswith("hnn"):
                quantum = next(l for l in self.layers
                               if isinstance(l, QuantumFeatures))
                ctx["circuit_override"] = qsim.rz_dropout(
                    quantum.circuit, dropout_p,
                    seed=int(rng.integers(2 ** 62)))
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def logits(self, images: np.ndarray, dropout_p: float = 0.0,
               rng: np.random.Generator | None = None) -> np.ndarray:
        return self.forward(Tensor(images), dropout_p, rng).data

    def predict(self, images: np.ndarray, dropout_p: float = 0.0,
                seed: int | None = None) -> np.ndarray:
        """Class indices; a fresh dropout realization is drawn per call."""
        rng = None
        if dropout_p > 0.0:
            rng = rng_for(0 if seed is None else seed, "predict")
        return self.logits(images, dropout_p, rng).argmax(axis=1)

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        return softmax(self.logits(images))


def _conv_geometry(spec: ModelSpec) -> tuple[int, int, int]:
    c, h, w = spec.input_shape
    ho = (h - spec.conv_kernel) // spec.conv_stride + 1
    wo = (w - spec.conv_kernel) // spec.conv_stride + 1
    if ho % spec.pool_window or wo % spec.pool_window:
        raise ConfigurationError(
            f"conv output {ho}x{wo} not divisible by pool window "
            f"{spec.pool_window}; resize the input")
    return (spec.conv_filters, ho // spec.pool_window, wo // spec.pool_window)


def build(spec: ModelSpec, seed: int = 0) -> Model:
    """Construct a model with seed-deterministic initialization."""
    rng = rng_for(seed, "init", spec.architecture)
    act = spec.activation
    arch = spec.architecture
    layers: list[Layer] = []

    if arch in ("fnn", "wc_fnn"):
        d = spec.n_features
        h1, h2 = spec.hidden
        layers.append(Flatten())
        if arch == "wc_fnn":
            layers.append(ConstrainedLinear(d, h1, spec.n_pool,
                                            spec.subset_size, rng))
        else:
            layers.append(Linear(d, h1, rng))
        layers += [Activation(act), Linear(h1, h2, rng), Activation(act),
                   Linear(h2, spec.classes, rng)]
    elif arch in ("cnn", "wc_cnn"):
        if len(spec.input_shape) != 3:
            raise ConfigurationError(
                f"conv nets need (c, h, w) inputs, got {spec.input_shape}")
        c, _, _ = spec.input_shape
        fc_in = prod(_conv_geometry(spec))
        h2 = spec.hidden[-1]
        layers.append(Conv2d(c, spec.conv_filters, spec.conv_kernel,
                             spec.conv_stride, rng))
        layers += [Activation(act), MaxPool2d(spec.pool_window), Flatten()]
        if arch == "wc_cnn":
            layers.append(ConstrainedLinear(fc_in, h2, spec.n_pool,
                                            spec.subset_size, rng))
        else:
            layers.append(Linear(fc_in, h2, rng))
        layers += [Activation(act), Linear(h2, spec.classes, rng)]
    else:
        d = spec.n_features
        if arch == "hnn_angle":
            if d > qsim.MAX_QUBITS:
                raise CapacityError(
                    f"angle encoding needs one qubit per feature; {d} exceeds "
                    f"the {qsim.MAX_QUBITS}-qubit cap")
            circuit = qsim.angle_feature_circuit(d, spec.circuit_layers,
                                                 spec.reuploads)
        else:
            n_qubits = max(1, int(np.ceil(np.log2(d))))
            circuit = qsim.amplitude_feature_circuit(n_qubits,
                                                     spec.circuit_layers)
        layers.append(Flatten())
        quantum = QuantumFeatures(circuit, arch.removeprefix("hnn_"), rng)
        layers.append(quantum)
        layers.append(Linear(quantum.n_features, spec.classes, rng))

    return Model(spec, layers)


# ---------------------------------------------------------------------------
# variable accounting
# ---------------------------------------------------------------------------

@dataclass
class LayerCount:
    name: str
    variables: int
    unconstrained_variables: int


@dataclass
class VariableCountReport:
    rows: list[LayerCount] = field(default_factory=list)
    constrained_layer_ratio: float | None = None

    @property
    def total(self) -> int:
        return sum(r.variables for r in self.rows)

    @property
    def total_unconstrained(self) -> int:
        return sum(r.unconstrained_variables for r in self.rows)

    @property
    def network_ratio(self) -> float:
        return self.total_unconstrained / self.total


def variable_count_report(spec: ModelSpec) -> VariableCountReport:
    """Per-layer variable counts against the unconstrained twin.

    The constrained-layer ratio excludes biases and equals fan_in / N: the
    layer's fan_in * fan_out free weights collapse to fan_out banks of N
    angles each.
    """
    report = VariableCountReport()
    arch = spec.architecture

    def dense(name, fan_in, fan_out, constrained):
        weights = fan_in * fan_out
        if constrained:
            vars_ = fan_out * spec.n_pool + fan_out
            report.constrained_layer_ratio = fan_in / spec.n_pool
        else:
            vars_ = weights + fan_out
        report.rows.append(LayerCount(name, vars_, weights + fan_out))

    if arch in ("fnn", "wc_fnn"):
        d = spec.n_features
        h1, h2 = spec.hidden
        dense("dense1", d, h1, arch == "wc_fnn")
        dense("dense2", h1, h2, False)
        dense("head", h2, spec.classes, False)
    elif arch in ("cnn", "wc_cnn"):
        c = spec.input_shape[0]
        k = spec.conv_kernel
        conv_vars = spec.conv_filters * c * k * k
        report.rows.append(LayerCount("conv", conv_vars, conv_vars))
        fc_in = prod(_conv_geometry(spec))
        dense("dense1", fc_in, spec.hidden[-1], arch == "wc_cnn")
        dense("head", spec.hidden[-1], spec.classes, False)
    else:
        model = build(spec)
        for i, layer in enumerate(model.layers):
            n = sum(p.size for p in layer.parameters())
            if n:
                report.rows.append(LayerCount(f"layer{i}", n, n))
    return report


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest plus little-endian float64 blobs per layer
# ---------------------------------------------------------------------------

def save_model(model: Model, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, layer in enumerate(model.layers):
        names = layer.param_names()
        for name, p in zip(names, layer.parameters()):
            fname = f"layer{i:02d}_{name}.bin"
            (directory / fname).write_bytes(p.data.astype("<f8").tobytes())
            entries.append({"layer": i, "name": name, "file": fname,
                            "shape": list(p.shape)})
    manifest = {"spec": model.spec.to_dict(), "params": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_model(directory) -> Model:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    spec = ModelSpec.from_dict(manifest["spec"])
    model = build(spec)
    by_layer: dict[int, dict[str, dict]] = {}
    for entry in manifest["params"]:
        by_layer.setdefault(entry["layer"], {})[entry["name"]] = entry
    for i, layer in enumerate(model.layers):
        for name, p in zip(layer.param_names(), layer.parameters()):
            entry = by_layer[i][name]
            raw = (directory / entry["file"]).read_bytes()
            data = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            p.data = data.reshape(entry["shape"])
    return model
