"""Network building blocks: dense, constrained-dense, conv, pool, quantum."""

from __future__ import annotations

import numpy as np

from . import qsim
from .errors import CapacityError, ConfigurationError
from .tensor import (Tensor, activation, add, conv2d, matmul, maxpool2d,
                     reshape, transpose, _accumulate, _make)
from .trigweights import CombinationSpec, apply_dropout, materialize_layer


class Layer:
    def parameters(self) -> list[Tensor]:
        return []

    def forward(self, x: Tensor, ctx: dict) -> Tensor:
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in zip(self.param_names(), self.parameters())}

    def param_names(self) -> list[str]:
        return [f"param{i}" for i in range(len(self.parameters()))]


class Flatten(Layer):
    def forward(self, x, ctx):
        if x.ndim == 2:
            return x
        return reshape(x, (x.shape[0], -1))


class Activation(Layer):
    def __init__(self, kind: str):
        self.kind = kind

    def forward(self, x, ctx):
        return activation(x, self.kind)


class Linear(Layer):
    """y = x W + b with W stored (fan_in, fan_out)."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def param_names(self):
        return ["weight", "bias"]

    def forward(self, x, ctx):
        return add(matmul(x, self.weight), self.bias)


class ConstrainedLinear(Layer):
    """Dense layer whose weights are trig products of per-neuron angle banks."""

    def __init__(self, fan_in: int, fan_out: int, n_pool: int, subset_size: int,
                 rng: np.random.Generator):
        self.spec = CombinationSpec(n_pool, subset_size, count=fan_in)
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.banks = Tensor(-rng.uniform(-np.pi, np.pi, (fan_out, n_pool)),
                            requires_grad=True)
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True)

    def parameters(self):
        return [self.banks, self.bias]

    def param_names(self):
        return ["banks", "bias"]

    def weight_matrix(self, mask=None) -> Tensor:
        return materialize_layer(self.banks, self.spec, self.fan_in, mask)

    def forward(self, x, ctx):
        mask = None
        p = ctx.get("dropout_p", 0.0)
        if p > 0.0:
            rng = ctx["rng"]
            mask = apply_dropout(self.spec, p, seed=int(rng.integers(2 ** 62)),
                                 n_banks=self.fan_out)
        w = self.weight_matrix(mask)
        return add(matmul(x, transpose(w)), self.bias)


class Conv2d(Layer):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int,
                 rng: np.random.Generator):
        bound = 1.0 / np.sqrt(c_in * kernel * kernel)
        self.kernels = Tensor(rng.uniform(-bound, bound,
                                          (c_out, c_in, kernel, kernel)),
                              requires_grad=True)
        self.stride = stride

    def parameters(self):
        return [self.kernels]

    def param_names(self):
        return ["kernels"]

    def forward(self, x, ctx):
        return conv2d(x, self.kernels, self.stride)


class MaxPool2d(Layer):
    def __init__(self, window: int):
        self.window = window

    def forward(self, x, ctx):
        return maxpool2d(x, self.window)


class QuantumFeatures(Layer):
    """Circuit expectation values as features, one column per observable.

    Angle encoding feeds each input coordinate into its data slots; amplitude
    encoding prepares the normalized input as the initial state. Parameter
    gradients use the shift rule; input gradients use per-occurrence shifts
    (angle) or the quadratic-form derivative (amplitude).
    """

    def __init__(self, circuit: qsim.CircuitSpec, encoding: str,
                 rng: np.random.Generator,
                 observables: list[qsim.PauliString] | None = None):
        if encoding not in ("angle", "amplitude"):
            raise ConfigurationError(f"unknown encoding {encoding!r}")
        self.circuit = circuit
        self.encoding = encoding
        self.observables = observables or [
            qsim.single_z(circuit.n_qubits, q) for q in range(circuit.n_qubits)]
        self.params = Tensor(rng.uniform(-np.pi, np.pi, circuit.n_param_slots),
                             requires_grad=True)

    def parameters(self):
        return [self.params]

    def param_names(self):
        return ["params"]

    @property
    def n_features(self) -> int:
        return len(self.observables)

    def _states(self, xd: np.ndarray, circuit: qsim.CircuitSpec):
        if self.encoding == "angle":
            return [qsim.run(circuit, data=row, params=self.params.data)
                    for row in xd]
        return [qsim.run(circuit, params=self.params.data,
                         initial_state=qsim.amplitude_encode(row))
                for row in xd]

    def forward(self, x, ctx):
        circuit = ctx.get("circuit_override") or self.circuit
        xd = x.data
        if xd.ndim != 2:
            raise ConfigurationError(
                f"quantum layer expects (batch, features), got {x.shape}")
        if self.encoding == "angle" and xd.shape[1] != circuit.n_data_slots:
            raise ConfigurationError(
                f"{xd.shape[1]} features do not fill {circuit.n_data_slots} "
                f"data slots")
        states = self._states(xd, circuit)
        feats = np.array([[qsim.expectation(s, obs) for obs in self.observables]
                          for s in states])
        params = self.params

        def backward(g):
            if params.requires_grad:
                gp = np.zeros_like(params.data)
                for k in range(params.data.size):
                    for i, row in enumerate(xd):
                        init = None
                        data = row
                        if self.encoding == "amplitude":
                            init = qsim.amplitude_encode(row)
                            data = None
                        for j, obs in enumerate(self.observables):
                            if g[i, j] == 0.0:
                                continue
                            gp[k] += g[i, j] * qsim.parameter_shift_grad(
                                circuit, data, params.data, obs, k,
                                kind="param", initial_state=init)
                _accumulate(params, gp)
            if x.requires_grad:
                gx = np.zeros_like(xd)
                if self.encoding == "angle":
                    for i, row in enumerate(xd):
                        for m in range(xd.shape[1]):
                            for j, obs in enumerate(self.observables):
                                if g[i, j] == 0.0:
                                    continue
                                gx[i, m] += g[i, j] * qsim.parameter_shift_grad(
                                    circuit, row, params.data, obs, m,
                                    kind="data")
                else:
                    mats = [np.real(qsim.extract_W(circuit, obs,
                                                   params=params.data))
                            for obs in self.observables]
                    for i, row in enumerate(xd):
                        z = np.zeros(mats[0].shape[0])
                        z[:row.size] = row
                        sq = float(z @ z)
                        for j, w in enumerate(mats):
                            if g[i, j] == 0.0:
                                continue
                            o = float(z @ w @ z) / sq
                            dz = 2.0 * (w @ z - o * z) / sq
                            gx[i] += g[i, j] * dz[:row.size]
                _accumulate(x, gx)

        return _make(feats, (x, params), backward)


def capacity_check(n_pool: int, subset_size: int, fan_in: int) -> None:
    from math import comb
    if comb(n_pool, subset_size) < fan_in:
        raise CapacityError(
            f"C({n_pool},{subset_size}) = {comb(n_pool, subset_size)} cannot "
            f"cover fan_in {fan_in}")
