"""Dense statevector simulation of small rotation/CNOT circuits.

Qubit 0 is the least significant bit of the amplitude index. Circuits are
flat gate lists; a rotation angle can be bound, or refer to a data slot
(filled per sample) or a parameter slot (filled from the trainable vector).
Besides simulation this module carries the symbolic half-angle expansion of
circuit outputs into signed products of cosines, used as an independent
cross-check of the simulator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .seeding import rng_for

ROTATIONS = ("Rx", "Ry", "Rz")
GATE_NAMES = ROTATIONS + ("H", "CNOT")
MAX_QUBITS = 16

_H_MATRIX = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)


@dataclass(frozen=True)
class Gate:
    """One circuit element; rotations carry exactly one angle source."""

    name: str
    target: int
    control: int | None = None
    angle: float | None = None
    data_slot: int | None = None
    param_slot: int | None = None

    def __post_init__(self):
        if self.name not in GATE_NAMES:
            raise ConfigurationError(f"unknown gate {self.name!r}")
        sources = [s for s in (self.angle, self.data_slot, self.param_slot)
                   if s is not None]
        if self.name in ROTATIONS:
            if len(sources) != 1:
                raise ConfigurationError(
                    f"{self.name} needs exactly one of angle/data_slot/"
                    f"param_slot, got {len(sources)}")
        elif sources:
            raise ConfigurationError(f"{self.name} takes no angle")
        if self.name == "CNOT":
            if self.control is None:
                raise ConfigurationError("CNOT needs a control qubit")
            if self.control == self.target:
                raise ConfigurationError("CNOT control equals target")
        elif self.control is not None:
            raise ConfigurationError(f"{self.name} takes no control qubit")


@dataclass(frozen=True)
class CircuitSpec:
    """An ordered gate list over ``n_qubits`` wires."""

    n_qubits: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigurationError(
                f"n_qubits must sit in [1, {MAX_QUBITS}], got {self.n_qubits}")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if not 0 <= g.target < self.n_qubits:
                raise IndexError(f"target {g.target} out of range for "
                                 f"{self.n_qubits} qubits")
            if g.control is not None and not 0 <= g.control < self.n_qubits:
                raise IndexError(f"control {g.control} out of range for "
                                 f"{self.n_qubits} qubits")

    @property
    def n_data_slots(self) -> int:
        slots = [g.data_slot for g in self.gates if g.data_slot is not None]
        return max(slots) + 1 if slots else 0

    @property
    def n_param_slots(self) -> int:
        slots = [g.param_slot for g in self.gates if g.param_slot is not None]
        return max(slots) + 1 if slots else 0

    def to_json(self) -> str:
        rows = []
        for g in self.gates:
            row = {"gate": g.name, "target": g.target}
            if g.control is not None:
                row["control"] = g.control
            if g.angle is not None:
                row["angle"] = g.angle
            if g.data_slot is not None:
                row["data_slot"] = g.data_slot
            if g.param_slot is not None:
                row["param_slot"] = g.param_slot
            rows.append(row)
        return json.dumps({"n_qubits": self.n_qubits, "gates": rows})

    @classmethod
    def from_json(cls, text: str) -> "CircuitSpec":
        doc = json.loads(text)
        gates = [Gate(name=row["gate"], target=row["target"],
                      control=row.get("control"), angle=row.get("angle"),
                      data_slot=row.get("data_slot"),
                      param_slot=row.get("param_slot"))
                 for row in doc["gates"]]
        return cls(n_qubits=doc["n_qubits"], gates=tuple(gates))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "CircuitSpec":
        return cls.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# state preparation and gate action
# ---------------------------------------------------------------------------

def new_state(n_qubits: int) -> np.ndarray:
    state = np.zeros(2 ** n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def amplitude_encode(z) -> np.ndarray:
    """Normalized input vector as basis amplitudes, zero-padded to 2^n."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(z)
    if norm == 0.0:
        from .errors import DataError
        raise DataError("cannot amplitude-encode the zero vector")
    n_qubits = max(1, int(np.ceil(np.log2(len(z)))))
    state = np.zeros(2 ** n_qubits, dtype=complex)
    state[:len(z)] = z / norm
    return state


def _rotation_matrix(name: str, angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
    if name == "Rx":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if name == "Ry":
        return np.array([[c, -s], [s, c]])
    return np.array([[c - 1j * s, 0.0], [0.0, c + 1j * s]])  # Rz


def _apply_single(state: np.ndarray, m: np.ndarray, qubit: int) -> np.ndarray:
    block = 2 ** qubit
    s = state.reshape(-1, 2, block)
    out = np.empty_like(s)
    out[:, 0, :] = m[0, 0] * s[:, 0, :] + m[0, 1] * s[:, 1, :]
    out[:, 1, :] = m[1, 0] * s[:, 0, :] + m[1, 1] * s[:, 1, :]
    return out.reshape(-1)

def _apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    idx = np.arange(state.size)
    sel = (idx >> control) & 1 == 1
    out = state.copy()
    out[idx[sel]] = state[idx[sel] ^ (1 << target)]
    return out


def apply_gate(state: np.ndarray, gate: Gate, angle: float | None = None) -> np.ndarray:
    """Apply one gate; bound rotations use their own angle if none is given."""
    n_qubits = int(np.log2(state.size))
    if not 0 <= gate.target < n_qubits:
        raise IndexError(f"target {gate.target} out of range for "
                         f"{n_qubits}-qubit state")
    if gate.name == "CNOT":
        if not 0 <= gate.control < n_qubits:
            raise IndexError(f"control {gate.control} out of range")
        return _apply_cnot(state, gate.control, gate.target)
    if gate.name == "H":
        return _apply_single(state, _H_MATRIX, gate.target)
    if angle is None:
        angle = gate.angle
    if angle is None:
        raise ConfigurationError(f"{gate.name} gate has no bound angle")
    return _apply_single(state, _rotation_matrix(gate.name, angle), gate.target)


def _resolve_angle(gate: Gate, data, params) -> float | None:
    if gate.name not in ROTATIONS:
        return None
    if gate.angle is not None:
        return float(gate.angle)
    if gate.data_slot is not None:
        if data is None or gate.data_slot >= len(data):
            raise ConfigurationError(
                f"data slot {gate.data_slot} is unfilled")
        return float(data[gate.data_slot])
    if params is None or gate.param_slot >= len(params):
        raise ConfigurationError(
            f"parameter slot {gate.param_slot} is unfilled")
    return float(params[gate.param_slot])


def run(circuit: CircuitSpec, data=None, params=None,
        initial_state: np.ndarray | None = None,
        shift: tuple[int, float] | None = None) -> np.ndarray:
    """Execute the circuit from |0..0> (or a prepared state).

    ``shift`` optionally adds an offset to the resolved angle of one gate,
    addressed by its position in the gate list (parameter-shift evaluations).
    """
    state = new_state(circuit.n_qubits) if initial_state is None \
        else initial_state.astype(complex)
    if state.size != 2 ** circuit.n_qubits:
        raise ConfigurationError(
            f"initial state has {state.size} amplitudes, circuit needs "
            f"{2 ** circuit.n_qubits}")
    for i, gate in enumerate(circuit.gates):
        angle = _resolve_angle(gate, data, params)
        if shift is not None and shift[0] == i:
            angle = angle + shift[1]
        state = apply_gate(state, gate, angle)
    return state


def angle_encode_run(circuit: CircuitSpec, data, params=None) -> np.ndarray:
    """Run with the sample loaded through the circuit's data slots."""
    return run(circuit, data=data, params=params)


# ---------------------------------------------------------------------------
# Pauli measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PauliString:
    """One letter in {I, X, Y, Z} per qubit; letters[0] acts on qubit 0."""

    letters: str

    def __post_init__(self):
        if not self.letters or any(ch not in "IXYZ" for ch in self.letters):
            raise ConfigurationError(
                f"Pauli string must be non-empty over IXYZ, got {self.letters!r}")

    def __len__(self) -> int:
        return len(self.letters)


def single_z(n_qubits: int, wire: int) -> PauliString:
    letters = ["I"] * n_qubits
    letters[wire] = "Z"
    return PauliString("".join(letters))


def pauli_apply(state: np.ndarray, pauli: PauliString) -> np.ndarray:
    """A|psi> for a Pauli string A (permutation plus diagonal phases)."""
    n_qubits = int(np.log2(state.size))
    if len(pauli) != n_qubits:
        raise ConfigurationError(
            f"Pauli string length {len(pauli)} != {n_qubits} qubits")
    idx = np.arange(state.size)
    flip = 0
    phase = np.ones(state.size, dtype=complex)
    for q, letter in enumerate(pauli.letters):
        bit = (idx >> q) & 1
        if letter == "X":
            flip |= 1 << q
        elif letter == "Y":
            flip |= 1 << q
            phase = phase * (1j * (1.0 - 2.0 * bit))
        elif letter == "Z":
            phase = phase * (1.0 - 2.0 * bit)
    out = np.zeros_like(state)
    out[idx ^ flip] = phase * state
    return out


def expectation(state: np.ndarray, pauli: PauliString) -> float:
    """<psi|A|psi>, real and in [-1, 1] for a unit state."""
    return float(np.real(np.vdot(state, pauli_apply(state, pauli))))


def extract_W(circuit: CircuitSpec, pauli: PauliString,
              params=None) -> np.ndarray:
    """Conjugated observable U^dag A U as a dense Hermitian matrix.

    The circuit must contain no data slots (it is the fixed operator acting
    on an amplitude-encoded state).
    """
    if circuit.n_data_slots:
        raise ConfigurationError(
            "extract_W needs a data-free circuit; encode inputs by amplitude")
    if circuit.n_qubits > 10:
        raise ConfigurationError("extract_W is dense; capped at 10 qubits")
    dim = 2 ** circuit.n_qubits
    u = np.empty((dim, dim), dtype=complex)
    for col in range(dim):
        basis = np.zeros(dim, dtype=complex)
        basis[col] = 1.0
        u[:, col] = run(circuit, params=params, initial_state=basis)
    a_u = np.empty_like(u)
    for col in range(dim):
        a_u[:, col] = pauli_apply(u[:, col], pauli)
    w = u.conj().T @ a_u
    return 0.5 * (w + w.conj().T)  # symmetrize away last-bit noise


# ---------------------------------------------------------------------------
# gradients and dropout
# ---------------------------------------------------------------------------

def _slot_occurrences(circuit: CircuitSpec, slot: int, kind: str) -> list[int]:
    attr = "param_slot" if kind == "param" else "data_slot"
    return [i for i, g in enumerate(circuit.gates)
            if getattr(g, attr) == slot]


def parameter_shift_grad(circuit: CircuitSpec, data, params,
                         pauli: PauliString, slot: int,
                         kind: str = "param",
                         initial_state: np.ndarray | None = None) -> float:
    """Exact d<A>/d(slot) from +-pi/2 shifted evaluations.

    When a slot feeds several gates the rule is applied per occurrence and
    summed (product rule); the builders below use each parameter slot once.
    """
    if kind not in ("param", "data"):
        raise ConfigurationError(f"slot kind must be param or data, got {kind}")
    n_slots = circuit.n_param_slots if kind == "param" else circuit.n_data_slots
    if not 0 <= slot < n_slots:
        raise IndexError(f"{kind} slot {slot} out of range [0, {n_slots})")
    grad = 0.0
    for gate_index in _slot_occurrences(circuit, slot, kind):
        plus = expectation(run(circuit, data, params, initial_state,
                               shift=(gate_index, np.pi / 2)), pauli)
        minus = expectation(run(circuit, data, params, initial_state,
                                shift=(gate_index, -np.pi / 2)), pauli)
        grad += 0.5 * (plus - minus)
    return grad


def rz_dropout(circuit: CircuitSpec, p: float, seed: int) -> CircuitSpec:
    """Remove each Rz gate independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"dropout probability must sit in [0,1], got {p}")
    rng = rng_for(seed, "rz-dropout")
    kept = tuple(g for g in circuit.gates
                 if g.name != "Rz" or rng.random() >= p)
    return replace(circuit, gates=kept)


# ---------------------------------------------------------------------------
# circuit builders (hardware-efficient layers)
# ---------------------------------------------------------------------------

def angle_feature_circuit(n_qubits: int, n_layers: int,
                          reuploads: int = 1) -> CircuitSpec:
    """Data-upload blocks interleaved with CNOT-ladder + Ry,Rz layers.

    Feature i enters as Ry(data_i) on qubit i. The ``n_layers`` trainable
    layers are split evenly across ``reuploads`` upload blocks; each layer
    holds one CNOT ladder followed by per-qubit Ry and Rz parameter gates.
    """
    if reuploads < 1 or n_layers < reuploads:
        raise ConfigurationError(
            f"need 1 <= reuploads <= n_layers, got {reuploads}, {n_layers}")
    gates: list[Gate] = []
    param = 0
    per_block = [n_layers // reuploads] * reuploads
    for i in range(n_layers % reuploads):
        per_block[i] += 1
    for block_layers in per_block:
        for q in range(n_qubits):
            gates.append(Gate("Ry", target=q, data_slot=q))
        for _ in range(block_layers):
            for q in range(n_qubits - 1):
                gates.append(Gate("CNOT", target=q + 1, control=q))
            for q in range(n_qubits):
                gates.append(Gate("Ry", target=q, param_slot=param))
                param += 1
                gates.append(Gate("Rz", target=q, param_slot=param))
                param += 1
    return CircuitSpec(n_qubits=n_qubits, gates=tuple(gates))


def amplitude_feature_circuit(n_qubits: int, n_layers: int) -> CircuitSpec:
    """Trainable operator applied after amplitude encoding (no data slots)."""
    gates: list[Gate] = []
    param = 0
    for _ in range(n_layers):
        for q in range(n_qubits):
            gates.append(Gate("Ry", target=q, param_slot=param))
            param += 1
            gates.append(Gate("Rz", target=q, param_slot=param))
            param += 1
        for q in range(n_qubits - 1):
            gates.append(Gate("CNOT", target=q + 1, control=q))
    return CircuitSpec(n_qubits=n_qubits, gates=tuple(gates))


# ---------------------------------------------------------------------------
# symbolic half-angle expansion (independent cross-check of the simulator)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigPolyTerm:
    """One signed product of cos(arg/2 + q) factors.

    ``factors`` holds (kind, ref, quarter_turn) triples where kind is
    "data"/"param"/"const", ref the slot index or bound angle, and
    quarter_turn flags a pi/2 phase offset.
    """

    sign: int
    factors: tuple[tuple[str, float, bool], ...]

    def evaluate(self, data=None, params=None) -> float:
        value = float(self.sign)
        for kind, ref, quarter in self.factors:
            if kind == "data":
                arg = float(data[int(ref)])
            elif kind == "param":
                arg = float(params[int(ref)])
            else:
                arg = float(ref)
            value *= np.cos(arg / 2.0 + (np.pi / 2.0 if quarter else 0.0))
        return value


_MAX_EXPANSION_TERMS = 1 << 18


def _gate_factor(gate: Gate) -> tuple[str, float]:
    if gate.data_slot is not None:
        return ("data", float(gate.data_slot))
    if gate.param_slot is not None:
        return ("param", float(gate.param_slot))
    return ("const", float(gate.angle))


def _expand_amplitudes(circuit: CircuitSpec):
    """Per basis state: list of (complex-integer coeff, factor tuple) terms.

    Every rotation splits each live term into a cosine branch and a sine
    branch (sin x = -cos(x + pi/2), sign folded into the coefficient), so
    coefficients stay in {1,-1,i,-i} and factor products stay exact.
    """
    dim = 2 ** circuit.n_qubits
    amps: list[list] = [[] for _ in range(dim)]
    amps[0] = [(1 + 0j, ())]
    n_terms = 1
    for gate in circuit.gates:
        if gate.name == "H":
            raise ConfigurationError(
                "half-angle expansion covers rotation/CNOT circuits only")
        if gate.name == "CNOT":
            new = [[] for _ in range(dim)]
            for b in range(dim):
                target = b ^ (1 << gate.target) if (b >> gate.control) & 1 else b
                new[target] = amps[b]
            amps = new
            continue
        kind, ref = _gate_factor(gate)
        cos_f = (kind, ref, False)
        sin_f = (kind, ref, True)  # equals -sin(arg/2)
        new = [[] for _ in range(dim)]
        bit_mask = 1 << gate.target
        for b in range(dim):
            if not amps[b]:
                continue
            bit = (b >> gate.target) & 1
            flip = b ^ bit_mask
            for coeff, factors in amps[b]:
                # diagonal branch
                if gate.name == "Rz":
                    # e^{-i a/2} for bit 0, e^{+i a/2} for bit 1
                    new[b].append((coeff, factors + (cos_f,)))
                    sgn = -1j if bit == 0 else 1j
                    new[b].append((sgn * -coeff, factors + (sin_f,)))
                    continue
                new[b].append((coeff, factors + (cos_f,)))
                if gate.name == "Rx":
                    new[flip].append((1j * coeff, factors + (sin_f,)))
                else:  # Ry: +sin into 1<-0, -sin into 0<-1; factor is -sin
                    sgn = -1 if bit == 0 else 1
                    new[flip].append((sgn * coeff, factors + (sin_f,)))
        amps = new
        n_terms *= 2
        if n_terms * 1.0 > _MAX_EXPANSION_TERMS:
            raise ConfigurationError(
                "circuit too deep for the symbolic expansion cross-check")
    return amps


def trig_poly_terms(circuit: CircuitSpec, pauli: PauliString) -> list[TrigPolyTerm]:
    """Expand <psi|A|psi> into signed cosine products per the half-angle form.

    Cross terms with imaginary coefficients cancel pairwise; after collecting
    identical factor products the surviving integer coefficients are emitted
    as repeated unit-sign terms.
    """
    amps = _expand_amplitudes(circuit)
    flip = 0
    for q, letter in enumerate(pauli.letters):
        if letter in ("X", "Y"):
            flip |= 1 << q
    collected: dict[tuple, complex] = {}
    for b in range(len(amps)):
        bra = amps[b ^ flip]
        ket = amps[b]
        if not bra or not ket:
            continue
        # phase of A|b> (single basis state), matching pauli_apply
        phase = 1 + 0j
        for q, letter in enumerate(pauli.letters):
            bit = (b >> q) & 1
            if letter == "Y":
                phase *= 1j * (1.0 - 2.0 * bit)
            elif letter == "Z":
                phase *= 1.0 - 2.0 * bit
        for c1, f1 in bra:
            for c2, f2 in ket:
                coeff = np.conj(c1) * phase * c2
                key = tuple(sorted(f1 + f2))
                collected[key] = collected.get(key, 0j) + coeff
    terms: list[TrigPolyTerm] = []
    for factors, coeff in sorted(collected.items()):
        real = coeff.real
        if abs(coeff.imag) > 1e-12:
            raise AssertionError("imaginary residue in collected expansion")
        count = int(round(real))
        if count == 0:
            continue
        sign = 1 if count > 0 else -1
        terms.extend(TrigPolyTerm(sign=sign, factors=factors)
                     for _ in range(abs(count)))
    return terms


def trig_poly_expectation(terms: list[TrigPolyTerm], data=None,
                          params=None) -> float:
    return float(sum(t.evaluate(data, params) for t in terms))
