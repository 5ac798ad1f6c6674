"""Dense statevector simulator.

Qubit 0 is the least significant bit of the basis index. Gates are applied by
pairing basis indices that differ only in the target bit and that satisfy every
control; all other amplitudes are left untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .rng import make_rng

MAX_QUBITS = 24
GATE_KINDS = ("X", "H", "Z", "RX", "RY", "RZ")
_ROTATIONS = ("RX", "RY", "RZ")


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def __len__(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    controls: tuple[tuple[int, int], ...] = ()
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "controls", tuple((int(q), int(v)) for q, v in self.controls))
        seen = set()
        for q, v in self.controls:
            if v not in (0, 1):
                raise ValueError(f"control value must be 0 or 1, got {v}")
            if q == self.target:
                raise ValueError(f"qubit {q} is both control and target")
            if q in seen:
                raise ValueError(f"qubit {q} listed twice as control")
            seen.add(q)

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.target, *(q for q, _ in self.controls))

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.theta)

    def inverse(self) -> "Gate":
        if self.kind in _ROTATIONS:
            return Gate(self.kind, self.target, self.controls, -self.theta)
        return self

    def __str__(self) -> str:
        name = self.kind if self.kind not in _ROTATIONS else f"{self.kind}({self.theta:.4g})"
        if self.controls:
            ctl = ",".join(f"q{q}={v}" for q, v in self.controls)
            return f"C[{ctl}]-{name}(q{self.target})"
        return f"{name}(q{self.target})"


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            _check_gate(g, self.num_qubits)

    def append(self, gate: Gate) -> "Circuit":
        _check_gate(gate, self.num_qubits)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(self.num_qubits, [g.inverse() for g in reversed(self.gates)])

    def __len__(self) -> int:
        return len(self.gates)


@dataclass
class MeasurementHistogram:
    """Counts per basis index, stored densely.

    ``counts`` is normally integral; fractional counts are accepted so exact
    probabilities can be decoded as an infinite-shot histogram.
    """

    num_qubits: int
    counts: np.ndarray

    @property
    def shots(self):
        total = self.counts.sum()
        return int(total) if np.issubdtype(self.counts.dtype, np.integer) else float(total)

    def as_dict(self) -> dict[int, int]:
        nz = np.flatnonzero(self.counts)
        return {int(b): self.counts[b].item() for b in nz}

    @classmethod
    def from_dict(cls, num_qubits: int, counts: dict[int, float]) -> "MeasurementHistogram":
        dim = 1 << num_qubits
        values = list(counts.values())
        integral = all(float(v).is_integer() for v in values)
        arr = np.zeros(dim, dtype=np.int64 if integral else np.float64)
        for b, c in counts.items():
            if not 0 <= b < dim:
                raise ValueError(f"basis index {b} out of range for {num_qubits} qubits")
            if c < 0:
                raise ValueError(f"negative count {c} at basis {b}")
            arr[b] = c
        return cls(num_qubits, arr)

    def to_csv(self) -> str:
        lines = ["basis_index,count"]
        lines += [f"{b},{c}" for b, c in self.as_dict().items()]
        return "\n".join(lines) + "\n"


def _check_gate(gate: Gate, num_qubits: int) -> None:
    for q in gate.qubits:
        if not 0 <= q < num_qubits:
            raise ValueError(f"qubit index {q} out of range for {num_qubits} qubits")


def gate_matrix(kind: str, theta: float = 0.0) -> np.ndarray:
    if kind == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    if kind == "Z":
        return np.array([[1, 0], [0, -1]], dtype=complex)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[complex(c, -s), 0], [0, complex(c, s)]], dtype=complex)
    raise ValueError(f"unknown gate kind {kind!r}")


# Convenience constructors. Controls are given as qubit -> required value.

def x(target: int, controls: Sequence[tuple[int, int]] = ()) -> Gate:
    return Gate("X", target, tuple(controls))


def h(target: int) -> Gate:
    return Gate("H", target)


def z(target: int, controls: Sequence[tuple[int, int]] = ()) -> Gate:
    return Gate("Z", target, tuple(controls))


def rx(theta: float, target: int, controls: Sequence[tuple[int, int]] = ()) -> Gate:
    return Gate("RX", target, tuple(controls), theta)


def ry(theta: float, target: int, controls: Sequence[tuple[int, int]] = ()) -> Gate:
    return Gate("RY", target, tuple(controls), theta)


def rz(theta: float, target: int, controls: Sequence[tuple[int, int]] = ()) -> Gate:
    return Gate("RZ", target, tuple(controls), theta)


def new_zero_state(num_qubits: int) -> StateVector:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def init_from_amplitudes(amps) -> StateVector:
    amps = np.asarray(amps, dtype=np.complex128).ravel()
    dim = amps.shape[0]
    if dim < 2 or dim & (dim - 1):
        raise ValueError(f"amplitude count must be a power of two >= 2, got {dim}")
    norm = float(np.sqrt(np.vdot(amps, amps).real))
    if norm == 0.0:
        raise ValueError("zero vector is not a quantum state")
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"amplitudes not normalized (norm {norm:.9f})")
    return StateVector(dim.bit_length() - 1, amps / norm)


@lru_cache(maxsize=4096)
def _pair_indices(num_qubits: int, target: int, controls: tuple) -> np.ndarray:
    # Basis indices with target bit 0 that satisfy every control.
    idx = np.arange(1 << num_qubits, dtype=np.int64)
    keep = (idx >> target) & 1 == 0
    for q, v in controls:
        keep &= (idx >> q) & 1 == v
    out = idx[keep]
    out.flags.writeable = False
    return out


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    _check_gate(gate, state.num_qubits)
    amps = state.amplitudes.copy()
    _apply_inplace(amps, state.num_qubits, gate)
    return StateVector(state.num_qubits, amps)


def _apply_inplace(amps: np.ndarray, num_qubits: int, gate: Gate) -> None:
    i0 = _pair_indices(num_qubits, gate.target, gate.controls)
    i1 = i0 | (1 << gate.target)
    a0 = amps[i0]
    a1 = amps[i1]
    if gate.kind == "X":
        amps[i0], amps[i1] = a1, a0
        return
    if gate.kind == "Z":
        amps[i1] = -a1
        return
    m = gate.matrix()
    if gate.kind == "RZ":
        amps[i0] = m[0, 0] * a0
        amps[i1] = m[1, 1] * a1
        return
    amps[i0] = m[0, 0] * a0 + m[0, 1] * a1
    amps[i1] = m[1, 0] * a0 + m[1, 1] * a1


def apply_circuit(state: StateVector, circuit: Circuit | Iterable[Gate]) -> StateVector:
    gates = circuit.gates if isinstance(circuit, Circuit) else list(circuit)
    if isinstance(circuit, Circuit) and circuit.num_qubits != state.num_qubits:
        raise ValueError(
            f"circuit has {circuit.num_qubits} qubits, state has {state.num_qubits}"
        )
    for g in gates:
        _check_gate(g, state.num_qubits)
    amps = state.amplitudes.copy()
    for g in gates:
        _apply_inplace(amps, state.num_qubits, g)
    return StateVector(state.num_qubits, amps)


def probabilities(state: StateVector) -> np.ndarray:
    a = state.amplitudes
    return a.real**2 + a.imag**2


def sample_measurements(state: StateVector, shots: int, seed: int) -> MeasurementHistogram:
    """Draw ``shots`` i.i.d. basis outcomes by inverse-CDF sampling."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    p = probabilities(state)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    u = make_rng(seed).random(int(shots))
    outcomes = np.searchsorted(cdf, u, side="right")
    np.minimum(outcomes, len(p) - 1, out=outcomes)
    counts = np.bincount(outcomes, minlength=len(p)).astype(np.int64)
    return MeasurementHistogram(state.num_qubits, counts)


def circuit_depth(circuit: Circuit) -> int:
    """ASAP layering over each gate's target and control qubits."""
    frontier = [0] * circuit.num_qubits
    depth = 0
    for g in circuit.gates:
        layer = 1 + max(frontier[q] for q in g.qubits)
        for q in g.qubits:
            frontier[q] = layer
        depth = max(depth, layer)
    return depth
