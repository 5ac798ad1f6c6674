import functools

import numpy as np
import pytest

from qcam.qsim import Gate, gate_matrix


def dense_operator(gate: Gate, num_qubits: int) -> np.ndarray:
    """Full 2^n x 2^n matrix of a (controlled) gate built from Kronecker products.

    Independent of the simulator's index-pairing kernel: the operator is
    P_ctl (x) U + (I - P_ctl) (x) I, assembled qubit by qubit.
    """
    eye = np.eye(2, dtype=complex)
    proj = [np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)]
    ctl = dict(gate.controls)

    def kron_all(ops):
        # qubit 0 is the least significant bit, so it goes last in the product
        return functools.reduce(np.kron, reversed(ops))

    active = [eye] * num_qubits
    for q, v in ctl.items():
        active[q] = proj[v]
    active[gate.target] = gate_matrix(gate.kind, gate.theta)
    passive_terms = []
    # I - P_ctl expands to the sum over control patterns that miss at least one value
    for pattern in np.ndindex(*(2,) * len(ctl)):
        if all(p == v for p, v in zip(pattern, ctl.values())):
            continue
        ops = [eye] * num_qubits
        for (q, _), p in zip(ctl.items(), pattern):
            ops[q] = proj[p]
        passive_terms.append(kron_all(ops))
    out = kron_all(active)
    for t in passive_terms:
        out = out + t
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
