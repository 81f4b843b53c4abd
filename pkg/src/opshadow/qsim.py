"""Dense complex linear algebra for small qubit registers (N <= 8).

Everything is little-endian and 0-based (see :mod:`opshadow.paulis`).
Gates applied to ``targets = (q0, q1)`` use q0 as the most significant bit
of the gate-matrix index, so ``cnot()`` with ``targets=(control, target)``
does the expected thing.

All types are immutable values; operations are pure functions and safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .paulis import string_axis

ATOL_NORM = 1e-10
ATOL_HERMITIAN = 1e-10
ATOL_TRACE = 1e-10
ATOL_UNITARY = 1e-10
ATOL_KRAUS = 1e-8
PSD_FLOOR = -1e-9


def _frozen_array(obj, name, value, dtype=complex):
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)


# ---------------------------------------------------------------------------
# tensor kernels (raw ndarray in / ndarray out)
# ---------------------------------------------------------------------------

def _contract(tensor, op, positions):
    """Contract ``op`` (2^k x 2^k) into the given axis positions of ``tensor``."""
    k = len(positions)
    op_t = np.asarray(op, dtype=complex).reshape((2,) * (2 * k))
    out = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), positions))
    return np.moveaxis(out, range(k), positions)


def apply_unitary_vec(amps, u, targets, n):
    """u acting on ``targets`` of a length-2^n amplitude vector."""
    t = amps.reshape((2,) * n)
    t = _contract(t, u, [string_axis(n, q) for q in targets])
    return t.reshape(-1)


def sandwich(mat, k, targets, n):
    """K M K^dag with K acting on ``targets`` of a 2^n-dim operator."""
    t = mat.reshape((2,) * (2 * n))
    rows = [string_axis(n, q) for q in targets]
    cols = [n + string_axis(n, q) for q in targets]
    t = _contract(t, k, rows)
    t = _contract(t, np.conj(k), cols)
    d = 2**n
    return t.reshape(d, d)


def sandwich_adjoint(mat, k, targets, n):
    """K^dag M K, the Heisenberg-side counterpart of :func:`sandwich`."""
    return sandwich(mat, np.conj(k).T, targets, n)


def partial_trace_mat(mat, keep, n):
    """Trace out all qubits not in ``keep``; returns a 2^|keep| matrix.

    An empty ``keep`` returns the scalar trace as a 1x1 matrix.
    """
    keep = sorted(set(keep))
    if any(q < 0 or q >= n for q in keep):
        raise ValueError("keep set outside register")
    t = mat.reshape((2,) * (2 * n))
    # einsum with matched labels for traced row/col axes
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise ValueError("register too large")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for q in range(n):
        if q not in keep:
            col[string_axis(n, q)] = row[string_axis(n, q)]
    out_row = [row[string_axis(n, q)] for q in sorted(keep, reverse=True)]
    out_col = [col[string_axis(n, q)] for q in sorted(keep, reverse=True)]
    spec = "".join(row + col) + "->" + "".join(out_row + out_col)
    k = len(keep)
    return np.einsum(spec, t).reshape(2**k, 2**k)


def partial_transpose_mat(mat, subset, n):
    """Transpose the row/col axes of the qubits in ``subset``."""
    subset = sorted(set(subset))
    if any(q < 0 or q >= n for q in subset):
        raise ValueError("subset outside register")
    t = mat.reshape((2,) * (2 * n))
    perm = list(range(2 * n))
    for q in subset:
        r = string_axis(n, q)
        perm[r], perm[n + r] = perm[n + r], perm[r]
    d = 2**n
    return t.transpose(perm).reshape(d, d)


def random_unitary(dim, rng) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        _frozen_array(self, "amplitudes", self.amplitudes)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError("amplitude vector has wrong length")
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > ATOL_NORM:
            raise ValueError(f"state norm {norm} deviates from 1 beyond {ATOL_NORM}")

    @classmethod
    def computational(cls, n_qubits, index=0):
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian trace-1 operator; ``physical=False`` relaxes positivity only."""

    n_qubits: int
    matrix: np.ndarray = field(repr=False)
    physical: bool = True

    def __post_init__(self):
        _frozen_array(self, "matrix", self.matrix)
        d = 2**self.n_qubits
        if self.matrix.shape != (d, d):
            raise ValueError("density matrix has wrong shape")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > ATOL_HERMITIAN:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(self.matrix).real - 1.0) > ATOL_TRACE:
            raise ValueError("density matrix trace deviates from 1")
        if self.physical:
            lo = np.linalg.eigvalsh(self.matrix)[0]
            if lo < PSD_FLOOR:
                raise ValueError(f"minimum eigenvalue {lo} below {PSD_FLOOR}")

    @classmethod
    def maximally_mixed(cls, n_qubits):
        d = 2**n_qubits
        return cls(n_qubits, np.eye(d, dtype=complex) / d)


@dataclass(frozen=True)
class GateMatrix:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        _frozen_array(self, "matrix", self.matrix)
        if self.matrix.shape not in ((2, 2), (4, 4)):
            raise ValueError("gates must act on 1 or 2 qubits")
        dev = np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(self.matrix.shape[0])))
        if dev > ATOL_UNITARY:
            raise ValueError(f"gate deviates from unitarity by {dev}")

    @property
    def arity(self) -> int:
        return 1 if self.matrix.shape == (2, 2) else 2


@dataclass(frozen=True)
class KrausChannel:
    """Trace-preserving channel given by Kraus operators.

    ``targets=None`` means the operators act on the full register; otherwise
    they are 2^k-dimensional and act on the listed qubits. A single element
    is equivalent to a unitary channel.
    """

    operators: tuple = field(repr=False)
    targets: tuple | None = None

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.operators)
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        dim = ops[0].shape[0]
        if any(k.shape != (dim, dim) for k in ops):
            raise ValueError("Kraus operators must share a square shape")
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(self.targets))
            if dim != 2 ** len(self.targets):
                raise ValueError("Kraus dimension does not match target count")
        comp = sum(k.conj().T @ k for k in ops)
        dev = np.max(np.abs(comp - np.eye(dim)))
        if dev > ATOL_KRAUS:
            raise ValueError(f"Kraus completeness violated by {dev}")

    @property
    def is_unitary(self) -> bool:
        return len(self.operators) == 1

    def _resolve_targets(self, n):
        if self.targets is not None:
            return self.targets
        dim = self.operators[0].shape[0]
        if dim != 2**n:
            raise ValueError("channel dimension does not match register")
        return tuple(range(n - 1, -1, -1))  # full register, high bit first

    def apply_mat(self, mat, n):
        targets = self._resolve_targets(n)
        return sum(sandwich(mat, k, targets, n) for k in self.operators)

    def apply_adjoint_mat(self, mat, n):
        targets = self._resolve_targets(n)
        return sum(sandwich_adjoint(mat, k, targets, n) for k in self.operators)


# ---------------------------------------------------------------------------
# elementary gates
# ---------------------------------------------------------------------------

def hadamard() -> np.ndarray:
    """X-Hadamard (X+Z)/sqrt(2): swaps the X and Z eigenbases."""
    return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def hadamard_y() -> np.ndarray:
    """Y-Hadamard (Y+Z)/sqrt(2): swaps the Y and Z eigenbases."""
    return np.array([[1, -1j], [1j, -1]], dtype=complex) / math.sqrt(2)


def sqrt_x() -> np.ndarray:
    return np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex) / 2


def rot_z(theta) -> np.ndarray:
    """exp(-i theta Z / 2)."""
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def cnot() -> np.ndarray:
    """CNOT with targets (control, target); control is the high index bit."""
    m = np.eye(4, dtype=complex)
    m[[2, 3]] = m[[3, 2]]
    return m


# ---------------------------------------------------------------------------
# operations on the typed values
# ---------------------------------------------------------------------------

def apply_gate(state: StateVector, gate: GateMatrix, targets) -> StateVector:
    targets = tuple(targets)
    n = state.n_qubits
    if len(set(targets)) != len(targets):
        raise ValueError("targets must be distinct")
    if any(q < 0 or q >= n for q in targets):
        raise IndexError("target outside register")
    if gate.arity != len(targets):
        raise ValueError("gate arity does not match target count")
    return StateVector(n, apply_unitary_vec(state.amplitudes, gate.matrix, targets, n))


def evolve_density(rho: DensityOperator, channel: KrausChannel) -> DensityOperator:
    out = channel.apply_mat(rho.matrix, rho.n_qubits)
    return DensityOperator(rho.n_qubits, out, physical=rho.physical)


def partial_trace(rho: DensityOperator, keep) -> DensityOperator:
    out = partial_trace_mat(rho.matrix, keep, rho.n_qubits)
    return DensityOperator(len(set(keep)), out, physical=rho.physical)


def partial_transpose(rho: DensityOperator, subset) -> DensityOperator:
    out = partial_transpose_mat(rho.matrix, subset, rho.n_qubits)
    return DensityOperator(rho.n_qubits, out, physical=False)


def spectral_functionals(rho) -> dict:
    """Base-2 spectral quantities of a Hermitian trace-1 operator.

    Returns Renyi entropies of order 2, 3 and infinity, the von Neumann
    entropy (NaN when eigenvalues fall below the -1e-9 floor, as for
    partially transposed inputs), and ``log_negativity_input``, the log2
    trace norm of the input itself (pass a partially transposed operator
    to obtain a logarithmic negativity).
    """
    mat = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    if np.max(np.abs(mat - mat.conj().T)) > ATOL_HERMITIAN:
        raise ValueError("spectral functionals need a Hermitian input")
    lam = np.linalg.eigvalsh(mat)
    p2 = float(np.sum(lam**2))
    p3 = float(np.sum(lam**3))
    out = {
        "renyi_2": -math.log2(p2),
        "renyi_3": -0.5 * math.log2(p3) if p3 > 0 else math.nan,
        "renyi_inf": -math.log2(lam[-1]) if lam[-1] > 0 else math.nan,
        "log_negativity_input": math.log2(float(np.sum(np.abs(lam)))),
    }
    if lam[0] < PSD_FLOOR:
        out["von_neumann"] = math.nan
    else:
        pos = np.clip(lam, 0.0, None)
        pos = pos[pos > 0]
        out["von_neumann"] = float(-np.sum(pos * np.log2(pos)))
    return out
