"""Pauli strings, dense embeddings, and the fast Pauli-basis transform.

Conventions used throughout the package:

* Qubits are 0-based and little-endian: basis index ``i`` carries bit
  ``(i >> j) & 1`` for qubit ``j``.
* A matrix on ``n`` qubits reshaped to ``(2,)*2n`` has row axis ``k``
  corresponding to qubit ``n-1-k`` (and likewise for column axes).
* Pauli-coefficient tensors have shape ``(4,)*n`` with axis ``k`` again
  corresponding to qubit ``n-1-k``; index values 0..3 mean I, X, Y, Z.
* The ``word`` of a :class:`PauliString` is written qubit-0 first, so
  ``"XZI"`` acts with X on qubit 0 and Z on qubit 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

PAULI_LETTERS = "IXYZ"

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.stack([SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z])


@dataclass(frozen=True)
class PauliString:
    """A word over {I, X, Y, Z}; position j of ``word`` addresses qubit j."""

    word: str

    def __post_init__(self):
        if not self.word or any(ch not in PAULI_LETTERS for ch in self.word):
            raise ValueError(f"invalid Pauli word {self.word!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.word)

    @property
    def weight(self) -> int:
        """Number of non-identity letters."""
        return sum(ch != "I" for ch in self.word)

    @property
    def codes(self) -> tuple[int, ...]:
        """Letter codes ordered qubit 0 upward."""
        return tuple(PAULI_LETTERS.index(ch) for ch in self.word)

    def matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix (qubit 0 = least significant bit)."""
        return kron_all([PAULIS[c] for c in self.codes])

    @classmethod
    def from_codes(cls, codes) -> "PauliString":
        return cls("".join(PAULI_LETTERS[c] for c in codes))

    @classmethod
    def single(cls, n_qubits: int, qubit: int, letter: str) -> "PauliString":
        word = ["I"] * n_qubits
        word[qubit] = letter
        return cls("".join(word))


def kron_all(factors) -> np.ndarray:
    """Kronecker product where ``factors[j]`` acts on qubit j (little-endian)."""
    return reduce(np.kron, reversed(list(factors)))


def embed(op: np.ndarray, targets, n_qubits: int) -> np.ndarray:
    """Dense embedding of a 2^k-dim operator acting on ``targets`` into n qubits.

    ``targets[0]`` addresses the most significant bit of the small operator's
    index, matching the gate conventions of :mod:`opshadow.qsim`.
    """
    targets = list(targets)
    k = len(targets)
    if op.shape != (2**k, 2**k):
        raise ValueError("operator dimension does not match target count")
    t = op.reshape((2,) * (2 * k))
    full = np.eye(2**n_qubits, dtype=complex).reshape((2,) * (2 * n_qubits))
    # contract identity's row axes for the targets with the small op
    row_axes = [n_qubits - 1 - q for q in targets]
    full = np.tensordot(t, full, axes=(list(range(k, 2 * k)), row_axes))
    # tensordot put the op's output axes first; move them back into place
    full = np.moveaxis(full, range(k), row_axes)
    return full.reshape(2**n_qubits, 2**n_qubits)


# ---------------------------------------------------------------------------
# Fast transform between dense matrices and Pauli coefficients.
#
# Per qubit the (row, col) index pair (r, c) is flattened to u = 2r + c and
# mapped to the Pauli axis p via the 4x4 matrices below:
#   coefficients:  c_p = sum_{rc} FWD[p, 2r+c] M[r, c]   (includes the 1/2)
#   reconstruction: M[r, c] = sum_p INV[2r+c, p] c_p
# so that pauli_coefficients(M)[nu] = 2^-n Tr[sigma^nu M].
# ---------------------------------------------------------------------------

_FWD = np.empty((4, 4), dtype=complex)
_INV = np.empty((4, 4), dtype=complex)
for _p in range(4):
    for _r in range(2):
        for _c in range(2):
            _FWD[_p, 2 * _r + _c] = PAULIS[_p][_c, _r] / 2.0
            _INV[2 * _r + _c, _p] = PAULIS[_p][_r, _c]


def _apply_along_all_axes(t: np.ndarray, mat: np.ndarray) -> np.ndarray:
    for ax in range(t.ndim):
        t = np.moveaxis(np.tensordot(mat, t, axes=([1], [ax])), 0, ax)
    return t


def _pair_axes(mat: np.ndarray, n: int) -> np.ndarray:
    t = mat.reshape((2,) * (2 * n))
    order = []
    for k in range(n):
        order += [k, n + k]
    return t.transpose(order).reshape((4,) * n)


def _unpair_axes(t4: np.ndarray, n: int) -> np.ndarray:
    t = t4.reshape((2,) * (2 * n))
    rows = [2 * k for k in range(n)]
    cols = [2 * k + 1 for k in range(n)]
    return t.transpose(rows + cols).reshape(2**n, 2**n)


def pauli_coefficients(mat: np.ndarray) -> np.ndarray:
    """Coefficient tensor c[nu] = 2^-n Tr[sigma^nu mat], shape (4,)*n."""
    n = mat.shape[0].bit_length() - 1
    if mat.shape != (2**n, 2**n):
        raise ValueError("matrix dimension is not a power of two")
    return _apply_along_all_axes(_pair_axes(mat, n), _FWD)


def matrix_from_pauli(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pauli_coefficients`: sum_nu c[nu] sigma^nu."""
    return _unpair_axes(_apply_along_all_axes(np.asarray(coeffs, dtype=complex), _INV), coeffs.ndim)


@lru_cache(maxsize=None)
def weight_table(n: int) -> np.ndarray:
    """Tensor of shape (4,)*n holding the weight of each Pauli index tuple."""
    w = np.zeros((4,) * n, dtype=np.int64)
    mask = (np.arange(4) != 0).astype(np.int64)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = 4
        w = w + mask.reshape(shape)
    return w


@lru_cache(maxsize=None)
def y_count_table(n: int) -> np.ndarray:
    """Tensor of shape (4,)*n counting Y letters of each index tuple."""
    w = np.zeros((4,) * n, dtype=np.int64)
    mask = (np.arange(4) == 2).astype(np.int64)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = 4
        w = w + mask.reshape(shape)
    return w


def string_axis(n: int, qubit: int) -> int:
    """Axis of a coefficient tensor (or reshaped matrix) addressing ``qubit``."""
    return n - 1 - qubit
