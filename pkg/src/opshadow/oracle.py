"""Ground truth for everything the estimators target.

Reduced operator-state blocks are built from two-time Pauli correlators,
2^-N Tr[(sigma^nu)^T sigma^mu(t)], never from the full doubled-space
matrix: the work objects stay 2^N-dimensional. Whichever side of the
region supports fewer Pauli strings is the side that gets evolved
(Heisenberg for output strings, Schrodinger for input strings).

Also provides the closed-form fully-scrambled baselines from unitary-group
averages, worst-case variance bounds on the moment estimators, and the
recovery-fidelity map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import qsim
from .circuits import CompiledChannel
from .estimators import RegionSpec
from .paulis import (
    PAULIS,
    PauliString,
    matrix_from_pauli,
    pauli_coefficients,
    weight_table,
    y_count_table,
)

ATOL_BLOCK = 1e-10


@dataclass(frozen=True)
class OperatorStateBlock:
    """Reduced operator state on (input subset, output subset).

    Block qubit ordering is inputs ascending then outputs ascending,
    little-endian. The input marginal of any trace-preserving channel's
    operator state is maximally mixed; that is enforced here.
    """

    inputs: tuple
    outputs: tuple
    operator: qsim.DensityOperator

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(sorted(self.inputs)))
        object.__setattr__(self, "outputs", tuple(sorted(self.outputs)))
        n_in = len(self.inputs)
        if n_in:
            marg = qsim.partial_trace_mat(
                self.operator.matrix, range(n_in), self.operator.n_qubits
            )
            dev = np.max(np.abs(marg - np.eye(2**n_in) / 2**n_in))
            if dev > ATOL_BLOCK:
                raise ValueError(f"input marginal deviates from maximally mixed by {dev}")

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix

    @property
    def n_sites(self) -> int:
        return len(self.inputs) + len(self.outputs)

    def transpose_positions(self, input_subset) -> list:
        """Block-qubit positions of the given input qubits."""
        return [self.inputs.index(q) for q in input_subset]


@dataclass(frozen=True)
class SpreadingTable:
    """Pauli expansion of one Heisenberg-evolved string.

    ``coefficients`` has shape (4,)*N with axis k addressing qubit N-1-k.
    """

    mu: PauliString
    coefficients: np.ndarray

    def total_weight(self) -> float:
        return float(np.sum(self.coefficients**2))

    def weight_by_locality(self) -> np.ndarray:
        """Sum of |c|^2 over strings of each weight k = 0..N."""
        n = self.mu.n_qubits
        w = weight_table(n).reshape(-1)
        return np.bincount(w, weights=(self.coefficients**2).reshape(-1), minlength=n + 1)


def _string_matrix(n, sites, codes):
    """Dense Pauli string with the given letters on ``sites``."""
    ops = {q: PAULIS[c] for q, c in zip(sites, codes)}
    mat = np.eye(1, dtype=complex)
    for q in range(n - 1, -1, -1):
        mat = np.kron(mat, ops.get(q, PAULIS[0]))
    return mat


def correlator_tables(channel: CompiledChannel, t: int, outputs) -> np.ndarray:
    """Input-string tables 2^-N Tr[sigma^nu sigma^mu(t)] for every mu on C.

    The mu axes lead, in descending output-qubit order; the nu axes follow
    in descending register order (one (4,)*N block per mu).
    """
    n = channel.n_qubits
    outs_desc = tuple(sorted(outputs, reverse=True))
    shape = (4,) * len(outs_desc) + (4,) * n
    out = np.empty(shape)
    for codes in product(range(4), repeat=len(outs_desc)):
        mu = _string_matrix(n, outs_desc, codes)
        evolved = channel.heisenberg_mat(mu, t)
        out[codes] = pauli_coefficients(evolved).real
    return out


def block_from_tables(tables, n, inputs, outputs) -> np.ndarray:
    """Assemble a reduced operator-state matrix from correlator tables.

    The transpose of the input-side string contributes a (-1)^{#Y(nu)}
    sign; axes end up ordered outputs-descending then inputs-descending,
    which is exactly the block's qubit layout (inputs low, outputs high).
    """
    ins = tuple(sorted(inputs))
    k_out = tables.ndim - n
    idx = (slice(None),) * k_out + tuple(
        slice(None) if (n - 1 - ax) in ins else 0 for ax in range(n)
    )
    w = tables[idx]
    if ins:
        w = w * ((-1.0) ** y_count_table(len(ins)))
    q = len(ins) + k_out
    if q == 0:
        return np.array([[1.0 + 0j]]) * w
    return matrix_from_pauli(w.astype(complex) / 2**q)


def input_tables(channel: CompiledChannel, t: int, inputs) -> np.ndarray:
    """Output-string tables per input string, Schrodinger-evolving the
    (transposed) input side; the (-1)^{#Y} sign is already folded in."""
    n = channel.n_qubits
    ins_desc = tuple(sorted(inputs, reverse=True))
    shape = (4,) * len(ins_desc) + (4,) * n
    out = np.empty(shape)
    for codes in product(range(4), repeat=len(ins_desc)):
        nu = _string_matrix(n, ins_desc, codes)
        sign = (-1.0) ** sum(1 for c in codes if c == 2)
        out[codes] = pauli_coefficients(channel.evolve_mat(nu, t)).real * sign
    return out


def block_from_input_tables(tables, n, outputs) -> np.ndarray:
    """Assemble a block from :func:`input_tables` (all of its input axes
    are kept; ``outputs`` selects the output sub-block)."""
    outs = tuple(sorted(outputs))
    k_in = tables.ndim - n
    idx = (slice(None),) * k_in + tuple(
        slice(None) if (n - 1 - ax) in outs else 0 for ax in range(n)
    )
    w = tables[idx]
    q = k_in + len(outs)
    if q == 0:
        return np.array([[1.0 + 0j]]) * w
    w = np.transpose(w, list(range(k_in, q)) + list(range(k_in)))
    return matrix_from_pauli(w.astype(complex) / 2**q)


def exact_reduced_operator_state(channel: CompiledChannel, t: int, inputs, outputs) -> OperatorStateBlock:
    """Reduced operator state on (inputs, outputs) via Pauli correlators."""
    ins = tuple(sorted(inputs))
    outs = tuple(sorted(outputs))
    n = channel.n_qubits
    if len(ins) + len(outs) > 12:
        raise ValueError("region too large for dense assembly")
    if any(q < 0 or q >= n for q in ins + outs):
        raise ValueError("region qubit outside register")
    if len(outs) <= len(ins):
        mat = block_from_tables(correlator_tables(channel, t, outs), n, ins, outs)
    else:
        mat = block_from_input_tables(input_tables(channel, t, ins), n, outs)
    op = qsim.DensityOperator(len(ins) + len(outs), mat, physical=True)
    return OperatorStateBlock(ins, outs, op)


# ---------------------------------------------------------------------------
# scalar quantities
# ---------------------------------------------------------------------------

def _purity(mat) -> float:
    return float(np.vdot(mat, mat).real)


def _trace_cube(mat) -> float:
    return float(np.einsum("ij,jk,ki->", mat, mat, mat).real)


def exact_quantities(channel: CompiledChannel, t: int, a, j_c: int, extras: bool = False) -> dict:
    """Every estimator target for the partition (A | B, C = {j_c} | D).

    Always returns the order-2 and order-3 mutual informations (``i2``,
    ``i3``), the partially transposed moments ``p2_t``/``p3_t`` with their
    log ratio ``log2_r``, and the two block purities. ``extras`` adds
    spectral quantities (von Neumann mutual information, min-entropy,
    logarithmic negativity), the order-2 tripartite information over the
    output split C:D (``tri_info_2``), and the implied recovery fidelity.
    """
    n = channel.n_qubits
    spec = RegionSpec(n, tuple(a), (int(j_c),))
    size_a = len(spec.a)
    tables = correlator_tables(channel, t, spec.c)
    bc = block_from_tables(tables, n, spec.b, spec.c)
    abc = block_from_tables(tables, n, tuple(range(n)), spec.c)
    p_bc, p_abc = _purity(bc), _purity(abc)
    i2 = size_a + math.log2(p_abc) - math.log2(p_bc)
    i3 = size_a - 0.5 * math.log2(_trace_cube(abc)) + 0.5 * math.log2(_trace_cube(bc))

    # inputs occupy block positions 0..n-1, so A's positions are A itself
    abc_t = qsim.partial_transpose_mat(abc, spec.a, n + 1)
    p2_t = _purity(abc_t)
    p3_t = _trace_cube(abc_t)
    log2_r = 2.0 * math.log2(p2_t) - math.log2(p3_t)

    out = {
        "purity_bc": p_bc,
        "purity_abc": p_abc,
        "i2": i2,
        "i3": i3,
        "p2_t": p2_t,
        "p3_t": p3_t,
        "log2_r": log2_r,
    }
    if extras:
        lam_abc = np.linalg.eigvalsh(abc)
        lam_bc = np.linalg.eigvalsh(bc)
        lam_t = np.linalg.eigvalsh(abc_t)
        out["log_negativity"] = math.log2(float(np.sum(np.abs(lam_t))))
        out["s_inf_abc"] = -math.log2(float(lam_abc[-1]))
        out["spectrum_abc"] = lam_abc

        def vn(lam):
            pos = np.clip(lam, 0.0, None)
            pos = pos[pos > 1e-18]
            return float(-np.sum(pos * np.log2(pos)))

        out["von_neumann_mi"] = size_a + vn(lam_bc) - vn(lam_abc)
        out["recovery_fidelity"] = recovery_fidelity(i2, size_a)
        tabs_a = input_tables(channel, t, spec.a)
        tabs_0 = input_tables(channel, t, ())
        all_outs = tuple(range(n))
        i2_of = {}
        for name, outs in (("c", spec.c), ("d", spec.d), ("cd", all_outs)):
            p_with_a = _purity(block_from_input_tables(tabs_a, n, outs))
            p_alone = _purity(block_from_input_tables(tabs_0, n, outs))
            i2_of[name] = size_a + math.log2(p_with_a) - math.log2(p_alone)
        out["tri_info_2"] = i2_of["c"] + i2_of["d"] - i2_of["cd"]
    return out


# ---------------------------------------------------------------------------
# operator spreading
# ---------------------------------------------------------------------------

def spreading_coefficients(channel: CompiledChannel, t: int, mu: PauliString) -> SpreadingTable:
    """Expansion coefficients of the Heisenberg-evolved string mu."""
    n = channel.n_qubits
    if mu.n_qubits != n:
        raise ValueError("Pauli string length does not match register")
    evolved = channel.heisenberg_mat(mu.matrix(), t)
    coeffs = pauli_coefficients(evolved).real
    table = SpreadingTable(mu, coeffs)
    if channel.is_unitary:
        total = table.total_weight()
        if abs(total - 1.0) > 1e-9:
            raise AssertionError(f"unitary weight conservation violated: {total}")
    return table


def dk_direct(channel: CompiledChannel, t: int, c_outputs) -> np.ndarray:
    """k-locality weights (k = 0..N) averaged over the non-identity strings
    supported on the output block C."""
    n = channel.n_qubits
    c_outputs = tuple(sorted(c_outputs))
    acc = np.zeros(n + 1)
    count = 0
    for codes in product(range(4), repeat=len(c_outputs)):
        if all(c == 0 for c in codes):
            continue
        word = ["I"] * n
        for q, c in zip(c_outputs, codes):
            word[q] = "IXYZ"[c]
        table = spreading_coefficients(channel, t, PauliString("".join(word)))
        acc += table.weight_by_locality()
        count += 1
    return acc / count


# ---------------------------------------------------------------------------
# closed-form baselines and bounds
# ---------------------------------------------------------------------------

def haar_baselines(n_qubits: int, q: int, size_a: int, size_b: int, size_c: int, size_d: int) -> dict:
    """Fully-scrambled averages over global unitaries for q-level systems.

    Returns the average purity of the (A, C) block and the approximate
    average order-2 mutual information between A and BC (log of the average
    replaces the average of the log; fluctuations are not accounted for).
    """
    if size_a + size_b != n_qubits or size_c + size_d != n_qubits:
        raise ValueError("sizes |A|+|B| and |C|+|D| must both equal N")
    if min(size_a, size_b, size_c, size_d) < 0 or q < 2:
        raise ValueError("inconsistent partition")
    qn = q**n_qubits
    denom = qn * (qn * qn - 1)
    purity_num = qn * (q ** (size_b + size_d) + q ** (size_a + size_c)) - (
        q ** (size_a + size_d) + q ** (size_b + size_c)
    )
    size_ac = size_a + size_c
    dev_num = q ** (2 * n_qubits) * (
        q ** (size_a - size_c) + q ** (size_c - size_a) - q ** (-size_ac)
    ) - q**size_ac
    i2 = size_ac * math.log2(q) - math.log2(dev_num / (q ** (2 * n_qubits) - 1))
    return {
        "purity_ac": purity_num / denom,
        "i2_a_bc": i2,
    }


def recovery_fidelity(i2: float, size_a: int) -> float:
    """Fidelity of recovering the A input from its complement plus a small
    output block, implied by the order-2 mutual information."""
    return 2.0 ** (i2 - 2 * size_a)


def variance_bounds(eigenvalues, m: int, n_samples: int, epsilon: float | None = None) -> dict:
    """Worst-case variance bound on the order-m moment estimator.

    ``eigenvalues`` is the exact spectrum of the region's reduced operator
    state. Two single-snapshot bounds are combined through the standard
    multi-sample variance decomposition: a flat 2^k variant and a spectral
    3^k * ||rho||_inf variant that wins for highly mixed blocks. The
    returned ``bound`` is the smaller of the two totals. With ``epsilon``,
    also reports sufficient sample counts for that target accuracy.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    d = len(lam)
    kq = d.bit_length() - 1
    if 2**kq != d:
        raise ValueError("spectrum length is not a power of two")
    if m < 2:
        raise ValueError("moment order must be at least 2")
    lmax = float(lam[-1])

    def tr_pow(p):
        return float(d) if p == 0 else float(np.sum(lam**p))

    def totals(n_s):
        if n_s < m:
            return math.inf, math.inf
        tot_spec = tot_flat = 0.0
        choose = math.comb(n_s, m)
        for c in range(1, m + 1):
            pref = 1.0 / math.factorial(c - 1) ** 2
            trp = tr_pow(2 * m - 2 * c)
            sig_spec = pref * 3.0 ** (c * kq) * 2.0 ** ((c - 1) * kq) * lmax**c * trp
            sig_flat = pref * 2.0 ** ((2 * c - 1) * kq) * trp
            weight = math.comb(m, c) * math.comb(n_s - m, m - c) / choose
            tot_spec += weight * sig_spec
            tot_flat += weight * sig_flat
        return tot_spec, tot_flat

    tot_spec, tot_flat = totals(n_samples)
    out = {
        "bound": min(tot_spec, tot_flat),
        "bound_spectral": tot_spec,
        "bound_flat": tot_flat,
        "min_entropy": -math.log2(lmax),
    }
    if epsilon is not None:
        target = epsilon**2
        n_s = m
        while min(*totals(n_s)) > target and n_s < 10**12:
            n_s *= 2
        lo, hi = n_s // 2, n_s
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if min(*totals(mid)) <= target:
                hi = mid
            else:
                lo = mid
        out["sufficient_samples"] = hi
        out["scaling_flat"] = 2.0**kq / target
        out["scaling_spectral"] = 3.0**kq * lmax / target
    return out


def haar_purity_mc(n_qubits: int, inputs, outputs, n_samples: int, rng) -> np.ndarray:
    """Monte-Carlo purities of a block under Haar-random unitary channels."""
    vals = np.empty(n_samples)
    for i in range(n_samples):
        u = qsim.random_unitary(2**n_qubits, rng)
        ch = CompiledChannel(n_qubits, [[qsim.KrausChannel((u,))]])
        block = exact_reduced_operator_state(ch, 1, inputs, outputs)
        vals[i] = _purity(block.matrix)
    return vals
