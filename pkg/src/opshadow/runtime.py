"""Randomized prepare/evolve/measure protocol runner.

Each run prepares a product state drawn per qubit from the six Pauli
eigenstates, evolves it through the compiled channel, rotates each qubit
into one of the three Pauli bases and measures. Two sampling regimes:

* ``ideal-one-shot``: fresh bases every run, input U_j|0>, one shot.
* ``repeated-circuit``: bases fixed per circuit, reused for M_S shots; the
  computational input bits are re-drawn uniformly every shot (equivalent to
  the Hadamard-then-measure preparation) and folded into the record.

Readout-error calibration and tensor-product confusion-matrix inversion
live here as well; the estimators consume the mitigated quasi-probability
tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .circuits import CompiledChannel, NoiseParams
from .paulis import kron_all
from .rng import (
    TAG_CALIBRATION,
    TAG_INPUT_BITS,
    TAG_OUTCOMES,
    TAG_SETTINGS,
    stream,
)

DATASET_FORMAT = "opshadow.dataset/1"

INPUT_LABELS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")
MEAS_LABELS = ("Z", "X", "Y")
MODES = ("ideal-one-shot", "repeated-circuit")

_SQ2 = np.sqrt(2.0)
_STATES = {
    "+X": np.array([1, 1], dtype=complex) / _SQ2,
    "-X": np.array([1, -1], dtype=complex) / _SQ2,
    "+Y": np.array([1, 1j], dtype=complex) / _SQ2,
    "-Y": np.array([1, -1j], dtype=complex) / _SQ2,
    "+Z": np.array([1, 0], dtype=complex),
    "-Z": np.array([0, 1], dtype=complex),
}

# columns (U|0>, U|1>) = (labelled state, its sign partner)
_PREP_UNITARIES = tuple(
    np.column_stack([_STATES[INPUT_LABELS[c]], _STATES[INPUT_LABELS[c ^ 1]]])
    for c in range(6)
)

_MEAS_ROTATIONS = (np.eye(2, dtype=complex), qsim.hadamard(), qsim.hadamard_y())

# snapshot factors: input state psi contributes 3 (|psi><psi|)^T - 1,
# measurement outcome b in basis V contributes 3 V^dag|b><b|V - 1
_INPUT_FACTORS = tuple(
    3.0 * np.outer(_STATES[lab], _STATES[lab].conj()).T - np.eye(2) for lab in INPUT_LABELS
)
_OUTPUT_FACTORS = tuple(
    tuple(
        3.0 * np.outer(v.conj().T[:, b], v.conj().T[:, b].conj()) - np.eye(2)
        for b in (0, 1)
    )
    for v in _MEAS_ROTATIONS
)


def input_factor(label_code: int, a_bit: int) -> np.ndarray:
    """2x2 input-side snapshot factor with the input bit folded in."""
    return _INPUT_FACTORS[label_code ^ int(a_bit)]


def output_factor(meas_code: int, b_bit: int) -> np.ndarray:
    return _OUTPUT_FACTORS[meas_code][int(b_bit)]


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SnapshotRecord:
    """One protocol run: bases, input bits and measured bits."""

    circuit_id: int
    input_labels: tuple
    meas_labels: tuple
    a_bits: tuple
    b_bits: tuple
    timestep: int

    @property
    def n_qubits(self) -> int:
        return len(self.input_labels)


def sample_settings(rng, n_qubits):
    """Per-qubit i.i.d. uniform draws of the input and measurement labels."""
    inputs = tuple(INPUT_LABELS[c] for c in rng.integers(0, 6, size=n_qubits))
    meas = tuple(MEAS_LABELS[c] for c in rng.integers(0, 3, size=n_qubits))
    return inputs, meas


@dataclass
class ShadowDataset:
    """All records of one protocol execution plus its metadata.

    Records are stored column-wise; ``input_codes``/``meas_codes`` hold one
    row per circuit, ``a_bits``/``b_bits``/``circuit_ids`` one row per shot.
    """

    n_qubits: int
    timestep: int
    m_u: int
    m_s: int
    mode: str
    master_seed: int
    input_codes: np.ndarray
    meas_codes: np.ndarray
    circuit_ids: np.ndarray
    a_bits: np.ndarray
    b_bits: np.ndarray
    circuit: dict | None = None
    mitigation: list | None = None

    def __post_init__(self):
        total = self.m_u * self.m_s
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.input_codes.shape != (self.m_u, self.n_qubits):
            raise ValueError("input label table shape mismatch")
        if self.meas_codes.shape != (self.m_u, self.n_qubits):
            raise ValueError("measurement label table shape mismatch")
        for name in ("a_bits", "b_bits"):
            if getattr(self, name).shape != (total, self.n_qubits):
                raise ValueError(f"{name} shape mismatch")
        if self.circuit_ids.shape != (total,):
            raise ValueError("circuit id column shape mismatch")
        ids, counts = np.unique(self.circuit_ids, return_counts=True)
        if len(ids) != self.m_u or not np.all(counts == self.m_s):
            raise ValueError("records do not group into M_U circuits of M_S shots")

    def group_order(self) -> np.ndarray:
        """Circuit ids in order of first appearance."""
        _, first = np.unique(self.circuit_ids, return_index=True)
        return self.circuit_ids[np.sort(first)]

    def group_rows(self) -> list:
        """Shot row indices per circuit, in first-appearance order."""
        order = {cid: k for k, cid in enumerate(self.group_order())}
        rows = [[] for _ in range(self.m_u)]
        for i, cid in enumerate(self.circuit_ids):
            rows[order[cid]].append(i)
        return [np.asarray(r) for r in rows]

    def records(self):
        order = {cid: k for k, cid in enumerate(self.group_order())}
        for i, cid in enumerate(self.circuit_ids):
            g = order[cid]
            yield SnapshotRecord(
                circuit_id=int(cid),
                input_labels=tuple(INPUT_LABELS[c] for c in self.input_codes[g]),
                meas_labels=tuple(MEAS_LABELS[c] for c in self.meas_codes[g]),
                a_bits=tuple(int(b) for b in self.a_bits[i]),
                b_bits=tuple(int(b) for b in self.b_bits[i]),
                timestep=self.timestep,
            )

    def with_circuit_ids(self, new_ids) -> "ShadowDataset":
        """Copy with circuit ids relabelled (record order untouched)."""
        mapping = {old: new for old, new in zip(self.group_order(), new_ids)}
        return ShadowDataset(
            self.n_qubits, self.timestep, self.m_u, self.m_s, self.mode,
            self.master_seed, self.input_codes, self.meas_codes,
            np.array([mapping[c] for c in self.circuit_ids]),
            self.a_bits, self.b_bits, self.circuit, self.mitigation,
        )

    # -- persistence --------------------------------------------------------

    def save(self, jsonl_path, meta_path=None):
        meta_path = meta_path or _meta_path(jsonl_path)
        order = {cid: k for k, cid in enumerate(self.group_order())}
        with open(jsonl_path, "w") as fh:
            for i, cid in enumerate(self.circuit_ids):
                g = order[cid]
                fh.write(json.dumps({
                    "circuit": int(cid),
                    "input": [INPUT_LABELS[c] for c in self.input_codes[g]],
                    "meas": [MEAS_LABELS[c] for c in self.meas_codes[g]],
                    "a": "".join(str(int(b)) for b in self.a_bits[i]),
                    "b": "".join(str(int(b)) for b in self.b_bits[i]),
                }) + "\n")
        meta = {
            "format": DATASET_FORMAT,
            "n_qubits": self.n_qubits,
            "t": self.timestep,
            "M_U": self.m_u,
            "M_S": self.m_s,
            "mode": self.mode,
            "master_seed": self.master_seed,
            "circuit": self.circuit,
            "mitigation": None if self.mitigation is None
            else [np.asarray(c).tolist() for c in self.mitigation],
        }
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, jsonl_path, meta_path=None) -> "ShadowDataset":
        meta_path = meta_path or _meta_path(jsonl_path)
        with open(meta_path) as fh:
            meta = json.load(fh)
        if meta.get("format") != DATASET_FORMAT:
            raise ValueError(f"unsupported dataset format {meta.get('format')!r}")
        n = int(meta["n_qubits"])
        cids, a_rows, b_rows = [], [], []
        inputs, meas = {}, {}
        with open(jsonl_path) as fh:
            for line in fh:
                rec = json.loads(line)
                cid = int(rec["circuit"])
                cids.append(cid)
                inputs[cid] = [INPUT_LABELS.index(l) for l in rec["input"]]
                meas[cid] = [MEAS_LABELS.index(l) for l in rec["meas"]]
                a_rows.append([int(ch) for ch in rec["a"]])
                b_rows.append([int(ch) for ch in rec["b"]])
        cids = np.asarray(cids)
        _, first = np.unique(cids, return_index=True)
        order = cids[np.sort(first)]
        mit = meta.get("mitigation")
        return cls(
            n_qubits=n,
            timestep=int(meta["t"]),
            m_u=int(meta["M_U"]),
            m_s=int(meta["M_S"]),
            mode=meta["mode"],
            master_seed=int(meta["master_seed"]),
            input_codes=np.array([inputs[c] for c in order], dtype=np.uint8),
            meas_codes=np.array([meas[c] for c in order], dtype=np.uint8),
            circuit_ids=cids,
            a_bits=np.array(a_rows, dtype=np.uint8),
            b_bits=np.array(b_rows, dtype=np.uint8),
            circuit=meta.get("circuit"),
            mitigation=None if mit is None else [np.asarray(m, dtype=float) for m in mit],
        )


def _meta_path(jsonl_path):
    return str(jsonl_path) + ".meta.json"


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _born_columns_noiseless(channel, t, u_loc, v_loc):
    m = v_loc @ (channel.unitary(t) @ u_loc)
    return np.abs(m) ** 2  # [b, a]


def _born_columns_noisy(channel, t, u_loc, v_loc, a_codes):
    d = u_loc.shape[0]
    uniq = np.unique(a_codes)
    cols = u_loc[:, uniq]
    if channel.n_qubits <= 6:
        in_vecs = np.einsum("ia,ja->ija", cols, cols.conj()).reshape(d * d, len(uniq))
        out_vecs = channel.superoperator(t) @ in_vecs
        rhos = out_vecs.T.reshape(len(uniq), d, d)
    else:
        batch = np.einsum("ia,ja->aij", cols, cols.conj())
        rhos = channel.evolve_batch(batch, t)
    probs = np.einsum("bi,aij,bj->ba", v_loc, rhos, v_loc.conj()).real
    full = np.zeros((d, d))
    full[:, uniq] = np.clip(probs, 0.0, None)
    full /= np.maximum(full.sum(axis=0, keepdims=True), 1e-300)
    return full


def run_protocol(channel: CompiledChannel, t: int, m_u: int, m_s: int, seed: int,
                 mode: str = "repeated-circuit", readout=None) -> ShadowDataset:
    """Execute the protocol against a compiled channel.

    ``readout`` overrides the per-qubit flip pairs; by default they are
    taken from the channel's noise model. Gate noise is whatever the
    channel was compiled with.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "ideal-one-shot" and m_s != 1:
        raise ValueError("ideal-one-shot mode requires M_S = 1")
    if m_u < 1 or m_s < 1:
        raise ValueError("M_U and M_S must be positive")
    channel._check_t(t)
    n = channel.n_qubits
    d = 2**n
    if readout is None and channel.noise is not None and channel.noise.has_readout:
        readout = channel.noise.readout_for(n)
    p10 = p01 = None
    if readout is not None:
        pairs = NoiseParams(readout=tuple(readout)).readout_for(n)
        p10 = np.array([p[0] for p in pairs])
        p01 = np.array([p[1] for p in pairs])

    bit_vals = 1 << np.arange(n)
    input_codes = np.empty((m_u, n), dtype=np.uint8)
    meas_codes = np.empty((m_u, n), dtype=np.uint8)
    a_all = np.empty((m_u * m_s, n), dtype=np.uint8)
    b_all = np.empty((m_u * m_s, n), dtype=np.uint8)

    for r in range(m_u):
        rng_set = stream(seed, TAG_SETTINGS, r)
        in_c = rng_set.integers(0, 6, size=n)
        me_c = rng_set.integers(0, 3, size=n)
        input_codes[r] = in_c
        meas_codes[r] = me_c

        if mode == "repeated-circuit":
            a = stream(seed, TAG_INPUT_BITS, r).integers(0, 2, size=(m_s, n), dtype=np.uint8)
        else:
            a = np.zeros((m_s, n), dtype=np.uint8)
        a_codes = a.astype(np.int64) @ bit_vals

        u_loc = kron_all([_PREP_UNITARIES[c] for c in in_c])
        v_loc = kron_all([_MEAS_ROTATIONS[c] for c in me_c])
        if channel.is_unitary:
            probs = _born_columns_noiseless(channel, t, u_loc, v_loc)
            probs = np.clip(probs, 0.0, None)
            probs /= probs.sum(axis=0, keepdims=True)
        else:
            probs = _born_columns_noisy(channel, t, u_loc, v_loc, a_codes)

        rng_out = stream(seed, TAG_OUTCOMES, r)
        outcomes = np.empty(m_s, dtype=np.int64)
        for code in np.unique(a_codes):
            rows = np.nonzero(a_codes == code)[0]
            outcomes[rows] = rng_out.choice(d, size=len(rows), p=probs[:, code])
        b = ((outcomes[:, None] >> np.arange(n)[None, :]) & 1).astype(np.uint8)
        if p10 is not None:
            flip_p = np.where(b == 0, p10[None, :], p01[None, :])
            b ^= (rng_out.random((m_s, n)) < flip_p).astype(np.uint8)

        sl = slice(r * m_s, (r + 1) * m_s)
        a_all[sl] = a
        b_all[sl] = b

    return ShadowDataset(
        n_qubits=n,
        timestep=t,
        m_u=m_u,
        m_s=m_s,
        mode=mode,
        master_seed=seed,
        input_codes=input_codes,
        meas_codes=meas_codes,
        circuit_ids=np.repeat(np.arange(m_u), m_s),
        a_bits=a_all,
        b_bits=b_all,
        circuit=channel.spec.to_json() if channel.spec is not None else None,
    )


# ---------------------------------------------------------------------------
# readout calibration and mitigation
# ---------------------------------------------------------------------------

def calibrate_readout(noise: NoiseParams, shots: int, n_qubits: int, seed: int = 0) -> list:
    """Estimate per-qubit confusion matrices from simulated calibration runs.

    Column s of each matrix is the observed-bit distribution after
    preparing |s>. Near-singular matrices (flip probabilities close to 1/2)
    are rejected, as mitigation would blow up statistical noise.
    """
    if shots < 100:
        raise ValueError("calibration needs at least 100 shots")
    pairs = noise.readout_for(n_qubits)
    rng = stream(seed, TAG_CALIBRATION)
    mats = []
    for q, (p10, p01) in enumerate(pairs):
        mat = np.empty((2, 2))
        for prepared, pflip in ((0, p10), (1, p01)):
            observed = (rng.random(shots) < pflip).astype(int) ^ prepared
            mat[1, prepared] = observed.mean()
            mat[0, prepared] = 1.0 - observed.mean()
        if abs(np.linalg.det(mat)) < 0.05:
            raise CalibrationError(
                f"confusion matrix of qubit {q} is close to singular; "
                "readout flips near 1/2 cannot be mitigated"
            )
        mats.append(mat)
    return mats


def mitigate_counts(table: np.ndarray, confusions, axes=None) -> np.ndarray:
    """Apply the tensor-product inverse of per-qubit confusion matrices.

    ``table`` is a frequency tensor with one length-2 axis per measured
    qubit; ``confusions[i]`` is applied along ``axes[i]`` (defaults to axis
    i). The result is a quasi-probability table and may carry small
    negative entries; they are passed through untouched.
    """
    table = np.asarray(table, dtype=float)
    confusions = list(confusions)
    axes = list(range(len(confusions))) if axes is None else list(axes)
    if len(axes) != len(confusions):
        raise ValueError("one axis per confusion matrix required")
    out = table
    for mat, ax in zip(confusions, axes):
        mat = np.asarray(mat, dtype=float)
        if abs(np.linalg.det(mat)) < 1e-12:
            raise CalibrationError("singular confusion matrix")
        inv = np.linalg.inv(mat)
        out = np.moveaxis(np.tensordot(inv, out, axes=([1], [ax])), 0, ax)
    return out
