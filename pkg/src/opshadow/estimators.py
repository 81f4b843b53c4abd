"""Observables from shadow datasets: moments, mutual information, negativity
ratios and operator-weight spectra, with bootstrap error bars.

Moments Tr[(rho^region)^m] are estimated from per-circuit shot-averaged
snapshots using the multi-sample average over tuples of *distinct* circuits
(cross-circuit pairs only; same-circuit pairs carry a different estimator
and are not used). The tuple sums are evaluated exactly through power-sum
identities, e.g. for ordered distinct triples

    sum Tr[r_a r_b r_c] = Tr[S^3] - 3 Tr[P S] + 2 sum_a Tr[r_a^3],

with S = sum_a r_a and P = sum_a r_a^2, which costs O(M d^3) instead of
O(M^3) and needs no tuple subsampling.

Error bars come from a nonparametric bootstrap over circuits (default 200
resamples); resampled tuples with repeated original circuits are excluded
so the resampled statistic stays a cross-circuit average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .paulis import kron_all
from .rng import TAG_BOOTSTRAP, stream
from .runtime import ShadowDataset, SnapshotRecord, input_factor, mitigate_counts, output_factor

DEFAULT_BOOTSTRAP = 200


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """A subset of in/out qubits; ``transpose_inputs`` marks the block that
    gets partially transposed when a transposed moment is requested."""

    inputs: tuple
    outputs: tuple
    transpose_inputs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(sorted(self.inputs)))
        object.__setattr__(self, "outputs", tuple(sorted(self.outputs)))
        object.__setattr__(self, "transpose_inputs", tuple(sorted(self.transpose_inputs)))
        if not set(self.transpose_inputs) <= set(self.inputs):
            raise ValueError("transpose block must be a subset of the region's inputs")

    @property
    def n_sites(self) -> int:
        return len(self.inputs) + len(self.outputs)

    def site_list(self):
        """Block ordering: inputs ascending, then outputs ascending; the
        position in this list is the block qubit index (little-endian)."""
        return [("in", q) for q in self.inputs] + [("out", q) for q in self.outputs]

    def describe(self) -> str:
        ins = ",".join(map(str, self.inputs))
        outs = ",".join(map(str, self.outputs))
        return f"in[{ins}]|out[{outs}]"


@dataclass(frozen=True)
class RegionSpec:
    """Named partition: input block A (complement B), output block C
    (complement D). Blocks for moments are picked by letter, e.g. "BC"."""

    n_qubits: int
    a: tuple
    c: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(sorted(self.a)))
        object.__setattr__(self, "c", tuple(sorted(self.c)))
        for q in self.a + self.c:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"qubit {q} outside register")
        if len(set(self.a)) != len(self.a) or len(set(self.c)) != len(self.c):
            raise ValueError("duplicate qubits in region")

    @property
    def b(self) -> tuple:
        return tuple(q for q in range(self.n_qubits) if q not in self.a)

    @property
    def d(self) -> tuple:
        return tuple(q for q in range(self.n_qubits) if q not in self.c)

    def block(self, letters: str) -> Region:
        letters = set(letters.upper())
        if not letters <= set("ABCD"):
            raise ValueError("blocks are named by letters from {A, B, C, D}")
        inputs: tuple = ()
        outputs: tuple = ()
        if "A" in letters:
            inputs += self.a
        if "B" in letters:
            inputs += self.b
        if "C" in letters:
            outputs += self.c
        if "D" in letters:
            outputs += self.d
        transpose = self.a if "A" in letters else ()
        return Region(inputs, outputs, transpose)


@dataclass(frozen=True)
class MomentEstimate:
    m: int
    transposed: bool
    value: float
    std_error: float
    region: str
    m_u: int
    m_s: int
    mode: str

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ValueError("only moments of order 2 and 3 are supported")
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")


@dataclass(frozen=True)
class DerivedEstimate:
    """A scalar derived from moments; ``defined`` is False when a
    non-positive moment estimate made the logarithms meaningless."""

    quantity: str
    value: float
    std_error: float
    defined: bool
    threshold: float | None = None
    exceeds_threshold: bool | None = None
    components: dict | None = None


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def snapshot_factor(record: SnapshotRecord, qubit: int, side: str) -> np.ndarray:
    """The 2x2 factor a single record contributes on one in/out qubit."""
    from .runtime import INPUT_LABELS, MEAS_LABELS

    if side == "in":
        code = INPUT_LABELS.index(record.input_labels[qubit])
        return input_factor(code, record.a_bits[qubit])
    if side == "out":
        code = MEAS_LABELS.index(record.meas_labels[qubit])
        return output_factor(code, record.b_bits[qubit])
    raise ValueError("side must be 'in' or 'out'")


def reduced_snapshot(record: SnapshotRecord, region: Region, transposed: bool = False) -> np.ndarray:
    """Tensor product of the record's factors on the region (trace-1 each,
    so tracing out the complement is free)."""
    factors = []
    for side, q in region.site_list():
        f = snapshot_factor(record, q, side)
        if transposed and side == "in" and q in region.transpose_inputs:
            f = f.T
        factors.append(f)
    if not factors:
        return np.ones((1, 1), dtype=complex)
    return kron_all(factors)


def _averaged_snapshots(dataset: ShadowDataset, region: Region, transposed: bool,
                        use_mitigation: bool = False, dtype=None) -> np.ndarray:
    """Per-circuit shot-averaged snapshots on the region, shape (M_U, d, d).

    Within a circuit the bases are fixed, so the shot average is assembled
    exactly from the joint frequency table of the region's bits; mitigation
    applies per-qubit inverse confusion matrices to the output-bit axes of
    that table before assembly.
    """
    sites = region.site_list()
    q = len(sites)
    d = 2**q
    if dtype is None:
        dtype = np.complex128 if d <= 64 else np.complex64
    confusion = None
    if use_mitigation:
        if dataset.mitigation is None:
            raise ValueError("dataset carries no calibration data")
        confusion = [np.asarray(c, dtype=float) for c in dataset.mitigation]

    rows_per_circuit = dataset.group_rows()
    out = np.empty((dataset.m_u, d, d), dtype=dtype)
    weights = 1 << np.arange(q)
    pair_perm = [2 * k for k in range(q)] + [2 * k + 1 for k in range(q)]

    for g, rows in enumerate(rows_per_circuit):
        cols = []
        for side, qubit in sites:
            bits = dataset.a_bits if side == "in" else dataset.b_bits
            cols.append(bits[rows][:, qubit].astype(np.int64))
        if q == 0:
            out[g] = 1.0
            continue
        codes = sum(c * w for c, w in zip(cols, weights))
        table = np.bincount(codes, minlength=d).astype(float) / len(rows)
        table = table.reshape((2,) * q)  # axis k <-> block site q-1-k
        if confusion is not None:
            mats, axes = [], []
            for pos, (side, qubit) in enumerate(sites):
                if side == "out":
                    mats.append(confusion[qubit])
                    axes.append(q - 1 - pos)
            if mats:
                table = mitigate_counts(table, mats, axes)
        # per-site factor stacks, ordered to match the table axes
        stacks = []
        for k in range(q):
            side, qubit = sites[q - 1 - k]
            if side == "in":
                code = int(dataset.input_codes[g][qubit])
                f0, f1 = input_factor(code, 0), input_factor(code, 1)
                if transposed and qubit in region.transpose_inputs:
                    f0, f1 = f0.T, f1.T
            else:
                code = int(dataset.meas_codes[g][qubit])
                f0, f1 = output_factor(code, 0), output_factor(code, 1)
            stacks.append(np.stack([f0, f1]).astype(dtype))
        t = table.astype(dtype)
        for stack in stacks:
            t = np.tensordot(t, stack, axes=([0], [0]))
        # axes now (a_{q-1}, b_{q-1}, ..., a_0, b_0)
        out[g] = t.transpose(pair_perm).reshape(d, d)
    return out


# ---------------------------------------------------------------------------
# tuple averages via power sums
# ---------------------------------------------------------------------------

def _u2_from_gram(gram: np.ndarray, diag: np.ndarray, w: np.ndarray) -> float:
    total = float(w.sum())
    num = float(w @ gram @ w - (w * w) @ diag)
    den = total * total - float((w * w).sum())
    return num / den


def _u3_from_stacks(mats, mats_sq, tr3, w) -> float:
    total = float(w.sum())
    s = np.tensordot(w, mats, axes=1)
    p2 = np.tensordot(w * w, mats_sq, axes=1)
    s2 = s @ s
    tr_s3 = float(np.einsum("ij,ji->", s2, s).real)
    tr_p2s = float(np.einsum("ij,ji->", p2, s).real)
    tr_d3 = float((w**3 @ tr3).real)
    num = tr_s3 - 3.0 * tr_p2s + 2.0 * tr_d3
    sq = float((w * w).sum())
    cb = float((w**3).sum())
    den = total**3 - 3.0 * sq * total + 2.0 * cb
    return num / den


class _MomentEngine:
    """Shared evaluation of several (region, m, transposed) specs on one
    dataset, with a joint bootstrap over circuits."""

    def __init__(self, dataset: ShadowDataset, specs, use_mitigation=False, dtype=None):
        self.dataset = dataset
        self.specs = list(specs)
        for _, m, _ in self.specs:
            if m not in (2, 3):
                raise ValueError("only moments of order 2 and 3 are supported")
            if dataset.m_u < m:
                raise ValueError(f"need at least {m} circuits for an order-{m} moment")
        # group by assembled-snapshot key so shared stacks are built once and
        # freed as soon as only Gram matrices are needed downstream
        by_key: dict = {}
        for idx, (region, m, transposed) in enumerate(self.specs):
            by_key.setdefault((region, transposed), []).append((idx, m))
        self._eval: list = [None] * len(self.specs)
        for (region, transposed), members in by_key.items():
            mats = _averaged_snapshots(dataset, region, transposed, use_mitigation, dtype)
            gram = None
            for idx, m in members:
                if m == 2:
                    if gram is None:
                        flat = mats.reshape(dataset.m_u, -1)
                        gram = (flat @ flat.conj().T).real
                    self._eval[idx] = ("g", gram, np.diagonal(gram).copy())
                else:
                    mats_sq = np.matmul(mats, mats)
                    tr3 = np.einsum("aij,aji->a", mats_sq, mats).real
                    self._eval[idx] = ("p", mats, mats_sq, tr3)
            del mats

    def values(self, w: np.ndarray) -> list:
        out = []
        for ev in self._eval:
            if ev[0] == "g":
                out.append(_u2_from_gram(ev[1], ev[2], w))
            else:
                out.append(_u3_from_stacks(ev[1], ev[2], ev[3], w))
        return out

    def run(self, n_bootstrap: int, seed: int | None):
        m_u = self.dataset.m_u
        points = self.values(np.ones(m_u))
        if n_bootstrap <= 0:
            return points, np.empty((0, len(self.specs)))
        seed = self.dataset.master_seed if seed is None else seed
        rng = stream(seed, TAG_BOOTSTRAP)
        boots = np.empty((n_bootstrap, len(self.specs)))
        for b in range(n_bootstrap):
            w = np.bincount(rng.integers(0, m_u, size=m_u), minlength=m_u).astype(float)
            boots[b] = self.values(w)
        return points, boots


def estimate_moment(dataset: ShadowDataset, region: Region, m: int, transposed: bool = False,
                    *, n_bootstrap: int = DEFAULT_BOOTSTRAP, bootstrap_seed: int | None = None,
                    use_mitigation: bool = False, dtype=None) -> MomentEstimate:
    """Cross-circuit tuple average of Tr[r^(1)...r^(m)] on the region."""
    engine = _MomentEngine(dataset, [(region, m, transposed)], use_mitigation, dtype)
    points, boots = engine.run(n_bootstrap, bootstrap_seed)
    se = float(np.std(boots[:, 0])) if len(boots) else 0.0
    return MomentEstimate(
        m=m, transposed=transposed, value=float(points[0]), std_error=se,
        region=region.describe(), m_u=dataset.m_u, m_s=dataset.m_s, mode=dataset.mode,
    )


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------

def _log2_safe(x):
    return math.log2(x) if x > 0 else math.nan


def renyi_mi(dataset: ShadowDataset, a, j_c: int, *, n_bootstrap: int = DEFAULT_BOOTSTRAP,
             bootstrap_seed: int | None = None, use_mitigation: bool = False,
             dtype=None) -> DerivedEstimate:
    """Order-2 Renyi mutual information between input block A and the rest.

    The A-block entropy is substituted analytically (= |A|, the input
    marginal of an operator state is exactly maximally mixed), which
    removes one estimator and its variance.
    """
    spec = RegionSpec(dataset.n_qubits, tuple(a), (int(j_c),))
    regions = [spec.block("BC"), spec.block("ABC")]
    engine = _MomentEngine(dataset, [(r, 2, False) for r in regions], use_mitigation, dtype)
    points, boots = engine.run(n_bootstrap, bootstrap_seed)
    size_a = len(spec.a)

    def combine(p_bc, p_abc):
        if p_bc <= 0 or p_abc <= 0:
            return math.nan
        return size_a + math.log2(p_abc) - math.log2(p_bc)

    value = combine(points[0], points[1])
    samples = np.array([combine(b, c) for b, c in boots]) if len(boots) else np.array([])
    n_bad = int(np.sum(np.isnan(samples)))
    se = float(np.nanstd(samples)) if len(samples) and n_bad < len(samples) else math.nan
    defined = not math.isnan(value)
    return DerivedEstimate(
        quantity="renyi_mi",
        value=value,
        std_error=se,
        defined=defined,
        threshold=float(size_a),
        exceeds_threshold=(value > size_a) if defined else None,
        components={"p2_bc": points[0], "p2_abc": points[1], "bootstrap_undefined": n_bad},
    )


def negativity_ratio(dataset: ShadowDataset, a, j_c: int, *, n_bootstrap: int = DEFAULT_BOOTSTRAP,
                     bootstrap_seed: int | None = None, use_mitigation: bool = False,
                     dtype=None) -> DerivedEstimate:
    """log2 of the partial-transpose moment ratio p2^2 / p3 on A:BC.

    Values above 0 certify operator-state entanglement across the A:BC cut
    (and non-zero quantum capacity for single-qubit A); the flag reports
    the raw comparison, error bars are the caller's business.
    """
    spec = RegionSpec(dataset.n_qubits, tuple(a), (int(j_c),))
    region = spec.block("ABC")
    engine = _MomentEngine(
        dataset, [(region, 2, True), (region, 3, True)], use_mitigation, dtype
    )
    points, boots = engine.run(n_bootstrap, bootstrap_seed)

    def combine(p2, p3):
        if p3 <= 0 or p2 == 0:
            return math.nan
        return 2.0 * math.log2(abs(p2)) - math.log2(p3)

    value = combine(points[0], points[1])
    samples = np.array([combine(x, y) for x, y in boots]) if len(boots) else np.array([])
    n_bad = int(np.sum(np.isnan(samples)))
    se = float(np.nanstd(samples)) if len(samples) and n_bad < len(samples) else math.nan
    defined = not math.isnan(value)
    return DerivedEstimate(
        quantity="neg_ratio",
        value=value,
        std_error=se,
        defined=defined,
        threshold=0.0,
        exceeds_threshold=(value > 0.0) if defined else None,
        components={"p2_t": points[0], "p3_t": points[1], "bootstrap_undefined": n_bad},
    )


# ---------------------------------------------------------------------------
# operator-weight spectra
# ---------------------------------------------------------------------------

def dk_weights(purities, n_qubits: int, c_size: int) -> dict:
    """Operator k-locality weights from a table of block purities.

    ``purities`` maps frozensets of input qubits (every subset of size <= k
    needed, including the empty set) to Tr[rho^{AC}^2] for the fixed output
    block C. Returns the weights for k = 1..N and their cumulative sums,
    normalized as the average over the 4^|C| - 1 non-identity operators
    supported on C.
    """
    table = {frozenset(k): float(v) for k, v in purities.items()}
    subsets = [frozenset(s) for r in range(n_qubits + 1) for s in combinations(range(n_qubits), r)]
    missing = [s for s in subsets if s not in table]
    if missing:
        raise KeyError(f"missing subset purity for inputs {sorted(missing[0])}")
    values = np.array([table[s] for s in subsets])
    sizes = np.array([len(s) for s in subsets])
    dk = _dk_from_purity_vector(values, sizes, n_qubits, c_size)
    return {"k": list(range(1, n_qubits + 1)), "dk": dk, "cumulative": np.cumsum(dk)}


def _dk_from_purity_vector(values, sizes, n_qubits, c_size):
    """Alternating binomial sum over input subsets, for k = 1..N."""
    pref = 2**c_size / (4**c_size - 1)
    dk = np.empty(n_qubits)
    for k in range(1, n_qubits + 1):
        mask = sizes <= k
        terms = ((-2.0) ** sizes[mask]) * np.array(
            [math.comb(n_qubits - s, n_qubits - k) for s in sizes[mask]]
        ) * values[mask]
        dk[k - 1] = pref * ((-1.0) ** k) * terms.sum()
    return dk


def estimate_dk(dataset: ShadowDataset, c_outputs, *, n_bootstrap: int = DEFAULT_BOOTSTRAP,
                bootstrap_seed: int | None = None, use_mitigation: bool = False,
                dtype=None) -> dict:
    """Shadow estimate of the k-locality weights for output block C.

    Estimates the purity of every (input subset, C) block with a joint
    bootstrap, then applies :func:`dk_weights` per resample.
    """
    n = dataset.n_qubits
    c_outputs = tuple(sorted(int(q) for q in c_outputs))
    subsets = [tuple(s) for r in range(n + 1) for s in combinations(range(n), r)]
    regions = [Region(s, c_outputs) for s in subsets]
    engine = _MomentEngine(dataset, [(r, 2, False) for r in regions], use_mitigation, dtype)
    points, boots = engine.run(n_bootstrap, bootstrap_seed)
    sizes = np.array([len(s) for s in subsets])
    dk = _dk_from_purity_vector(np.array(points), sizes, n, len(c_outputs))
    if len(boots):
        dk_boot = np.stack([
            _dk_from_purity_vector(row, sizes, n, len(c_outputs)) for row in boots
        ])
        se = dk_boot.std(axis=0)
        cum_se = np.cumsum(dk_boot, axis=1).std(axis=0)
    else:
        se = np.zeros(n)
        cum_se = np.zeros(n)
    return {
        "k": list(range(1, n + 1)),
        "dk": dk,
        "dk_std_error": se,
        "cumulative": np.cumsum(dk),
        "cumulative_std_error": cum_se,
        "purities": dict(zip((frozenset(s) for s in subsets), points)),
    }
