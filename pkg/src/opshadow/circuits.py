"""Chaotic circuit families and their compilation into channels.

Two built-in models:

* ``build_brickwork``: a 1D chain (default 5 qubits) alternating CNOT
  layers with single-qubit gates drawn from a discrete 4-gate set.
* ``build_ladder7``: 7 qubits on an H-shaped coupling graph, with a CNOT
  layout that cycles with period 3 so that entanglement can reach every
  pair of qubits.

A compiled channel is an ordered list of Kraus stages per timestep;
noiseless circuits compile to one unitary stage per gate and expose a
cached full-register unitary for fast state and Heisenberg evolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .paulis import kron_all
from .rng import TAG_CIRCUIT_TABLE, stream

CIRCUIT_FORMAT = "opshadow.circuit/1"

LAYER_ORDERS = ("cnot_first", "single_first")

# Default seed used by the shipped example configs and the test suite; the
# single-qubit gate table is drawn once from this seed and then frozen.
DEFAULT_SEED = 13

# H-shaped 7-qubit coupling graph (0-based): two 3-qubit rows bridged
# through qubits 1 and 5.
LADDER7_CONNECTIVITY = ((0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6))

# Period-3 CNOT layout covering every edge of the graph above.
LADDER7_LAYOUT = (
    ((0, 1), (3, 5)),
    ((1, 2), (4, 5)),
    ((1, 3), (5, 6)),
)


def w_gate(c: int) -> np.ndarray:
    """One of the four single-qubit gates W_1..W_4.

    Products of the native gates sqrt(X), X and R = exp(-i pi Z / 8):
    W1 = R sqrt(X) R^dag, W2 = R X R^dag, W3 = sqrt(X) R sqrt(X),
    W4 = sqrt(X) R^dag sqrt(X).
    """
    if c not in (1, 2, 3, 4):
        raise ValueError(f"gate index {c} outside 1..4")
    r = qsim.rot_z(math.pi / 4)
    rd = r.conj().T
    sx = qsim.sqrt_x()
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    if c == 1:
        return r @ sx @ rd
    if c == 2:
        return r @ x @ rd
    if c == 3:
        return sx @ r @ sx
    return sx @ rd @ sx


@dataclass(frozen=True)
class TimestepLayer:
    """Gates of one timestep: disjoint CNOT pairs plus one W index per qubit."""

    cnot_pairs: tuple  # ((control, target), ...)
    w_choices: tuple  # length n_qubits, values in 1..4

    def __post_init__(self):
        object.__setattr__(self, "cnot_pairs", tuple((int(a), int(b)) for a, b in self.cnot_pairs))
        object.__setattr__(self, "w_choices", tuple(int(c) for c in self.w_choices))
        used = [q for pair in self.cnot_pairs for q in pair]
        if len(set(used)) != len(used):
            raise ValueError("CNOT pairs within a layer must be disjoint")
        if any(c not in (1, 2, 3, 4) for c in self.w_choices):
            raise ValueError("single-qubit gate indices must lie in 1..4")


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int
    timesteps: int
    layers: tuple  # one TimestepLayer per timestep
    seed: int
    layer_order: str = "cnot_first"
    model: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.layer_order not in LAYER_ORDERS:
            raise ValueError(f"layer_order must be one of {LAYER_ORDERS}")
        if len(self.layers) != self.timesteps:
            raise ValueError("layer count does not match timesteps")
        for layer in self.layers:
            if len(layer.w_choices) != self.n_qubits:
                raise ValueError("W layer length does not match qubit count")
            for a, b in layer.cnot_pairs:
                if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits) or a == b:
                    raise ValueError(f"invalid CNOT pair ({a}, {b})")

    def to_json(self) -> dict:
        return {
            "format": CIRCUIT_FORMAT,
            "model": self.model,
            "n_qubits": self.n_qubits,
            "timesteps": self.timesteps,
            "seed": self.seed,
            "layer_order": self.layer_order,
            "cnots": [[list(p) for p in layer.cnot_pairs] for layer in self.layers],
            "w_choices": [list(layer.w_choices) for layer in self.layers],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CircuitSpec":
        if doc.get("format") != CIRCUIT_FORMAT:
            raise ValueError(f"unsupported circuit format {doc.get('format')!r}")
        layers = tuple(
            TimestepLayer(tuple(map(tuple, pairs)), tuple(ws))
            for pairs, ws in zip(doc["cnots"], doc["w_choices"])
        )
        return cls(
            n_qubits=int(doc["n_qubits"]),
            timesteps=int(doc["timesteps"]),
            layers=layers,
            seed=int(doc["seed"]),
            layer_order=doc.get("layer_order", "cnot_first"),
            model=doc.get("model", "custom"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CircuitSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _w_table(n_qubits, timesteps, seed):
    rng = stream(seed, TAG_CIRCUIT_TABLE)
    return rng.integers(1, 5, size=(timesteps, n_qubits))


def brickwork_pairs(n_qubits: int, step: int) -> tuple:
    """CNOT pairs of 1-based timestep ``step``: (0,1),(2,3),... for odd
    steps and (1,2),(3,4),... for even ones, first index the control."""
    start = 0 if step % 2 == 1 else 1
    return tuple((a, a + 1) for a in range(start, n_qubits - 1, 2))


def build_brickwork(n_qubits=5, timesteps=0, seed=DEFAULT_SEED, layer_order="cnot_first") -> CircuitSpec:
    if timesteps < 0:
        raise ValueError("timesteps must be non-negative")
    table = _w_table(n_qubits, timesteps, seed)
    layers = tuple(
        TimestepLayer(brickwork_pairs(n_qubits, s + 1), tuple(table[s]))
        for s in range(timesteps)
    )
    return CircuitSpec(n_qubits, timesteps, layers, seed, layer_order, model=f"brickwork{n_qubits}")


def _check_connected(n_qubits, layout):
    adj = {q: set() for q in range(n_qubits)}
    for layer in layout:
        for a, b in layer:
            adj[a].add(b)
            adj[b].add(a)
    seen, frontier = {0}, [0]
    while frontier:
        q = frontier.pop()
        for r in adj[q]:
            if r not in seen:
                seen.add(r)
                frontier.append(r)
    if len(seen) != n_qubits:
        raise ValueError("union of CNOT layers does not connect the qubit graph")


def build_ladder7(timesteps=0, seed=DEFAULT_SEED, layout=None, connectivity=LADDER7_CONNECTIVITY,
                  layer_order="cnot_first") -> CircuitSpec:
    """7-qubit model whose CNOT layout repeats every 3 timesteps."""
    n_qubits = 7
    if timesteps < 0:
        raise ValueError("timesteps must be non-negative")
    layout = tuple(tuple(tuple(p) for p in layer) for layer in (layout or LADDER7_LAYOUT))
    if len(layout) != 3:
        raise ValueError("layout must supply exactly three CNOT layers")
    if connectivity is not None:
        edges = {frozenset(e) for e in connectivity}
        for layer in layout:
            for pair in layer:
                if frozenset(pair) not in edges:
                    raise ValueError(f"CNOT pair {pair} violates device connectivity")
    for layer in layout:
        TimestepLayer(layer, (1,) * n_qubits)  # disjointness check
    _check_connected(n_qubits, layout)
    table = _w_table(n_qubits, timesteps, seed)
    layers = tuple(
        TimestepLayer(layout[s % 3], tuple(table[s])) for s in range(timesteps)
    )
    return CircuitSpec(n_qubits, timesteps, layers, seed, layer_order, model="ladder7")


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseParams:
    """Depolarizing strengths per gate plus classical readout flips.

    ``p1``/``p2`` use the replace-by-maximally-mixed convention, so p = 1
    fully depolarizes. ``readout`` is a (p(1|0), p(0|1)) pair applied to
    every qubit, or one pair per qubit.
    """

    p1: float = 0.0
    p2: float = 0.0
    readout: tuple = (0.0, 0.0)

    def __post_init__(self):
        ro = tuple(self.readout)
        if ro and isinstance(ro[0], (int, float)):
            ro = (tuple(float(p) for p in ro),)
        else:
            ro = tuple(tuple(float(p) for p in pair) for pair in ro)
        object.__setattr__(self, "readout", ro)
        probs = [self.p1, self.p2] + [p for pair in ro for p in pair]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("noise probabilities must lie in [0, 1]")
        if any(len(pair) != 2 for pair in ro):
            raise ValueError("readout entries must be (p(1|0), p(0|1)) pairs")

    def readout_for(self, n_qubits) -> tuple:
        if len(self.readout) == 1:
            return self.readout * n_qubits
        if len(self.readout) != n_qubits:
            raise ValueError("per-qubit readout list does not match register size")
        return self.readout

    @property
    def has_readout(self) -> bool:
        return any(p > 0 for pair in self.readout for p in pair)


# Illustrative defaults: strong enough that late-time signals visibly drop
# below the noiseless curves, not fitted to any hardware.
DEFAULT_NOISE = NoiseParams(p1=0.001, p2=0.01, readout=(0.02, 0.02))


def depolarizing_kraus(p: float, k_qubits: int) -> tuple:
    """Kraus set of the k-qubit depolarizing channel rho -> (1-p) rho + p I/d."""
    d = 2**k_qubits
    n_paulis = d * d
    from .paulis import PAULIS

    ops = []
    singles = [PAULIS[i] for i in range(4)]
    for idx in range(n_paulis):
        codes = [(idx >> (2 * j)) & 3 for j in range(k_qubits)]
        mat = kron_all([singles[c] for c in codes])
        wt = math.sqrt(1 - p + p / n_paulis) if idx == 0 else math.sqrt(p / n_paulis)
        ops.append(wt * mat)
    return tuple(ops)


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------

def _left_apply(mat, g, targets, n):
    """embed(g) @ mat without forming the embedding."""
    t = mat.reshape((2,) * n + (-1,))
    from .paulis import string_axis

    t = qsim._contract(t, g, [string_axis(n, q) for q in targets])
    return t.reshape(mat.shape)


def _evolve_batch(batch, stages, n):
    """Apply one timestep's stages to a stack of operators (batch, d, d)."""
    from .paulis import string_axis

    d = 2**n
    out = batch.reshape((-1,) + (2,) * (2 * n))
    for st in stages:
        targets = st._resolve_targets(n)
        rows = [1 + string_axis(n, q) for q in targets]
        cols = [1 + n + string_axis(n, q) for q in targets]
        acc = None
        for k in st.operators:
            term = qsim._contract(qsim._contract(out, k, rows), np.conj(k), cols)
            acc = term if acc is None else acc + term
        out = acc
    return out.reshape(-1, d, d)


class CompiledChannel:
    """The evolution channel of a circuit, as Kraus stages per timestep.

    Immutable once built; evolution helpers accept raw 2^n-dim ndarrays.
    For noiseless circuits the cumulative unitary per timestep is cached.
    """

    def __init__(self, n_qubits: int, step_stages, spec: CircuitSpec | None = None,
                 noise: NoiseParams | None = None):
        self.n_qubits = n_qubits
        self.step_stages = tuple(tuple(stages) for stages in step_stages)
        self.spec = spec
        self.noise = noise
        self.is_unitary = all(st.is_unitary for stages in self.step_stages for st in stages)
        self._unitaries = None
        self._superops = None

    @property
    def timesteps(self) -> int:
        return len(self.step_stages)

    def _check_t(self, t):
        if not 0 <= t <= self.timesteps:
            raise ValueError(f"timestep {t} outside compiled range 0..{self.timesteps}")

    def unitary(self, t: int) -> np.ndarray:
        """Cumulative circuit unitary after t timesteps (noiseless only)."""
        self._check_t(t)
        if not self.is_unitary:
            raise ValueError("unitary() is only defined for noiseless channels")
        if self._unitaries is None:
            self._unitaries = [np.eye(2**self.n_qubits, dtype=complex)]
        while len(self._unitaries) <= t:
            u = self._unitaries[-1]
            for st in self.step_stages[len(self._unitaries) - 1]:
                u = _left_apply(u, st.operators[0], st._resolve_targets(self.n_qubits), self.n_qubits)
            self._unitaries.append(u)
        return self._unitaries[t]

    def evolve_mat(self, mat: np.ndarray, t: int) -> np.ndarray:
        """Apply t timesteps of the channel to an operator (Schrodinger side)."""
        self._check_t(t)
        out = mat
        for stages in self.step_stages[:t]:
            for st in stages:
                out = st.apply_mat(out, self.n_qubits)
        return out

    def heisenberg_mat(self, op: np.ndarray, t: int) -> np.ndarray:
        """Adjoint-channel evolution N_t^dag[op]."""
        self._check_t(t)
        if self.is_unitary:
            u = self.unitary(t)
            return u.conj().T @ op @ u
        out = op
        for stages in reversed(self.step_stages[:t]):
            for st in reversed(stages):
                out = st.apply_adjoint_mat(out, self.n_qubits)
        return out

    def evolve_state(self, amps: np.ndarray, t: int) -> np.ndarray:
        self._check_t(t)
        if not self.is_unitary:
            raise ValueError("statevector evolution needs a noiseless channel")
        return self.unitary(t) @ amps

    def superoperator(self, t: int) -> np.ndarray:
        """Row-major superoperator of N_t: vec(N_t[rho]) = S_t vec(rho).

        Cached incrementally across t. Memory limits this to n <= 6; noisy
        sampling of larger registers must fall back to per-state evolution.
        """
        self._check_t(t)
        if self.n_qubits > 6:
            raise ValueError("superoperator route limited to 6 qubits")
        d = 2**self.n_qubits
        if self._superops is None:
            self._superops = [np.eye(d * d, dtype=complex)]
        while len(self._superops) <= t:
            s = len(self._superops)
            # evolve the d^2 matrix units through one timestep as a batch
            batch = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
            batch = _evolve_batch(batch, self.step_stages[s - 1], self.n_qubits)
            step = batch.reshape(d * d, d * d).T
            self._superops.append(step @ self._superops[-1])
        return self._superops[t]

    def evolve_batch(self, batch: np.ndarray, t: int) -> np.ndarray:
        """Apply t timesteps to a stack of operators, shape (batch, d, d)."""
        self._check_t(t)
        out = batch
        for stages in self.step_stages[:t]:
            out = _evolve_batch(out, stages, self.n_qubits)
        return out


def compile_channel(spec: CircuitSpec, noise: NoiseParams | None = None) -> CompiledChannel:
    """Build the per-timestep Kraus stage lists for a circuit.

    Noiseless compilation yields purely unitary stages. With noise, a
    depolarizing stage of strength p2 follows each CNOT and one of strength
    p1 follows each single-qubit gate. Readout flips live in the protocol
    runner, not in the channel.
    """
    n = spec.n_qubits
    p1 = noise.p1 if noise else 0.0
    p2 = noise.p2 if noise else 0.0
    dep1 = qsim.KrausChannel(depolarizing_kraus(p1, 1)) if p1 > 0 else None
    dep2 = qsim.KrausChannel(depolarizing_kraus(p2, 2)) if p2 > 0 else None
    cnot = qsim.cnot()
    step_stages = []
    for layer in spec.layers:
        cnot_stages = []
        for pair in layer.cnot_pairs:
            cnot_stages.append(qsim.KrausChannel((cnot,), targets=pair))
            if dep2 is not None:
                cnot_stages.append(qsim.KrausChannel(dep2.operators, targets=pair))
        single_stages = []
        for q, c in enumerate(layer.w_choices):
            single_stages.append(qsim.KrausChannel((w_gate(c),), targets=(q,)))
            if dep1 is not None:
                single_stages.append(qsim.KrausChannel(dep1.operators, targets=(q,)))
        if spec.layer_order == "cnot_first":
            stages = cnot_stages + single_stages
        else:
            stages = single_stages + cnot_stages
        step_stages.append(stages)
    return CompiledChannel(n, step_stages, spec=spec, noise=noise)


def identity_channel(n_qubits: int) -> CompiledChannel:
    """Channel with zero timesteps (used for t = 0 baselines)."""
    return CompiledChannel(n_qubits, [])
