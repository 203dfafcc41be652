"""Randomized benchmarking with single-qubit Clifford and Pauli gate sets.

Two-qubit sets are tensor products of single-qubit sets. Sequences are
evaluated with superoperators: gates listed in ``channels`` use the supplied
(noisy) channel, every other gate is applied as its ideal unitary.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .qops import dag, kron, pauli, rotation
from .tomo import unitary_superop

__all__ = [
    "GateSet",
    "RbSequence",
    "clifford_group_1q",
    "pauli_group_1q",
    "tensor_gate_set",
    "build_rb_sequences",
    "run_rb",
    "embed_qubit_unitary",
    "depolarizing_superop",
    "IDEAL_INVERSE",
]

IDEAL_INVERSE = "ideal-inverse"


def _canonical_key(u: np.ndarray, decimals: int = 8) -> bytes:
    """Hashable fingerprint of ``u`` modulo global phase."""
    flat = u.reshape(-1)
    k = int(np.argmax(np.abs(flat) > 1e-6))
    v = flat * (abs(flat[k]) / flat[k])
    v = np.round(v, decimals) + 0.0  # clears negative zeros
    return v.tobytes()


@dataclass
class GateSet:
    kind: str
    labels: list
    unitaries: list
    factors: list = field(default_factory=list)

    def __post_init__(self):
        self._index = {_canonical_key(u): i for i, u in enumerate(self.unitaries)}

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.unitaries[0].shape[0])))

    def find(self, u: np.ndarray) -> Optional[int]:
        """Index of the element equal to ``u`` up to global phase."""
        return self._index.get(_canonical_key(np.asarray(u, dtype=complex)))


def clifford_group_1q() -> GateSet:
    """The 24 single-qubit Cliffords as shortest words in ``X90`` and ``Y90``.

    Words are applied left to right, so ``"X90.Y90"`` is ``Y90 @ X90``.
    """
    gens = {"X90": rotation(math.pi / 2, 0.0), "Y90": rotation(math.pi / 2, math.pi / 2)}
    seen = {_canonical_key(np.eye(2, dtype=complex)): ("I", np.eye(2, dtype=complex))}
    queue = deque([("I", np.eye(2, dtype=complex))])
    while queue:
        word, u = queue.popleft()
        for g, gu in gens.items():
            v = gu @ u
            key = _canonical_key(v)
            if key not in seen:
                w = g if word == "I" else f"{word}.{g}"
                seen[key] = (w, v)
                queue.append((w, v))
    items = list(seen.values())
    return GateSet("clifford1q", [w for w, _ in items], [u for _, u in items], [(u,) for _, u in items])


def pauli_group_1q() -> GateSet:
    """``{I, X180, Y180, Z180}`` (as ``I, -iX, -iY, -iZ``)."""
    labels = ["I", "X180", "Y180", "Z180"]
    us = [np.eye(2, dtype=complex)] + [-1j * pauli(c) for c in "XYZ"]
    return GateSet("pauli1q", labels, us, [(u,) for u in us])


def tensor_gate_set(a: GateSet, b: GateSet) -> GateSet:
    labels, us, factors = [], [], []
    for (la, ua, fa), (lb, ub, fb) in itertools.product(
        zip(a.labels, a.unitaries, a.factors), zip(b.labels, b.unitaries, b.factors)
    ):
        labels.append(f"{la}|{lb}")
        us.append(np.kron(ua, ub))
        factors.append(fa + fb)
    return GateSet(f"{a.kind}x{b.kind}", labels, us, factors)


@dataclass
class RbSequence:
    m: int
    gate_labels: list
    interleaved: Optional[str]
    recovery: np.ndarray
    recovery_labels: list
    closure: str  # "exact" or IDEAL_INVERSE


def _recover(gate_set: GateSet, inverse: np.ndarray, interleave: Optional[tuple[str, np.ndarray]]):
    """Write ``inverse`` as (gate-set layer) after up to two interleaved gates."""
    powers = range(3) if interleave is not None else range(1)
    for k in powers:
        ik = np.linalg.matrix_power(interleave[1], k) if k else np.eye(inverse.shape[0])
        idx = gate_set.find(inverse @ dag(ik))
        if idx is not None:
            labels = ([interleave[0]] * k if k else []) + [gate_set.labels[idx]]
            return labels, "exact"
    return [IDEAL_INVERSE], IDEAL_INVERSE


def build_rb_sequences(
    gate_set: GateSet,
    m: int,
    k: int,
    interleave: Optional[tuple[str, np.ndarray]] = None,
    seed: int = 0,
) -> list[RbSequence]:
    """``k`` random length-``m`` sequences closed by a recovery step.

    Sequence ``i`` draws from ``default_rng([seed, m, i])``. With
    ``interleave=(label, U)`` the target gate follows every random gate, and the
    recovery is searched as a gate-set layer preceded by zero to two further
    applications of ``U``; when none exists the sequence is closed by an ideal
    instantaneous inverse and tagged :data:`IDEAL_INVERSE`.
    """
    if m < 1 or k < 1:
        raise ValueError("m and k must be >= 1")
    d = gate_set.unitaries[0].shape[0]
    seqs = []
    for i in range(k):
        rng = np.random.default_rng([seed, m, i])
        picks = rng.integers(len(gate_set), size=m)
        total = np.eye(d, dtype=complex)
        for p in picks:
            total = gate_set.unitaries[p] @ total
            if interleave is not None:
                total = interleave[1] @ total
        inverse = dag(total)
        rec_labels, closure = _recover(gate_set, inverse, interleave)
        # the closed ideal sequence must be the identity up to phase
        check = _ideal_product(rec_labels, gate_set, interleave, inverse) @ total
        if not np.allclose(check * np.conj(check[0, 0]) / abs(check[0, 0]), np.eye(d), atol=1e-9):
            raise RuntimeError("recovery does not invert the sequence")
        seqs.append(
            RbSequence(
                m=m,
                gate_labels=[gate_set.labels[p] for p in picks],
                interleaved=interleave[0] if interleave else None,
                recovery=inverse,
                recovery_labels=rec_labels,
                closure=closure,
            )
        )
    return seqs


def _ideal_product(labels, gate_set, interleave, inverse):
    u = np.eye(inverse.shape[0], dtype=complex)
    for lab in labels:
        if lab == IDEAL_INVERSE:
            return inverse
        if interleave is not None and lab == interleave[0]:
            u = interleave[1] @ u
        else:
            u = gate_set.unitaries[gate_set.labels.index(lab)] @ u
    return u


# -- simulation ----------------------------------------------------------------


def _pad(u: np.ndarray, d: int) -> np.ndarray:
    out = np.eye(d, dtype=complex)
    out[: u.shape[0], : u.shape[0]] = u
    return out


def embed_qubit_unitary(u: np.ndarray, dims: Sequence[int], factors: Optional[tuple] = None) -> np.ndarray:
    """Lift a qubit-register unitary into a space with ``dims`` levels per site.

    Product gates (``factors``) act on each site's qubit levels; other
    unitaries act on the ``{0,1}^n`` block and leave the rest untouched.
    """
    dims = list(dims)
    if all(d == 2 for d in dims):
        return np.asarray(u, dtype=complex)
    if factors is not None:
        return kron(*[_pad(f, d) for f, d in zip(factors, dims)])
    idx = [int(np.ravel_multi_index(b, dims)) for b in itertools.product((0, 1), repeat=len(dims))]
    out = np.eye(int(np.prod(dims)), dtype=complex)
    out[np.ix_(idx, idx)] = u
    return out


def depolarizing_superop(p: float, d: int) -> np.ndarray:
    """``rho -> p rho + (1 - p) tr(rho) I/d``."""
    eye = np.eye(d).reshape(-1)
    return p * np.eye(d * d) + (1 - p) * np.outer(eye, eye) / d


def run_rb(
    sequences: Sequence[RbSequence],
    gate_set: GateSet,
    channels: Optional[Mapping[str, np.ndarray]] = None,
    dims: Optional[Sequence[int]] = None,
    interleave_unitary: Optional[np.ndarray] = None,
    after_each: Optional[np.ndarray] = None,
) -> dict:
    """Mean ground-state survival per sequence length.

    ``channels`` maps gate labels to superoperators on the simulation space;
    a stack ``(B, D^2, D^2)`` is treated as ``B`` noise realizations whose
    survival is averaged. ``after_each`` is an optional channel appended to
    every random gate layer. Returns ``m``, ``survival`` and ``stderr`` arrays
    plus the per-sequence values.
    """
    channels = dict(channels or {})
    n = gate_set.n_qubits
    dims = list(dims) if dims is not None else [2] * n
    dim = int(np.prod(dims))
    batch = 1
    for s in channels.values():
        if np.ndim(s) == 3:
            batch = max(batch, s.shape[0])

    def as_batch(s):
        s = np.asarray(s, dtype=complex)
        return s if s.ndim == 3 else s[None]

    cache: dict[str, np.ndarray] = {}

    def op_for(label: str, seq: RbSequence) -> np.ndarray:
        if label in channels:
            return as_batch(channels[label])
        if label == IDEAL_INVERSE:
            return unitary_superop(embed_qubit_unitary(seq.recovery, dims))[None]
        if label not in cache:
            if seq.interleaved is not None and label == seq.interleaved:
                if interleave_unitary is None:
                    raise ValueError(f"no channel or unitary for interleaved gate {label!r}")
                u = embed_qubit_unitary(interleave_unitary, dims)
            else:
                i = gate_set.labels.index(label)
                u = embed_qubit_unitary(gate_set.unitaries[i], dims, gate_set.factors[i] if gate_set.factors else None)
            cache[label] = unitary_superop(u)[None]
        return cache[label]

    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1
    extra = as_batch(after_each) if after_each is not None else None
    by_m: dict[int, list[float]] = {}
    for seq in sequences:
        v = np.broadcast_to(rho0.reshape(-1), (batch, dim * dim)).copy()

        def step(op, v=None):
            return np.einsum("bij,bj->bi", np.broadcast_to(op, (batch,) + op.shape[1:]), v)

        for lab in seq.gate_labels:
            v = step(op_for(lab, seq), v)
            if extra is not None:
                v = step(extra, v)
            if seq.interleaved is not None:
                v = step(op_for(seq.interleaved, seq), v)
        for lab in seq.recovery_labels:
            v = step(op_for(lab, seq), v)
        by_m.setdefault(seq.m, []).append(float(np.mean(v[:, 0].real)))
    ms = np.array(sorted(by_m))
    surv = np.array([np.mean(by_m[m]) for m in ms])
    err = np.array([np.std(by_m[m], ddof=1) / math.sqrt(len(by_m[m])) if len(by_m[m]) > 1 else 0.0 for m in ms])
    return {"m": ms, "survival": surv, "stderr": err, "per_sequence": by_m}
