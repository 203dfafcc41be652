"""State and process tomography in the Pauli basis.

Pauli strings are ordered lexicographically over ``I, X, Y, Z`` with the
leftmost qubit varying slowest (``II, IX, IY, IZ, XI, ...``). Process
matrices use ``E(rho) = sum_mn chi_mn P_m rho P_n``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .qops import DimensionError, dag, kron, pauli_string, rotation

__all__ = [
    "ChiMatrix",
    "pauli_labels",
    "pauli_basis",
    "measurement_settings",
    "simulate_measurements",
    "qst",
    "preparation_set",
    "qpt",
    "chi_from_unitary",
    "chi_from_superop",
    "process_fidelity",
    "process_fidelity_superop",
    "unitary_superop",
    "qubit_subspace_superop",
    "state_fidelity",
]

# rotations taking each Pauli eigenbasis to the Z basis: V P V^dagger = Z
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_READOUT = {"X": _H, "Y": _H @ np.diag([1, -1j]), "Z": np.eye(2, dtype=complex)}

_PREP_LABELS = ("I", "+X90", "-X90", "+Y90", "-Y90", "X180")
_PREP_GATES = {
    "I": np.eye(2, dtype=complex),
    "+X90": rotation(math.pi / 2, 0.0),
    "-X90": rotation(-math.pi / 2, 0.0),
    "+Y90": rotation(math.pi / 2, math.pi / 2),
    "-Y90": rotation(-math.pi / 2, math.pi / 2),
    "X180": rotation(math.pi, 0.0),
}


def pauli_labels(n: int) -> list[str]:
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n)]


def pauli_basis(n: int) -> np.ndarray:
    """Stack ``(4^n, 2^n, 2^n)`` of Pauli strings in the canonical order."""
    return np.stack([pauli_string(lab) for lab in pauli_labels(n)])


@dataclass
class ChiMatrix:
    data: np.ndarray
    labels: tuple

    @property
    def n(self) -> int:
        return len(self.labels[0])

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Act with the represented channel on a density matrix."""
        ps = pauli_basis(self.n)
        return np.einsum("mn,mij,jk,nlk->il", self.data, ps, rho, ps.conj())

    def to_record(self, reference: Optional["ChiMatrix"] = None) -> dict:
        rec = {
            "basis": list(self.labels),
            "real": self.data.real.tolist(),
            "imag": self.data.imag.tolist(),
        }
        if reference is not None:
            rec["fidelity"] = process_fidelity(self, reference)
            rec["fidelity_kind"] = "process"
        return rec


# -- measurements -------------------------------------------------------------


def measurement_settings(n: int) -> list[str]:
    return ["".join(s) for s in itertools.product("XYZ", repeat=n)]


def _outcome_signs(n: int) -> np.ndarray:
    """``signs[mask, b]`` = parity of bitstring ``b`` restricted to ``mask``."""
    bits = np.array(list(itertools.product((0, 1), repeat=n)))
    masks = np.array(list(itertools.product((0, 1), repeat=n)))
    return (-1.0) ** (masks @ bits.T)


def simulate_measurements(
    rho: np.ndarray,
    n: Optional[int] = None,
    shots: Optional[int] = None,
    seed: int = 0,
) -> dict[str, float]:
    """Pauli expectations from projective measurements in all ``3^n`` settings.

    Without ``shots`` the outcome probabilities are used exactly; with shots
    each setting draws multinomial counts from ``default_rng([seed, setting])``.
    A state with trace below one (leakage out of the qubit block) keeps the
    missing weight as an unregistered outcome, so ``<I...I>`` reports the trace.
    Each Pauli expectation averages over all settings compatible with it.
    """
    rho = np.asarray(rho, dtype=complex)
    if n is None:
        n = int(round(math.log2(rho.shape[0])))
    if rho.shape != (2**n, 2**n):
        raise DimensionError(f"state shape {rho.shape} is not an {n}-qubit density matrix")
    if shots is not None and shots < 1:
        raise ValueError("shots must be >= 1")
    signs = _outcome_signs(n)
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for s_idx, setting in enumerate(measurement_settings(n)):
        v = kron(*[_READOUT[c] for c in setting])
        probs = np.clip(np.real(np.diag(v @ rho @ dag(v))), 0, None)
        if shots is not None:
            rng = np.random.default_rng([seed, s_idx])
            leak = max(0.0, 1.0 - probs.sum())
            pv = np.append(probs, leak)
            draws = rng.multinomial(shots, pv / pv.sum())
            probs = draws[:-1] / shots
        for m_idx, mask in enumerate(itertools.product((0, 1), repeat=n)):
            label = "".join(c if keep else "I" for c, keep in zip(setting, mask))
            sums[label] = sums.get(label, 0.0) + float(signs[m_idx] @ probs)
            counts[label] = counts.get(label, 0) + 1
    return {k: sums[k] / counts[k] for k in pauli_labels(n)}


def qst(expectations: Mapping[str, float], n: int, normalize: bool = True) -> np.ndarray:
    """Linear-inversion state estimate projected onto the PSD cone.

    Negative eigenvalues are clipped. With ``normalize`` the trace is reset to
    one; otherwise it is restored to the measured ``<I...I>`` (default 1), which
    keeps leakage visible as trace loss in process tomography.
    """
    labels = pauli_labels(n)
    missing = [lab for lab in labels[1:] if lab not in expectations]
    if missing:
        raise ValueError(f"incomplete expectation set, missing {missing[:5]}{'...' if len(missing) > 5 else ''}")
    ident = float(expectations.get(labels[0], 1.0))
    rho = sum(
        (ident if lab == labels[0] else expectations[lab]) * pauli_string(lab) for lab in labels
    ) / 2**n
    rho = 0.5 * (rho + dag(rho))
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        raise ValueError("estimated state has no positive weight")
    w *= (1.0 if normalize else ident) / w.sum()
    return (v * w) @ dag(v)


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """``<psi|rho|psi>`` for a pure reference state."""
    psi = np.asarray(psi).reshape(-1)
    return float(np.real(psi.conj() @ rho @ psi))


# -- process tomography -------------------------------------------------------


def preparation_set(n: int) -> list[tuple[str, np.ndarray]]:
    """The ``6^n`` product preparation gates applied to ``|0...0>``."""
    out = []
    for combo in itertools.product(_PREP_LABELS, repeat=n):
        out.append(("|".join(combo), kron(*[_PREP_GATES[c] for c in combo])))
    return out


def _solve_chi(inputs: Sequence[np.ndarray], outputs: Sequence[np.ndarray], n: int) -> np.ndarray:
    ps = pauli_basis(n)
    d2 = 4**n
    rows, rhs = [], []
    for rin, rout in zip(inputs, outputs):
        # column (m, n') holds vec(P_m rho P_n')
        block = np.einsum("mij,jk,nlk->ilmn", ps, rin, ps.conj()).reshape(-1, d2 * d2)
        rows.append(block)
        rhs.append(rout.reshape(-1))
    a = np.concatenate(rows)
    b = np.concatenate(rhs)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < d2 * d2:
        raise np.linalg.LinAlgError(f"preparation set is not informationally complete (rank {rank} < {d2 * d2})")
    return sol.reshape(d2, d2)


def _project_psd(chi: np.ndarray) -> np.ndarray:
    chi = 0.5 * (chi + dag(chi))
    w, v = np.linalg.eigh(chi)
    if w.min() >= 0:
        return chi
    return (v * np.clip(w, 0, None)) @ dag(v)


def qpt(
    channel: Callable[[np.ndarray], np.ndarray],
    n: int,
    preparations: Optional[Sequence[tuple[str, np.ndarray]]] = None,
    shots: Optional[int] = None,
    seed: int = 0,
) -> ChiMatrix:
    """Process tomography of a black-box channel on ``n`` qubits.

    Each preparation acts on ``|0...0>``; the output is reconstructed by
    :func:`qst` (trace kept, so leakage lowers ``tr chi``) and ``chi`` follows
    from a least-squares inversion, then Hermitian and PSD projection.
    """
    preparations = preparations if preparations is not None else preparation_set(n)
    zero = np.zeros((2**n, 2**n), dtype=complex)
    zero[0, 0] = 1
    inputs, outputs = [], []
    for k, (_, u) in enumerate(preparations):
        rin = u @ zero @ dag(u)
        rout = channel(rin)
        ex = simulate_measurements(rout, n, shots=shots, seed=seed * 1000003 + k if shots else 0)
        inputs.append(rin)
        outputs.append(qst(ex, n, normalize=False))
    chi = _project_psd(_solve_chi(inputs, outputs, n))
    return ChiMatrix(chi, tuple(pauli_labels(n)))


def chi_from_unitary(u: np.ndarray) -> ChiMatrix:
    """``chi_mn = c_m c_n^*`` with ``U = sum_m c_m P_m``."""
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    n = int(round(math.log2(d)))
    ps = pauli_basis(n)
    c = np.einsum("mji,ji->m", ps.conj(), u) / d
    return ChiMatrix(np.outer(c, c.conj()), tuple(pauli_labels(n)))


def chi_from_superop(s: np.ndarray, n: int) -> ChiMatrix:
    """Exact ``chi`` of a qubit superoperator (row-major vec convention)."""
    d = 2**n
    basis = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
    outs = [(s @ b.reshape(-1)).reshape(d, d) for b in basis]
    return ChiMatrix(_solve_chi(list(basis), outs, n), tuple(pauli_labels(n)))


def process_fidelity(chi_exp: ChiMatrix, chi_id: ChiMatrix) -> float:
    """``Re tr(chi_exp chi_id)``."""
    a, b = np.asarray(chi_exp.data), np.asarray(chi_id.data)
    if a.shape != b.shape or tuple(chi_exp.labels) != tuple(chi_id.labels):
        raise DimensionError("chi matrices differ in dimension or basis")
    return float(np.real(np.trace(a @ b)))


def unitary_superop(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    return np.kron(u, u.conj())


def process_fidelity_superop(s: np.ndarray, u: np.ndarray) -> float:
    """``tr(S_U^dagger S) / d^2``, equal to ``tr(chi chi_U)`` for qubit channels."""
    d = np.asarray(u).shape[0]
    return float(np.real(np.trace(dag(unitary_superop(u)) @ s)) / d**2)


def qubit_subspace_superop(s: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Restrict a superoperator on ``prod(dims)`` levels to the qubit block.

    The result maps qubit-block inputs to the qubit-block part of the output,
    so population leaked to higher levels appears as lost trace.
    """
    dims = list(dims)
    idx = [int(np.ravel_multi_index(b, dims)) for b in itertools.product((0, 1), repeat=len(dims))]
    d = int(np.prod(dims))
    pairs = [i * d + j for i in idx for j in idx]
    return np.asarray(s)[..., pairs, :][..., pairs]
