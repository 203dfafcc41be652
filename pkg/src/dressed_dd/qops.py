"""Dense operator construction for small tensor-product Hilbert spaces.

Operators are plain ``numpy`` complex arrays. Subsystem dimensions are passed
explicitly wherever they matter (embedding, partial structure); the total
dimension is always ``prod(dims)``.

Sign and ladder conventions
---------------------------
``pauli("Z")`` is the textbook ``|0><0| - |1><1|``. The qubit frequency
fluctuation term ``(K/2)(|1><1| - |0><0|)`` is therefore ``-(K/2) Z``.

The drive operators follow the dressed-state literature: ``sigma_plus()`` is
``|0><1|`` and ``sigma_minus()`` is ``|1><0|``, so that
``Omega (e^{-i phi} sigma_plus + e^{i phi} sigma_minus)`` has the dressed
states ``(|0> +/- e^{i phi}|1>)/sqrt(2)`` as eigenvectors with eigenvalues
``+/- Omega``. ``ladder(d)`` returns the physical lowering/raising pair
(lowering maps ``|1>`` to ``|0>``), hence ``sigma_plus() == ladder(2)[0]``.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "embed",
    "kron",
    "pauli",
    "pauli_string",
    "ladder",
    "number",
    "sigma_plus",
    "sigma_minus",
    "dressed_basis",
    "dressed_sz",
    "matrix_exp",
    "dag",
    "is_hermitian",
    "is_unitary",
    "ket",
    "projector",
    "rotation",
    "check_density_matrix",
    "equal_up_to_phase",
]


class DimensionError(ValueError):
    """Operator shape does not match the declared subsystem dimensions."""


_PAULI = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def kron(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops, np.ones((1, 1), dtype=complex))


def pauli(which: str) -> np.ndarray:
    """Single-qubit Pauli matrix in the basis ``{|0>, |1>}``."""
    try:
        return _PAULI[which.upper()].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli label {which!r}") from None


def pauli_string(label: str) -> np.ndarray:
    """Tensor product of Paulis, leftmost character is the slowest index."""
    return kron(*(pauli(c) for c in label))


def ladder(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowering and raising operators truncated to ``d`` levels.

    Matrix elements are ``sqrt(k)`` between ``|k-1>`` and ``|k>`` (transmon /
    harmonic scaling).
    """
    if d < 2:
        raise ValueError(f"need at least 2 levels, got {d}")
    lower = np.diag(np.sqrt(np.arange(1, d)), k=1).astype(complex)
    return lower, lower.conj().T.copy()


def number(d: int) -> np.ndarray:
    return np.diag(np.arange(d)).astype(complex)


def sigma_plus() -> np.ndarray:
    """``|0><1|`` (dressed-state convention, see module docstring)."""
    return ladder(2)[0]


def sigma_minus() -> np.ndarray:
    """``|1><0|``."""
    return ladder(2)[1]


def ket(index: int | Sequence[int], dims: Sequence[int] | int = 2) -> np.ndarray:
    """Computational basis vector. ``index`` may be a tuple of per-site levels."""
    if isinstance(dims, int):
        dims = [dims] * (len(index) if isinstance(index, Sequence) else 1)
    if isinstance(index, Sequence):
        flat = int(np.ravel_multi_index(tuple(index), tuple(dims)))
    else:
        flat = int(index)
    v = np.zeros(int(np.prod(dims)), dtype=complex)
    v[flat] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())


def embed(local_op: np.ndarray, site: int, dims: Sequence[int]) -> np.ndarray:
    """Embed ``local_op`` acting on ``site`` into the full product space."""
    dims = list(dims)
    if not 0 <= site < len(dims):
        raise DimensionError(f"site {site} out of range for dims {dims}")
    local_op = np.asarray(local_op)
    if local_op.shape != (dims[site], dims[site]):
        raise DimensionError(
            f"operator of shape {local_op.shape} cannot act on site {site} with dimension {dims[site]}"
        )
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[site] = local_op.astype(complex)
    return kron(*factors)


def dressed_basis(phi: float) -> np.ndarray:
    """Unitary with columns ``|+_phi>`` and ``|-_phi>``."""
    e = np.exp(1j * phi)
    return np.array([[1, 1], [e, -e]], dtype=complex) / np.sqrt(2)


def dressed_sz(phi: float) -> np.ndarray:
    """``|+_phi><+_phi| - |-_phi><-_phi|``, equal to ``cos(phi) X + sin(phi) Y``."""
    v = dressed_basis(phi)
    return v @ np.diag([1.0, -1.0]) @ dag(v)


def rotation(angle: float, axis_angle: float = 0.0, levels: int = 2) -> np.ndarray:
    """Rotation by ``angle`` about the equatorial axis at ``axis_angle`` from x.

    For ``levels > 2`` the rotation acts on the ``{|0>, |1>}`` subspace and is
    the identity on higher levels (ideal instantaneous gate).
    """
    n_dot_sigma = np.cos(axis_angle) * _PAULI["X"] + np.sin(axis_angle) * _PAULI["Y"]
    u = np.cos(angle / 2) * _PAULI["I"] - 1j * np.sin(angle / 2) * n_dot_sigma
    if levels == 2:
        return u
    out = np.eye(levels, dtype=complex)
    out[:2, :2] = u
    return out


def is_hermitian(a: np.ndarray, rtol: float = 1e-12) -> bool:
    norm = np.linalg.norm(a)
    return bool(np.linalg.norm(a - dag(a)) <= rtol * max(norm, 1.0))


def is_unitary(u: np.ndarray, atol: float = 1e-9) -> bool:
    eye = np.eye(u.shape[-1])
    return bool(np.linalg.norm(dag(u) @ u - eye) < atol)


def matrix_exp(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Propagator ``exp(-i a t)`` for Hermitian ``a`` via eigendecomposition.

    Accepts stacks of matrices with shape ``(..., D, D)``.
    """
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)) or not np.isfinite(t):
        raise FloatingPointError("non-finite entries in matrix exponential input")
    herm = 0.5 * (a + dag(a))
    if np.linalg.norm(a - herm) > 1e-10 * max(np.linalg.norm(a), 1.0):
        raise ValueError("matrix_exp expects a Hermitian generator")
    w, v = np.linalg.eigh(herm)
    phases = np.exp(-1j * w * t)
    return (v * phases[..., None, :]) @ dag(v)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    """True if ``a = e^{i g} b`` for some global phase ``g``."""
    overlap = np.vdot(b, a)
    if abs(overlap) < 1e-12:
        return False
    phase = overlap / abs(overlap)
    return bool(np.linalg.norm(a - phase * b) < atol)


def check_density_matrix(rho: np.ndarray, tol: float = 1e-9, psd_tol: float | None = None) -> None:
    """Raise ``ValueError`` unless ``rho`` has unit trace, is Hermitian and PSD."""
    psd_tol = tol if psd_tol is None else psd_tol
    rho = np.asarray(rho)
    tr = np.trace(rho)
    if abs(tr - 1) > tol:
        raise ValueError(f"trace {tr.real:.3e} deviates from 1")
    if np.linalg.norm(rho - dag(rho)) > tol:
        raise ValueError("density matrix is not Hermitian")
    lo = np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min()
    if lo < -psd_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
