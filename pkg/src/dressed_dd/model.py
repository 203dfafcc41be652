"""Hamiltonians for driven, swap-coupled transmon qubits.

Units: hbar = 1, every energy is an angular frequency in rad/s, every time is
in seconds. All dynamics live in the frame rotating at the common (gate point)
qubit frequency, so static Z biases appear as detunings.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .qops import dag, dressed_basis, dressed_sz, embed, kron, ladder, number, pauli

__all__ = [
    "MHz",
    "GHz",
    "QubitParams",
    "DriveTone",
    "CouplingSpec",
    "System",
    "h1",
    "h1_eff",
    "phase_error",
    "h2",
    "h2_eff",
    "h_full",
    "effective_coupling",
    "crosstalk_stark_shift",
    "swap_rate_full_model",
    "uphase_target",
    "dressed_product_basis",
]

MHz = 2 * math.pi * 1e6
GHz = 2 * math.pi * 1e9


@dataclass(frozen=True)
class QubitParams:
    """Coherence and circuit parameters of one transmon.

    ``anharmonicity`` is the positive number ``eta`` such that level ``|2>``
    sits at ``2 w01 - eta``. It is ignored for two-level qubits.
    """

    t1: float = math.inf
    tphi: float = math.inf
    anharmonicity: float = 0.0
    levels: int = 2
    g: float = 0.0

    def __post_init__(self):
        if not self.t1 > 0 or not self.tphi > 0:
            raise ValueError("t1 and tphi must be positive")
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        if self.anharmonicity < 0:
            raise ValueError("anharmonicity must be non-negative")


@dataclass(frozen=True)
class DriveTone:
    """Resonant (or detuned) microwave drive ``Omega e^{-i phi}``.

    ``phase_flip_at`` is a time offset inside the segment at which the phase
    is advanced by pi; schedules split such segments before simulation.
    """

    rabi: float
    phase: float = 0.0
    phase_flip_at: Optional[float] = None
    detuning: float = 0.0

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError("rabi must be non-negative")

    def flipped(self) -> "DriveTone":
        return DriveTone(self.rabi, self.phase + math.pi, None, self.detuning)


@dataclass(frozen=True)
class CouplingSpec:
    """Swap coupling, given directly (``lam``) or via the dispersive route."""

    lam: Optional[float] = None
    g1: Optional[float] = None
    g2: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        dispersive = (self.g1, self.g2, self.delta)
        if self.lam is None and any(v is None for v in dispersive):
            raise ValueError("give either lam or all of g1, g2, delta")
        if self.lam is None:
            lim = abs(self.delta) / 5
            if abs(self.g1) > lim or abs(self.g2) > lim:
                warnings.warn("g exceeds delta/5: dispersive approximation is marginal", stacklevel=3)

    @property
    def value(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        return effective_coupling(self.g1, self.g2, self.delta)["lambda"]


def _drive_term(rabi: float, phase: float, lower: np.ndarray) -> np.ndarray:
    # convention: sigma_plus = |0><1| is the lowering operator
    return rabi * (np.exp(-1j * phase) * lower + np.exp(1j * phase) * dag(lower))


def h1(k: float, drive: DriveTone) -> np.ndarray:
    """Single driven qubit with frequency fluctuation ``k``."""
    lower, _ = ladder(2)
    return -0.5 * k * pauli("Z") + _drive_term(drive.rabi, drive.phase, lower)


def h1_eff(k: float, rabi: float, phi: float = 0.0) -> np.ndarray:
    """Adiabatic effective Hamiltonian ``(k^2/(8 rabi) + rabi) S_z``."""
    if rabi == 0:
        raise ValueError("effective dressed Hamiltonian needs rabi > 0")
    if abs(k) > rabi / 5:
        warnings.warn("|k| is not small compared to rabi", stacklevel=2)
    return (k**2 / (8 * rabi) + rabi) * dressed_sz(phi)


def phase_error(k, rabi: float, t=None) -> float:
    """Dressed-state phase error ``-int k^2/(4 rabi) dt``.

    With scalar ``k`` and scalar ``t`` this is ``-k^2 t / (4 rabi)``; with
    arrays the integral is taken by the trapezoid rule over ``t``.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim == 0:
        return float(-(k**2) * t / (4 * rabi))
    return float(-np.trapezoid(k**2, t) / (4 * rabi))


def h2(coupling: CouplingSpec | float, drive1: DriveTone, drive2: DriveTone) -> np.ndarray:
    """Two driven qubits with swap coupling, two-level truncation."""
    lam = coupling.value if isinstance(coupling, CouplingSpec) else float(coupling)
    return System((QubitParams(), QubitParams()), coupling=lam).hamiltonian(
        (drive1, drive2), coupling_active=True
    )


def h2_eff(coupling: CouplingSpec | float, rabi1: float, rabi2: float, phi: float = 0.0) -> np.ndarray:
    """``(lam/2) S_z1 S_z2 + sum_j rabi_j S_zj`` in the computational basis."""
    lam = coupling.value if isinstance(coupling, CouplingSpec) else float(coupling)
    if lam != 0 and abs(rabi1 - rabi2) < 3 * abs(lam):
        warnings.warn("|rabi1 - rabi2| is not large compared to |lambda|", stacklevel=2)
    sz = dressed_sz(phi)
    eye = np.eye(2)
    return 0.5 * lam * kron(sz, sz) + rabi1 * kron(sz, eye) + rabi2 * kron(eye, sz)


def uphase_target(theta: float = math.pi / 4, phi: float = 0.0) -> np.ndarray:
    """Ideal dressed-basis conditional phase ``exp(i theta S_z1 S_z2)``."""
    sz = dressed_sz(phi)
    zz = kron(sz, sz)
    return math.cos(theta) * np.eye(4) + 1j * math.sin(theta) * zz


@dataclass(frozen=True)
class System:
    """Qubits at a common gate point, optionally swap-coupled.

    ``crosstalk`` is an optional complex ``n x n`` matrix mixing the complex
    drive amplitudes ``Omega_j e^{-i phi_j}`` before they reach the qubits.
    ``stark`` adds a static detuning per site (e.g. a crosstalk Stark shift).
    ``coupling_kind`` selects the exchange term ``lam (a1 a2^+ + h.c.)``
    (``"swap"``) or its dressed-frame secular part ``(lam/2) S_z1 S_z2``
    (``"dressed_zz"``, two-level qubits only, axes taken from the drive phases).
    """

    qubits: tuple
    coupling: float = 0.0
    crosstalk: Optional[np.ndarray] = field(default=None, compare=False)
    stark: Optional[tuple] = None
    coupling_kind: str = "swap"

    def __post_init__(self):
        if self.coupling_kind not in ("swap", "dressed_zz"):
            raise ValueError(f"unknown coupling_kind {self.coupling_kind!r}")
        if self.coupling_kind == "dressed_zz" and (len(self.qubits) != 2 or any(q.levels != 2 for q in self.qubits)):
            raise ValueError("dressed_zz coupling needs two two-level qubits")

    @property
    def dims(self) -> list[int]:
        return [q.levels for q in self.qubits]

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def number_diagonals(self) -> np.ndarray:
        """Array ``(n_sites, D)`` with the diagonal of ``n_j`` on the full space."""
        dims = self.dims
        return np.array([np.diag(embed(number(d), j, dims)).real for j, d in enumerate(dims)])

    def static_hamiltonian(self, detunings: Sequence[float] = (), coupling_active: bool = False) -> np.ndarray:
        dims = self.dims
        h = np.zeros((self.dim, self.dim), dtype=complex)
        stark = self.stark or (0.0,) * len(dims)
        for j, q in enumerate(self.qubits):
            det = (detunings[j] if j < len(detunings) else 0.0) + stark[j]
            n = number(q.levels)
            local = det * n
            if q.levels > 2:
                local = local - 0.5 * q.anharmonicity * (n @ (n - np.eye(q.levels)))
            if np.any(local):
                h += embed(local, j, dims)
        if coupling_active and self.coupling and self.coupling_kind == "swap":
            a1 = embed(ladder(dims[0])[0], 0, dims)
            a2 = embed(ladder(dims[1])[0], 1, dims)
            h += self.coupling * (a1 @ dag(a2) + dag(a1) @ a2)
        return h

    def drive_amplitudes(self, drives: Sequence[Optional[DriveTone]], t: float = 0.0) -> np.ndarray:
        amps = np.zeros(len(self.qubits), dtype=complex)
        for j, d in enumerate(drives):
            if d is not None and d.rabi:
                amps[j] = d.rabi * np.exp(-1j * (d.phase + d.detuning * t))
        if self.crosstalk is not None:
            amps = np.asarray(self.crosstalk) @ amps
        return amps

    def drive_hamiltonian(self, drives: Sequence[Optional[DriveTone]], t: float = 0.0) -> np.ndarray:
        dims = self.dims
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for j, amp in enumerate(self.drive_amplitudes(drives, t)):
            if amp:
                a = embed(ladder(dims[j])[0], j, dims)
                h += amp * a + np.conj(amp) * dag(a)
        return h

    def hamiltonian(
        self,
        drives: Sequence[Optional[DriveTone]] = (),
        detunings: Sequence[float] = (),
        coupling_active: bool = False,
        t: float = 0.0,
    ) -> np.ndarray:
        h = self.static_hamiltonian(detunings, coupling_active) + self.drive_hamiltonian(drives, t)
        if coupling_active and self.coupling and self.coupling_kind == "dressed_zz":
            phases = [d.phase if d is not None else 0.0 for d in (tuple(drives) + (None, None))[:2]]
            h = h + 0.5 * self.coupling * kron(dressed_sz(phases[0]), dressed_sz(phases[1]))
        return h


def h_full(
    q1: QubitParams,
    q2: QubitParams,
    resonator_levels: int,
    delta: float,
    drives: Sequence[Optional[DriveTone]] = (None, None),
    direct: float = 0.0,
    qubit_detunings: Sequence[float] = (0.0, 0.0),
) -> tuple[np.ndarray, list[int]]:
    """Qubit-resonator-qubit Hamiltonian in the frame of the qubits.

    Both qubits sit ``delta`` below the resonator. Returns ``(H, dims)`` with
    ``dims = [q1.levels, q2.levels, resonator_levels]``.
    """
    if resonator_levels < 2:
        raise ValueError("resonator needs at least 2 levels")
    dims = [q1.levels, q2.levels, resonator_levels]
    if int(np.prod(dims)) > 200:
        raise ValueError(f"Hilbert space {dims} exceeds 200 states")
    sys = System((q1, q2), coupling=direct, stark=tuple(qubit_detunings))
    h_q = sys.hamiltonian(drives, coupling_active=bool(direct))
    h = kron(h_q, np.eye(resonator_levels))
    a = embed(ladder(resonator_levels)[0], 2, dims)
    h = h + delta * dag(a) @ a
    for j, q in enumerate((q1, q2)):
        b = embed(ladder(q.levels)[0], j, dims)
        h = h + q.g * (dag(a) @ b + a @ dag(b))
    return h, dims


def effective_coupling(g1: float, g2: float, delta: float) -> dict:
    """Resonator-mediated swap rate and vacuum Stark shifts."""
    if delta == 0:
        raise ValueError("delta must be non-zero")
    return {"lambda": -g1 * g2 / delta, "stark1": -(g1**2) / delta, "stark2": -(g2**2) / delta}


def crosstalk_stark_shift(omega_c: float, detuning: float) -> float:
    """Coefficient of ``(|1><1| - |0><0|)`` from a far-detuned crosstalk drive."""
    if detuning == 0:
        raise ValueError("detuning must be non-zero")
    if abs(omega_c) > abs(detuning) / 5:
        warnings.warn("crosstalk drive is not dispersive", stacklevel=2)
    return abs(omega_c) ** 2 / detuning


def swap_rate_full_model(
    q1: QubitParams,
    q2: QubitParams,
    delta: float,
    resonator_levels: int = 2,
    compensate_stark: bool = True,
    direct: float = 0.0,
) -> float:
    """Signed swap rate extracted from the single-excitation spectrum of ``h_full``.

    The two eigenstates with the least resonator weight are the qubit-like
    normal modes; half their splitting is ``|lambda|``. The sign follows the
    symmetric/antisymmetric ordering (symmetric lower means ``lambda < 0``).
    """
    q1_, q2_ = (QubitParams(levels=q.levels, anharmonicity=q.anharmonicity, g=q.g) for q in (q1, q2))
    dets = (q1.g**2 / delta, q2.g**2 / delta) if compensate_stark else (0.0, 0.0)
    h, dims = h_full(q1_, q2_, resonator_levels, delta, direct=direct, qubit_detunings=dets)
    idx = [np.ravel_multi_index(s, dims) for s in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
    block = h[np.ix_(idx, idx)]
    w, v = np.linalg.eigh(block)
    order = np.argsort(np.abs(v[2]) ** 2)[:2]
    ea, eb = w[order]
    va = v[:, order[0]]
    sym_a = np.real(va[0] * np.conj(va[1])) > 0
    e_sym, e_anti = (ea, eb) if sym_a else (eb, ea)
    return float((e_sym - e_anti) / 2)


def dressed_product_basis(phi: float, n: int = 2) -> np.ndarray:
    """Columns ordered ``|++>, |+->, |-+>, |-->`` for ``n = 2``."""
    return kron(*([dressed_basis(phi)] * n))
