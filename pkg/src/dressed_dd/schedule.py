"""Piecewise-constant control schedules and the protocol builders.

A :class:`Schedule` is an ordered list of constant-Hamiltonian
:class:`Segment` objects plus ideal instantaneous gates placed on segment
boundaries. Phase flips are never smoothed: a drive whose phase is inverted
mid-segment is split into two segments by :meth:`Schedule.expanded`.

Serialized form (``Schedule.to_dict``, JSON compatible)::

    {"n_sites": 2,
     "segments": [{"duration_ns": 104.2, "coupling_active": true,
                   "detunings_mhz": [0.0, 0.0], "label": "gate/1",
                   "drives": [{"rabi_mhz": 3.6, "phase_rad": 0.0,
                               "detuning_mhz": 0.0, "phase_flip_at_ns": null},
                              null]}],
     "gates": [{"after_segment": -1, "site": 0, "label": "X90",
                "unitary_re": [[...]], "unitary_im": [[...]]}]}

``after_segment = -1`` places a gate before the first segment; ``site = null``
means the unitary acts on the whole register.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from .model import MHz, CouplingSpec, DriveTone
from .qops import dressed_sz, matrix_exp, rotation

__all__ = [
    "Segment",
    "InstantGate",
    "Schedule",
    "RamseyVariant",
    "ramsey_sequence",
    "uphase_duration",
    "uphase_sequence",
    "storage_sequence",
    "two_q_dd_ramsey",
    "idler_sequence",
    "X90",
    "X180",
]

X90 = rotation(math.pi / 2, 0.0)
X180 = rotation(math.pi, 0.0)


class RamseyVariant(str, enum.Enum):
    FREE_DECAY = "free_decay"
    SPIN_ECHO = "spin_echo"
    ONE_Q_DD = "one_q_dd"


@dataclass(frozen=True)
class Segment:
    duration: float
    drives: tuple = ()
    detunings: tuple = ()
    coupling_active: bool = False
    label: str = ""

    def __post_init__(self):
        if not self.duration >= 0 or not math.isfinite(self.duration):
            raise ValueError(f"segment duration must be finite and >= 0, got {self.duration}")
        for d in self.drives:
            if d is not None and not all(math.isfinite(x) for x in (d.rabi, d.phase, d.detuning)):
                raise ValueError("segment has non-finite drive parameters")
        if not all(math.isfinite(x) for x in self.detunings):
            raise ValueError("segment has non-finite detunings")

    def drive(self, site: int) -> Optional[DriveTone]:
        return self.drives[site] if site < len(self.drives) else None


@dataclass(frozen=True)
class InstantGate:
    after_segment: int
    site: Optional[int]
    unitary: np.ndarray = field(compare=False)
    label: str = ""


@dataclass(frozen=True)
class Schedule:
    n_sites: int
    segments: tuple = ()
    gates: tuple = ()
    label: str = ""

    def __post_init__(self):
        for g in self.gates:
            if not -1 <= g.after_segment < len(self.segments):
                raise ValueError(f"gate {g.label!r} references segment {g.after_segment}")
            if g.site is not None and not 0 <= g.site < self.n_sites:
                raise ValueError(f"gate {g.label!r} acts on invalid site {g.site}")

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def gates_after(self, index: int) -> list[InstantGate]:
        return [g for g in self.gates if g.after_segment == index]

    def items(self) -> Iterator[tuple]:
        """Yield ``("gate", InstantGate)`` and ``("segment", Segment, t_start)`` in order."""
        for g in self.gates_after(-1):
            yield "gate", g
        t = 0.0
        for i, seg in enumerate(self.segments):
            yield "segment", seg, t
            t += seg.duration
            for g in self.gates_after(i):
                yield "gate", g

    def expanded(self) -> "Schedule":
        """Split segments at every drive ``phase_flip_at`` time."""
        segments, gate_map = [], {}
        for i, seg in enumerate(self.segments):
            cuts = sorted(
                {d.phase_flip_at for d in seg.drives if d is not None and d.phase_flip_at is not None}
            )
            for c in cuts:
                if not 0 <= c <= seg.duration:
                    raise ValueError(f"phase flip at {c} lies outside segment of length {seg.duration}")
            edges = [0.0, *cuts, seg.duration]
            for k in range(len(edges) - 1):
                drives = []
                for d in seg.drives:
                    if d is None:
                        drives.append(None)
                        continue
                    flip = d.phase_flip_at is not None and edges[k] >= d.phase_flip_at
                    base = DriveTone(d.rabi, d.phase, None, d.detuning)
                    drives.append(base.flipped() if flip else base)
                segments.append(replace(seg, duration=edges[k + 1] - edges[k], drives=tuple(drives)))
            gate_map[i] = len(segments) - 1
        gate_map[-1] = -1
        gates = tuple(replace(g, after_segment=gate_map[g.after_segment]) for g in self.gates)
        return Schedule(self.n_sites, tuple(segments), gates, self.label)

    def then(self, other: "Schedule") -> "Schedule":
        """Concatenate two schedules on the same register."""
        if other.n_sites != self.n_sites:
            raise ValueError("cannot concatenate schedules on different registers")
        offset = len(self.segments)
        gates = list(self.gates)
        for g in other.gates:
            idx = g.after_segment + offset if g.after_segment >= 0 else offset - 1
            gates.append(replace(g, after_segment=idx))
        return Schedule(self.n_sites, self.segments + other.segments, tuple(gates), self.label or other.label)

    def with_gate(self, unitary: np.ndarray, site: Optional[int], label: str = "", at_start: bool = False) -> "Schedule":
        idx = -1 if at_start else len(self.segments) - 1
        gate = InstantGate(idx, site, np.asarray(unitary, dtype=complex), label)
        gates = (gate, *self.gates) if at_start else (*self.gates, gate)
        return replace(self, gates=gates)

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        def drive(d):
            if d is None:
                return None
            return {
                "rabi_mhz": d.rabi / MHz,
                "phase_rad": d.phase,
                "detuning_mhz": d.detuning / MHz,
                "phase_flip_at_ns": None if d.phase_flip_at is None else d.phase_flip_at * 1e9,
            }

        return {
            "n_sites": self.n_sites,
            "label": self.label,
            "segments": [
                {
                    "duration_ns": s.duration * 1e9,
                    "coupling_active": s.coupling_active,
                    "detunings_mhz": [x / MHz for x in s.detunings],
                    "label": s.label,
                    "drives": [drive(d) for d in s.drives],
                }
                for s in self.segments
            ],
            "gates": [
                {
                    "after_segment": g.after_segment,
                    "site": g.site,
                    "label": g.label,
                    "unitary_re": np.real(g.unitary).tolist(),
                    "unitary_im": np.imag(g.unitary).tolist(),
                }
                for g in self.gates
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Schedule":
        def drive(d):
            if d is None:
                return None
            flip = d.get("phase_flip_at_ns")
            return DriveTone(
                d["rabi_mhz"] * MHz,
                d.get("phase_rad", 0.0),
                None if flip is None else flip * 1e-9,
                d.get("detuning_mhz", 0.0) * MHz,
            )

        segments = tuple(
            Segment(
                s["duration_ns"] * 1e-9,
                tuple(drive(d) for d in s.get("drives", [])),
                tuple(x * MHz for x in s.get("detunings_mhz", [])),
                bool(s.get("coupling_active", False)),
                s.get("label", ""),
            )
            for s in doc["segments"]
        )
        gates = tuple(
            InstantGate(
                g["after_segment"],
                g["site"],
                np.array(g["unitary_re"]) + 1j * np.array(g["unitary_im"]),
                g.get("label", ""),
            )
            for g in doc.get("gates", [])
        )
        return cls(doc["n_sites"], segments, gates, doc.get("label", ""))


def _idle(duration: float, n_sites: int = 1, label: str = "idle") -> Segment:
    return Segment(duration, (None,) * n_sites, (), False, label)


def ramsey_sequence(
    variant: RamseyVariant | str,
    tau: float,
    omega_r: float,
    drive_rabi: float = 0.0,
    drive_phase: float = -math.pi / 2,
) -> Schedule:
    """Single-qubit Ramsey-type sequence.

    ``X90 - storage(tau) - theta90`` with ``theta = omega_r * tau``. The
    storage interval is a free idle, an idle split by an ``X180`` echo, or a
    continuous drive whose phase is inverted at ``tau/2``. The default drive
    phase of ``-pi/2`` is the axis of the state prepared by ``X90`` (spin
    locking), so the prepared state is a dressed state of the drive.
    """
    variant = RamseyVariant(variant)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    half = tau / 2
    if variant is RamseyVariant.FREE_DECAY:
        segs = (_idle(tau),)
        gates = []
    elif variant is RamseyVariant.SPIN_ECHO:
        segs = (_idle(half), _idle(half))
        gates = [InstantGate(0, 0, X180, "X180")]
    else:
        tone = DriveTone(drive_rabi, drive_phase)
        segs = (
            Segment(half, (tone,), (), False, "dd/1"),
            Segment(half, (tone.flipped(),), (), False, "dd/2"),
        )
        gates = []
    theta = omega_r * tau
    gates = [InstantGate(-1, 0, X90, "X90"), *gates, InstantGate(len(segs) - 1, 0, rotation(math.pi / 2, theta), "theta90")]
    return Schedule(1, segs, tuple(gates), f"ramsey/{variant.value}")


def uphase_duration(lam: float) -> float:
    """Gate time ``pi / (2 |lam|)`` giving a conditional phase of pi/4."""
    if lam == 0:
        raise ValueError("lambda must be non-zero")
    return math.pi / (2 * abs(lam))


def uphase_sequence(
    coupling: CouplingSpec | float,
    drive1: DriveTone,
    drive2: DriveTone,
    tau: float,
    z_correction_phase: float = 0.0,
    cphase_corrections: bool = False,
) -> Schedule:
    """Dressed-state conditional phase gate with both drive phases flipped at ``tau/2``.

    ``z_correction_phase`` is an ideal Z rotation on qubit 1 before the gate
    (frame alignment; 0 in the shared rotating frame). With
    ``cphase_corrections`` the local rotations ``exp(i theta S_z,j)`` are
    appended, which turn the gate into a controlled phase of ``4 theta`` on
    ``|+,+>``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if abs(drive1.phase - drive2.phase) > 1e-12:
        raise ValueError("both drives must share the same phase")
    d1 = DriveTone(drive1.rabi, drive1.phase, None, drive1.detuning)
    d2 = DriveTone(drive2.rabi, drive2.phase, None, drive2.detuning)
    segs = (
        Segment(tau / 2, (d1, d2), (), True, "gate/1"),
        Segment(tau / 2, (d1.flipped(), d2.flipped()), (), True, "gate/2"),
    )
    gates = []
    if z_correction_phase:
        gates.append(InstantGate(-1, 0, np.diag([1.0, np.exp(1j * z_correction_phase)]), "Zalign"))
    if cphase_corrections:
        lam = coupling.value if isinstance(coupling, CouplingSpec) else float(coupling)
        theta = -0.5 * lam * tau
        sz = dressed_sz(drive1.phase)
        corr = matrix_exp(sz, -theta)  # exp(i theta S_z)
        gates += [InstantGate(1, 0, corr, "Sz-corr"), InstantGate(1, 1, corr, "Sz-corr")]
    return Schedule(2, segs, tuple(gates), "uphase")


def storage_sequence(tau: float, variant: RamseyVariant | str | None, drive: Optional[DriveTone] = None) -> Schedule:
    """Storage interval whose ideal process is the identity.

    Preparation and tomography pre-rotations are applied by the tomography
    routines around this schedule. The echo variant appends a second
    ``X180`` so the ideal storage process is the identity.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    variant = RamseyVariant(variant) if variant is not None else RamseyVariant.FREE_DECAY
    half = tau / 2
    if variant is RamseyVariant.FREE_DECAY:
        return Schedule(1, (_idle(tau),), (), "storage/free_decay")
    if variant is RamseyVariant.SPIN_ECHO:
        gates = (InstantGate(0, 0, X180, "X180"), InstantGate(1, 0, X180, "X180"))
        return Schedule(1, (_idle(half), _idle(half)), gates, "storage/spin_echo")
    if drive is None:
        raise ValueError("1Q-DD storage needs a drive")
    tone = DriveTone(drive.rabi, drive.phase, None, drive.detuning)
    segs = (Segment(half, (tone,), (), False, "dd/1"), Segment(half, (tone.flipped(),), (), False, "dd/2"))
    return Schedule(1, segs, (), "storage/one_q_dd")


def two_q_dd_ramsey(
    tau: float,
    drive1: DriveTone,
    drive2: DriveTone,
    target: int = 0,
    spectator_state: str = "+",
    omega_r: float = 0.0,
) -> Schedule:
    """Ramsey on ``target`` with both qubits driven and coupled (2Q-DD).

    Both drives share the phase ``phi``; the target is prepared by ``X90``
    into ``|+_{-pi/2}>``, so ``phi`` should be ``-pi/2`` for spin locking.
    The spectator is prepared in the dressed state ``|+_phi>`` or ``|-_phi>``.
    """
    if spectator_state not in ("+", "-"):
        raise ValueError("spectator_state must be '+' or '-'")
    spectator = 1 - target
    phi = drive1.phase
    # |0> -> |+_phi> is a pi/2 rotation about the axis phi + pi/2
    prep_angle = math.pi / 2 if spectator_state == "+" else -math.pi / 2
    prep = rotation(prep_angle, phi + math.pi / 2)
    d1 = DriveTone(drive1.rabi, drive1.phase, None, drive1.detuning)
    d2 = DriveTone(drive2.rabi, drive2.phase, None, drive2.detuning)
    segs = (
        Segment(tau / 2, (d1, d2), (), True, "2qdd/1"),
        Segment(tau / 2, (d1.flipped(), d2.flipped()), (), True, "2qdd/2"),
    )
    gates = (
        InstantGate(-1, target, X90, "X90"),
        InstantGate(-1, spectator, prep, f"prep{spectator_state}"),
        InstantGate(1, target, rotation(math.pi / 2, omega_r * tau), "theta90"),
    )
    return Schedule(2, segs, gates, f"2qdd_ramsey/{spectator_state}")


def idler_sequence(duration: float) -> Schedule:
    """Idle at the gate point for ``duration`` (idler gate for interleaved RB)."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    return Schedule(1, (_idle(duration),), (), "idler")
