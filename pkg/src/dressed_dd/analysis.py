"""Curve fits and derived coherence/fidelity quantities."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, least_squares

logger = logging.getLogger(__name__)

__all__ = [
    "FitError",
    "FitResult",
    "ramsey_model",
    "fit_ramsey",
    "tphi_from_td",
    "td_from_tphi",
    "fit_rb",
    "rb_interleaved_fidelity",
    "average_from_process",
    "process_from_average",
    "error_budget",
    "idle_fidelity",
    "tphi_from_idler_fidelity",
]


class FitError(RuntimeError):
    """A fit did not converge or its input data are unusable."""


@dataclass
class FitResult:
    params: dict
    stderr: dict
    residual_rms: float
    model_tag: str
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        def clean(v):
            v = float(v)
            return v if math.isfinite(v) else None

        rec = {
            "model_tag": self.model_tag,
            "params": {k: clean(v) for k, v in self.params.items()},
            "stderr": {k: clean(v) for k, v in self.stderr.items()},
            "residual_rms": clean(self.residual_rms),
        }
        if self.extra:
            rec["extra"] = self.extra
        return rec


# -- Ramsey ------------------------------------------------------------------


def ramsey_model(tau, decay, omega, phi0, kind: str, t1: float = math.inf):
    """``0.5 + (env - 0.5) cos(omega tau + phi0)`` with the chosen envelope."""
    tau = np.asarray(tau, dtype=float)
    if kind == "gaussian_free":
        env = np.exp(-tau / (2 * t1) - (tau / decay) ** 2)
    elif kind == "exponential":
        env = np.exp(-tau / decay)
    else:
        raise ValueError(f"unknown Ramsey model {kind!r}")
    return 0.5 + 0.5 * env * np.cos(omega * tau + phi0)


def _zero_crossing_omega(tau: np.ndarray, y: np.ndarray) -> float:
    s = np.sign(y - 0.5)
    s = s[s != 0]
    crossings = np.count_nonzero(np.diff(s))
    span = tau.max() - tau.min()
    return math.pi * max(crossings, 1) / span


def fit_ramsey(
    tau: Sequence[float],
    p1: Sequence[float],
    kind: Literal["gaussian_free", "exponential"] = "exponential",
    t1: float = math.inf,
    omega_guess: Optional[float] = None,
) -> FitResult:
    """Least-squares fit of a Ramsey fringe with a decaying envelope.

    ``t1`` is a fixed input for ``gaussian_free``; it never gets co-fitted.
    Free parameters are the decay time (``t2star`` or ``td``), the fringe
    frequency ``omega`` and the phase ``phi0``. The frequency is seeded from
    the zero-crossing count and refined with Levenberg-Marquardt from several
    starts.
    """
    tau = np.asarray(tau, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if tau.size < 20 or tau.size != p1.size:
        raise FitError("need at least 20 (tau, p1) points")
    span = tau.max() - tau.min()
    w0 = omega_guess if omega_guess is not None else _zero_crossing_omega(tau, p1)
    name = "t2star" if kind == "gaussian_free" else "td"

    def resid(x):
        # clamp the log-decay so wild LM steps cannot overflow
        with np.errstate(over="ignore", invalid="ignore"):
            return ramsey_model(tau, math.exp(min(max(x[0], -700.0), 700.0)), x[1], x[2], kind, t1) - p1

    best = None
    for fw, ph, fd in itertools.product((1.0, 0.9, 1.1, 0.8, 1.2), np.arange(4) * math.pi / 2, (0.5, 2.0)):
        x0 = np.array([math.log(fd * span), fw * w0, ph])
        try:
            sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        except (ValueError, FloatingPointError):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
        if best.cost < 1e-24 * tau.size:
            break  # exact fit; further starts cannot improve it
    if best is None or not np.all(np.isfinite(best.x)):
        raise FitError("Ramsey fit did not converge")
    x = best.x
    dof = max(tau.size - 3, 1)
    s2 = 2 * best.cost / dof
    try:
        cov = np.linalg.pinv(best.jac.T @ best.jac) * s2
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(3, np.nan)
    decay = math.exp(x[0])
    omega, phi0 = float(x[1]), float(x[2])
    if omega < 0:
        # cos is even: (omega, phi0) and (-omega, -phi0) are the same fringe
        omega, phi0 = -omega, -phi0
    phi0 = float(np.mod(phi0, 2 * math.pi))
    return FitResult(
        params={name: decay, "omega": omega, "phi0": phi0},
        stderr={name: decay * float(err[0]), "omega": float(err[1]), "phi0": float(err[2])},
        residual_rms=float(np.sqrt(np.mean(best.fun**2))),
        model_tag=f"ramsey/{kind}",
        extra={"t1_fixed": None if not math.isfinite(t1) else t1},
    )


def tphi_from_td(td: float, t1: float) -> float:
    """Pure dephasing time from ``1/T_d = 1/(2 T1) + 1/T_phi``.

    Returns ``math.inf`` (dephasing-free) when ``td >= 2 t1``.
    """
    if td <= 0 or t1 <= 0:
        raise ValueError("td and t1 must be positive")
    rate = 1 / td - 1 / (2 * t1)
    if rate <= 0:
        if rate < -1e-12 / td:
            logger.warning("td=%g exceeds 2*t1=%g: unphysical, reporting dephasing-free", td, 2 * t1)
        return math.inf
    return 1 / rate


def td_from_tphi(tphi: float, t1: float) -> float:
    return 1 / (1 / (2 * t1) + (0 if math.isinf(tphi) else 1 / tphi))


# -- fidelity conversions ----------------------------------------------------


def average_from_process(f_pro: float, d: int) -> float:
    return (d * f_pro + 1) / (d + 1)


def process_from_average(f_avg: float, d: int) -> float:
    return ((d + 1) * f_avg - 1) / d


# -- randomized benchmarking -------------------------------------------------


def _fit_decay(m: np.ndarray, p: np.ndarray, d: int):
    if np.unique(m).size < 3:
        raise FitError("RB fit needs at least 3 distinct sequence lengths")
    if np.ptp(p) < 1e-12:
        # no decay at all: p = 1 and the offset split is arbitrary
        return (float(p[0] - 1 / d), 1 / d, 1.0), (0.0, 0.0, 0.0), None
    b0 = 1 / d
    a0 = max(p[np.argmin(m)] - b0, 1e-3)
    ratio = np.clip((p - b0) / a0, 1e-6, None)
    p0 = float(np.clip(np.exp(np.polyfit(m, np.log(ratio), 1)[0]), 1e-3, 1.0))

    def resid(x):
        return x[0] * x[2] ** m + x[1] - p

    sol = least_squares(resid, [a0, b0, p0], bounds=([-2, -1, 0], [2, 2, 1]), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success:
        raise FitError(f"RB fit failed: {sol.message}")
    a, b, pp = sol.x
    if not 0 < pp <= 1:
        raise FitError(f"depolarizing parameter {pp} outside (0, 1]")
    dof = max(m.size - 3, 1)
    s2 = 2 * sol.cost / dof
    cov = np.linalg.pinv(sol.jac.T @ sol.jac) * s2
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    return (float(a), float(b), float(pp)), tuple(float(e) for e in err), sol


def rb_interleaved_fidelity(p_ref: float, p_int: float, d: int) -> float:
    return 1 - (d - 1) / d * (1 - p_int / p_ref)


def fit_rb(
    reference: tuple[Sequence[float], Sequence[float]],
    interleaved: Optional[tuple[Sequence[float], Sequence[float]]] = None,
    d: int = 2,
) -> FitResult:
    """Fit ``A p^m + B`` to survival curves.

    Reports the reference average gate fidelity ``1 - (d-1)(1-p_ref)/d`` and,
    with an interleaved curve, the interleaved gate fidelity
    ``1 - (d-1)/d (1 - p_int/p_ref)``. Both are average gate fidelities.
    """
    m_ref, s_ref = (np.asarray(x, dtype=float) for x in reference)
    (a, b, p_ref), (ea, eb, ep), sol = _fit_decay(m_ref, s_ref, d)
    params = {"A_ref": a, "B_ref": b, "p_ref": p_ref, "fidelity_ref": 1 - (d - 1) * (1 - p_ref) / d}
    stderr = {"A_ref": ea, "B_ref": eb, "p_ref": ep, "fidelity_ref": (d - 1) * ep / d}
    res = [sol.fun if sol is not None else np.zeros(m_ref.size)]
    if interleaved is not None:
        m_int, s_int = (np.asarray(x, dtype=float) for x in interleaved)
        (ai, bi, p_int), (eai, ebi, epi), sol_i = _fit_decay(m_int, s_int, d)
        fid = rb_interleaved_fidelity(p_ref, p_int, d)
        # first-order propagation of the two decay-parameter errors
        dfid = (d - 1) / d * math.hypot(epi / p_ref, p_int * ep / p_ref**2)
        params.update({"A_int": ai, "B_int": bi, "p_int": p_int, "fidelity": fid})
        stderr.update({"A_int": eai, "B_int": ebi, "p_int": epi, "fidelity": dfid})
        res.append(sol_i.fun if sol_i is not None else np.zeros(m_int.size))
    allres = np.concatenate(res)
    return FitResult(params, stderr, float(np.sqrt(np.mean(allres**2))), "rb/exponential", {"fidelity_kind": "average", "d": d})


# -- error budget ------------------------------------------------------------


def error_budget(error_fn: Callable[[frozenset], float], channels: Iterable[str] = ("t1", "tphi", "anharmonicity")) -> dict:
    """Attribute gate error to channels by switching each one off in turn.

    ``error_fn(enabled)`` returns the gate error with the channels in
    ``enabled`` switched on. The contribution of channel ``c`` is
    ``error(all) - error(all without c)``; fractions are normalised by
    ``error(all)`` and the remainder (interaction terms plus the error left
    with every channel off) is reported as ``residual`` so everything sums to 1.
    """
    channels = tuple(channels)
    everything = frozenset(channels)
    total = float(error_fn(everything))
    contrib = {c: total - float(error_fn(everything - {c})) for c in channels}
    floor = float(error_fn(frozenset()))
    if total == 0:
        fractions = {c: 0.0 for c in channels}
        residual = 1.0
    else:
        fractions = {c: v / total for c, v in contrib.items()}
        residual = 1.0 - sum(fractions.values())
    return {
        "total_error": total,
        "baseline_error": floor,
        "contributions": contrib,
        "fractions": fractions,
        "residual": residual,
    }


# -- idler inversion ---------------------------------------------------------


def idle_fidelity(t1: float, tphi: float, gate_len: float, kind: str = "process", method: str = "rk45") -> float:
    """Fidelity of a qubit idling for ``gate_len`` under T1 and Tphi (simulated)."""
    from .evolve import channel_superoperator, lindblad_for
    from .model import QubitParams, System
    from .schedule import idler_sequence
    from .tomo import process_fidelity_superop

    system = System((QubitParams(t1=t1, tphi=tphi),))
    s = channel_superoperator(idler_sequence(gate_len), system, lindblad_for(system), method=method)
    f = process_fidelity_superop(s, np.eye(2))
    return f if kind == "process" else average_from_process(f, 2)


def tphi_from_idler_fidelity(
    f_idler: float,
    t1: float,
    gate_len: float,
    kind: Literal["process", "average"] = "process",
    rtol: float = 0.01,
) -> float:
    """Pure dephasing time reproducing an idler-gate fidelity by simulation.

    The idler channel is simulated with the Lindblad engine for each trial
    ``T_phi`` and the fidelity (``kind``) is matched by a bracketing root
    search on ``log T_phi`` to ``rtol`` relative accuracy.
    """
    if not 0 < f_idler < 1:
        raise ValueError("f_idler must lie in (0, 1)")
    f_max = idle_fidelity(t1, math.inf, gate_len, kind)
    if f_idler >= f_max:
        raise ValueError(f"fidelity {f_idler} unreachable: T1 alone limits it to {f_max:.6f}")
    lo = math.log(gate_len * 1e-3)
    hi = math.log(gate_len * 1e6)
    g = lambda x: idle_fidelity(t1, math.exp(x), gate_len, kind) - f_idler
    if g(lo) > 0:
        raise ValueError(f"fidelity {f_idler} is below the strong-dephasing limit")
    root = brentq(g, lo, hi, xtol=math.log1p(rtol) / 4, rtol=1e-12)
    return math.exp(root)
