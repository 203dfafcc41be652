"""Time evolution of schedules: unitary propagation, Lindblad integration and
trajectory averaging over detuning noise.

States may carry a leading batch axis ``(B, D, D)``. Noise is passed per
batch row either as constant detunings ``(B, n_sites)`` (quasi-static) or as
a :class:`~dressed_dd.noise.NoiseTrace`. The noise couples through the
number operator of each site, ``sum_j K_j(t) n_j``, which for a qubit equals
``(K/2)(|1><1| - |0><0|)`` up to an irrelevant constant.

The Lindblad equation is integrated segment by segment with an adaptive
Dormand-Prince 4(5) scheme (``scipy.integrate.solve_ivp``), so every phase
flip and instantaneous gate lands on a step boundary. For Hermitian inputs
the right-hand side is evaluated as ``A + A^dagger``, which keeps every
Runge-Kutta stage exactly Hermitian. ``method="expm"`` instead exponentiates
the Liouvillian of each constant piece; it serves as an independent check and
as a fast path for many short piecewise-constant runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .model import QubitParams, System
from .noise import NoiseModel, NoiseTrace, sample_trajectories
from .qops import dag, embed, ladder, number
from .schedule import Schedule

logger = logging.getLogger(__name__)

__all__ = [
    "NumericalError",
    "LindbladSpec",
    "EvolutionResult",
    "collapse_ops",
    "lindblad_for",
    "propagate_unitary",
    "propagate_lindblad",
    "channel_superoperator",
    "apply_superoperator",
    "average_trajectories",
    "check_physical",
]


class NumericalError(RuntimeError):
    """Integration failed to meet its tolerance or produced non-finite values."""


@dataclass(frozen=True)
class LindbladSpec:
    """Collapse operators on the full space, already scaled by ``sqrt(rate)``."""

    ops: tuple = ()
    labels: tuple = ()

    def __add__(self, other: "LindbladSpec") -> "LindbladSpec":
        return LindbladSpec(self.ops + other.ops, self.labels + other.labels)

    @property
    def empty(self) -> bool:
        return len(self.ops) == 0


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: Optional[np.ndarray] = None
    observables: dict = field(default_factory=dict)
    final: Optional[np.ndarray] = None
    final_propagator: Optional[np.ndarray] = None
    stderr: dict = field(default_factory=dict)


def collapse_ops(params: QubitParams, site: int, dims: Sequence[int]) -> LindbladSpec:
    """Relaxation ``sqrt(1/T1) a`` and pure dephasing ``sqrt(2/Tphi) n``.

    The dephasing rate makes ``rho_01`` decay at ``1/(2 T1) + 1/Tphi``.
    """
    ops, labels = [], []
    d = dims[site]
    if math.isfinite(params.t1):
        ops.append(embed(ladder(d)[0], site, dims) / math.sqrt(params.t1))
        labels.append(f"relax/{site}")
    if math.isfinite(params.tphi):
        ops.append(embed(number(d), site, dims) * math.sqrt(2 / params.tphi))
        labels.append(f"dephase/{site}")
    return LindbladSpec(tuple(ops), tuple(labels))


def lindblad_for(system: System) -> LindbladSpec:
    spec = LindbladSpec()
    for j, q in enumerate(system.qubits):
        spec = spec + collapse_ops(q, j, system.dims)
    return spec


# -- helpers ---------------------------------------------------------------


def _pad(u: np.ndarray, d: int) -> np.ndarray:
    if u.shape[0] == d:
        return u
    out = np.eye(d, dtype=complex)
    out[: u.shape[0], : u.shape[0]] = u
    return out


def _gate_unitary(gate, system: System) -> np.ndarray:
    dims = system.dims
    if gate.site is None:
        u = np.asarray(gate.unitary, dtype=complex)
        if u.shape[0] == system.dim:
            return u
        # qubit-register unitary on qutrits: act on the {0,1}^n block only
        qubit_idx = [np.ravel_multi_index(s, dims) for s in np.ndindex(*([2] * len(dims)))]
        out = np.eye(system.dim, dtype=complex)
        out[np.ix_(qubit_idx, qubit_idx)] = u
        return out
    return embed(_pad(np.asarray(gate.unitary, dtype=complex), dims[gate.site]), gate.site, dims)


def _noise_diag(system: System, noise, t: float) -> Optional[np.ndarray]:
    """Per-batch diagonal of ``sum_j K_j n_j`` with shape ``(B, D)``."""
    if noise is None:
        return None
    ndiag = system.number_diagonals()
    k = noise.at(t) if isinstance(noise, NoiseTrace) else np.asarray(noise)
    k = np.atleast_2d(k)
    return k @ ndiag


def _pieces(seg, t0: float, noise, max_step: float) -> list[tuple[float, float]]:
    """Sub-intervals on which the Hamiltonian is constant."""
    time_dependent = isinstance(noise, NoiseTrace) or any(
        d is not None and d.detuning != 0 for d in seg.drives
    )
    if not time_dependent or seg.duration == 0:
        return [(t0, t0 + seg.duration)]
    step = noise.dt if isinstance(noise, NoiseTrace) else max_step
    if isinstance(noise, NoiseTrace):
        step = min(step, max_step)
    n = max(1, int(math.ceil(seg.duration / step - 1e-9)))
    edges = np.linspace(t0, t0 + seg.duration, n + 1)
    return list(zip(edges[:-1], edges[1:]))


def _hamiltonian(system: System, seg, t: float) -> np.ndarray:
    return system.hamiltonian(seg.drives, seg.detunings, seg.coupling_active, t)


# -- closed system ---------------------------------------------------------


def propagate_unitary(
    schedule: Schedule,
    system: System,
    noise=None,
    max_step: float = 1e-9,
) -> np.ndarray:
    """Ordered product of segment propagators (and instant gates).

    ``noise`` is ``None``, constant detunings ``(n_sites,)`` / ``(B, n_sites)``,
    or a :class:`NoiseTrace`; with a batch the result has shape ``(B, D, D)``.
    """
    schedule = schedule.expanded()
    batch = None
    if noise is not None:
        batch = noise.values.shape[0] if isinstance(noise, NoiseTrace) else np.atleast_2d(noise).shape[0]
    u = np.eye(system.dim, dtype=complex)
    if batch is not None:
        u = np.broadcast_to(u, (batch, system.dim, system.dim)).copy()
    for item in schedule.items():
        if item[0] == "gate":
            u = _gate_unitary(item[1], system) @ u
            continue
        _, seg, t0 = item
        for a, b in _pieces(seg, t0, noise, max_step):
            h = _hamiltonian(system, seg, 0.5 * (a + b))
            nd = _noise_diag(system, noise, 0.5 * (a + b))
            if nd is not None:
                h = h[None] + nd[:, :, None] * np.eye(system.dim)[None]
            if not np.all(np.isfinite(h)):
                raise NumericalError("non-finite Hamiltonian")
            w, v = np.linalg.eigh(h)
            step = (v * np.exp(-1j * w * (b - a))[..., None, :]) @ dag(v)
            u = step @ u
    return u


# -- open system -----------------------------------------------------------


def _liouvillian(h: np.ndarray, lindblad: LindbladSpec) -> np.ndarray:
    """Row-major vectorization: ``vec(A rho B) = (A kron B^T) vec(rho)``."""
    d = h.shape[-1]
    eye = np.eye(d)
    if h.ndim == 3:
        L = -1j * (np.einsum("bij,kl->bikjl", h, eye) - np.einsum("ij,blk->bikjl", eye, h)).reshape(
            h.shape[0], d * d, d * d
        )
    else:
        L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in lindblad.ops:
        cdc = dag(c) @ c
        L = L + np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return L


class _Rhs:
    def __init__(self, system, seg, lindblad, noise, batch, hermitian):
        self.system, self.seg, self.noise = system, seg, noise
        self.batch, self.hermitian = batch, hermitian
        self.d = system.dim
        self.ops = [np.asarray(c) for c in lindblad.ops]
        self.ops_dag = [dag(c) for c in self.ops]
        g = sum((cd @ c for c, cd in zip(self.ops, self.ops_dag)), np.zeros((self.d, self.d), complex))
        self.g = g
        self.time_dependent = any(d is not None and d.detuning != 0 for d in seg.drives)
        self.h_const = _hamiltonian(system, seg, 0.0)
        self.ndiag = system.number_diagonals() if noise is not None else None
        self.k_const = None
        if noise is not None and not isinstance(noise, NoiseTrace):
            self.k_const = np.atleast_2d(noise) @ self.ndiag

    def __call__(self, t, y):
        d = self.d
        rho = y.reshape(self.batch, d, d)
        h = _hamiltonian(self.system, self.seg, t) if self.time_dependent else self.h_const
        heff = h - 0.5j * self.g
        if self.hermitian:
            a = -1j * (heff @ rho)
            for c, cd in zip(self.ops, self.ops_dag):
                a = a + 0.5 * (c @ rho @ cd)
            if self.noise is not None:
                v = self.k_const if self.k_const is not None else self.noise.at(t) @ self.ndiag
                a = a - 1j * v[:, :, None] * rho
            out = a + dag(a)
        else:
            out = -1j * (heff @ rho - rho @ dag(heff))
            for c, cd in zip(self.ops, self.ops_dag):
                out = out + c @ rho @ cd
            if self.noise is not None:
                v = self.k_const if self.k_const is not None else self.noise.at(t) @ self.ndiag
                out = out - 1j * (v[:, :, None] - v[:, None, :]) * rho
        return out.reshape(-1)


def _is_hermitian_batch(rho: np.ndarray) -> bool:
    return bool(np.allclose(rho, dag(rho), atol=1e-13, rtol=0))


def _obs_values(rho: np.ndarray, observables: Mapping[str, np.ndarray]) -> dict:
    return {k: np.einsum("...ij,ji->...", rho, o).real for k, o in observables.items()}


def _as_observables(observables) -> dict:
    if observables is None:
        return {}
    if isinstance(observables, Mapping):
        return {str(k): np.asarray(v) for k, v in observables.items()}
    return {f"obs{i}": np.asarray(o) for i, o in enumerate(observables)}


def propagate_lindblad(
    rho0: np.ndarray,
    schedule: Schedule,
    system: System,
    lindblad: Optional[LindbladSpec] = None,
    noise=None,
    observables=None,
    sample_times: Optional[Sequence[float]] = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    max_step: float = 1e-9,
    method: str = "rk45",
    check: bool = True,
) -> EvolutionResult:
    """Integrate the Lindblad master equation along ``schedule``.

    ``sample_times`` are absolute times at which states are recorded (before
    any gate sitting on the same boundary). The fully processed final state,
    including trailing gates, is always returned in ``result.final``.
    """
    lindblad = lindblad or LindbladSpec()
    schedule = schedule.expanded()
    rho = np.asarray(rho0, dtype=complex)
    single = rho.ndim == 2
    d = system.dim
    if rho.shape[-2:] != (d, d):
        raise ValueError(f"state of shape {rho.shape} does not match system dimension {d}")
    for c in lindblad.ops:
        if c.shape != (d, d):
            raise ValueError("collapse operator dimension mismatch")
    if noise is not None:
        nb = noise.values.shape[0] if isinstance(noise, NoiseTrace) else np.atleast_2d(noise).shape[0]
        if single:
            rho = np.broadcast_to(rho, (nb, d, d)).copy()
            single = False
        elif rho.shape[0] != nb:
            raise ValueError("noise batch size differs from state batch size")
    if single:
        rho = rho[None]
    hermitian = _is_hermitian_batch(rho)
    obs = _as_observables(observables)
    want = np.sort(np.asarray(sample_times, dtype=float)) if sample_times is not None else np.array([])
    recorded: list[tuple[float, np.ndarray]] = []

    for item in schedule.items():
        if item[0] == "gate":
            g = _gate_unitary(item[1], system)
            rho = g @ rho @ dag(g)
            continue
        _, seg, t0 = item
        t1 = t0 + seg.duration
        inside = want[(want >= t0) & (want <= t1)] if seg.duration > 0 else np.array([])
        # times exactly on an earlier boundary were already recorded
        inside = np.array([t for t in inside if not any(abs(t - r[0]) < 1e-15 for r in recorded)])
        if seg.duration == 0:
            continue
        if method == "expm":
            rho, rec = _segment_expm(rho, system, seg, t0, lindblad, noise, max_step, inside)
        elif method == "rk45":
            rho, rec = _segment_rk(rho, system, seg, t0, lindblad, noise, max_step, inside, rtol, atol, hermitian)
        else:
            raise ValueError(f"unknown method {method!r}")
        recorded.extend(rec)
        if not np.all(np.isfinite(rho)):
            raise NumericalError("non-finite density matrix")

    if check and hermitian:
        for r in rho:
            check_physical(r)
    final = rho[0] if single else rho
    if want.size:
        times = np.array([t for t, _ in recorded])
        states = np.stack([s for _, s in recorded])
        if single:
            states = states[:, 0]
    else:
        times = np.array([schedule.total_duration])
        states = final[None]
    return EvolutionResult(
        times=times,
        states=states,
        observables=_obs_values(states, obs),
        final=final,
    )


def _segment_rk(rho, system, seg, t0, lindblad, noise, max_step, sample, rtol, atol, hermitian):
    batch, d = rho.shape[0], system.dim
    fun = _Rhs(system, seg, lindblad, noise, batch, hermitian)
    t1 = t0 + seg.duration
    kwargs = {}
    if isinstance(noise, NoiseTrace):
        kwargs["max_step"] = min(noise.dt, max_step)
    t_eval = None
    if len(sample):
        t_eval = np.unique(np.concatenate([sample, [t1]]))
    sol = solve_ivp(fun, (t0, t1), rho.reshape(-1), method="RK45", rtol=rtol, atol=atol, t_eval=t_eval, **kwargs)
    if sol.status != 0:
        raise NumericalError(f"integration failed on segment {seg.label!r}: {sol.message}")
    ys = sol.y.T.reshape(-1, batch, d, d)
    rec = []
    if t_eval is not None:
        for t, y in zip(sol.t, ys):
            if any(abs(t - s) < 1e-15 for s in sample):
                rec.append((float(t), y.copy()))
    return ys[-1].copy(), rec


def _segment_expm(rho, system, seg, t0, lindblad, noise, max_step, sample):
    batch, d = rho.shape[0], system.dim
    rec = []
    marks = list(sample)
    for a, b in _pieces(seg, t0, noise, max_step):
        h = _hamiltonian(system, seg, 0.5 * (a + b))
        nd = _noise_diag(system, noise, 0.5 * (a + b))
        if nd is not None:
            h = h[None] + nd[:, :, None] * np.eye(d)[None]
        L = _liouvillian(h, lindblad)

        def advance(r, dt):
            prop = scipy.linalg.expm(L * dt)
            v = r.reshape(batch, d * d)
            if prop.ndim == 3:
                v = np.einsum("bij,bj->bi", prop, v)
            else:
                v = v @ prop.T
            return v.reshape(batch, d, d)

        t = a
        for s in [m for m in marks if a <= m <= b]:
            if s > t:
                rho = advance(rho, s - t)
                t = s
            rec.append((float(s), rho.copy()))
            marks.remove(s)
        if b > t:
            rho = advance(rho, b - t)
    return rho, rec


def channel_superoperator(
    schedule: Schedule,
    system: System,
    lindblad: Optional[LindbladSpec] = None,
    noise=None,
    method: str = "rk45",
    **kwargs,
) -> np.ndarray:
    """Superoperator ``S`` with ``vec(E(rho)) = S vec(rho)`` (row-major vec).

    Built by propagating the matrix units ``|i><j|``. With batched noise the
    result has shape ``(B, D^2, D^2)``.
    """
    d = system.dim
    basis = np.zeros((d * d, d, d), dtype=complex)
    for k in range(d * d):
        basis[k].flat[k] = 1.0
    if noise is None:
        res = propagate_lindblad(basis, schedule, system, lindblad, None, method=method, check=False, **kwargs)
        return res.final.reshape(d * d, d * d).T
    nb = noise.values.shape[0] if isinstance(noise, NoiseTrace) else np.atleast_2d(noise).shape[0]
    # one batch row per (trajectory, matrix unit), trajectory-major
    states = np.tile(basis, (nb, 1, 1))
    if isinstance(noise, NoiseTrace):
        rep = NoiseTrace(noise.dt, np.repeat(noise.values, d * d, axis=0))
    else:
        rep = np.repeat(np.atleast_2d(noise), d * d, axis=0)
    res = propagate_lindblad(states, schedule, system, lindblad, rep, method=method, check=False, **kwargs)
    return np.swapaxes(res.final.reshape(nb, d * d, d * d), 1, 2)


def apply_superoperator(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[-1]
    return (s @ rho.reshape(*rho.shape[:-2], d * d, 1)).reshape(rho.shape)


def check_physical(rho: np.ndarray, trace_tol: float = 1e-7, herm_tol: float = 1e-9, psd_tol: float = 1e-6) -> None:
    """Raise :class:`NumericalError` if ``rho`` violates the state invariants."""
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise NumericalError(f"trace drifted to {tr:.12f}")
    if np.linalg.norm(rho - dag(rho)) > herm_tol:
        raise NumericalError("state lost Hermiticity")
    lo = np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min()
    if lo < -psd_tol:
        raise NumericalError(f"state has negative eigenvalue {lo:.3e}")


def average_trajectories(
    rho0: np.ndarray,
    schedule: Schedule,
    system: System,
    lindblad: Optional[LindbladSpec],
    noise_model: Optional[NoiseModel],
    n_traj: int,
    observables=None,
    sample_times: Optional[Sequence[float]] = None,
    chunk: int = 500,
    method: str = "rk45",
    **kwargs,
) -> EvolutionResult:
    """Mean observables over ``n_traj`` independent noise realizations.

    Trajectory ``i`` always sees the noise seeded by ``(seed, i)``; chunking
    only changes how the batch is split, never the numbers. Means are taken
    with numpy's pairwise summation over the trajectory axis in index order.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    obs = _as_observables(observables)
    if noise_model is None or noise_model.kind == "none":
        res = propagate_lindblad(rho0, schedule, system, lindblad, None, obs, sample_times, method=method, **kwargs)
        res.stderr = {k: np.zeros_like(v) for k, v in res.observables.items()}
        return res
    n_sites = len(system.qubits)
    duration = schedule.total_duration
    per_traj: dict[str, list] = {k: [] for k in obs}
    times = None
    for start in range(0, n_traj, chunk):
        n = min(chunk, n_traj - start)
        noise = sample_trajectories(noise_model, n, n_sites, duration, kwargs.get("max_step", 1e-9), start)
        res = propagate_lindblad(rho0, schedule, system, lindblad, noise, obs, sample_times, method=method, **kwargs)
        times = res.times
        for k, v in res.observables.items():
            per_traj[k].append(np.asarray(v).reshape(len(res.times), n))
    mean, err = {}, {}
    for k, parts in per_traj.items():
        allv = np.concatenate(parts, axis=1)
        mean[k] = allv.mean(axis=1)
        err[k] = allv.std(axis=1, ddof=1) / math.sqrt(n_traj) if n_traj > 1 else np.zeros(allv.shape[0])
    return EvolutionResult(times=times, observables=mean, stderr=err)
