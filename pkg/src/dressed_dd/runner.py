"""Map validated scenarios onto experiments and evaluate their expectations."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import experiments as ex
from .config import NS, US, Scenario
from .model import MHz

__all__ = ["run_scenario", "check_expectations"]


def _gate_scenario(s: Scenario) -> ex.GateScenario:
    qubits = tuple(q.resolve() for q in s.system.qubits)
    lam = s.system.coupling.resolve().value
    r1, r2 = (r * MHz for r in s.drives.rabi_mhz)
    return ex.GateScenario(lam, r1, r2, qubits, model=s.system.model, phase=s.drives.phase_rad)


def run_scenario(s: Scenario, seed: Optional[int] = None, trajectories: Optional[int] = None) -> ex.Bundle:
    """Execute the scenario's experiment; ``seed``/``trajectories`` override the file."""
    seed = s.seed if seed is None else seed
    n_traj = s.trajectories if trajectories is None else trajectories
    p = s.protocol
    noise = s.noise.resolve(seed)
    kind = s.experiment

    if kind == "coherence":
        q = s.system.qubits[0].resolve()
        taus = np.linspace(0, p.tau_max_us * US, p.tau_points)
        bundle = ex.coherence_experiment(
            q.t1,
            noise,
            taus,
            p.omega_r_mhz * MHz,
            s.drives.rabi_mhz[0] * MHz,
            {k: v * US for k, v in p.tphi_markov_us.items()},
            p.variants,
            n_traj,
        )
    elif kind == "storage_qpt":
        q = s.system.qubits[0].resolve()
        bundle = ex.storage_qpt_experiment(
            q.t1,
            np.asarray(p.storage_times_us) * US,
            s.drives.rabi_mhz[0] * MHz,
            {k: v * US for k, v in p.tphi_markov_us.items()},
            noise,
            p.variants,
            n_traj,
            chi_at=p.chi_at_us * US if p.chi_at_us is not None else None,
        )
    elif kind == "gate_populations":
        scn = _gate_scenario(s)
        tmax = p.gate_tau_max_ns * NS if p.gate_tau_max_ns else 2 * scn.nominal_tau
        bundle = ex.gate_populations_experiment(scn, np.linspace(0, tmax, p.tau_points), p.initial_states)
        if p.ramsey_2qdd:
            taus = np.linspace(0, p.tau_max_us * US, p.tau_points)
            tph = tuple(t * US for t in p.ramsey_2qdd_tphi_us) if p.ramsey_2qdd_tphi_us else None
            bundle.merge(ex.ramsey_2qdd_experiment(scn, noise, taus, p.omega_r_mhz * MHz, n_traj, tph), "ramsey_2qdd.")
    elif kind == "gate_qpt":
        bundle = ex.gate_qpt_experiment(_gate_scenario(s), p.calibrate)
    elif kind == "rb":
        bundle = ex.rb_experiment(_gate_scenario(s), p.gate_sets, p.m_grid, p.sequences_per_length, seed, p.calibrate)
    elif kind == "error_budget":
        bundle = ex.error_budget_experiment(_gate_scenario(s), p.calibrate)
    elif kind == "predict":
        bundle = ex.predict_experiment(_gate_scenario(s))
    elif kind == "idler":
        bundle = ex.idler_experiment(
            p.idler_fidelities, [t * US for t in p.idler_t1_us], p.gate_len_ns * NS, p.idler_names
        )
    elif kind == "dispersive":
        c = s.system.coupling
        bundle = ex.dispersive_experiment(
            c.g1_mhz * MHz, c.g2_mhz * MHz, c.delta_mhz * MHz, p.delta_doublings, p.resonator_levels, c.direct_mhz * MHz
        )
    else:  # pragma: no cover - guarded by validation
        raise ValueError(f"unknown experiment {kind!r}")
    bundle.records["scenario"] = {"label": s.label, "experiment": kind, "seed": seed, "trajectories": n_traj}
    return bundle


def check_expectations(s: Scenario, bundle: ex.Bundle) -> list[tuple[str, bool, float, str]]:
    """``(name, passed, value, bound)`` for every expectation in the scenario."""
    out = []
    for name, exp in sorted(s.expect.items()):
        value = float(bundle.scalars.get(name, math.nan))
        bound = ", ".join(f"{k}={v}" for k, v in exp.model_dump(exclude_none=True).items())
        out.append((name, exp.check(value), value, bound))
    return out
