import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from dressed_dd.evolve import (
    LindbladSpec,
    NumericalError,
    apply_superoperator,
    average_trajectories,
    channel_superoperator,
    check_physical,
    collapse_ops,
    lindblad_for,
    propagate_lindblad,
    propagate_unitary,
)
from dressed_dd.model import MHz, DriveTone, QubitParams, System
from dressed_dd.noise import NoiseModel, sigma_from_t2star
from dressed_dd.qops import dag, dressed_basis, ket, pauli, projector
from dressed_dd.schedule import X90, InstantGate, Schedule, Segment

US = 1e-6
ONE = System((QubitParams(),))


def idle(duration, n=1):
    return Segment(duration, (None,) * n)


def sys1(t1=math.inf, tphi=math.inf):
    return System((QubitParams(t1=t1, tphi=tphi),))


PLUS = projector(dressed_basis(0.0)[:, 0])


# -- collapse operators ----------------------------------------------------


def test_relaxation_only_coherence_rate():
    t1 = 31.6 * US
    s = sys1(t1=t1)
    ts = np.linspace(0, 20 * US, 11)
    res = propagate_lindblad(PLUS, Schedule(1, (idle(20 * US),)), s, lindblad_for(s), sample_times=ts)
    coh = np.abs(res.states[:, 0, 1])
    assert np.allclose(coh, 0.5 * np.exp(-ts / (2 * t1)), rtol=1e-6)


def test_pure_dephasing_coherence_and_populations():
    tphi = 20.2 * US
    s = sys1(tphi=tphi)
    ts = np.linspace(0, 30 * US, 7)
    rho0 = np.array([[0.3, 0.2 + 0.1j], [0.2 - 0.1j, 0.7]])
    res = propagate_lindblad(rho0, Schedule(1, (idle(30 * US),)), s, lindblad_for(s), sample_times=ts)
    assert np.allclose(np.abs(res.states[:, 0, 1]), abs(rho0[0, 1]) * np.exp(-ts / tphi), rtol=1e-6)
    assert np.allclose(res.states[:, 1, 1].real, 0.7, atol=1e-10)


def test_collapse_ops_skip_infinite_times():
    assert collapse_ops(QubitParams(), 0, [2]).empty
    spec = collapse_ops(QubitParams(t1=1.0, tphi=2.0), 1, [2, 3])
    assert len(spec.ops) == 2 and spec.ops[0].shape == (6, 6)
    assert (spec + LindbladSpec()).labels == spec.labels


# -- closed system ---------------------------------------------------------


def test_empty_schedule_is_identity():
    assert np.allclose(propagate_unitary(Schedule(1), ONE), np.eye(2))


def test_resonant_pi_pulse_inverts():
    om = 3.6 * MHz
    u = propagate_unitary(Schedule(1, (Segment(math.pi / (2 * om), (DriveTone(om),)),)), ONE)
    assert abs(u[1, 0]) ** 2 == pytest.approx(1.0, abs=1e-12)


def _dressed_phase(k, om, tau, flip):
    tone = DriveTone(om)
    second = tone.flipped() if flip else tone
    sched = Schedule(1, (Segment(tau / 2, (tone,)), Segment(tau / 2, (second,))))
    u = propagate_unitary(sched, ONE, noise=np.array([[k]]))[0]
    b = dressed_basis(0.0)
    ud = dag(b) @ u @ b
    if flip:
        # ideal flipped sequence returns dressed states to themselves
        ref = np.eye(2)
    else:
        ref = np.diag(np.exp(-1j * om * tau * np.array([1, -1])))
    rel = ud @ dag(ref)
    return np.angle(rel[0, 0] / rel[1, 1])


def test_rotary_echo_cancels_dressed_phase():
    om = 1.0 * MHz
    k = 0.05 * om
    tau = 2 * math.pi * 50 / om
    unflipped = _dressed_phase(k, om, tau, flip=False)
    flipped = _dressed_phase(k, om, tau, flip=True)
    expected = k**2 * tau / (4 * om)
    assert abs(unflipped) == pytest.approx(expected, rel=0.1)
    assert abs(flipped) <= 0.05 * expected


def test_propagate_unitary_rejects_non_finite():
    with pytest.raises(ValueError):
        Segment(float("nan"))


# -- open system -----------------------------------------------------------


def test_t1_decay_matches_exponential():
    t1 = 31.6 * US
    s = sys1(t1=t1)
    ts = np.linspace(0, 60 * US, 13)
    p1 = projector(ket(1))
    res = propagate_lindblad(p1, Schedule(1, (idle(60 * US),)), s, lindblad_for(s), observables={"p1": p1}, sample_times=ts)
    assert np.allclose(res.observables["p1"], np.exp(-ts / t1), atol=1e-4)


def test_no_hamiltonian_no_collapse_is_static():
    rho0 = np.array([[0.6, 0.3j], [-0.3j, 0.4]])
    res = propagate_lindblad(rho0, Schedule(1, (idle(5 * US),)), ONE)
    assert np.array_equal(res.final, rho0) or np.allclose(res.final, rho0, atol=1e-15)


def test_ramsey_envelope_under_lindblad_dephasing():
    t1, tphi = 31.6 * US, 35.9 * US
    td = 1 / (1 / (2 * t1) + 1 / tphi)
    s = sys1(t1, tphi)
    ts = np.linspace(0, 40 * US, 21)
    sched = Schedule(1, (idle(40 * US),), (InstantGate(-1, 0, X90, "X90"),))
    res = propagate_lindblad(projector(ket(0)), sched, s, lindblad_for(s), sample_times=ts)
    env = 2 * np.abs(res.states[:, 0, 1])
    (fit,), _ = curve_fit(lambda t, a: np.exp(-t / a), ts, env, p0=[20 * US])
    assert fit == pytest.approx(td, rel=1e-3)


def test_rk45_matches_expm_oracle():
    s = System((QubitParams(t1=20 * US, tphi=15 * US), QubitParams(t1=30 * US, tphi=40 * US)), coupling=-1.2 * MHz)
    d1, d2 = DriveTone(3.6 * MHz, 0.2), DriveTone(6.9 * MHz, 0.2)
    sched = Schedule(2, (Segment(100e-9, (d1, d2), (), True), Segment(100e-9, (d1.flipped(), d2.flipped()), (), True)))
    rho0 = projector(ket((0, 1)))
    a = propagate_lindblad(rho0, sched, s, lindblad_for(s), method="rk45").final
    b = propagate_lindblad(rho0, sched, s, lindblad_for(s), method="expm").final
    assert np.allclose(a, b, atol=1e-7)


def test_step_refinement_convergence():
    s = System((QubitParams(t1=20 * US, tphi=15 * US),))
    tone = DriveTone(3.6 * MHz, 0.3, detuning=0.5 * MHz)
    sched = Schedule(1, (Segment(500e-9, (tone,)),))
    ts = np.linspace(0, 500e-9, 11)
    obs = {"z": pauli("Z"), "x": pauli("X")}
    coarse = propagate_lindblad(projector(ket(0)), sched, s, lindblad_for(s), observables=obs, sample_times=ts, rtol=1e-8, atol=1e-10)
    fine = propagate_lindblad(projector(ket(0)), sched, s, lindblad_for(s), observables=obs, sample_times=ts, rtol=1e-10, atol=1e-12)
    for k in obs:
        assert np.max(np.abs(coarse.observables[k] - fine.observables[k])) < 1e-6


@settings(max_examples=15, deadline=None)
@given(
    st.floats(1, 50), st.floats(1, 50), st.floats(0, 8), st.floats(0, 8), st.floats(-math.pi, math.pi),
    st.floats(-3, 3), st.integers(0, 2**32 - 1),
)
def test_state_invariants_along_integration(t1_us, tphi_us, om1, om2, phi, lam, seed):
    s = System((QubitParams(t1=t1_us * US, tphi=tphi_us * US), QubitParams(t1=2 * t1_us * US)), coupling=lam * MHz)
    d1, d2 = DriveTone(om1 * MHz, phi), DriveTone(om2 * MHz, phi)
    sched = Schedule(2, (Segment(150e-9, (d1, d2), (), True), Segment(150e-9, (d1.flipped(), d2.flipped()), (), True)))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    rho0 = projector(v / np.linalg.norm(v))
    res = propagate_lindblad(rho0, sched, s, lindblad_for(s), sample_times=np.linspace(0, 300e-9, 7))
    for r in res.states:
        assert abs(np.trace(r) - 1) < 1e-7
        assert np.linalg.norm(r - dag(r)) < 1e-9
        assert np.linalg.eigvalsh(r).min() >= -1e-6


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 8), st.floats(0, 8), st.floats(-3, 3), st.floats(-1, 1), st.integers(0, 2**32 - 1))
def test_closed_system_consistency(om1, om2, lam, k, seed):
    s = System((QubitParams(), QubitParams()), coupling=lam * MHz)
    d1, d2 = DriveTone(om1 * MHz), DriveTone(om2 * MHz, 0.4)
    sched = Schedule(
        2,
        (Segment(80e-9, (d1, d2), (k * MHz, 0.0), True), Segment(120e-9, (d1.flipped(), None), (), True)),
        (InstantGate(0, 1, X90, "X90"),),
    )
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    rho0 = projector(v / np.linalg.norm(v))
    u = propagate_unitary(sched, s)
    out = propagate_lindblad(rho0, sched, s).final
    assert np.allclose(out, u @ rho0 @ dag(u), atol=1e-7)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        propagate_lindblad(np.eye(3) / 3, Schedule(1, (idle(1e-9),)), ONE)
    with pytest.raises(ValueError):
        propagate_lindblad(projector(ket(0)), Schedule(1, (idle(1e-9),)), ONE, LindbladSpec((np.eye(4),), ("bad",)))


def test_check_physical_flags_bad_states():
    check_physical(projector(ket(0)))
    with pytest.raises(NumericalError):
        check_physical(np.diag([1.2, -0.2]))
    with pytest.raises(NumericalError):
        check_physical(np.diag([0.5, 0.4]))


def test_superoperator_of_idle_is_identity_and_applies():
    s = sys1(t1=10 * US)
    sup = channel_superoperator(Schedule(1, (idle(0.0),)), s, lindblad_for(s))
    assert np.allclose(sup, np.eye(4))
    sup = channel_superoperator(Schedule(1, (idle(5 * US),)), s, lindblad_for(s))
    out = apply_superoperator(sup, projector(ket(1)))
    assert out[1, 1].real == pytest.approx(math.exp(-0.5), abs=1e-6)


def test_superoperator_noise_batch_matches_single_runs():
    s = sys1(t1=10 * US)
    sched = Schedule(1, (Segment(200e-9, (DriveTone(2 * MHz),)),))
    ks = np.array([[0.1 * MHz], [-0.4 * MHz]])
    batch = channel_superoperator(sched, s, lindblad_for(s), noise=ks)
    for i in range(2):
        single = channel_superoperator(sched, s, lindblad_for(s), noise=ks[i : i + 1])[0]
        assert np.allclose(batch[i], single, atol=1e-10)


# -- trajectory averaging --------------------------------------------------


def test_average_single_trajectory_without_noise():
    s = sys1(t1=20 * US)
    sched = Schedule(1, (Segment(300e-9, (DriveTone(2 * MHz),)),))
    obs = {"z": pauli("Z")}
    ts = np.linspace(0, 300e-9, 5)
    avg = average_trajectories(projector(ket(0)), sched, s, lindblad_for(s), None, 1, obs, ts)
    ref = propagate_lindblad(projector(ket(0)), sched, s, lindblad_for(s), observables=obs, sample_times=ts)
    assert np.allclose(avg.observables["z"], ref.observables["z"])


def _quasistatic_ramsey(n_traj, seed=7):
    t2 = 4.2 * US
    noise = NoiseModel("quasistatic_gaussian", sigma=sigma_from_t2star(t2), seed=seed)
    ts = np.linspace(0, 10 * US, 51)
    sched = Schedule(1, (idle(10 * US),), (InstantGate(-1, 0, X90, "X90"),))
    obs = {"y": pauli("Y")}
    return ts, average_trajectories(projector(ket(0)), sched, ONE, None, noise, n_traj, obs, ts, method="expm")


def test_quasistatic_ensemble_recovers_t2star():
    ts, res = _quasistatic_ramsey(2000)
    env = np.abs(res.observables["y"])
    (fit,), _ = curve_fit(lambda t, a: np.exp(-((t / a) ** 2)), ts, env, p0=[3 * US])
    assert fit == pytest.approx(4.2 * US, rel=0.10)


def test_standard_error_scales_as_inverse_sqrt_n():
    _, a = _quasistatic_ramsey(400)
    _, b = _quasistatic_ramsey(800)
    mid = slice(5, 30)
    ratio = np.mean(a.stderr["y"][mid]) / np.mean(b.stderr["y"][mid])
    assert ratio == pytest.approx(math.sqrt(2), rel=0.3)


def test_average_is_independent_of_chunking():
    t2 = 4.2 * US
    noise = NoiseModel("quasistatic_gaussian", sigma=sigma_from_t2star(t2), seed=3)
    sched = Schedule(1, (idle(3 * US),), (InstantGate(-1, 0, X90, "X90"),))
    ts = np.linspace(0, 3 * US, 4)
    a = average_trajectories(projector(ket(0)), sched, ONE, None, noise, 50, {"y": pauli("Y")}, ts, chunk=7, method="expm")
    b = average_trajectories(projector(ket(0)), sched, ONE, None, noise, 50, {"y": pauli("Y")}, ts, chunk=50, method="expm")
    assert np.allclose(a.observables["y"], b.observables["y"], rtol=0, atol=1e-14)


def test_average_rejects_zero_trajectories():
    with pytest.raises(ValueError):
        average_trajectories(projector(ket(0)), Schedule(1, (idle(1e-9),)), ONE, None, None, 0)
