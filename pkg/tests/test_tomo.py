import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from dressed_dd.evolve import apply_superoperator, channel_superoperator, lindblad_for
from dressed_dd.model import MHz, DriveTone, QubitParams, System, uphase_target
from dressed_dd.qops import DimensionError, dag, ket, kron, pauli, pauli_string, projector
from dressed_dd.schedule import Schedule, Segment, storage_sequence
from dressed_dd.tomo import (
    ChiMatrix,
    chi_from_superop,
    chi_from_unitary,
    pauli_labels,
    preparation_set,
    process_fidelity,
    process_fidelity_superop,
    qpt,
    qst,
    qubit_subspace_superop,
    simulate_measurements,
    state_fidelity,
    unitary_superop,
)

US = 1e-6
UPHASE = uphase_target(math.pi / 4, 0.0)


def random_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    w = rng.normal(size=d) + 1j * rng.normal(size=d)
    p = rng.random()
    return p * projector(v / np.linalg.norm(v)) + (1 - p) * projector(w / np.linalg.norm(w))


# -- measurements and state tomography -------------------------------------


def test_exact_z_expectation():
    assert simulate_measurements(projector(ket(0)))["Z"] == 1.0


def test_shot_sampled_x_expectation():
    ex = simulate_measurements(projector(ket(0)), shots=10_000, seed=4)
    assert abs(ex["X"]) < 0.05


def test_shot_sampling_is_seeded():
    rho = random_state(np.random.default_rng(1), 4)
    assert simulate_measurements(rho, shots=100, seed=3) == simulate_measurements(rho, shots=100, seed=3)
    with pytest.raises(ValueError):
        simulate_measurements(rho, shots=0)


def test_zz_on_gate_output_matches_brute_force():
    psi = UPHASE @ ket((0, 0), 2)
    rho = projector(psi)
    brute = np.real(np.trace(np.kron(pauli("Z"), pauli("Z")) @ rho))
    assert simulate_measurements(rho, 2)["ZZ"] == pytest.approx(brute, abs=1e-12)


def test_qst_ground_state():
    rho = qst(simulate_measurements(projector(ket(0))), 1)
    assert np.allclose(rho, projector(ket(0)), atol=1e-12)


def test_qst_entangled_gate_output():
    psi = (ket((0, 0), 2) + 1j * ket((1, 1), 2)) / math.sqrt(2)
    assert equal_states(projector(UPHASE @ ket((0, 0), 2)), projector(psi))
    rho = qst(simulate_measurements(projector(psi), 2), 2)
    assert state_fidelity(rho, psi) > 1 - 1e-9


def equal_states(a, b):
    return np.allclose(a, b, atol=1e-12)


def test_qst_projects_unphysical_estimates():
    ex = simulate_measurements(projector(ket(0)))
    ex = {**ex, "Z": 1.04, "X": 0.05}
    rho = qst(ex, 1)
    assert np.linalg.eigvalsh(rho).min() >= -1e-12
    assert np.trace(rho).real == pytest.approx(1.0)


def test_qst_requires_complete_set():
    with pytest.raises(ValueError):
        qst({"X": 0.0, "Y": 0.0}, 1)


def test_measurements_reject_wrong_dimension():
    with pytest.raises(DimensionError):
        simulate_measurements(np.eye(3) / 3, 1)


# -- process tomography ----------------------------------------------------


def test_basis_ordering_golden():
    assert pauli_labels(1) == ["I", "X", "Y", "Z"]
    assert pauli_labels(2)[:6] == ["II", "IX", "IY", "IZ", "XI", "XX"]
    assert pauli_labels(2)[-1] == "ZZ"


def test_preparation_set_sizes():
    assert len(preparation_set(1)) == 6
    assert len(preparation_set(2)) == 36


def test_identity_channel_chi():
    chi = qpt(lambda r: r, 1)
    expect = np.zeros((4, 4))
    expect[0, 0] = 1
    assert np.allclose(chi.data, expect, atol=1e-10)
    chi2 = qpt(lambda r: r, 2)
    assert abs(chi2.data[0, 0] - 1) < 1e-10 and np.abs(chi2.data).sum() - 1 < 1e-9


def test_gate_chi_support_pattern():
    chi = qpt(lambda r: UPHASE @ r @ dag(UPHASE), 2)
    labels = chi.labels
    ii, xx = labels.index("II"), labels.index("XX")
    assert chi.data[ii, ii].real == pytest.approx(0.5, abs=1e-10)
    assert chi.data[xx, xx].real == pytest.approx(0.5, abs=1e-10)
    assert abs(chi.data[ii, xx]) == pytest.approx(0.5, abs=1e-10)
    assert chi.data[ii, xx].real == pytest.approx(0.0, abs=1e-10)
    assert chi.data[xx, ii] == pytest.approx(np.conj(chi.data[ii, xx]))
    mask = np.ones_like(chi.data, dtype=bool)
    mask[np.ix_([ii, xx], [ii, xx])] = False
    assert np.abs(chi.data[mask]).max() < 1e-10
    assert np.allclose(chi.data, chi_from_unitary(UPHASE).data, atol=1e-10)


def test_fidelity_self_and_identity_vs_gate():
    chi_u = chi_from_unitary(UPHASE)
    assert process_fidelity(chi_u, chi_u) == pytest.approx(1.0)
    chi_i = chi_from_unitary(np.eye(4))
    f = process_fidelity(chi_i, chi_u)
    # brute-force oracle: |tr(U)/d|^2 from the definition of the process fidelity
    brute = abs(np.trace(UPHASE) / 4) ** 2
    assert brute == pytest.approx(0.5)
    assert f == pytest.approx(brute, abs=1e-12)
    assert process_fidelity_superop(unitary_superop(np.eye(4)), UPHASE) == pytest.approx(brute)


def test_fidelity_rejects_mismatched_dimensions():
    with pytest.raises(DimensionError):
        process_fidelity(chi_from_unitary(np.eye(2)), chi_from_unitary(np.eye(4)))


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([1, 2]), st.integers(0, 2**32 - 1))
def test_qpt_of_unitary_is_rank_one(n, seed):
    u = unitary_group.rvs(2**n, random_state=seed)
    chi = qpt(lambda r: u @ r @ dag(u), n)
    w = np.sort(np.linalg.eigvalsh(chi.data))[::-1]
    assert w[1] < 1e-8
    assert process_fidelity(chi, chi_from_unitary(u)) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reconstructed_chi_reproduces_channel(seed):
    rng = np.random.default_rng(seed)
    sys = System((QubitParams(t1=3 * US, tphi=2 * US), QubitParams(t1=5 * US)), coupling=-1.2 * MHz)
    sched = Schedule(2, (Segment(300e-9, (DriveTone(3 * MHz), DriveTone(5 * MHz)), coupling_active=True),))
    sup = channel_superoperator(sched, sys, lindblad_for(sys))
    channel = lambda r: apply_superoperator(sup, r)
    chi = qpt(channel, 2)
    for _ in range(20):
        rho = random_state(rng, 4)
        assert np.allclose(chi.apply(rho), channel(rho), atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_process_fidelity_symmetric_and_reorder_invariant(seed):
    rng = np.random.default_rng(seed)
    a = chi_from_unitary(unitary_group.rvs(4, random_state=rng))
    mix = lambda c: 0.7 * c.data + 0.3 * np.diag(rng.dirichlet(np.ones(16)))
    x = ChiMatrix(mix(a), a.labels)
    y = chi_from_unitary(unitary_group.rvs(4, random_state=rng))
    assert process_fidelity(x, y) == pytest.approx(process_fidelity(y, x), abs=1e-12)
    perm = rng.permutation(16)
    xp = ChiMatrix(x.data[np.ix_(perm, perm)], tuple(x.labels[i] for i in perm))
    yp = ChiMatrix(y.data[np.ix_(perm, perm)], tuple(y.labels[i] for i in perm))
    assert process_fidelity(xp, yp) == pytest.approx(process_fidelity(x, y), abs=1e-12)


def test_noiseless_identity_storage_has_real_chi():
    # no decoherence: amplitude damping alone has imaginary XY entries
    sys = System((QubitParams(),))
    sup = channel_superoperator(storage_sequence(5 * US, "one_q_dd", DriveTone(3.6 * MHz, -math.pi / 2)), sys, lindblad_for(sys))
    chi = qpt(lambda r: apply_superoperator(sup, r), 1)
    assert np.abs(chi.data.imag).max() < 1e-10


def test_superop_chi_matches_black_box_qpt():
    sys = System((QubitParams(t1=4 * US, tphi=3 * US),))
    sup = channel_superoperator(storage_sequence(2 * US, "one_q_dd", DriveTone(2 * MHz)), sys, lindblad_for(sys))
    a = chi_from_superop(sup, 1)
    b = qpt(lambda r: apply_superoperator(sup, r), 1)
    assert np.allclose(a.data, b.data, atol=1e-10)
    assert process_fidelity(a, chi_from_unitary(np.eye(2))) == pytest.approx(process_fidelity_superop(sup, np.eye(2)))


def test_shot_noise_qpt_is_close_to_exact():
    chi_exact = chi_from_unitary(UPHASE)
    chi = qpt(lambda r: UPHASE @ r @ dag(UPHASE), 2, shots=20_000, seed=5)
    assert process_fidelity(chi, chi_exact) == pytest.approx(1.0, abs=0.02)
    assert np.linalg.eigvalsh(chi.data).min() >= -1e-12


def test_leakage_shows_as_trace_loss():
    # qutrit relaxation-free leak: move 10% of |1> into |2>, then restrict to the qubit block
    d = 3
    leak = np.eye(d, dtype=complex)
    th = math.asin(math.sqrt(0.1))
    leak[1, 1], leak[2, 2], leak[1, 2], leak[2, 1] = math.cos(th), math.cos(th), -math.sin(th), math.sin(th)
    sup = qubit_subspace_superop(unitary_superop(leak), [3])
    chi = qpt(lambda r: apply_superoperator(sup, r), 1)
    assert np.trace(chi.data).real < 1 - 0.04
    rec = chi.to_record(chi_from_unitary(np.eye(2)))
    assert rec["fidelity_kind"] == "process" and rec["basis"] == ["I", "X", "Y", "Z"]


def test_chi_apply_matches_unitary_action():
    u = kron(pauli("X"), np.eye(2))
    chi = chi_from_unitary(u)
    rho = projector(ket((0, 1), 2))
    assert np.allclose(chi.apply(rho), u @ rho @ dag(u))
    assert np.allclose(pauli_string("XI"), u)
