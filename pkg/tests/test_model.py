import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dressed_dd.model import (
    MHz,
    CouplingSpec,
    DriveTone,
    QubitParams,
    System,
    crosstalk_stark_shift,
    dressed_product_basis,
    effective_coupling,
    h1,
    h1_eff,
    h2,
    h2_eff,
    h_full,
    phase_error,
    swap_rate_full_model,
    uphase_target,
)
from dressed_dd.qops import dag, dressed_basis, dressed_sz, embed, is_hermitian, ket, kron, matrix_exp, number, pauli

kHz = MHz / 1e3


def dressed_ops(phi):
    b = dressed_basis(phi)
    p, m = b[:, 0], b[:, 1]
    sz = np.outer(p, p.conj()) - np.outer(m, m.conj())
    return sz, np.outer(p, m.conj()), np.outer(m, p.conj())


# -- single qubit ----------------------------------------------------------


def test_h1_drive_eigenvalues():
    om = 3.6 * MHz
    assert np.allclose(np.linalg.eigvalsh(h1(0.0, DriveTone(om))), [-om, om])


def test_h1_detuning_only():
    k = 0.8 * MHz
    h = h1(k, DriveTone(0.0))
    assert np.allclose(np.linalg.eigvalsh(h), [-k / 2, k / 2])
    # fluctuation term is (K/2)(|1><1| - |0><0|)
    assert h[1, 1].real == pytest.approx(k / 2)


def test_h1_dressed_frame_form():
    k, om, phi = 0.3 * MHz, 3.6 * MHz, 0.7
    b = dressed_basis(phi)
    hd = dag(b) @ h1(k, DriveTone(om, phi)) @ b
    assert np.allclose(hd, [[om, -k / 2], [-k / 2, -om]], atol=1e-9 * om)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 20), st.floats(0, 2 * math.pi))
def test_h1_dressed_frame_property(k_mhz, om_mhz, phi):
    k, om = k_mhz * MHz, om_mhz * MHz
    b = dressed_basis(phi)
    hd = dag(b) @ h1(k, DriveTone(om, phi)) @ b
    assert np.allclose(hd, [[om, -k / 2], [-k / 2, -om]], atol=1e-9 * (om + abs(k)))


def test_h1_eff_zero_detuning():
    om = 2.0 * MHz
    assert np.allclose(h1_eff(0.0, om), om * dressed_sz(0.0))


def test_h1_eff_stark_shift():
    k, om = 0.36 * MHz, 3.6 * MHz
    h = h1_eff(k, om)
    w = np.linalg.eigvalsh(h)
    shift = k**2 / (8 * om)
    assert shift == pytest.approx(4.5 * kHz, rel=1e-9)
    assert w[1] - w[0] == pytest.approx(2 * (om + shift))


def test_h1_eff_matches_exact_dressed_splitting():
    k, om = 0.3 * MHz, 3.6 * MHz
    exact = np.diff(np.linalg.eigvalsh(h1(k, DriveTone(om))))[0]
    approx = np.diff(np.linalg.eigvalsh(h1_eff(k, om)))[0]
    assert approx == pytest.approx(exact, rel=1e-5)


def test_h1_eff_errors_and_warnings():
    with pytest.raises(ValueError):
        h1_eff(1.0, 0.0)
    with pytest.warns(UserWarning):
        h1_eff(1.0, 2.0)


def test_phase_error_constant_k():
    om = 1.0
    assert phase_error(0.1 * om, om, 100 / om) == pytest.approx(-0.25)


def test_phase_error_integral_form():
    t = np.linspace(0, 10, 2001)
    assert phase_error(np.full_like(t, 0.2), 2.0, t) == pytest.approx(-0.04 * 10 / 8)


# -- two qubits ------------------------------------------------------------


def test_h2_bare_swap_spectrum():
    lam = -1.2 * MHz
    w = np.linalg.eigvalsh(h2(lam, DriveTone(0.0), DriveTone(0.0)))
    assert np.allclose(np.sort(w), np.sort([0, 0, lam, -lam]))


def test_h2_with_device_drives_is_hermitian_traceless():
    h = h2(CouplingSpec(lam=-1.2 * MHz), DriveTone(3.6 * MHz), DriveTone(6.9 * MHz))
    assert h.shape == (4, 4)
    assert is_hermitian(h)
    assert abs(np.trace(h)) < 1e-6


def test_h2_dressed_frame_rewrite():
    # lam/4 [e^{i a}(Sz1 + S1+ - S1-)(Sz2 + S2- - S2+) + h.c.] + sum Om_j Sz_j
    # holds with a = phi2 - phi1 under the |0><1| flip-operator convention
    lam, om1, om2 = -1.2 * MHz, 3.6 * MHz, 6.9 * MHz
    phi1, phi2 = 0.9, 0.5
    z1, p1, m1 = dressed_ops(phi1)
    z2, p2, m2 = dressed_ops(phi2)
    a = phi2 - phi1
    assert abs(abs(a) - 0.4) < 1e-12
    term = np.exp(1j * a) * kron(z1 + p1 - m1, z2 + m2 - p2)
    expect = lam / 4 * (term + dag(term)) + om1 * kron(z1, np.eye(2)) + om2 * kron(np.eye(2), z2)
    got = h2(lam, DriveTone(om1, phi1), DriveTone(om2, phi2))
    assert np.allclose(got, expect, atol=1e-9 * om2)


def test_h2_equal_phases_secular_part():
    lam, phi = 1.0, 0.3
    z, p, m = dressed_ops(phi)
    h = h2(lam, DriveTone(0.0, phi), DriveTone(0.0, phi))
    b = dressed_product_basis(phi)
    hd = dag(b) @ h @ b
    # diagonal of the dressed-frame coupling is the (lam/2) Sz Sz term
    assert np.allclose(np.diag(hd).real, 0.5 * lam * np.array([1, -1, -1, 1]))


def test_h2_eff_gate_phases_with_midpoint_flip():
    lam = -1.2 * MHz
    om1, om2, phi = 3.6 * MHz, 6.9 * MHz, 0.4
    tau = math.pi / (2 * abs(lam))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = matrix_exp(h2_eff(lam, om1, om2, phi + math.pi), tau / 2) @ matrix_exp(h2_eff(lam, om1, om2, phi), tau / 2)
    b = dressed_product_basis(phi)
    ud = dag(b) @ u @ b
    theta = -0.5 * lam * tau
    assert theta == pytest.approx(math.pi / 4)
    assert np.allclose(ud, np.diag(np.exp(1j * theta * np.array([1, -1, -1, 1]))), atol=1e-9)


def test_uphase_target_closed_form_at_zero_phase():
    s = 1 / math.sqrt(2)
    expect = s * np.array([[1, 0, 0, 1j], [0, 1, 1j, 0], [0, 1j, 1, 0], [1j, 0, 0, 1]])
    assert np.allclose(uphase_target(math.pi / 4, 0.0), expect)
    xx = kron(pauli("X"), pauli("X"))
    assert np.allclose(uphase_target(math.pi / 4, 0.0), matrix_exp(-xx, math.pi / 4))


def test_h2_eff_without_coupling_is_product():
    om1, om2, phi, t = 2.0, 5.0, 0.2, 0.37
    u = matrix_exp(h2_eff(0.0, om1, om2, phi), t)
    sz = dressed_sz(phi)
    assert np.allclose(u, kron(matrix_exp(om1 * sz, t), matrix_exp(om2 * sz, t)))


def test_h2_eff_warns_when_drives_too_close():
    with pytest.warns(UserWarning):
        h2_eff(1.0, 3.0, 4.0)


# -- full qubit-resonator-qubit model --------------------------------------

G1, G2, DELTA = 14.2 * MHz, 15.2 * MHz, 152 * MHz


def test_full_model_swap_rate_spectral():
    lam = swap_rate_full_model(QubitParams(g=G1), QubitParams(g=G2), DELTA)
    assert lam < 0
    assert abs(lam) / (2 * math.pi) == pytest.approx(1.42e6, rel=0.02)


def test_full_model_swap_rate_time_domain():
    # excitation transfer |10> -> |01> completes after pi/(2|lambda|)
    q1, q2 = QubitParams(g=G1), QubitParams(g=G2)
    dets = (G1**2 / DELTA, G2**2 / DELTA)
    h, dims = h_full(q1, q2, 2, DELTA, qubit_detunings=dets)
    psi0 = ket((1, 0, 0), dims)
    target = ket((0, 1, 0), dims)
    ts = np.linspace(0, 400e-9, 4001)
    w, v = np.linalg.eigh(h)
    c = dag(v) @ psi0
    amps = (v @ (np.exp(-1j * np.outer(w, ts)) * c[:, None])).T @ target.conj()
    p = np.abs(amps) ** 2
    t_swap = ts[np.argmax(p)]
    lam_td = math.pi / (2 * t_swap)
    assert lam_td / (2 * math.pi) == pytest.approx(1.42e6, rel=0.03)
    assert p.max() > 0.97


def test_full_model_decoupled_qubit_is_static():
    h, dims = h_full(QubitParams(g=G1), QubitParams(g=0.0), 2, DELTA)
    n2 = embed(number(2), 1, dims)
    psi = matrix_exp(h, 300e-9) @ ket((1, 0, 0), dims)
    assert np.vdot(psi, n2 @ psi).real == pytest.approx(0.0, abs=1e-12)


def test_full_model_vacuum_stark_shift():
    h, dims = h_full(QubitParams(g=G1), QubitParams(g=0.0), 2, DELTA)
    idx = [np.ravel_multi_index(s, dims) for s in ((1, 0, 0), (0, 0, 1))]
    w = np.linalg.eigvalsh(h[np.ix_(idx, idx)])
    shift = w[0]
    assert shift / (2 * math.pi) == pytest.approx(-1.33e6, rel=0.02)
    assert shift == pytest.approx(effective_coupling(G1, 0, DELTA)["stark1"], rel=0.02)


def test_full_model_dimension_guard():
    with pytest.raises(ValueError):
        h_full(QubitParams(levels=3), QubitParams(levels=3), 23, DELTA)
    with pytest.raises(ValueError):
        h_full(QubitParams(), QubitParams(), 1, DELTA)


def test_effective_model_convergence():
    lam = -1.2 * MHz
    errors = []
    for d_mhz in (100, 200, 400):
        delta = d_mhz * MHz
        g = math.sqrt(abs(lam) * delta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rate = swap_rate_full_model(QubitParams(g=g), QubitParams(g=g), delta)
        errors.append(abs(rate - lam))
    assert errors[0] > errors[1] > errors[2]


def test_effective_coupling_values():
    out = effective_coupling(G1, G2, DELTA)
    assert out["lambda"] / (2 * math.pi) == pytest.approx(-1.42e6, rel=0.001)
    assert effective_coupling(0.0, G2, DELTA)["lambda"] == 0
    assert out["lambda"] < 0
    with pytest.raises(ValueError):
        effective_coupling(G1, G2, 0.0)


def test_coupling_spec_dispersive_route_and_warning():
    assert CouplingSpec(g1=G1, g2=G2, delta=DELTA).value == pytest.approx(-G1 * G2 / DELTA)
    with pytest.warns(UserWarning):
        CouplingSpec(g1=50 * MHz, g2=G2, delta=DELTA)
    with pytest.raises(ValueError):
        CouplingSpec()


def test_crosstalk_stark_shift():
    assert crosstalk_stark_shift(0.5 * MHz, 50 * MHz) / (2 * math.pi) == pytest.approx(5e3)
    assert crosstalk_stark_shift(0.0, 50 * MHz) == 0
    assert crosstalk_stark_shift(0.5 * MHz, -50 * MHz) < 0
    with pytest.raises(ValueError):
        crosstalk_stark_shift(1.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-5, 5),
    st.floats(0, 10),
    st.floats(0, 10),
    st.floats(-math.pi, math.pi),
    st.floats(-math.pi, math.pi),
    st.sampled_from([2, 3]),
    st.floats(0, 500),
)
def test_hamiltonians_are_hermitian(lam, om1, om2, p1, p2, levels, eta):
    d1, d2 = DriveTone(om1 * MHz, p1), DriveTone(om2 * MHz, p2)
    assert is_hermitian(h1(lam * MHz, d1))
    assert is_hermitian(h2(lam * MHz, d1, d2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert is_hermitian(h2_eff(lam * MHz, om1 * MHz + 1, om2 * MHz, p1))
    q = QubitParams(levels=levels, anharmonicity=eta * MHz, g=10 * MHz)
    h, _ = h_full(q, q, 3, 150 * MHz, (d1, d2))
    assert is_hermitian(h)
    sys = System((q, q), coupling=lam * MHz)
    assert is_hermitian(sys.hamiltonian((d1, d2), (0.3 * MHz, 0.0), True, t=1e-7))


def _flip_gate_leakage(ratio):
    lam = -1.0 * MHz
    om1 = 5.0 * MHz
    om2 = om1 + ratio * abs(lam)
    tau = math.pi / (2 * abs(lam))
    d1, d2 = DriveTone(om1), DriveTone(om2)
    u = matrix_exp(h2(lam, d1.flipped(), d2.flipped()), tau / 2) @ matrix_exp(h2(lam, d1, d2), tau / 2)
    b = dressed_product_basis(0.0)
    ud = dag(b) @ u @ b
    off = ud - np.diag(np.diag(ud))
    return np.linalg.norm(off) ** 2 / 4, np.angle(np.diag(ud))


def test_dressed_gate_equivalence_leakage_shrinks():
    leak3, _ = _flip_gate_leakage(3)
    leak10, phases = _flip_gate_leakage(10)
    assert leak10 < leak3
    # phase pattern (+t, -t, -t, +t) up to a global phase
    rel = np.angle(np.exp(1j * (phases - phases[0])))
    assert rel[1] == pytest.approx(rel[2], abs=0.05)
    assert rel[3] == pytest.approx(0.0, abs=0.05)
    assert rel[1] == pytest.approx(-math.pi / 2, abs=0.1)


def test_system_validation():
    with pytest.raises(ValueError):
        QubitParams(t1=-1)
    with pytest.raises(ValueError):
        QubitParams(levels=4)
    with pytest.raises(ValueError):
        System((QubitParams(),), coupling_kind="dressed_zz")
    with pytest.raises(ValueError):
        DriveTone(-1.0)


def test_dressed_zz_system_uses_drive_phases():
    lam, phi = 2.0, 0.6
    sys = System((QubitParams(), QubitParams()), coupling=lam, coupling_kind="dressed_zz")
    h = sys.hamiltonian((DriveTone(0.0, phi), DriveTone(0.0, phi)), coupling_active=True)
    assert np.allclose(h, 0.5 * lam * kron(dressed_sz(phi), dressed_sz(phi)))
