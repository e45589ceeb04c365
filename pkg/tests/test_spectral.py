import numpy as np
import pytest

from finslerdet.errors import OperatorError
from finslerdet.spectral import (GridModel, OperatorMatrix, averaged_operator,
                                 averaged_operator_spectrum, build_grid_operators,
                                 build_hamiltonian_operator, commutator, evolution_operator,
                                 hermitian_residual, thooft_split, time_evolution,
                                 time_inversion_check)


def test_momentum_on_plane_waves():
    model = GridModel(64)
    _, P = build_grid_operators(model)
    j = np.arange(64)
    for k in (-31, -5, 0, 1, 17, 31):
        wave = np.exp(2j * np.pi * k * j / 64)
        assert np.allclose(P.entries @ wave, k * wave, atol=1e-11)


@pytest.mark.parametrize("nyquist", ["signed", "zero"])
def test_nyquist_conventions(nyquist):
    model = GridModel(32, nyquist=nyquist)
    _, P = build_grid_operators(model)
    wave = (-1.0) ** np.arange(32)
    expected = -16.0 if nyquist == "signed" else 0.0
    assert np.allclose(P.entries @ wave, expected * wave, atol=1e-11)


def test_momentum_hermitian():
    _, P = build_grid_operators(GridModel(128))
    assert hermitian_residual(P.entries) <= 1e-12


def test_canonical_commutator_on_wavepacket():
    L = 2 * np.pi
    model = GridModel(256, L)
    X, P = build_grid_operators(model)
    psi = np.exp(-((model.xs - L / 2) ** 2) / (2 * (L / 20) ** 2)).astype(complex)
    r = commutator(X.entries, P.entries) @ psi - 1j * psi
    assert np.linalg.norm(r) / np.linalg.norm(psi) <= 1e-6


def test_constant_beta_spectrum():
    ev = build_hamiltonian_operator(GridModel(128), 0.5).eigenvalues()
    assert np.max(np.abs(ev - np.arange(-64, 64))) <= 1e-8


def test_zero_beta():
    H = build_hamiltonian_operator(GridModel(32), 0.0)
    assert np.all(H.entries == 0)
    assert time_inversion_check(H) == 0.0
    avg, _, _ = averaged_operator(GridModel(32), 0.0)
    assert np.all(avg.entries == 0)


def test_varying_beta_hermitian():
    model = GridModel(128)
    H = build_hamiltonian_operator(model, lambda x: 0.3 + 0.1 * np.sin(x[0]))
    assert hermitian_residual(H.entries) <= 1e-12
    assert np.all(np.isreal(H.eigenvalues()))


def test_rejects_bad_inputs():
    with pytest.raises(OperatorError):
        GridModel(12)
    with pytest.raises(OperatorError):
        build_hamiltonian_operator(GridModel(16), np.full(16, 0.5 + 0.1j))
    with pytest.raises(OperatorError):
        build_hamiltonian_operator(GridModel(16), 0.5, ordering="left")
    with pytest.raises(OperatorError):
        OperatorMatrix(np.array([[0, 1], [0, 0]], dtype=complex), hermitian=True)


def test_time_inversion_zero_convention():
    model = GridModel(64, nyquist="zero")
    H = build_hamiltonian_operator(model, 0.5)
    assert time_inversion_check(H) <= 1e-14
    Hv = build_hamiltonian_operator(model, lambda x: 0.3 + 0.1 * np.sin(x[0]))
    assert time_inversion_check(Hv) <= 1e-12
    ev = Hv.eigenvalues()
    assert np.allclose(ev, -ev[::-1], atol=1e-8)


def test_time_inversion_signed_convention_is_not_antisymmetric():
    # the signed Nyquist mode makes the spectrum -N/2..N/2-1, which no
    # antiunitary map can reverse
    H = build_hamiltonian_operator(GridModel(64), 0.5)
    assert time_inversion_check(H) > 0.1


def test_time_inversion_negative_control():
    H = build_hamiltonian_operator(GridModel(64, nyquist="zero"), 0.5)
    eps = 1e-3
    Hp = OperatorMatrix(H.entries + eps * np.eye(64), hermitian=True)
    assert time_inversion_check(Hp) == pytest.approx(2 * eps / np.linalg.norm(H.entries, 2), rel=1e-2)


def test_split_identity_rho():
    H = build_hamiltonian_operator(GridModel(32), lambda x: 0.3 + 0.1 * np.sin(x[0]))
    rho = OperatorMatrix(np.eye(32, dtype=complex), True)
    for form in ("squared", "corrected"):
        s = thooft_split(H, rho, form)
        assert np.linalg.norm(s.H1.entries - s.H2.entries - H.entries) <= 1e-12 * max(1, np.linalg.norm(H.entries))


def test_split_random_commuting_diagonal():
    rng = np.random.default_rng(0)
    h = np.diag(rng.standard_normal(32)).astype(complex)
    r = np.diag(rng.uniform(0.5, 2.0, 32)).astype(complex)
    H, rho = OperatorMatrix(h, True), OperatorMatrix(r, True)
    c = thooft_split(H, rho, "corrected")
    p = thooft_split(H, rho, "squared")
    assert np.linalg.norm(c.H1.entries - c.H2.entries - h) <= 1e-10
    assert np.linalg.norm(p.H1.entries - p.H2.entries - r @ h) <= 1e-10
    for s in (c, p):
        assert np.linalg.norm(commutator(s.H1.entries, s.H2.entries)) <= 1e-10
        assert s.report["min_eigenvalue_H1"] >= -1e-10 and s.report["min_eigenvalue_H2"] >= -1e-10


def test_split_rejects_non_commuting_and_indefinite():
    H = build_hamiltonian_operator(GridModel(16), lambda x: 0.3 + 0.1 * np.sin(x[0]))
    X, _ = build_grid_operators(GridModel(16))
    with pytest.raises(OperatorError, match="commute"):
        thooft_split(H, OperatorMatrix(np.eye(16) + X.entries, True))
    with pytest.raises(OperatorError, match="positive"):
        thooft_split(H, OperatorMatrix(-np.eye(16, dtype=complex), True))


def test_evolution():
    H = build_hamiltonian_operator(GridModel(64), 0.5)
    assert np.allclose(evolution_operator(H, 0.0), np.eye(64), atol=1e-14)
    U = evolution_operator(H, 0.37)
    assert np.linalg.norm(U.conj().T @ U - np.eye(64)) <= 1e-10
    psi = np.random.default_rng(1).standard_normal(64) + 0j
    assert np.linalg.norm(time_evolution(H, psi, 2 * np.pi) - psi) <= 1e-10 * np.linalg.norm(psi)
    dt = 1e-3
    taylor = np.eye(64) - 1j * dt * H.entries
    h2 = np.linalg.norm(H.entries, 2) ** 2
    assert np.linalg.norm(evolution_operator(H, dt) - taylor, 2) / h2 <= dt ** 2


def test_evolution_needs_hermitian():
    with pytest.raises(OperatorError):
        evolution_operator(OperatorMatrix(np.array([[0, 1], [0, 0]], dtype=complex)), 1.0)


def test_raw_spectrum_diverges_averaged_bounded():
    mins, avg = [], []
    for N in (64, 128, 256):
        rep = averaged_operator_spectrum(GridModel(N), 0.5)
        mins.append(rep.raw_min_eigenvalue)
        avg.append(rep.min_eigenvalue)
    assert np.allclose(mins, [-32, -64, -128], atol=1e-8)
    assert (max(avg) - min(avg)) / abs(np.mean(avg)) <= 0.05


def test_averaged_operator_varying_beta_bounded():
    beta = lambda x: 0.3 + 0.1 * np.sin(x[0])  # noqa: E731
    vals = [averaged_operator_spectrum(GridModel(N), beta).min_eigenvalue for N in (64, 128, 256)]
    assert (max(vals) - min(vals)) / abs(np.mean(vals)) <= 0.05


def test_empty_shell_rejected():
    with pytest.raises(OperatorError):
        averaged_operator(GridModel(16), 0.5, k0=20)
