import numpy as np
import pytest

from finslerdet import (Box, RandersField, cartan_connection, chern_connection, christoffel,
                        nonlinear_connection)
from finslerdet.connections import connection_difference
from finslerdet.errors import StrongConvexityError
from finslerdet.randers import cartan_tensor, finsler_norm, fundamental_tensor

from conftest import curved_field, euclid_field, riemannian_field, tilted_field


def conformal_christoffel(x):
    # a = phi I with phi = 1 + 0.1 x1^2
    phi = 1 + 0.1 * x[0] ** 2
    dphi = np.array([0.2 * x[0], 0.0])
    d = np.eye(2)
    return (np.einsum("ij,k->ijk", d, dphi) + np.einsum("ik,j->ijk", d, dphi)
            - np.einsum("jk,i->ijk", d, dphi)) / (2 * phi)


def test_constant_field_is_flat():
    f = euclid_field([0.3, -0.2])
    b = chern_connection(f, [0.1, 0.2], [1.0, 0.4])
    assert np.all(b.gamma == 0) and np.all(b.N == 0) and np.all(b.chern == 0)
    assert b.torsion_residual == 0.0
    # the compatibility residual only carries finite-difference rounding here
    assert b.compatibility_residual <= 1e-8


def test_conformal_metric_christoffel():
    f = RandersField.from_expressions([["1 + 0.1*x1^2", "0"], ["0", "1 + 0.1*x1^2"]], ["0", "0"], Box.cube(2))
    for x in ([0.3, -0.5], [-0.8, 0.1], [0.0, 0.0]):
        gamma = christoffel(f, x, [1.0, 2.0])
        assert np.allclose(gamma, conformal_christoffel(x), atol=1e-8)


@pytest.mark.parametrize("make", [curved_field, tilted_field])
def test_lower_index_symmetry(make):
    f = make()
    b = chern_connection(f, [0.2, -0.3], [1.0, -0.5])
    assert np.max(np.abs(b.gamma - b.gamma.transpose(0, 2, 1))) <= 1e-10
    assert np.max(np.abs(b.chern - b.chern.transpose(0, 2, 1))) <= 1e-10


def test_riemannian_nonlinear_connection_is_gamma_y():
    f = riemannian_field(2)
    x, y = np.array([0.4, -0.2]), np.array([0.7, 1.1])
    N = nonlinear_connection(f, x, y)
    assert np.allclose(N, np.einsum("ijk,k->ij", christoffel(f, x, y), y), atol=1e-14)


@pytest.mark.parametrize("make", [curved_field, tilted_field])
def test_nonlinear_connection_is_spray_derivative(make):
    # N^i_j = d G^i / d y^j with G^i = 1/2 gamma^i_jk y^j y^k
    f = make()
    x, y = np.array([0.2, -0.3]), np.array([1.0, -0.7])

    def G(v):
        return 0.5 * np.einsum("ijk,j,k->i", christoffel(f, x, v), v, v)

    h = 1e-5
    J = np.stack([(G(y + h * e) - G(y - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
    assert np.allclose(nonlinear_connection(f, x, y), J, atol=1e-6)


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.0, 10.0])
def test_n_over_f_scale_invariance(lam):
    f = curved_field()
    x, y = np.array([0.1, 0.5]), np.array([-0.4, 0.9])
    ref = nonlinear_connection(f, x, y) / finsler_norm(f, x, y)
    got = nonlinear_connection(f, x, lam * y) / finsler_norm(f, x, lam * y)
    assert np.max(np.abs(got - ref)) <= 1e-8


@pytest.mark.parametrize("n", [2, 3])
def test_riemannian_reduction(n):
    f = riemannian_field(n)
    rng = np.random.default_rng(n)
    for _ in range(3):
        x, y = rng.uniform(-0.8, 0.8, n), rng.standard_normal(n)
        chern = chern_connection(f, x, y)
        cartan = cartan_connection(f, x, y)
        assert np.max(np.abs(chern.chern - chern.gamma)) <= 1e-8
        assert np.max(np.abs(cartan.chern - chern.gamma)) <= 1e-8
        assert np.max(np.abs(cartan.cartan_v)) <= 1e-8


@pytest.mark.parametrize("make", [curved_field, tilted_field])
def test_structure_equations(make):
    f = make()
    rng = np.random.default_rng(7)
    for k in range(20):
        x, y = f.domain.sample(1, rng)[0], rng.standard_normal(2)
        b = chern_connection(f, x, y, seed=k)
        assert b.ok
        assert b.torsion_residual <= 1e-6 and b.compatibility_residual <= 1e-6


def test_cartan_minus_chern_is_cartan_tensor():
    f = curved_field()
    x, y = np.array([0.3, 0.3]), np.array([2.0, -1.0])
    chern, cartan = chern_connection(f, x, y), cartan_connection(f, x, y)
    dh, dv = connection_difference(cartan, chern)
    assert np.all(dh == 0)
    g_inv = np.linalg.inv(fundamental_tensor(f, x, y))
    A_up = np.einsum("kl,lij->kij", g_inv, cartan_tensor(f, x, y))
    F = finsler_norm(f, x, y)
    assert np.allclose(dv, A_up, rtol=1e-12, atol=1e-15)
    assert np.allclose(cartan.vertical_per_dy, A_up / F, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
def test_vertical_addition_zero_homogeneous(lam):
    f = tilted_field()
    x, y = np.array([-0.2, 0.6]), np.array([0.3, 1.0])
    a = cartan_connection(f, x, y).cartan_v
    b = cartan_connection(f, x, lam * y).cartan_v
    assert np.max(np.abs(a - b)) <= 1e-8


def test_singular_metric_rejected():
    f = RandersField.constant([[1.0, 1.0], [1.0, 1.0]], [0.0, 0.0])
    with pytest.raises(StrongConvexityError):
        christoffel(f, [0, 0], [1, 0])


def test_tabulated_tolerance_relaxed(tmp_path):
    from finslerdet import TabulatedComponent
    xs = np.linspace(-1, 1, 41)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    comp = TabulatedComponent(0.3 + 0.1 * np.sin(X) * np.cos(Y), (-1, -1), (0.05, 0.05))
    f = RandersField.from_components([[1.0, 0.0], [0.0, 1.5]], [comp, 0.1], Box.cube(2))
    b = chern_connection(f, [0.21, -0.33], [1.0, 0.5])
    assert b.tolerance == 1e-3 and b.ok
