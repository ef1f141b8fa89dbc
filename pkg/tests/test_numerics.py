import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from radshock.errors import CollisionError, GapViolation, InconclusiveWinding, StiffnessError
from radshock.numerics import (
    accumulate_argument, adaptive_winding, gauss_legendre, kato_transport, loglog_slope,
    ode_integrate_complex, riccati_reduce,
)


def test_exponential_rotation():
    tr = ode_integrate_complex(lambda x, y: 1j * y, (0.0, np.pi), np.array([1.0 + 0j]))
    assert abs(tr.y_end[0] + 1) < 1e-9


def test_zero_field_keeps_constant():
    tr = ode_integrate_complex(lambda x, y: np.zeros_like(y), (0.0, 3.0), np.array([2.0, -1.0]))
    assert np.array_equal(tr.y_end, [2.0, -1.0])


def test_linear_system_matches_matrix_exponential():
    M = np.array([[-0.5, 1.0], [0.0, -0.5]])
    y0 = np.array([1.0, 2.0])
    tr = ode_integrate_complex(lambda x, y: M @ y, (0.0, 4.0), y0)
    assert np.max(np.abs(tr.y_end - expm(4.0 * M) @ y0)) < 1e-9


def test_fixed_step_fifth_order():
    errs = []
    for h in (0.1, 0.05, 0.025):
        tr = ode_integrate_complex(lambda x, y: -y, (0.0, 2.0), np.array([1.0]), fixed_step=h)
        errs.append(abs(tr.y_end[0] - np.exp(-2.0)))
    for a, b in zip(errs, errs[1:]):
        assert a / b == pytest.approx(32, rel=0.15)


def test_dense_output_hits_checkpoints_exactly():
    tr = ode_integrate_complex(lambda x, y: 1j * y, (0.0, 2.0), np.array([1.0 + 0j]),
                               checkpoints=[0.3, 1.0])
    assert 1.0 in tr.x and 0.3 in tr.x
    assert abs(tr.at(0.77)[0] - np.exp(0.77j)) < 1e-6


def test_step_underflow_raises():
    with pytest.raises(StiffnessError):
        ode_integrate_complex(lambda x, y: y / (1.0 - x) ** 3, (0.0, 2.0), np.array([1.0]),
                              max_steps=5000)


def test_kato_constant_family():
    M = np.array([[1.0, 2.0], [0.0, 3.0]])
    mu, V = np.linalg.eig(M)
    fr = kato_transport(lambda l: M, np.linspace(0, 1, 9), (mu[0], V[:, 0]))
    assert np.allclose(fr.vectors[:, :, 0], fr.vectors[0, :, 0][None, :], atol=1e-14)


def test_kato_closed_loop_round_trip():
    def fam(l):
        return np.array([[1.0, l], [l, -1.0]], dtype=complex)
    path = 0.5 * np.exp(2j * np.pi * np.linspace(0, 1, 129))
    mu, V = np.linalg.eig(fam(path[0]))
    i = int(np.argmax(mu.real))
    fr = kato_transport(fam, path, (mu[i], V[:, i]))
    assert np.max(np.abs(fr.vectors[-1, :, 0] - fr.vectors[0, :, 0])) <= 1e-8


def test_kato_diagonal_family_stays_on_axis():
    fam = lambda l: np.diag([l, 2.0]).astype(complex)
    fr = kato_transport(fam, np.linspace(0.0, 1.0, 11), (0.0, np.array([1.0, 0.0])))
    assert np.allclose(fr.vectors[:, 1, 0], 0.0, atol=1e-14)
    assert np.allclose(fr.vectors[:, 0, 0], 1.0, atol=1e-14)


def test_kato_eigenvector_residual():
    fam = lambda l: np.array([[0.0, 1.0, 0.0], [l, 0.0, 1.0], [1.0, l, 2.0]], dtype=complex)
    path = np.linspace(0.1, 0.6, 21) + 0.2j
    mu, V = np.linalg.eig(fam(path[0]))
    i = int(np.argmax(mu.real))
    fr = kato_transport(fam, path, (mu[i], V[:, i]))
    for l, e, v in zip(path, fr.eigenvalues[:, 0], fr.vectors[:, :, 0]):
        assert np.linalg.norm(fam(l) @ v - e * v) <= 1e-10 * np.linalg.norm(v)


def test_kato_collision_raises():
    fam = lambda l: np.diag([l, 0.0]).astype(complex)
    with pytest.raises(CollisionError):
        kato_transport(fam, np.linspace(-1.0, 1.0, 5), (-1.0, np.array([1.0, 0.0])))


def circle(n=256, r=1.0):
    return r * np.exp(2j * np.pi * np.arange(n) / n)


def test_winding_identity():
    assert accumulate_argument(circle()) == 1


def test_winding_two_roots_inside():
    z = circle()
    assert accumulate_argument(z ** 2 - 0.25) == 2


def test_winding_constant():
    assert accumulate_argument(np.full(64, 3.0 + 1j)) == 0


def test_winding_lambda_squared():
    assert accumulate_argument(circle(r=0.3) ** 2) == 2


def test_adaptive_winding_refines_coarse_sampling():
    res = adaptive_winding(lambda l: l ** 7, lambda s: np.exp(2j * np.pi * s), n0=8)
    assert res.winding == 7 and res.depth > 0


def test_inconclusive_winding():
    with pytest.raises(InconclusiveWinding):
        accumulate_argument(np.array([1.0, 1j, -1.0]), closed=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60), st.integers(-3, 3))
def test_winding_invariant_under_sample_insertion(extra, k):
    s = np.sort(np.concatenate([np.arange(200) / 200, np.array(extra) % 1.0]))
    z = np.exp(2j * np.pi * s)
    vals = z ** k * (2.0 + 0.5 * z)
    assert accumulate_argument(vals) == k


def constant_blocks(delta):
    return (lambda x: np.array([[1.0]]), lambda x: np.array([[-1.0]]),
            lambda x: delta, lambda x: np.ones((2, 2)))


def picard_graph(delta, x, iters=80):
    """Fixed point of Φ(x) = ∫ e^{−2(x−y)} δ(1 − Φ²)(y) dy, exact for piecewise linear integrands."""
    h = x[1] - x[0]
    e = np.exp(-2 * h)
    I1 = (1 - e) / 2
    Is = (h / 2 - (1 - e) / 4) / h
    w0, w1 = I1 - Is, Is
    phi = np.zeros_like(x)
    for _ in range(iters):
        f = delta * (1 - phi ** 2)
        new = np.zeros_like(x)
        for i in range(len(x) - 1):
            new[i + 1] = e * new[i] + w0 * f[i] + w1 * f[i + 1]
        if np.max(np.abs(new - phi)) < 1e-15:
            return new
        phi = new
    return phi


def test_riccati_zero_coupling_gives_zero_graph():
    r = riccati_reduce(*constant_blocks(0.0), (-5.0, 5.0))
    assert np.max(np.abs(r.Phi2)) == 0.0


def test_riccati_constant_gap_against_picard():
    r = riccati_reduce(*constant_blocks(0.1), (-20.0, 20.0))
    assert np.max(np.abs(r.Phi2)) <= 1.5 * r.ratio_sup
    x = np.linspace(-20.0, 20.0, 40001)
    ref = picard_graph(0.1, x)
    assert np.max(np.abs(np.interp(r.x, x, ref) - r.Phi2[:, 0, 0].real)) < 1e-6


def test_riccati_pointwise_bound_varying_delta():
    M1, M2, _, th = constant_blocks(0.0)
    dl = lambda x: 0.05 * (1 + np.sin(x)) * np.exp(-x * x / 50)
    r = riccati_reduce(M1, M2, dl, th, (-20.0, 20.0))
    assert r.C_pointwise <= 1.5


def test_riccati_linear_scaling_in_delta():
    d = np.array([0.0125, 0.025, 0.05, 0.1])
    sup = [np.max(np.abs(riccati_reduce(*constant_blocks(v), (-10.0, 10.0)).Phi2)) for v in d]
    slope, _ = loglog_slope(d, sup)
    assert slope == pytest.approx(1.0, abs=0.1)


def test_riccati_graph_is_invariant():
    r = riccati_reduce(*constant_blocks(0.05), (-10.0, 10.0))
    x0 = 3.0
    h = 1e-4
    dphi = (r.phi_at(x0 + h) - r.phi_at(x0 - h)) / (2 * h)
    phi = r.phi_at(x0)
    rhs = -2 * phi + 0.05 * (1 - phi @ phi)
    assert np.max(np.abs(dphi - rhs)) < 1e-8
    assert r.reduced_flow(x0)[0, 0] == pytest.approx(1 + 0.05 * (1 + phi[0, 0]))


def test_riccati_rejects_missing_gap():
    blocks = (lambda x: np.array([[-1.0]]), lambda x: np.array([[1.0]]),
              lambda x: 0.1, lambda x: np.ones((2, 2)))
    with pytest.raises(GapViolation):
        riccati_reduce(*blocks, (-5.0, 5.0))


def test_gauss_legendre_polynomial_exact():
    assert gauss_legendre(lambda x: x ** 7 - 3 * x ** 2, -1.0, 2.0, 8) == pytest.approx(
        (2 ** 8 - 1) / 8 - (8 + 1), rel=1e-13)
