import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import sici

from radshock.greenfn import (
    _integrate, errfn, errfn_kernel, excited_data, excited_term, fit_envelope, green_contour,
    low_freq_green,
)


def test_errfn_limits_and_midpoint():
    assert errfn(-40.0) == 0.0
    assert errfn(40.0) == 1.0
    assert errfn(0.0) == 0.5


@pytest.mark.parametrize("y", [-1.5, -5.0, -9.0])
def test_excited_kernel_limits(y):
    assert errfn_kernel(y, 1e-6, 0.1, 1.0) < 1e-6
    assert abs(errfn_kernel(y, 1e7, 0.1, 1.0) - 1.0) < 1e-6


def test_excited_data_hamer(hamer_profile):
    d = excited_data(hamer_profile, "-")
    assert d.speeds == pytest.approx([0.1])
    assert d.diffusion == pytest.approx([1.0])
    assert d.weights[0] == pytest.approx([-5.0])
    d = excited_data(hamer_profile, "+")
    assert d.speeds == pytest.approx([-0.1])


def test_excited_term_carries_profile_derivative(hamer_profile):
    x = np.linspace(-10, 10, 11)
    E = excited_term(hamer_profile, x, 50.0, -3.0)
    expected = hamer_profile.U_x(x).ravel() * -5.0 * errfn_kernel(-3.0, 50.0, 0.1, 1.0)
    assert np.allclose(E[:, 0, 0], expected)


def test_y_derivative_scalings():
    # the two errfn fronts separate once a·t ≫ √(4βt), i.e. t ≫ 4β/a² = 400
    ys = np.linspace(-6000, 0, 24001)
    h = ys[1] - ys[0]
    ts = np.array([1600.0, 3200.0, 6400.0, 12800.0, 25600.0])
    l1, linf = [], []
    for t in ts:
        ey = np.gradient(errfn_kernel(ys, t, 0.1, 1.0), h)
        l1.append(np.sum(np.abs(ey)) * h)
        linf.append(np.max(np.abs(ey)))
    assert max(l1) < 2.0 and np.ptp(l1) < 0.05
    slope = np.polyfit(np.log(ts), np.log(linf), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 1e-2), st.floats(0.05, 2.0))
def test_contour_weights_integrate_dlambda(rho, ratio):
    R = rho * (100 + 1000 * ratio)
    for indent in ("right", "left"):
        start = rho if indent == "right" else -rho
        errs = []
        for samples in (256, 1024):
            c = green_contour(rho, R, samples, indent=indent)
            assert c.lams[-1] == pytest.approx(1j * R)
            assert c.lams[0] == pytest.approx(start)
            errs.append(abs(np.sum(c.weights) - (1j * R - start)) / R)
        assert errs[1] < 1e-4 and errs[1] <= errs[0] / 10


def test_quadrature_of_simple_pole():
    # (1/2πi)∫ e^{λt}/λ dλ from −iR to iR passing right of 0 equals ½ + Si(Rt)/π
    rho, R = 1e-3, 0.4
    c = green_contour(rho, R, 4096)
    t = np.array([5.0, 20.0, 60.0])
    K = (1.0 / c.lams)[:, None]
    val = _integrate(c, K, t)[:, 0].real
    exact = 0.5 + sici(R * t)[0] / np.pi
    assert np.max(np.abs(val - exact)) < 1e-4


def test_left_indentation_excludes_the_residue():
    rho, R = 1e-3, 0.4
    c = green_contour(rho, R, 4096, indent="left")
    t = np.array([5.0, 20.0])
    val = _integrate(c, (1.0 / c.lams)[:, None], t)[:, 0].real
    exact = -0.5 + sici(R * t)[0] / np.pi
    assert np.max(np.abs(val - exact)) < 1e-4


def test_envelope_fit_recovers_gaussian():
    class S:
        pass
    s = S()
    s.x = np.linspace(-40, 40, 201)
    s.y = -5.0
    s.t = np.array([10.0, 40.0])
    g = np.array([0.7 / np.sqrt(t) * np.exp(-(s.x - s.y - 0.1 * t) ** 2 / (8.0 * t))
                  for t in s.t])
    s.GI = g[:, :, None, None]
    s.E = np.zeros_like(s.GI)
    fit = fit_envelope([s], 0.1, M_grid=np.geomspace(1, 64, 241))
    assert fit.M == pytest.approx(8.0, rel=0.02)
    assert fit.C == pytest.approx(0.7, rel=0.02)


@pytest.fixture(scope="module")
def green_y5(hamer_system):
    x = np.linspace(-40.0, 40.0, 201)
    t = np.array([5.0, 20.0, 50.0, 100.0])
    return low_freq_green(hamer_system, x, t, -5.0, samples=128)


def test_green_is_real_to_quadrature_accuracy(green_y5):
    assert green_y5.imag_ratio < 1e-6


def test_green_mass_bounded(green_y5):
    h = green_y5.x[1] - green_y5.x[0]
    mass = np.abs(green_y5.GI[:, :, 0, 0]).sum(axis=1) * h
    assert np.all(np.isfinite(mass)) and mass.max() < 10.0
