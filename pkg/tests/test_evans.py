import numpy as np
import pytest

from radshock.errors import NearSingularResolvent, ResonanceError
from radshock.evans import (
    EvansSystem, check_resonance, contour_radii, local_basis, origin_circle, resolvent_kernel,
    resolvent_on_grid, scan_contour, semi_annulus, singular_exponent,
)
from radshock.numerics import accumulate_argument
from radshock.spectral import asymptotic_modes


def test_singular_exponent_positive_and_affine(hamer_frame):
    a0 = singular_exponent(hamer_frame, 0.0)
    a1 = singular_exponent(hamer_frame, 0.01)
    assert a0.real > 0
    assert (a1 - a0) == pytest.approx(0.01 / abs(hamer_frame.profile.ap_prime0))


def test_resonance_band():
    with pytest.raises(ResonanceError):
        check_resonance(3.03, 8)
    check_resonance(3.5, 8)
    check_resonance(12.0, 8)


@pytest.mark.parametrize("lam", [0.0, 0.01, 0.02 + 0.05j])
def test_local_basis_solves_the_ode(hamer_frame, lam):
    sp = local_basis(hamer_frame, lam)
    for x in (0.5 * sp.x0, -0.5 * sp.x0, 0.25 * sp.x0):
        assert sp.residual(hamer_frame, x) < 1e-8


def test_fast_mode_vanishes_like_power(hamer_frame):
    sp = local_basis(hamer_frame, 0.0)
    # α₀ is large (≈ 200 for Hamer at λ = 0), so stay where |x|^α₀ is representable
    x = sp.x0 * np.geomspace(0.6, 1.0, 12)
    mags = [np.linalg.norm(sp.fast(v)) for v in x]
    slope = np.polyfit(np.log(x), np.log(mags), 1)[0]
    assert slope == pytest.approx(sp.alpha0.real, rel=0.05)


def test_slow_modes_have_finite_nonzero_limits(hamer_frame):
    sp = local_basis(hamer_frame, 0.01)
    near = sp.slow(1e-9)
    assert np.allclose(near, sp.slow_series[0], atol=1e-8)
    assert np.min(np.linalg.norm(sp.slow_series[0], axis=0)) > 1e-3


def test_column_swap_flips_determinant(hamer_frame):
    B = local_basis(hamer_frame, 0.01 + 0.01j).basis(0.01)
    assert np.linalg.det(B[:, [1, 0, 2]]) == pytest.approx(-np.linalg.det(B), rel=1e-12)


def test_conjugation_symmetry(hamer_system):
    lams = np.array([0.01 + 0.01j, 0.1j, 0.3 + 0.1j])
    a = hamer_system.evaluate_at(lams)
    b = hamer_system.evaluate_at(np.conj(lams))
    for side in "-+":
        va, vb = a.value(side), b.value(side)
        assert np.max(np.abs(vb - np.conj(va)) / np.abs(va)) < 1e-10


def test_grid_refinement_stability(hamer_frame, hamer_system):
    lams = np.array([0.01 + 0.01j, 0.1j, 0.3 + 0.1j])
    fine = EvansSystem(hamer_frame, h_far=0.5 * hamer_system.h_far)
    a = hamer_system.evaluate_at(lams).value("-")
    b = fine.evaluate_at(lams).value("-")
    assert np.max(np.abs(a / b - 1)) < 1e-4


def test_winding_additive_over_nested_semi_annuli(hamer_system):
    r, R = contour_radii(0.2)
    Rm = np.sqrt(r * R)
    whole = scan_contour(hamer_system, semi_annulus(r, R), 128, sides=("-",))
    inner = scan_contour(hamer_system, semi_annulus(r, Rm), 128, sides=("-",))
    outer = scan_contour(hamer_system, semi_annulus(Rm, R), 128, sides=("-",))
    assert whole.windings["-"] == inner.windings["-"] + outer.windings["-"]


def test_origin_circle_counts_the_translational_zero(hamer_system):
    r, _ = contour_radii(0.2)
    scan = scan_contour(hamer_system, origin_circle(r), 64, sides=("-",))
    assert scan.windings["-"] == 1


def test_synthetic_square_on_origin_circle():
    path = origin_circle(0.3)
    lams = np.array([path(s) for s in np.arange(128) / 128])
    assert accumulate_argument(lams ** 2) == 2


def test_resolvent_jump_condition(hamer_system):
    k = resolvent_kernel(hamer_system, 0.02 + 0.01j, -1.0)
    assert k.jump_residual < 1e-8


def test_resolvent_singular_at_zero(hamer_system):
    with pytest.raises(NearSingularResolvent):
        resolvent_kernel(hamer_system, 0.0, -1.0)


@pytest.mark.parametrize("side,xs", [("-", np.linspace(-60, -20, 21)),
                                     ("+", np.linspace(20, 60, 21))])
def test_resolvent_far_field_rate(hamer_system, hamer_frame, side, xs):
    lam = 0.05
    G = resolvent_on_grid(hamer_system, [lam], -1.0, xs)[0]
    rate = np.polyfit(xs, np.log(np.abs(G[:, 0, 0])), 1)[0]
    mu = asymptotic_modes(hamer_frame, side, lam).mu
    decaying = mu[mu.real > 0] if side == "-" else mu[mu.real < 0]
    slowest = decaying[np.argmin(np.abs(decaying.real))].real
    assert rate == pytest.approx(slowest, rel=0.1)


def test_resolvent_grid_matches_kernel(hamer_system):
    lam = 0.02 + 0.01j
    k = resolvent_kernel(hamer_system, lam, -1.0)
    idx = [int(np.argmin(np.abs(k.x - x))) for x in (-5.0, -2.0, 0.5, 3.0)]
    xs = k.x[idx]
    G = resolvent_on_grid(hamer_system, [lam], -1.0, xs, path=False)[0]
    ref = k.G[idx]
    assert np.max(np.abs(G - ref)) / np.max(np.abs(ref)) < 1e-6
