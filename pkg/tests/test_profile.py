import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from oracles import hamer_shooting
from radshock.errors import ProfileRejected
from radshock.model import ShockTriple, euler_shock, hamer, hamer_shock
from radshock.profile import decay_rate, linear_rates, solve_profile


def test_sonic_point_and_first_integral_value(hamer_profile):
    U, Q, _ = hamer_profile.state(np.array([0.0]))
    assert abs(U[0, 0]) < 1e-10
    assert Q[0] == pytest.approx(0.005, abs=1e-12)


def test_far_field_limits(hamer_profile):
    lo, hi = hamer_profile.far_field_error()
    assert lo <= 1e-6 * 0.2 and hi <= 1e-6 * 0.2
    assert hamer_profile.U[0, 0] == pytest.approx(0.1, abs=1e-7)
    assert hamer_profile.U[-1, 0] == pytest.approx(-0.1, abs=1e-7)


def test_q_vanishes_in_far_field(hamer_profile):
    assert abs(hamer_profile.Q[0]) <= 1e-6 * 0.2 ** 2
    assert abs(hamer_profile.Q[-1]) <= 1e-6 * 0.2 ** 2


def test_first_integral_residual(hamer_profile, euler_profile):
    assert hamer_profile.first_integral_residual() <= 1e-8
    assert euler_profile.first_integral_residual() <= 1e-8


def test_matches_shooting_oracle(hamer_profile):
    for xs, Us in hamer_shooting(0.2):
        keep = np.abs(xs) <= hamer_profile.X
        err = np.max(np.abs(hamer_profile.U_at(xs[keep]).ravel() - Us[keep]))
        assert err <= 1e-7


def test_oracle_is_step_converged():
    (xa, ua), _ = hamer_shooting(0.2)
    (xb, ub), _ = hamer_shooting(0.2, h=2.5e-4, h_far=5e-3)
    assert np.max(np.abs(np.interp(xa[::50], xb, ub) - ua[::50])) < 1e-8


def test_ap_strictly_decreasing(hamer_profile, euler_profile):
    for prof in (hamer_profile, euler_profile):
        assert np.all(np.diff(prof.a_p(prof.grid)) < 0)


def test_phase_condition_is_reproduced(hamer_profile, euler_profile):
    for prof in (hamer_profile, euler_profile):
        root = brentq(lambda x: float(prof.a_p(np.array([x]))[0]), -1.0, 1.0, xtol=1e-14)
        assert abs(root) < 1e-8


def test_exponential_tail_matches_linearization(hamer_profile):
    eta, rep = decay_rate(hamer_profile)
    assert rep["minus"]["rel_diff"] < 0.1 and rep["plus"]["rel_diff"] < 0.1
    assert eta == pytest.approx(min(linear_rates(hamer(), hamer_shock(0.2))[:2]))


def test_decay_rate_scales_linearly_in_amplitude():
    etas = {e: min(linear_rates(hamer(), hamer_shock(e))[:2]) for e in (0.1, 0.2, 0.4)}
    assert etas[0.1] / etas[0.2] == pytest.approx(0.5, rel=0.25)
    assert etas[0.2] / etas[0.4] == pytest.approx(0.5, rel=0.25)


def test_degenerate_shock_rejected():
    sh = ShockTriple(np.array([0.1]), np.array([0.1]), 0.0, 1, 0.0)
    with pytest.raises(ProfileRejected):
        solve_profile(hamer(), sh)


def test_euler_profile_far_field(euler_profile):
    lo, hi = euler_profile.far_field_error()
    assert max(lo, hi) <= 1e-6 * 0.05


def test_tail_envelope_fit(hamer_profile):
    x = hamer_profile.grid
    dev = np.abs(hamer_profile.U[:, 0] - np.where(x < 0, 0.1, -0.1))
    sel = (np.abs(x) > 20) & (dev > 1e-12)
    slope, icpt = np.polyfit(np.abs(x[sel]), np.log(dev[sel]), 1)
    pred = np.exp(icpt + slope * np.abs(x[sel]))
    assert np.max(np.abs(pred / dev[sel] - 1)) < 0.1


@settings(max_examples=5, deadline=None)
@given(st.floats(0.08, 0.3))
def test_hamer_profiles_obey_first_integral(eps):
    prof = solve_profile(hamer(), hamer_shock(eps))
    assert prof.first_integral_residual() <= 1e-8
    U, Q, _ = prof.state(np.array([0.0]))
    assert Q[0] == pytest.approx(eps * eps / 8, rel=1e-8)
