"""Time integration of u_t + f(u)_x + Lq_x = 0, −q_xx + q + g(u)_x = 0 near a profile.

Second-order finite volumes (minmod MUSCL, local Lax–Friedrichs flux) with
SSP-RK3 in time; q is recomputed from u at every stage by a tridiagonal
solve. Shock location is tracked by L² fitting of the shifted profile.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .errors import SimulationAbort, TrackingLost
from .model import ModelSystem

DEFAULT_XS = 200.0
DEFAULT_NODES = 8001
DEFAULT_CFL = 0.4


def uniform_grid(X_s=DEFAULT_XS, nodes=DEFAULT_NODES):
    return np.linspace(-X_s, X_s, nodes)


# ---------------------------------------------------------------------------
# elliptic part


def elliptic_solve(x, rhs):
    """−q″ + q = rhs on a uniform grid with q = 0 at both end nodes."""
    x = np.asarray(x, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    h = x[1] - x[0]
    N = len(x) - 2
    ab = np.empty((3, N))
    ab[0] = -1.0 / h ** 2
    ab[1] = 1.0 + 2.0 / h ** 2
    ab[2] = -1.0 / h ** 2
    q = np.zeros(len(x))
    q[1:-1] = solve_banded((1, 1), ab, rhs[1:-1])
    return q


def elliptic_residual(x, q, rhs):
    h = x[1] - x[0]
    r = -(q[2:] - 2 * q[1:-1] + q[:-2]) / h ** 2 + q[1:-1] - rhs[1:-1]
    return float(np.max(np.abs(r)) / max(np.max(np.abs(rhs)), 1e-300))


def centered_derivative(v, h, left=0.0, right=0.0):
    """(v[i+1] − v[i−1]) / 2h with fixed exterior values."""
    ext = np.concatenate([np.atleast_1d(left)[None] if np.ndim(v) > 1 else [left], v,
                          np.atleast_1d(right)[None] if np.ndim(v) > 1 else [right]])
    return (ext[2:] - ext[:-2]) / (2 * h)


# ---------------------------------------------------------------------------
# scheme


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def spectral_radius(model: ModelSystem, u):
    A = model.jacobian_f(u)
    if model.n == 1:
        return np.abs(A[..., 0, 0])
    return np.max(np.abs(np.linalg.eigvals(A)), axis=-1)


@dataclass
class SimState:
    x: np.ndarray
    u: np.ndarray          # (N, n)
    q: np.ndarray          # (N,)
    t: float
    cfl: float = DEFAULT_CFL

    @property
    def h(self):
        return float(self.x[1] - self.x[0])


class Scheme:
    """Semi-discrete right-hand side with ghost cells pinned to the end states."""

    def __init__(self, model: ModelSystem, x, u_left, u_right):
        self.model = model
        self.x = np.asarray(x, dtype=float)
        self.h = float(self.x[1] - self.x[0])
        self.ul = np.asarray(u_left, dtype=float)
        self.ur = np.asarray(u_right, dtype=float)
        self.g_left = float(model.g(self.ul))
        self.g_right = float(model.g(self.ur))

    def radiation(self, u):
        """q from −q″ + q = −g(u)ₓ."""
        gx = centered_derivative(self.model.g(u), self.h, self.g_left, self.g_right)
        return elliptic_solve(self.x, -gx)

    def interface_flux(self, u):
        """LLF fluxes at the N+1 interfaces of the node-centred cells."""
        m = self.model
        ext = np.concatenate([self.ul[None], self.ul[None], u, self.ur[None], self.ur[None]])
        d = np.diff(ext, axis=0)
        slope = _minmod(d[:-1], d[1:])                     # cells 1 .. N+2 of ext
        cells = ext[1:-1]
        uL = (cells + 0.5 * slope)[:-1]                    # left state at interface
        uR = (cells - 0.5 * slope)[1:]
        a = np.maximum(spectral_radius(m, uL), spectral_radius(m, uR))[:, None]
        return 0.5 * (m.f(uL) + m.f(uR)) - 0.5 * a * (uR - uL)

    def rhs(self, u, q=None):
        q = self.radiation(u) if q is None else q
        F = self.interface_flux(u)
        qx = centered_derivative(q, self.h)
        return -(F[1:] - F[:-1]) / self.h - qx[:, None] * self.model.L[None, :]

    def stable_dt(self, u, cfl):
        return cfl * self.h / float(np.max(spectral_radius(self.model, u)))

    def check(self, u):
        m = self.model
        bad = np.any((u < m.domain_lo) | (u > m.domain_hi), axis=-1)
        if m.extra_domain is not None:
            bad |= ~np.asarray(m.extra_domain(u), dtype=bool)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise SimulationAbort(f"state left the admissible set at node {i} (x={self.x[i]:.6g})")

    def step(self, state: SimState, dt) -> SimState:
        """One SSP-RK3 step."""
        u = state.u
        u1 = u + dt * self.rhs(u)
        self.check(u1)
        u2 = 0.75 * u + 0.25 * (u1 + dt * self.rhs(u1))
        self.check(u2)
        u3 = u / 3.0 + 2.0 / 3.0 * (u2 + dt * self.rhs(u2))
        self.check(u3)
        return SimState(state.x, u3, self.radiation(u3), state.t + dt, state.cfl)

    def boundary_flux_change(self, u, dt):
        """Forward-Euler mass change implied by the boundary fluxes alone."""
        F = self.interface_flux(u)
        q = self.radiation(u)
        Lq = self.model.L
        # the centred q-difference telescopes to its two end pairs
        qb = 0.5 * (q[-1] + q[-2]) - 0.5 * (q[0] + 0.0)
        return -dt * (F[-1] - F[0] + qb * Lq)


def step(state: SimState, model: ModelSystem, dt, u_left, u_right) -> SimState:
    return Scheme(model, state.x, u_left, u_right).step(state, dt)


def initial_state(model: ModelSystem, profile, x, perturbation=None, cfl=DEFAULT_CFL):
    u = np.asarray(profile.U_at(x), dtype=float).reshape(len(x), model.n).copy()
    if perturbation is not None:
        u += np.asarray(perturbation(x), dtype=float).reshape(len(x), model.n)
    sch = Scheme(model, x, profile.shock.u_minus, profile.shock.u_plus)
    return SimState(np.asarray(x, float), u, sch.radiation(u), 0.0, cfl)


# ---------------------------------------------------------------------------
# shock tracking


class ShockTracker:
    """α = argmin_a ‖u − U(· − a)‖_{L²} by bounded golden-section (Brent) search."""

    def __init__(self, profile, x, window=20.0, oversample=4):
        self.profile = profile
        self.x = np.asarray(x, dtype=float)
        self.h = float(self.x[1] - self.x[0])
        self.window = float(window)
        lo = self.x[0] - window - 5.0
        hi = self.x[-1] + window + 5.0
        xt = np.arange(lo, hi + self.h / oversample, self.h / oversample)
        U, Q, _ = profile.state(xt)
        self.U = CubicSpline(xt, np.asarray(U).reshape(len(xt), -1), axis=0)
        self.Q = CubicSpline(xt, np.ravel(Q))

    def shifted(self, a):
        return self.U(self.x - a)

    def misfit(self, u, a):
        return float(np.sum((u - self.shifted(a)) ** 2) * self.h)

    def track(self, u, guess=0.0):
        lo, hi = guess - self.window, guess + self.window
        res = minimize_scalar(lambda a: self.misfit(u, a), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-6 * self.h, "maxiter": 500})
        a = float(res.x)
        if min(a - lo, hi - a) < 1e-3 * self.window:
            raise TrackingLost(f"shift {a:.6g} at the edge of the window [{lo:.4g}, {hi:.4g}]")
        return a


def track_shock(state: SimState, profile, guess=0.0, window=20.0):
    return ShockTracker(profile, state.x, window).track(state.u, guess)


# ---------------------------------------------------------------------------
# decay runs


def bump(center, width, amplitude, n=1, direction=None):
    """Smooth compactly supported bump A·exp(1 − 1/(1 − s²)), s = (x − c)/w."""
    d = np.ones(n) if direction is None else np.asarray(direction, dtype=float)

    def pert(x):
        s = (np.asarray(x, dtype=float) - center) / width
        v = np.zeros_like(s)
        inside = np.abs(s) < 1
        v[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return v[:, None] * d[None, :]
    return pert


def discrete_norms(v, h):
    """L¹, L², L∞ and an H² proxy (values, first and second differences)."""
    v = np.asarray(v, dtype=float).reshape(len(v), -1)
    d1 = np.diff(v, axis=0) / h
    d2 = np.diff(v, 2, axis=0) / h ** 2
    l2 = lambda w: float(np.sqrt(np.sum(w ** 2) * h))
    return {"L1": float(np.sum(np.abs(v)) * h), "L2": l2(v), "Linf": float(np.max(np.abs(v))),
            "H2": float(np.sqrt(l2(v) ** 2 + l2(d1) ** 2 + l2(d2) ** 2))}


@dataclass
class PowerFit:
    exponent: float
    prefactor: float
    r2: float
    window: tuple


def fit_power(t, y, t0, t1):
    """Least squares log y ≈ e log(1 + t) + c on t ∈ [t0, t1]."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    sel = (t >= t0) & (t <= t1) & (y > 0)
    X = np.log1p(t[sel])
    Y = np.log(y[sel])
    e, c = np.polyfit(X, Y, 1)
    res = Y - (e * X + c)
    r2 = 1.0 - float(np.sum(res ** 2) / np.sum((Y - Y.mean()) ** 2))
    return PowerFit(float(e), float(np.exp(c)), r2, (float(t0), float(t1)))


def smooth(v, window=5):
    k = np.ones(window) / window
    pad = window // 2
    ext = np.concatenate([np.full(pad, v[0]), v, np.full(pad, v[-1])])
    return np.convolve(ext, k, mode="valid")


@dataclass
class DecayReport:
    t: np.ndarray
    L2: np.ndarray
    Linf: np.ndarray
    q_W1p: np.ndarray
    alpha: np.ndarray
    alpha_dot: np.ndarray
    unshifted_L2: np.ndarray
    fits: dict
    initial_norms: dict
    unstable: bool
    q_ratio: float
    params: dict = field(default_factory=dict)

    @property
    def e2(self):
        return self.fits["L2"].exponent

    @property
    def einf(self):
        return self.fits["Linf"].exponent

    @property
    def alpha_dot_exponent(self):
        return self.fits["alpha_dot"].exponent

    def to_json(self):
        return {"exponents": {"L2": self.e2, "Linf": self.einf,
                              "alpha_dot": self.alpha_dot_exponent},
                "r2": {k: v.r2 for k, v in self.fits.items()},
                "fit_windows": {k: list(v.window) for k, v in self.fits.items()},
                "initial_norms": self.initial_norms, "unstable": self.unstable,
                "q_ratio": self.q_ratio, "params": self.params}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "L2", "Linf", "q_W1p", "alpha", "alpha_dot"])
            for row in zip(self.t, self.L2, self.Linf, self.q_W1p, self.alpha, self.alpha_dot):
                w.writerow([repr(float(v)) for v in row])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def run_decay(model: ModelSystem, profile, perturbation, T=400.0, X_s=DEFAULT_XS,
              nodes=DEFAULT_NODES, cfl=DEFAULT_CFL, sample_dt=1.0, T0=20.0,
              window=20.0, growth_limit=10.0, check_size=True) -> DecayReport:
    """Evolve U + perturbation, track the shift and fit decay exponents on [T0, T]."""
    x = uniform_grid(X_s, nodes)
    h = float(x[1] - x[0])
    sh = profile.shock
    sch = Scheme(model, x, sh.u_minus, sh.u_plus)
    state = initial_state(model, profile, x, perturbation, cfl)
    tracker = ShockTracker(profile, x, window)
    pert0 = state.u - tracker.shifted(0.0)
    init = discrete_norms(pert0, h)
    if check_size and init["L1"] > 0.1 * profile.epsilon:
        raise ValueError(f"perturbation L¹ norm {init['L1']:.3g} exceeds 0.1·ε")
    ts, L2, Li, qw, al, un = [], [], [], [], [], []
    alpha = 0.0
    q_ratio = 0.0
    next_sample = 0.0
    unstable = False
    ref = None
    while True:
        if state.t >= next_sample - 1e-12:
            alpha = tracker.track(state.u, alpha)
            d = state.u - tracker.shifted(alpha)
            dq = state.q - tracker.Q(x - alpha)
            nd = discrete_norms(d, h)
            dqx = np.diff(dq) / h
            w1 = float(np.sqrt(np.sum(dq ** 2) * h + np.sum(dqx ** 2) * h))
            ts.append(state.t)
            L2.append(nd["L2"])
            Li.append(nd["Linf"])
            qw.append(w1)
            al.append(alpha)
            un.append(discrete_norms(state.u - tracker.shifted(0.0), h)["L2"])
            if nd["L2"] > 0:
                q_ratio = max(q_ratio, w1 / nd["L2"])
            ref = nd["L2"] if ref is None else ref
            if nd["L2"] > growth_limit * max(ref, 1e-300):
                unstable = True
                break
            next_sample += sample_dt
        if state.t >= T - 1e-12:
            break
        dt = min(sch.stable_dt(state.u, cfl), next_sample - state.t, T - state.t)
        state = sch.step(state, dt)
    ts = np.array(ts)
    al = np.array(al)
    adot = smooth(np.gradient(al, ts), 5)
    fits = {"L2": fit_power(ts, L2, T0, T), "Linf": fit_power(ts, Li, T0, T),
            "alpha_dot": fit_power(ts, np.abs(adot), T0, T)}
    return DecayReport(ts, np.array(L2), np.array(Li), np.array(qw), al, adot, np.array(un),
                       fits, init, unstable, q_ratio,
                       {"T": T, "X_s": X_s, "nodes": nodes, "cfl": cfl, "T0": T0})
