"""Stationary radiative shock profiles.

The profile solves f(U)' + L Q' = 0, -Q'' + Q + g(U)' = 0 with U → u± at ±∞
and the sonic point (a_p(U) = 0) placed at x = 0. Written as a first order
system in z = (U, Q, P):

    U' = -A(U)⁻¹ L P,   Q' = P,   P' = Q + B(U) U'.

Each half is integrated inward from its far-field state along the decaying
eigen-direction and stopped a short distance before the sonic point, where
A(U) is singular. The two halves are shifted so the sonic point sits at 0 and
the gap is bridged by a least-squares Chebyshev fit through both sides.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Chebyshev
from scipy import optimize
from scipy.integrate import solve_ivp

from .errors import DomainTooSmall, ProfileBranchError, ProfileRejected
from .model import ModelSystem, ShockTriple, eigen_decomposition


def linear_rates(model: ModelSystem, shock: ShockTriple):
    """Decay rates of the linearized profile ODE at u₋ and u₊.

    With U slaved to Q by the first integral, the linearization is
    Q' = P, P' = Q − κP where κ = B A⁻¹ L. Returns (η₋, η₊, κ₋, κ₊).
    """
    out = []
    for u in (shock.u_minus, shock.u_plus):
        A = model.jacobian_f(u)
        B = np.atleast_1d(model.jacobian_b(u))
        kap = float(B @ np.linalg.solve(A, model.L))
        out.append(kap)
    km, kp = out
    eta_m = (-km + np.sqrt(km * km + 4)) / 2      # growing root, decays at −∞
    eta_p = (kp + np.sqrt(kp * kp + 4)) / 2       # |decaying root| at +∞
    return eta_m, eta_p, km, kp


def sonic_data(model, shock):
    """Sonic state (U*, Q*) and slope U'(0) = c r_p on the weak branch."""
    p = shock.p
    c0 = model.f(shock.u_minus)
    n = model.n

    def F(z):
        U, Q = z[:n], z[n]
        mu = eigen_decomposition(model.jacobian_f(U))[0]
        return np.concatenate([model.f(U) + model.L * Q - c0, [mu[p - 1]]])

    Um = 0.5 * (shock.u_minus + shock.u_plus)
    _, R, Lr = eigen_decomposition(model.jacobian_f(Um))
    lp = Lr[p - 1]
    Q0 = float(lp @ (c0 - model.f(Um)) / (lp @ model.L))
    sol = optimize.root(F, np.concatenate([Um, [Q0]]), method="hybr",
                        options={"xtol": 1e-15})
    if not sol.success or np.max(np.abs(F(sol.x))) > 1e-12 * (1 + np.max(np.abs(c0))):
        raise ProfileBranchError("Newton for the sonic state did not converge")
    Us, Qs = sol.x[:n], sol.x[n]
    _, R, Lr = eigen_decomposition(model.jacobian_f(Us))
    r, l = R[:, p - 1], Lr[p - 1]
    gnl = float(l @ model.dA(Us, r) @ r)
    beta = float((l @ model.L) * (np.atleast_1d(model.jacobian_b(Us)) @ r))
    const = float((l @ model.L) * Qs)
    roots = np.roots([gnl, beta, const])
    roots = roots[np.abs(roots.imag) < 1e-14 * (1 + np.abs(roots.real))].real
    cand = [c for c in roots if c * gnl < 0]
    if not cand:
        raise ProfileBranchError("no compressive sonic slope")
    c = min(cand, key=abs)
    return {"U": Us, "Q": float(Qs), "slope": c * r, "ap_prime0": c * gnl,
            "r_p": r, "l_p": l, "gnl": gnl, "lpLBrp": beta}


@dataclass
class Profile:
    model: ModelSystem
    shock: ShockTriple
    grid: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    eta: float
    eta_sides: tuple
    sonic_index: int
    first_integral_const: np.ndarray
    X: float
    x_gap: float
    sonic: dict
    pieces: dict = field(repr=False, default_factory=dict)

    @property
    def epsilon(self):
        return self.shock.epsilon

    @property
    def ap_prime0(self):
        return self.sonic["ap_prime0"]

    # -- evaluation ----------------------------------------------------------
    def state(self, x):
        """(U, Q, P) at arbitrary x (array), shape (..., n), (...), (...)."""
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        n = self.model.n
        Z = np.empty((flat.size, n + 2))
        pc = self.pieces
        xb = self.x_gap
        left = flat <= -xb
        right = flat >= xb
        mid = ~(left | right)
        if np.any(left):
            Z[left] = self._half(flat[left], "left")
        if np.any(right):
            Z[right] = self._half(flat[right], "right")
        if np.any(mid):
            Z[mid] = np.stack([ch(flat[mid]) for ch in pc["bridge"]], axis=-1)
        Z = Z.reshape(x.shape + (n + 2,))
        return Z[..., :n], Z[..., n], Z[..., n + 1]

    def _half(self, xs, side):
        pc = self.pieces[side]
        sol, lo, hi, shift = pc["sol"], pc["lo"], pc["hi"], pc["shift"]
        t = xs + shift
        out = np.empty((xs.size, self.model.n + 2))
        # the far field is at t < lo on the left and t > hi on the right
        inside = (t >= lo) if side == "left" else (t <= hi)
        if np.any(inside):
            out[inside] = sol(t[inside]).T
        outside = ~inside
        if np.any(outside):
            # linear far-field asymptotics from the integration start
            z0, u_inf, mu, t0 = pc["z0"], pc["u_inf"], pc["mu"], pc["t0"]
            fac = np.exp(mu * (t[outside] - t0))
            base = np.concatenate([u_inf, [0.0, 0.0]])
            out[outside] = base + fac[:, None] * (z0 - base)[None, :]
        return out

    def U_at(self, x):
        return self.state(x)[0]

    def U_x(self, x):
        x = np.asarray(x, dtype=float)
        U, Q, P = self.state(x)
        flat = np.atleast_1d(x).ravel()
        Uf = U.reshape(-1, self.model.n)
        Pf = np.atleast_1d(P).ravel()
        out = np.empty_like(Uf)
        mid = np.abs(flat) < self.x_gap
        if np.any(~mid):
            A = self.model.jacobian_f(Uf[~mid])
            out[~mid] = -np.linalg.solve(A, (self.model.L[None, :] * Pf[~mid, None])[..., None])[..., 0]
        if np.any(mid):
            out[mid] = np.stack([ch.deriv()(flat[mid]) for ch in self.pieces["bridge"][: self.model.n]],
                                axis=-1)
        return out.reshape(U.shape)

    def a_p(self, x):
        U = np.atleast_2d(self.U_at(np.atleast_1d(x)))
        return np.array([eigen_decomposition(self.model.jacobian_f(u))[0][self.shock.p - 1]
                         for u in U])

    def bridge_window(self):
        return self.pieces["window"]

    # -- diagnostics ---------------------------------------------------------
    def first_integral_residual(self):
        r = self.model.f(self.U) + self.Q[:, None] * self.model.L[None, :] - self.first_integral_const
        scale = np.abs(self.first_integral_const) + 1
        return float(np.max(np.abs(r) / scale))

    def far_field_error(self):
        return (float(np.max(np.abs(self.U[0] - self.shock.u_minus))),
                float(np.max(np.abs(self.U[-1] - self.shock.u_plus))))

    def to_csv(self, path):
        n = self.model.n
        ap = self.a_p(self.grid)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x"] + [f"U{k + 1}" for k in range(n)] + ["Q", "P", "a_p"])
            for i, x in enumerate(self.grid):
                w.writerow([repr(float(x))] + [repr(float(v)) for v in self.U[i]]
                           + [repr(float(self.Q[i])), repr(float(self.P[i])), repr(float(ap[i]))])

    def metadata(self):
        return {"eta": self.eta, "epsilon": self.epsilon, "X": self.X,
                "first_integral_const": [float(v) for v in self.first_integral_const],
                "sonic_index": int(self.sonic_index), "ap_prime0": float(self.ap_prime0),
                "first_integral_residual": self.first_integral_residual()}


def _ap(model, U, p):
    return eigen_decomposition(model.jacobian_f(U))[0][p - 1]


def _integrate_half(model, shock, side, son, eta_side, X, rtol, x_stop, method):
    n = model.n
    L = model.L
    p = shock.p
    u_inf = shock.u_minus if side == "left" else shock.u_plus
    A = model.jacobian_f(u_inf)
    B = np.atleast_1d(model.jacobian_b(u_inf))
    kap = float(B @ np.linalg.solve(A, L))
    mu = (-kap + np.sqrt(kap * kap + 4)) / 2 if side == "left" else (-kap - np.sqrt(kap * kap + 4)) / 2
    Qs = abs(son["Q"]) + 1e-300
    # start far enough out that x = ∓X lies inside the integrated range
    dist = X + 3.0 / abs(mu)
    dQ = max(Qs * np.exp(-abs(mu) * dist), 1e-13 * (1 + np.max(np.abs(u_inf))))
    dQ = np.sign(son["Q"]) * dQ
    Q0, P0 = dQ, mu * dQ
    c0 = model.f(shock.u_minus)
    U0 = u_inf - np.linalg.solve(A, L) * Q0
    for _ in range(5):
        U0 = U0 - np.linalg.solve(model.jacobian_f(U0), model.f(U0) + L * Q0 - c0)
    z0 = np.concatenate([U0, [Q0, P0]])

    def rhs(x, z):
        U, P = z[:n], z[n + 1]
        Ux = -np.linalg.solve(model.jacobian_f(U), L * P)
        Bu = float(np.atleast_1d(model.jacobian_b(U)) @ Ux)
        return np.concatenate([Ux, [P, z[n] + Bu]])

    a_stop = abs(son["ap_prime0"]) * x_stop
    sgn = 1.0 if side == "left" else -1.0    # a_p > 0 on the left

    def event(x, z):
        return sgn * _ap(model, z[:n], p) - a_stop
    event.terminal = True

    span = 4 * dist + 60.0 / abs(mu)
    t_end = span if side == "left" else -span
    sol = solve_ivp(rhs, (0.0, t_end), z0, method=method, rtol=rtol, atol=rtol * 1e-2 * Qs,
                    dense_output=True, events=event)
    if sol.status != 1:
        raise DomainTooSmall(f"sonic point not reached from the {side} state")
    t_hit = float(sol.t_events[0][0])
    # sonic location: root of a polynomial fit of a_p over the last stretch
    w = 12 * x_stop
    ts = np.linspace(t_hit - sgn * w, t_hit, 40)
    aps = np.array([_ap(model, sol.sol(t)[:n], p) for t in ts])
    fit = np.polynomial.Polynomial.fit(ts - t_hit, aps, 6)
    roots = fit.roots()
    roots = roots[np.abs(roots.imag) < 1e-12].real
    roots = roots[(roots * sgn > 0) & (np.abs(roots) < 3 * x_stop)]
    if len(roots) == 0:
        raise ProfileBranchError(f"could not extrapolate the sonic point on the {side}")
    t_sonic = t_hit + float(roots[np.argmin(np.abs(roots))])
    lo, hi = (0.0, t_hit) if side == "left" else (t_hit, 0.0)
    return {"sol": sol.sol, "lo": min(lo, hi), "hi": max(lo, hi), "shift": t_sonic,
            "z0": z0, "u_inf": u_inf, "mu": mu, "t0": 0.0}


def solve_profile(model: ModelSystem, shock: ShockTriple, X=None, tol=1e-12,
                  n_nodes=4001, x0=None, x_stop=None, eps_max=0.5) -> Profile:
    """Compute the stationary profile with the sonic point at x = 0."""
    if np.allclose(shock.u_minus, shock.u_plus):
        raise ProfileRejected("degenerate shock: u₋ = u₊")
    if shock.epsilon > eps_max:
        raise ProfileRejected(f"amplitude {shock.epsilon} above the configured bound {eps_max}")
    eta_m, eta_p, _, _ = linear_rates(model, shock)
    eta = min(eta_m, eta_p)
    if X is None:
        X = default_half_length(eta)
    if x0 is None:
        x0 = 0.05 * min(1.0, 1.0 / eta)
    if x_stop is None:
        x_stop = 0.4 * x0
    son = sonic_data(model, shock)
    # near the sonic point the contracting rate is about alpha0/|x|
    alpha0 = (son["lpLBrp"] + son["ap_prime0"]) / abs(son["ap_prime0"])
    method = "DOP853" if alpha0 < 400 else "Radau"
    left = _integrate_half(model, shock, "left", son, eta_m, X, tol, x_stop, method)
    right = _integrate_half(model, shock, "right", son, eta_p, X, tol, x_stop, method)
    pieces = {"left": left, "right": right}

    # bridge: Chebyshev least squares through both sides and the sonic values
    n = model.n
    xw = 25 * x_stop
    x_gap = 1.05 * x_stop
    xl = np.linspace(-xw, -x_gap, 60)
    xr = np.linspace(x_gap, xw, 60)
    tmp = Profile(model, shock, np.zeros(1), np.zeros((1, n)), np.zeros(1), np.zeros(1), eta,
                  (eta_m, eta_p), 0, model.f(shock.u_minus), X, x_gap, son, pieces)
    Zl = tmp._half(xl, "left")
    Zr = tmp._half(xr, "right")
    xs = np.concatenate([xl, [0.0], xr])
    z_son = np.concatenate([son["U"], [son["Q"], 0.0]])
    Z = np.vstack([Zl, z_son, Zr])
    wts = np.ones(len(xs))
    wts[len(xl)] = 1e3
    bridge = [Chebyshev.fit(xs, Z[:, k], 16, domain=[-xw, xw], w=wts) for k in range(n + 2)]
    pieces["bridge"] = bridge
    pieces["window"] = (-xw, xw)

    grid = make_grid(X, n_nodes, 10 * x0)
    tmp.pieces = pieces
    U, Q, P = tmp.state(grid)
    sonic_index = int(np.argmin(np.abs(grid)))
    prof = Profile(model, shock, grid, U, Q, P, eta, (eta_m, eta_p), sonic_index,
                   model.f(shock.u_minus), float(X), x_gap, son, pieces)
    _validate(prof)
    return prof


def default_half_length(eta):
    """Half-length where the far-field deviation falls below 1e-6·ε."""
    return 15.0 / eta


def make_grid(X, n_nodes, x_ref):
    base = np.linspace(-X, X, n_nodes)
    h = base[1] - base[0]
    if x_ref <= 0 or x_ref >= X:
        return base
    m = int(np.ceil(x_ref / h))
    fine = np.linspace(-m * h, m * h, 16 * m + 1)
    return np.concatenate([base[base < -m * h - 1e-12], fine, base[base > m * h + 1e-12]])


def _validate(prof: Profile):
    ap = prof.a_p(prof.grid)
    if np.any(np.diff(ap) >= 0):
        bad = int(np.argmax(np.diff(ap) >= 0))
        raise ProfileRejected(f"a_p not strictly decreasing near x={prof.grid[bad]:.4g}")
    if np.sign(ap[0]) == np.sign(ap[-1]):
        raise DomainTooSmall("sonic point not bracketed in [-X, X]")


def decay_rate(profile: Profile, model: ModelSystem | None = None, tolerance=0.2):
    """η from the linearization, cross-checked by log-slope fits of the tails.

    Returns (η, report) where the report holds the fitted and predicted rates
    per side.
    """
    model = model or profile.model
    shock = profile.shock
    if np.allclose(shock.u_minus, shock.u_plus):
        raise ProfileRejected("degenerate shock: u₋ = u₊")
    eta_m, eta_p, _, _ = linear_rates(model, shock)
    eps = shock.epsilon
    x = profile.grid
    out = {}
    for side, u_inf, pred, mask in (("minus", shock.u_minus, eta_m, x < 0),
                                    ("plus", shock.u_plus, eta_p, x > 0)):
        dev = np.max(np.abs(profile.U[mask] - u_inf), axis=1)
        xm = np.abs(x[mask])
        sel = (dev < 1e-3 * eps) & (dev > 1e-8 * eps)
        if np.sum(sel) < 5:
            raise ProfileRejected(f"not enough far-field data on the {side} side to fit a rate")
        slope = np.polyfit(xm[sel], np.log(dev[sel]), 1)[0]
        fitted = -slope
        rel = abs(fitted - pred) / pred
        out[side] = {"predicted": pred, "fitted": fitted, "rel_diff": rel}
        if rel > tolerance:
            raise ProfileRejected(f"fitted decay rate {fitted:.4g} vs predicted {pred:.4g} on {side}")
    return min(eta_m, eta_p), out


def save_profile(profile: Profile, csv_path, meta_path):
    profile.to_csv(csv_path)
    with open(meta_path, "w") as fh:
        json.dump(profile.metadata(), fh, indent=2)
