"""Hyperbolic-elliptic model systems and their structural checks.

A model is u_t + f(u)_x + L q_x = 0, -q_xx + q + g(u)_x = 0 with state
u in R^n. All state functions accept arrays with the state on the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import CompensatorNotFound, DegeneracyError, DomainError

CSTEP = 1e-30


@dataclass(frozen=True)
class ModelSystem:
    name: str
    n: int
    f: Callable
    g: Callable
    L: np.ndarray
    jacobian_f: Callable
    jacobian_b: Callable
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    symmetrizer: Callable | None = None
    extra_domain: Callable | None = None      # additional admissibility test
    params: dict = field(default_factory=dict)

    def in_domain(self, u) -> bool:
        u = np.asarray(u, dtype=float)
        ok = np.all(u >= self.domain_lo) and np.all(u <= self.domain_hi)
        if ok and self.extra_domain is not None:
            ok = bool(np.all(self.extra_domain(u)))
        return bool(ok)

    def require_domain(self, u, what="state"):
        if not self.in_domain(u):
            raise DomainError(f"{what} {np.asarray(u)} outside the domain of {self.name}")

    def dA(self, u, v):
        """Directional derivative DA(u)[v], by complex step."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.imag(self.jacobian_f(u + 1j * CSTEP * v)) / CSTEP

    def dB(self, u, v):
        u = np.asarray(u, dtype=float)
        return np.imag(self.jacobian_b(u + 1j * CSTEP * np.asarray(v, float))) / CSTEP

    def A0(self, u):
        if self.symmetrizer is not None:
            return np.asarray(self.symmetrizer(u), dtype=float)
        return numeric_symmetrizer(self, u)


# ---------------------------------------------------------------------------
# eigen structure


def eigen_decomposition(A):
    """Real eigen-decomposition with ascending eigenvalues.

    Right eigenvectors have unit length with the largest-modulus component
    positive; the left eigenvectors are the rows of R⁻¹ so that L R = I.
    """
    A = np.asarray(A, dtype=float)
    mu, R = np.linalg.eig(A)
    if np.max(np.abs(np.imag(mu))) > 1e-10 * (1 + np.max(np.abs(mu))):
        raise DegeneracyError("(S1): A(u) has complex eigenvalues")
    mu = mu.real
    R = R.real
    order = np.argsort(mu)
    mu, R = mu[order], R[:, order]
    R = R / np.linalg.norm(R, axis=0)
    big = np.argmax(np.abs(R), axis=0)
    R = R * np.sign(R[big, np.arange(R.shape[1])])
    Lrows = np.linalg.inv(R)
    return mu, R, Lrows


def char_speed(model, u, p):
    mu, _, _ = eigen_decomposition(model.jacobian_f(u))
    return mu[p - 1]


def gnl_value(model, u, p):
    """(∇a_p)·r_p = l_p DA[r_p] r_p."""
    mu, R, Lr = eigen_decomposition(model.jacobian_f(u))
    r, l = R[:, p - 1], Lr[p - 1]
    return float(l @ model.dA(u, r) @ r)


def coupling_value(model, u, p):
    """l_p L B r_p at u."""
    mu, R, Lr = eigen_decomposition(model.jacobian_f(u))
    B = np.atleast_1d(model.jacobian_b(u))
    return float((Lr[p - 1] @ model.L) * (B @ R[:, p - 1]))


# ---------------------------------------------------------------------------
# builtin models


def _box(lo, hi):
    return np.atleast_1d(np.array(lo, float)), np.atleast_1d(np.array(hi, float))


def hamer(coupling=1.0) -> ModelSystem:
    """Scalar Hamer model f = u²/2, g = c·u, L = 1."""
    c = float(coupling)
    lo, hi = _box([-10.0], [10.0])
    return ModelSystem(
        name="hamer" if c != 0 else "hamer_uncoupled",
        n=1,
        f=lambda u: 0.5 * np.asarray(u) ** 2,
        g=lambda u: c * np.asarray(u)[..., 0],
        L=np.array([1.0]),
        jacobian_f=lambda u: np.asarray(u)[..., None],
        jacobian_b=lambda u: c * np.ones_like(np.asarray(u)),
        domain_lo=lo, domain_hi=hi,
        symmetrizer=lambda u: np.ones(np.shape(u)[:-1] + (1, 1)),
        params={"model": "hamer", "coupling": c},
    )


def hamer_uncoupled() -> ModelSystem:
    """The g ≡ 0 mutant; (S2) must fail."""
    return hamer(coupling=0.0)


def euler_rad(gamma=5.0 / 3.0, b=1.0) -> ModelSystem:
    """Radiating gas, conservative variables (ρ, m, E), R = 1, g = bθ⁴."""
    gm = float(gamma)
    bb = float(b)

    def temp(u):
        u = np.asarray(u)
        rho, m, E = u[..., 0], u[..., 1], u[..., 2]
        return (gm - 1) * (E / rho - 0.5 * m * m / (rho * rho))

    def grad_temp(u):
        u = np.asarray(u)
        if u.ndim == 1:
            rho, m, E = u
            return (gm - 1) * np.array([-E / rho**2 + m * m / rho**3, -m / rho**2, 1 / rho])
        rho, m, E = u[..., 0], u[..., 1], u[..., 2]
        return (gm - 1) * np.stack([-E / rho**2 + m * m / rho**3, -m / rho**2, 1 / rho],
                                   axis=-1)

    def flux(u):
        u = np.asarray(u)
        rho, m, E = u[..., 0], u[..., 1], u[..., 2]
        v = m / rho
        p = rho * temp(u)
        return np.stack([m, m * v + p, (E + p) * v], axis=-1)

    def jac(u):
        u = np.asarray(u)
        if u.ndim == 1:
            # single state: skip the broadcasting machinery, this sits in inner loops
            rho, m, E = u
            v, H = m / rho, E / rho
            return np.array([
                [0.0, 1.0, 0.0],
                [0.5 * (gm - 3) * v * v, (3 - gm) * v, gm - 1],
                [v * ((gm - 1) * v * v - gm * H), gm * H - 1.5 * (gm - 1) * v * v, gm * v],
            ])
        rho, m, E = u[..., 0], u[..., 1], u[..., 2]
        v = m / rho
        H = E / rho
        z = np.zeros_like(v)
        one = np.ones_like(v)
        rows = [
            [z, one, z],
            [0.5 * (gm - 3) * v * v, (3 - gm) * v, (gm - 1) * one],
            [v * ((gm - 1) * v * v - gm * H), gm * H - 1.5 * (gm - 1) * v * v, gm * v],
        ]
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    lo, hi = _box([1e-3, -50.0, 1e-6], [50.0, 50.0, 500.0])
    return ModelSystem(
        name="euler_rad", n=3, f=flux,
        g=lambda u: bb * temp(u) ** 4,
        L=np.array([0.0, 0.0, 1.0]),
        jacobian_f=jac,
        jacobian_b=lambda u: 4 * bb * temp(u)[..., None] ** 3 * grad_temp(u),
        domain_lo=lo, domain_hi=hi,
        extra_domain=lambda u: np.real(temp(u)) > 0,
        params={"model": "euler_rad", "gamma": gm, "b": bb},
    )


def euler_temperature(model, u):
    gm = model.params["gamma"]
    u = np.asarray(u)
    return (gm - 1) * (u[..., 2] / u[..., 0] - 0.5 * u[..., 1] ** 2 / u[..., 0] ** 2)


def polynomial_model(f_terms, g_terms, L, domain_lo, domain_hi, name="custom") -> ModelSystem:
    """Model with polynomial f and g.

    ``f_terms[i]`` is a list of ``[coef, e_1, ..., e_n]`` monomials for the
    i-th flux component; ``g_terms`` likewise for the scalar g.
    """
    L = np.atleast_1d(np.array(L, float))
    n = len(L)
    fT = [np.atleast_2d(np.array(t, float)) for t in f_terms]
    gT = np.atleast_2d(np.array(g_terms, float))
    if len(fT) != n or any(t.shape[1] != n + 1 for t in fT) or gT.shape[1] != n + 1:
        raise ValueError("polynomial tables do not match the state dimension")

    def ev(T, u):
        u = np.asarray(u)
        out = 0
        for row in T:
            term = row[0]
            for k in range(n):
                if row[k + 1] != 0:
                    term = term * u[..., k] ** row[k + 1]
            out = out + term * np.ones(u.shape[:-1])
        return out

    def dev(T, u, k):
        u = np.asarray(u)
        out = np.zeros(u.shape[:-1], dtype=u.dtype)
        for row in T:
            e = row[k + 1]
            if e == 0:
                continue
            term = row[0] * e * u[..., k] ** (e - 1)
            for j in range(n):
                if j != k and row[j + 1] != 0:
                    term = term * u[..., j] ** row[j + 1]
            out = out + term
        return out

    lo, hi = _box(domain_lo, domain_hi)
    return ModelSystem(
        name=name, n=n,
        f=lambda u: np.stack([ev(T, u) for T in fT], axis=-1),
        g=lambda u: ev(gT, u),
        L=L,
        jacobian_f=lambda u: np.stack([np.stack([dev(T, u, k) for k in range(n)], axis=-1)
                                       for T in fT], axis=-2),
        jacobian_b=lambda u: np.stack([dev(gT, u, k) for k in range(n)], axis=-1),
        domain_lo=lo, domain_hi=hi,
        params={"model": "custom", "f": [t.tolist() for t in fT], "g": gT.tolist(),
                "L": L.tolist()},
    )


# ---------------------------------------------------------------------------
# shocks


@dataclass(frozen=True)
class ShockTriple:
    u_minus: np.ndarray
    u_plus: np.ndarray
    s: float
    p: int
    epsilon: float


def hamer_shock(eps) -> ShockTriple:
    e = float(eps)
    return ShockTriple(np.array([e / 2]), np.array([-e / 2]), 0.0, 1, e)


def _hugoniot_newton(model, um, guess, tol=1e-14, maxit=50):
    """Newton on f(u) = f(u_minus) starting from ``guess``."""
    target = model.f(um)
    u = np.array(guess, float)
    for _ in range(maxit):
        F = model.f(u) - target
        du = np.linalg.solve(model.jacobian_f(u), -F)
        u = u + du
        if np.max(np.abs(du)) < tol * (1 + np.max(np.abs(u))):
            break
    return u


def euler_shock(eps, model: ModelSystem | None = None, p=1, rho_minus=1.0,
                theta_minus=1.0) -> ShockTriple:
    """Stationary Lax shock of the radiating gas with |u₊ − u₋| = ε.

    p = 1 gives the u−c shock with flow to the right; p = 3 is its mirror
    image (flow to the left, u+c shock).
    """
    model = model or euler_rad()
    gm = model.params["gamma"]
    c0 = np.sqrt(gm * theta_minus)

    def endpoints(M):
        v = M * c0
        pm = rho_minus * theta_minus
        um = np.array([rho_minus, rho_minus * v, pm / (gm - 1) + 0.5 * rho_minus * v * v])
        r = (gm + 1) * M * M / ((gm - 1) * M * M + 2)
        pp = pm * (1 + 2 * gm * (M * M - 1) / (gm + 1))
        rp = rho_minus * r
        vp = v / r
        guess = np.array([rp, rp * vp, pp / (gm - 1) + 0.5 * rp * vp * vp])
        return um, _hugoniot_newton(model, um, guess)

    def gap(M):
        um, up = endpoints(M)
        return np.linalg.norm(up - um) - eps

    M = optimize.brentq(gap, 1 + 1e-9, 5.0, xtol=1e-15, rtol=1e-15)
    um, up = endpoints(M)
    if p == 1:
        return ShockTriple(um, up, 0.0, 1, float(eps))
    if p == 3:
        J = np.diag([1.0, -1.0, 1.0])
        return ShockTriple(J @ up, J @ um, 0.0, 3, float(eps))
    raise ValueError("p must be 1 or 3 for the radiating gas")


# ---------------------------------------------------------------------------
# checks


def check_rankine_hugoniot(model, shock) -> float:
    model.require_domain(shock.u_minus, "u_minus")
    model.require_domain(shock.u_plus, "u_plus")
    r = model.f(shock.u_plus) - model.f(shock.u_minus) - shock.s * (shock.u_plus - shock.u_minus)
    return float(np.max(np.abs(r)))


def rh_tolerance(model, shock):
    return 1e-10 * float(np.max(np.abs(model.f(shock.u_minus)))) + 1e-12


def check_lax_and_gnl(model, shock, states=None):
    """Lax ordering at speed s and the genuine-nonlinearity witness."""
    p, s = shock.p, shock.s
    for tag, u in (("u_minus", shock.u_minus), ("u_plus", shock.u_plus)):
        mu = eigen_decomposition(model.jacobian_f(u))[0]
        spread = np.max(np.abs(mu)) + 1e-300
        if len(mu) > 1 and np.min(np.diff(mu)) < 1e-8 * spread:
            raise DegeneracyError(f"(S1): multiple eigenvalue at {tag}")
    mm = eigen_decomposition(model.jacobian_f(shock.u_minus))[0]
    mp = eigen_decomposition(model.jacobian_f(shock.u_plus))[0]
    n = model.n
    ok = mp[p - 1] < s and mm[p - 1] > s
    if p < n:
        ok = ok and s < mp[p]
    if p > 1:
        ok = ok and mm[p - 2] < s
    if states is None:
        states = np.array([shock.u_minus, shock.u_plus])
    w = min(abs(gnl_value(model, u, p)) for u in states)
    return bool(ok), float(w)


def check_coupling(model, states, shock=None):
    """min_j |L B(u) r_j(u)| over the sample; with a shock also l_p L B r_p at u±."""
    worst, worst_u = np.inf, None
    Lnorm = np.linalg.norm(model.L)
    for u in states:
        _, R, _ = eigen_decomposition(model.jacobian_f(u))
        B = np.atleast_1d(model.jacobian_b(u))
        val = float(np.min(np.abs(B @ R)) * Lnorm)
        if val < worst:
            worst, worst_u = val, u
    out = {"witness": worst, "worst_state": worst_u}
    if shock is not None:
        out["h3"] = (coupling_value(model, shock.u_minus, shock.p),
                     coupling_value(model, shock.u_plus, shock.p))
    return out


def sample_states(model, shock, count=100, seed=0, spread=0.1):
    """Deterministic states near the segment joining u₋ and u₊."""
    rng = np.random.default_rng(seed)
    um, up = shock.u_minus, shock.u_plus
    eps = max(shock.epsilon, 1e-12)
    t = rng.uniform(-0.1, 1.1, size=count)
    pts = um[None, :] + t[:, None] * (up - um)[None, :]
    pts = pts + spread * eps * rng.uniform(-1, 1, size=pts.shape)
    pts[0], pts[1] = um, up
    keep = [u for u in pts if model.in_domain(u)]
    return np.array(keep)


def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return basis


def numeric_symmetrizer(model, u):
    """Symmetric A₀ with A₀A and A₀LB symmetric, maximizing min eig A₀."""
    u = np.asarray(u, float)
    n = model.n
    A = model.jacobian_f(u)
    LB = np.outer(model.L, np.atleast_1d(model.jacobian_b(u)))
    basis = _sym_basis(n)
    rows = []
    for E in basis:
        c1 = E @ A
        c2 = E @ LB
        rows.append(np.concatenate([(c1 - c1.T)[np.triu_indices(n, 1)],
                                    (c2 - c2.T)[np.triu_indices(n, 1)]]))
    C = np.array(rows).T
    if C.size == 0:
        return np.eye(n)
    _, sv, Vt = np.linalg.svd(C)
    tol = 1e-10 * max(sv[0], 1.0)
    rank = int(np.sum(sv > tol))
    N = Vt[rank:].T
    if N.shape[1] == 0:
        raise DegeneracyError("(S1): no symmetrizer satisfies the linear constraints")

    def build(c):
        return sum(ci * E for ci, E in zip(N @ c, basis))

    def objective(c):
        c = c / np.linalg.norm(c)
        return -np.linalg.eigvalsh(build(c))[0]

    if N.shape[1] == 1:
        c = np.array([1.0])
        if objective(c) > 0:
            c = -c
    else:
        best = None
        rng = np.random.default_rng(1)
        for _ in range(8):
            r = optimize.minimize(objective, rng.normal(size=N.shape[1]), method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
            if best is None or r.fun < best.fun:
                best = r
        c = best.x / np.linalg.norm(best.x)
    A0 = build(c)
    return A0 / np.linalg.norm(A0)


@dataclass
class Compensator:
    skew_params: np.ndarray
    theta: float
    n: int

    def K(self, u=None):
        K = np.zeros((self.n, self.n))
        K[np.triu_indices(self.n, 1)] = self.skew_params
        return K - K.T


def skew_from_params(params, n):
    K = np.zeros((n, n))
    K[np.triu_indices(n, 1)] = params
    return K - K.T


def kawashima_quantity(model, states, K, A0s=None):
    """min over states of the smallest eigenvalue of sym(KA + A₀LB)."""
    As, S = _kawashima_data(model, states, A0s)
    return _kawashima_min(K, As, S)


def _kawashima_data(model, states, A0s=None):
    states = np.asarray(states, float)
    As = model.jacobian_f(states)
    A0 = np.array([model.A0(u) for u in states]) if A0s is None else np.asarray(A0s)
    LB = model.L[None, :, None] * np.atleast_2d(model.jacobian_b(states))[:, None, :]
    return As, A0 @ LB


def _kawashima_min(K, As, S):
    M = K[None] @ As + S
    return float(np.min(np.linalg.eigvalsh(0.5 * (M + M.transpose(0, 2, 1)))[:, 0]))


def find_compensator(model, states, starts=20, seed=0) -> Compensator:
    n = model.n
    As, S = _kawashima_data(model, states)
    k = n * (n - 1) // 2
    theta0 = _kawashima_min(np.zeros((n, n)), As, S)
    if k == 0 or theta0 > 1e-8:
        if theta0 <= 0:
            raise CompensatorNotFound(f"theta={theta0:.3g} with K=0 and no skew freedom")
        return Compensator(np.zeros(k), theta0, n)
    rng = np.random.default_rng(seed)
    scale = 1.0 / max(1.0, float(np.max(np.linalg.norm(As, axis=(1, 2)))))

    def neg(pv):
        return -_kawashima_min(skew_from_params(pv, n), As, S)

    best = None
    for _ in range(starts):
        r = optimize.minimize(neg, rng.normal(scale=scale, size=k), method="Nelder-Mead",
                              options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 3000})
        if best is None or r.fun < best.fun:
            best = r
    theta = -best.fun
    if theta <= 0:
        raise CompensatorNotFound(f"best theta={theta:.3g} with constant skew K")
    return Compensator(best.x, float(theta), n)


@dataclass
class StructureReport:
    entries: list
    kawashima_theta: float | None
    compensator: Compensator | None = None

    @property
    def passed(self):
        return all(e["pass"] is True for e in self.entries)

    def failed(self):
        return [e["hypothesis"] for e in self.entries if e["pass"] is False]

    def skipped(self):
        return [e["hypothesis"] for e in self.entries if e["pass"] is None]

    def to_json(self):
        def clean(v):
            if isinstance(v, np.ndarray):
                return [float(x) for x in v]
            return v
        return {"hypotheses": [{k: clean(v) for k, v in e.items()} for e in self.entries],
                "kawashima_theta": self.kawashima_theta}


HYPOTHESES = ("S0", "S1", "S2", "H0", "H1", "H2", "H3", "dissipation")


def structure_report(model, shock, count=100, seed=0, tol=1e-8) -> StructureReport:
    states = sample_states(model, shock, count, seed)
    entries = []

    def add(name, ok, witness, worst):
        entries.append({"hypothesis": name, "pass": None if ok is None else bool(ok),
                        "witness": None if witness is None else float(witness),
                        "worst_state": None if worst is None else np.asarray(worst, float)})

    # S0: Jacobians against central differences
    worst, wu = 0.0, None
    for u in states:
        h = 1e-6 * (1 + np.abs(u))
        J = model.jacobian_f(u)
        Jb = np.atleast_1d(model.jacobian_b(u))
        Jfd = np.zeros_like(J)
        Jbfd = np.zeros_like(Jb)
        for k in range(model.n):
            e = np.zeros(model.n)
            e[k] = h[k]
            Jfd[:, k] = (model.f(u + e) - model.f(u - e)) / (2 * h[k])
            Jbfd[k] = (model.g(u + e) - model.g(u - e)) / (2 * h[k])
        err = max(np.max(np.abs(J - Jfd)) / (1 + np.max(np.abs(J))),
                  np.max(np.abs(Jb - Jbfd)) / (1 + np.max(np.abs(Jb))))
        if err > worst:
            worst, wu = err, u
    add("S0", worst <= 1e-6, worst, wu)

    # S1: symmetrizer and simplicity of a_p
    s1_ok, s1_w, s1_u = True, np.inf, None
    for u in states:
        try:
            A0 = model.A0(u)
            mu, _, _ = eigen_decomposition(model.jacobian_f(u))
        except DegeneracyError:
            s1_ok, s1_w, s1_u = False, -np.inf, u
            break
        A = model.jacobian_f(u)
        LB = np.outer(model.L, np.atleast_1d(model.jacobian_b(u)))
        S = A0 @ LB
        nrm = np.linalg.norm(A0)
        sym_res = max(np.max(np.abs(A0 - A0.T)), np.max(np.abs(A0 @ A - (A0 @ A).T)),
                      np.max(np.abs(S - S.T))) / (nrm * (1 + np.linalg.norm(A) + np.linalg.norm(LB)))
        emin = np.linalg.eigvalsh(A0)[0] / nrm
        sv = np.linalg.svd(S, compute_uv=False)
        psd = np.linalg.eigvalsh(0.5 * (S + S.T))[0] >= -1e-10 * (sv[0] + 1e-300)
        # rank ≤ 1 here; a vanishing A₀LB is the (S2) failure
        rank_one = len(sv) == 1 or sv[1] <= 1e-8 * max(sv[0], 1e-300)
        p = shock.p
        spread = np.max(np.abs(mu)) + 1e-300
        gaps = np.abs(mu - mu[p - 1])
        gaps[p - 1] = np.inf
        simple = np.min(gaps) > 1e-8 * spread if model.n > 1 else True
        ok = sym_res < 1e-8 and emin > 0 and psd and rank_one and simple
        w = emin if ok else -abs(sym_res) - 1
        if w < s1_w:
            s1_w, s1_u = w, u
        s1_ok = s1_ok and ok
    add("S1", s1_ok, s1_w, s1_u)

    cpl = check_coupling(model, states, shock)
    add("S2", cpl["witness"] > tol, cpl["witness"], cpl["worst_state"])

    rh = check_rankine_hugoniot(model, shock)
    add("H0", rh <= rh_tolerance(model, shock), rh, shock.u_plus)

    try:
        lax, gnl = check_lax_and_gnl(model, shock, states)
    except DegeneracyError:
        lax, gnl = False, 0.0
    add("H1", lax, 1.0 if lax else 0.0, None)
    add("H2", gnl > tol, gnl, None)

    coupled = cpl["witness"] > tol
    h3 = cpl["h3"]
    if coupled:
        add("H3", min(h3) > 0, min(h3), shock.u_minus if h3[0] <= h3[1] else shock.u_plus)
    else:
        add("H3", None, None, None)     # skipped: requires (S2)

    dmin, du = np.inf, None
    for u in states:
        try:
            v = coupling_value(model, u, shock.p)
        except DegeneracyError:
            v = -np.inf
        if v < dmin:
            dmin, du = v, u
    if coupled:
        add("dissipation", dmin > 0, dmin, du)
    else:
        add("dissipation", None, None, None)

    theta, comp = None, None
    if s1_ok and cpl["witness"] > tol:
        try:
            comp = find_compensator(model, states[:40], seed=seed)
            theta = comp.theta
        except CompensatorNotFound:
            theta = None
    return StructureReport(entries, theta, comp)
