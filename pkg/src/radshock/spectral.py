"""The eigenvalue ODE around a profile and its constant-coefficient limits.

With W = (u, q, p) the linearized problem reads

    (A u)' = -(λ + L B) u + L p,   q' = B u - p,   p' = -q,

that is Θ W' = (𝔸(x, λ) - Θ'(x)) W with Θ = diag(A, 1, 1). Θ is singular at
the sonic point x = 0. Away from it the system is W' = (P(x) - λ Qm(x)) W with
P = Θ⁻¹(𝔸(x, 0) - Θ') and Qm = diag(A⁻¹, 0, 0).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConsistentSplittingError
from .model import ModelSystem, eigen_decomposition
from .profile import Profile

SPLIT_TOL = 1e-10


def _blocks(A, B, L, n):
    """𝔸(x, 0) for stacked A (..., n, n) and B (..., n)."""
    shp = A.shape[:-2]
    M = np.zeros(shp + (n + 2, n + 2), dtype=np.result_type(A, B))
    M[..., :n, :n] = -L[:, None] * B[..., None, :]
    M[..., :n, n + 1] = L
    M[..., n, :n] = B
    M[..., n, n + 1] = -1.0
    M[..., n + 1, n] = -1.0
    return M


class SpectralFrame:
    """Coefficients of the eigenvalue ODE along a computed profile."""

    def __init__(self, profile: Profile, model: ModelSystem | None = None):
        self.profile = profile
        self.model = model if model is not None else profile.model
        self.n = self.model.n
        self.m = self.n + 2
        self.p = profile.shock.p
        self.L = np.asarray(self.model.L, dtype=float)
        self.E = np.diag(np.r_[np.ones(self.n), 0.0, 0.0])

    # -- pointwise coefficients ----------------------------------------------
    def _state(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        U = self.profile.U_at(x).reshape(x.size, self.n)
        Ux = self.profile.U_x(x).reshape(x.size, self.n)
        return x, U, Ux

    def theta(self, x):
        x, U, _ = self._state(x)
        T = np.zeros((x.size, self.m, self.m))
        T[:, :self.n, :self.n] = self.model.jacobian_f(U).reshape(x.size, self.n, self.n)
        T[:, self.n, self.n] = T[:, self.n + 1, self.n + 1] = 1.0
        return T

    def a_matrix(self, x, lam):
        """𝔸(x, λ), shape (len(x), n+2, n+2)."""
        x, U, _ = self._state(x)
        B = np.atleast_2d(self.model.jacobian_b(U)).reshape(x.size, self.n)
        M = _blocks(np.zeros((x.size, self.n, self.n)), B, self.L, self.n).astype(complex)
        return M - lam * self.E

    def n0(self, x):
        """𝔸(x, 0) − Θ'(x)."""
        x, U, Ux = self._state(x)
        A = self.model.jacobian_f(U).reshape(x.size, self.n, self.n)
        B = np.atleast_2d(self.model.jacobian_b(U)).reshape(x.size, self.n)
        M = _blocks(A, B, self.L, self.n)
        M[:, :self.n, :self.n] -= self.model.dA(U, Ux).reshape(x.size, self.n, self.n)
        return M

    def ode_coefficients(self, x):
        """(P, Qm) with W' = (P − λQm) W; x must avoid the sonic point."""
        x, U, Ux = self._state(x)
        n = self.n
        A = self.model.jacobian_f(U).reshape(x.size, n, n)
        Ainv = np.linalg.inv(A)
        B = np.atleast_2d(self.model.jacobian_b(U)).reshape(x.size, n)
        dA = self.model.dA(U, Ux).reshape(x.size, n, n)
        P = _blocks(A, B, self.L, n)
        P[:, :n, :n] = Ainv @ (P[:, :n, :n] - dA)
        P[:, :n, n + 1] = Ainv @ self.L
        Qm = np.zeros_like(P)
        Qm[:, :n, :n] = Ainv
        return P, Qm

    def trace_parts(self, x):
        """(t₀, t₁) with tr(P − λQm) = t₀ − λ t₁ at each x.

        t₀ = −B A⁻¹ L − (ln det A)', t₁ = tr A⁻¹.
        """
        x, U, Ux = self._state(x)
        n = self.n
        A = self.model.jacobian_f(U).reshape(x.size, n, n)
        Ainv = np.linalg.inv(A)
        B = np.atleast_2d(self.model.jacobian_b(U)).reshape(x.size, n)
        dA = self.model.dA(U, Ux).reshape(x.size, n, n)
        t0 = -np.einsum("xi,xij,j->x", B, Ainv, self.L) - np.einsum("xij,xji->x", Ainv, dA)
        t1 = np.einsum("xii->x", Ainv)
        return t0, t1

    def diagonalizers(self, x):
        """(L_p, R_p) per node with L_p A R_p = diag(a_1 ≤ … ≤ a_n)."""
        _, U, _ = self._state(x)
        out = []
        for u in U:
            mu, R, Lr = eigen_decomposition(self.model.jacobian_f(u))
            out.append((Lr, R))
        return out

    def frame_residuals(self, x):
        """max ‖L_pR_p − I‖ and max ‖L_pAR_p − diag‖ over the nodes."""
        _, U, _ = self._state(x)
        r1 = r2 = 0.0
        for u in U:
            A = self.model.jacobian_f(u)
            mu, R, Lr = eigen_decomposition(A)
            r1 = max(r1, float(np.max(np.abs(Lr @ R - np.eye(self.n)))))
            r2 = max(r2, float(np.max(np.abs(Lr @ A @ R - np.diag(mu)))))
        return r1, r2

    # -- limits -------------------------------------------------------------
    def end_state(self, side):
        return self.profile.shock.u_plus if side == "+" else self.profile.shock.u_minus

    def asymptotic_matrix(self, side, lam):
        """𝔸±(λ) in the W = (u, q, p) coordinates (the coefficient of W')."""
        u = self.end_state(side)
        A = self.model.jacobian_f(u)
        B = np.atleast_1d(self.model.jacobian_b(u))
        M = _blocks(A, B, self.L, self.n).astype(complex)
        Ainv = np.linalg.inv(A)
        M[:self.n, :self.n] = -Ainv @ (lam * np.eye(self.n) + np.outer(self.L, B))
        M[:self.n, self.n + 1] = Ainv @ self.L
        return M

    def asymptotic_derivative(self, side):
        """∂λ𝔸±, which is constant."""
        A = self.model.jacobian_f(self.end_state(side))
        D = np.zeros((self.m, self.m), dtype=complex)
        D[:self.n, :self.n] = -np.linalg.inv(A)
        return D

    def end_speeds(self, side):
        return eigen_decomposition(self.model.jacobian_f(self.end_state(side)))[0]

    # -- Taylor data at the sonic point ---------------------------------------
    def sonic_taylor(self, order, radius=None, samples=64):
        """Taylor coefficients at x = 0 of Θ(x) and N(x) = 𝔸(x,0) − Θ'(x).

        The bridge polynomial is evaluated on a circle in the complex x-plane
        and the coefficients are read off by FFT. Returns (Theta_k, N_k) with
        shapes (order+2, m, m) and (order+1, m, m).
        """
        lo, hi = self.profile.bridge_window()
        rho = 0.5 * min(-lo, hi) if radius is None else radius
        z = rho * np.exp(2j * np.pi * np.arange(samples) / samples)
        bridge = self.profile.pieces["bridge"]
        U = np.stack([ch(z) for ch in bridge[: self.n]], axis=-1)
        n = self.n
        A = self.model.jacobian_f(U).reshape(samples, n, n)
        B = np.atleast_2d(self.model.jacobian_b(U)).reshape(samples, n)
        coefA = np.fft.fft(A, axis=0) / samples
        coefB = np.fft.fft(B, axis=0) / samples
        k = np.arange(order + 2)
        scale = rho ** (-k.astype(float))
        Ak = np.real(coefA[: order + 2]) * scale[:, None, None]
        Bk = np.real(coefB[: order + 2]) * scale[:, None]
        Th = np.zeros((order + 2, self.m, self.m))
        Th[:, :n, :n] = Ak
        Th[0, n, n] = Th[0, n + 1, n + 1] = 1.0
        N = np.zeros((order + 1, self.m, self.m))
        for j in range(order + 1):
            N[j] = _blocks(np.zeros((n, n)), Bk[j], self.L, n)
            if j > 0:
                N[j][:n, n + 1] = 0.0
                N[j][n, n + 1] = N[j][n + 1, n] = 0.0
            N[j][:n, :n] -= (j + 1) * Ak[j + 1]
        return Th, N


def assemble(profile: Profile, model: ModelSystem | None = None) -> SpectralFrame:
    return SpectralFrame(profile, model)


@dataclass
class AsymptoticModes:
    side: str
    lam: complex
    mu: np.ndarray            # sorted by real part
    V: np.ndarray             # columns
    speed: np.ndarray         # "slow"/"fast"
    kind: np.ndarray          # "stable"/"unstable"

    def residual(self, M):
        r = M @ self.V - self.V * self.mu[None, :]
        return float(np.max(np.abs(r)) / max(np.max(np.abs(M)), 1.0))


def _continue_eigs(M_of, lam, steps=24):
    """Eigenvalues of M_of(λ) labelled by continuation from λ → 0."""
    ts = np.geomspace(1e-8, 1.0, steps)
    mu_prev = None
    for t in ts:
        mu, S = np.linalg.eig(M_of(t * lam))
        if mu_prev is None:
            order = np.argsort(np.abs(mu))
        else:
            order, free = [], list(range(len(mu)))
            for g in mu_prev:
                j = min(free, key=lambda i: abs(mu[i] - g))
                order.append(j)
                free.remove(j)
        mu, S = mu[order], S[:, order]
        mu_prev = mu
    return mu, S


def asymptotic_modes(frame: SpectralFrame, side, lam) -> AsymptoticModes:
    """Eigen-modes of 𝔸±(λ), tagged slow/fast and stable/unstable.

    Slow modes are those that continue to μ = 0 as λ → 0 (there are n).
    """
    lam = complex(lam)
    M_of = lambda l: frame.asymptotic_matrix(side, l)
    if lam == 0:
        mu, S = np.linalg.eig(M_of(0.0))
        order = np.argsort(np.abs(mu))
        mu, S = mu[order], S[:, order]
    else:
        mu, S = _continue_eigs(M_of, lam)
    n = frame.n
    speed = np.array(["slow"] * n + ["fast"] * 2)
    scale = max(1.0, float(np.max(np.abs(mu))))
    if lam != 0 and np.any(np.abs(mu.real) < SPLIT_TOL * scale):
        raise ConsistentSplittingError(f"imaginary exponent at λ={lam} on side {side}")
    kind = np.where(mu.real < 0, "stable", "unstable")
    order = np.argsort(mu.real, kind="stable")
    S = S / np.linalg.norm(S, axis=0)[None, :]
    return AsymptoticModes(side, lam, mu[order], S[:, order], speed[order], kind[order])


def expected_counts(n, p):
    """(dim U⁺, dim S⁺, dim U⁻, dim S⁻) for a Lax p-shock."""
    return (p + 1, n - p + 1, p, n - p + 2)


def mode_counts(frame: SpectralFrame, lam):
    """(dim U⁺, dim S⁺, dim U⁻, dim S⁻) from the signs of Re μ.

    At +∞, U⁺ counts Re μ > 0; at −∞ the labels follow the convention that
    U⁻ collects the modes decaying as x → −∞ (Re μ > 0).
    """
    out = []
    for side in ("+", "-"):
        mu = np.linalg.eigvals(frame.asymptotic_matrix(side, complex(lam)))
        scale = max(1.0, float(np.max(np.abs(mu))))
        # slow exponents have Re μ = O(|λ|²) on the imaginary axis near 0
        tol = scale * max(100 * np.finfo(float).eps, SPLIT_TOL * min(1.0, abs(lam) ** 2))
        if np.any(np.abs(mu.real) < tol):
            raise ConsistentSplittingError(f"imaginary exponent at λ={lam} on side {side}")
        out += [int(np.sum(mu.real > 0)), int(np.sum(mu.real < 0))]
    return tuple(out)


def check_splitting(frame: SpectralFrame, lams):
    """Verify that mode counts are constant and as expected on ``lams``."""
    want = expected_counts(frame.n, frame.p)
    for lam in lams:
        got = mode_counts(frame, lam)
        if got != want:
            raise ConsistentSplittingError(f"mode counts {got} at λ={lam}, expected {want}")
    return want


def dispersion_curves(frame: SpectralFrame, side, xi):
    """λ on the essential-spectrum curves: det(𝔸±(λ) − iξ) = 0 for real ξ.

    𝔸±(λ) = 𝔸±(0) + λ D with D = ∂λ𝔸±, so each ξ gives a generalized
    eigenproblem. Returns an array (len(xi), n) of finite roots.
    """
    M0 = frame.asymptotic_matrix(side, 0.0)
    D = frame.asymptotic_derivative(side)
    out = []
    for x in np.atleast_1d(xi):
        w = linalg.eigvals(M0 - 1j * x * np.eye(frame.m), -D)
        w = w[np.isfinite(w)]
        w = np.sort_complex(w)[: frame.n]
        out.append(np.pad(w, (0, frame.n - len(w)), constant_values=np.nan))
    return np.array(out)


def dump_asymptotic(frame: SpectralFrame, lam, path):
    """Write 𝔸±(λ) to JSON (real and imaginary parts)."""
    data = {}
    for side in ("+", "-"):
        M = frame.asymptotic_matrix(side, lam)
        data[side] = {"re": M.real.tolist(), "im": M.imag.tolist()}
    with open(path, "w") as fh:
        json.dump({"lambda": [complex(lam).real, complex(lam).imag], **data}, fh, indent=1)
