"""Shared numerical kernels.

Embedded Dormand-Prince 5(4) integration for complex (possibly matrix valued)
states, a fixed-mesh batched variant for linear systems, Kato transport of
eigenvectors along parameter paths, argument accumulation for winding counts
and the Riccati invariant-graph reduction for block systems with a spectral gap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (CollisionError, GapViolation, InconclusiveWinding,
                     StiffnessError)

# Dormand-Prince tableau
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                  187 / 2100, 1 / 40])
DP_E = DP_B5 - DP_B4


def dp5_step(field, x, y, h, k1=None):
    """One Dormand-Prince step. Returns (y_new, err, k_first, k_last)."""
    k = [None] * 7
    k[0] = field(x, y) if k1 is None else k1
    for i in range(1, 7):
        acc = y
        for j, a in enumerate(DP_A[i]):
            if a != 0.0:
                acc = acc + (h * a) * k[j]
        if i == 6:
            y_new = acc
        k[i] = field(x + DP_C[i] * h, acc)
    err = h * sum(DP_E[i] * k[i] for i in range(7) if DP_E[i] != 0.0)
    return y_new, err, k[0], k[6]


@dataclass
class Trajectory:
    """Accepted steps with values and slopes; cubic Hermite in between."""
    x: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    nsteps: int = 0
    nrejected: int = 0

    @property
    def y_end(self):
        return self.y[-1]

    def at(self, xq):
        xq = float(xq)
        xs = self.x
        increasing = xs[-1] >= xs[0]
        if increasing:
            i = int(np.searchsorted(xs, xq, side="right")) - 1
        else:
            i = int(np.searchsorted(-xs, -xq, side="right")) - 1
        i = min(max(i, 0), len(xs) - 2)
        return hermite_cubic(xs[i], xs[i + 1], self.y[i], self.y[i + 1],
                             self.dy[i], self.dy[i + 1], xq)


def hermite_cubic(x0, x1, y0, y1, d0, d1, xq):
    h = x1 - x0
    s = (xq - x0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def ode_integrate_complex(field: Callable, x_span, y0, rtol=1e-10, atol=1e-12,
                          h0=None, fixed_step=None, checkpoints=None,
                          h_min=1e-12, max_steps=2_000_000) -> Trajectory:
    """Integrate y' = field(x, y) over x_span with the DP5(4) pair.

    ``y0`` may be any complex or real array. With ``fixed_step`` set the
    error control is switched off and the span is covered by equal steps.
    ``checkpoints`` are hit exactly.
    """
    xa, xb = float(x_span[0]), float(x_span[1])
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    direction = 1.0 if xb >= xa else -1.0
    span = abs(xb - xa)
    stops = sorted({float(c) for c in (checkpoints or [])
                    if (c - xa) * direction > 0 and (xb - c) * direction > 0},
                   key=lambda c: (c - xa) * direction)
    stops.append(xb)

    xs, ys, dys = [xa], [y.copy()], []
    k1 = np.asarray(field(xa, y))
    if np.iscomplexobj(k1) and not np.iscomplexobj(y):
        y = y.astype(complex)
        ys[0] = y.copy()
    dys.append(k1)
    x = xa
    nsteps = nrej = 0

    if fixed_step is not None:
        n = max(1, int(round(span / fixed_step)))
        h = direction * span / n
        for i in range(n):
            y, _, _, k7 = dp5_step(field, x, y, h, k1)
            x = xa + (i + 1) * h
            k1 = k7
            xs.append(x)
            ys.append(y.copy())
            dys.append(k7)
        return Trajectory(np.array(xs), np.array(ys), np.array(dys), n, 0)

    if h0 is None:
        scale = atol + rtol * np.max(np.abs(y)) if y.size else 1.0
        d1 = np.max(np.abs(k1)) if k1.size else 0.0
        h0 = 0.01 * span if d1 == 0 else min(0.01 * span, 0.1 * scale / d1 * 10)
        h0 = max(h0, 1e-6 * span)
    h = direction * min(abs(h0), span)
    target_i = 0
    while True:
        target = stops[target_i]
        remaining = (target - x) * direction
        if remaining <= 1e-14 * max(1.0, abs(target)):
            x = target
            target_i += 1
            if target_i == len(stops):
                break
            continue
        hit = False
        if abs(h) >= remaining:
            h = direction * remaining
            hit = True
        y_new, err, _, k7 = dp5_step(field, x, y, h, k1)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        en = float(np.sqrt(np.mean((np.abs(err) / sc) ** 2))) if err.size else 0.0
        if not np.isfinite(en):
            en = 1e10
        if en <= 1.0:
            x = target if hit else x + h
            y = y_new
            k1 = k7
            xs.append(x)
            ys.append(y.copy())
            dys.append(k7)
            nsteps += 1
            fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            h = h * fac
        else:
            nrej += 1
            h = h * max(0.1, 0.9 * en ** -0.25)
        if abs(h) < h_min * max(1.0, abs(x)):
            raise StiffnessError(f"step underflow at x={x:.6g}")
        if nsteps + nrej > max_steps:
            raise StiffnessError(f"too many steps near x={x:.6g}")
    return Trajectory(np.array(xs), np.array(ys), np.array(dys), nsteps, nrej)


@dataclass
class MeshResult:
    """Output of :func:`linear_mesh_dp5`."""
    Y: np.ndarray                 # final columns, shape (B, m, k)
    log_scale: np.ndarray         # real, shape (B,)
    stored: list | None = None    # per mesh node values (if requested)
    stored_dY: list | None = None
    renorms: list | None = None   # (node index, R factors) pairs


def linear_mesh_dp5(stage_matrix: Callable[[int, int], np.ndarray], mesh,
                    Y0, renormalize=False, store=False) -> MeshResult:
    """Batched DP5 on a prescribed mesh for Y' = M(x) Y.

    ``stage_matrix(i, s)`` returns the matrices M at x = mesh[i] + c_s h_i for
    the distinct stage abscissae s = 0..5 (s = 5 is the step end), shape
    (B, m, m). With ``renormalize`` the columns are re-orthonormalized by QR
    after every step and log|det R| is accumulated; the QR factors are chosen
    with positive real diagonals so the determinant keeps its phase.
    """
    Y = np.array(Y0, dtype=complex)
    B = Y.shape[0]
    log_scale = np.zeros(B)
    stored = [Y.copy()] if store else None
    stored_dY = [] if store else None
    renorms = [] if (store and renormalize) else None
    stage_of = [0, 1, 2, 3, 4, 5, 5]
    nstep = len(mesh) - 1
    k_first = None
    for i in range(nstep):
        h = mesh[i + 1] - mesh[i]
        k = [None] * 7
        k[0] = stage_matrix(i, 0) @ Y if k_first is None else k_first
        if store:
            stored_dY.append(k[0])
        for s in range(1, 7):
            acc = Y
            for j, a in enumerate(DP_A[s]):
                if a != 0.0:
                    acc = acc + (h * a) * k[j]
            if s == 6:
                Ynew = acc
            k[s] = stage_matrix(i, stage_of[s]) @ acc
        Y = Ynew
        k_first = k[6]
        if renormalize:
            Qf, Rf = np.linalg.qr(Y)
            d = np.diagonal(Rf, axis1=-2, axis2=-1)
            ph = d / np.abs(d)
            Qf = Qf * ph[:, None, :]
            Rf = Rf * np.conj(ph)[:, :, None]
            Y = Qf
            log_scale += np.sum(np.log(np.abs(d)), axis=-1)
            k_first = np.linalg.solve(Rf.transpose(0, 2, 1),
                                      k_first.transpose(0, 2, 1)).transpose(0, 2, 1)
            if renorms is not None:
                renorms.append((i + 1, Rf))
        if store:
            stored.append(Y.copy())
    if store:
        stored_dY.append(k_first)
    return MeshResult(Y, log_scale, stored, stored_dY, renorms)


# ---------------------------------------------------------------------------
# Kato transport


@dataclass
class KatoFrame:
    path: np.ndarray
    eigenvalues: np.ndarray       # (len(path), k)
    vectors: np.ndarray           # (len(path), m, k)
    projections: np.ndarray       # (len(path), m, m)
    base_point: complex = 0.0


def _eig_group(M, guess):
    mu, S = np.linalg.eig(M)
    Sinv = np.linalg.inv(S)
    idx = []
    free = list(range(len(mu)))
    for g in np.atleast_1d(guess):
        j = min(free, key=lambda t: abs(mu[t] - g))
        idx.append(j)
        free.remove(j)
    return mu, S, Sinv, idx, free


def spectral_projection(M, guess):
    """Projection onto the eigenvalue group nearest to ``guess`` and its data."""
    mu, S, Sinv, idx, rest = _eig_group(M, guess)
    P = S[:, idx] @ Sinv[idx, :]
    return P, mu[idx], (mu, S, Sinv, idx, rest)


def projection_derivative(decomp, M1):
    """dP for the group in ``decomp`` when M moves by M1 (diagonalizable M)."""
    mu, S, Sinv, idx, rest = decomp
    m = len(mu)
    dP = np.zeros((m, m), dtype=complex)
    for i in idx:
        Pi = np.outer(S[:, i], Sinv[i, :])
        for j in rest:
            Pj = np.outer(S[:, j], Sinv[j, :])
            dP += (Pi @ M1 @ Pj + Pj @ M1 @ Pi) / (mu[i] - mu[j])
    return dP


def _group_gap(decomp):
    mu, _, _, idx, rest = decomp
    if not rest:
        return np.inf
    return min(abs(mu[i] - mu[j]) for i in idx for j in rest)


def kato_transport(matrix_family: Callable, path: Sequence[complex],
                   base_eigenpair, dmatrix: Callable | None = None,
                   substeps: int = 8) -> KatoFrame:
    """Transport an eigenvector (or a basis of an eigen-group) along ``path``.

    Solves dV/dλ = [P'(λ), P(λ)] V segment by segment with classical RK4,
    which keeps V analytic in λ. ``base_eigenpair`` is (eigenvalues, vectors)
    at path[0]; vectors has shape (m,) or (m, k).
    """
    path = np.asarray(path, dtype=complex)
    mu0, V0 = base_eigenpair
    V = np.array(V0, dtype=complex)
    if V.ndim == 1:
        V = V[:, None]
    guess = np.atleast_1d(np.asarray(mu0, dtype=complex)).copy()

    def M1_at(lam):
        if dmatrix is not None:
            return np.asarray(dmatrix(lam), dtype=complex)
        h = 1e-6 * (1 + abs(lam))
        return (matrix_family(lam + h) - matrix_family(lam - h)) / (2 * h)

    def rhs(lam, V, dl, guess):
        M = np.asarray(matrix_family(lam), dtype=complex)
        P, g, dec = spectral_projection(M, guess)
        gap = _group_gap(dec)
        if gap < 1e-8:
            raise CollisionError(f"eigenvalue collision near lambda={lam:.6g}")
        dP = projection_derivative(dec, M1_at(lam))
        return dl * ((dP @ P - P @ dP) @ V), g, gap

    eigs, vecs, projs = [], [], []
    M = np.asarray(matrix_family(path[0]), dtype=complex)
    P, g, dec = spectral_projection(M, guess)
    V = P @ V
    guess = g
    eigs.append(g)
    vecs.append(V.copy())
    projs.append(P)
    for a, b in zip(path[:-1], path[1:]):
        dl = b - a
        Mb = np.asarray(matrix_family(b), dtype=complex)
        Pb, gb, decb = spectral_projection(Mb, guess)
        gap = min(_group_gap(dec), _group_gap(decb))
        if gap < 1e-8:
            raise CollisionError(f"eigenvalue collision near lambda={b:.6g}")
        # substeps from the spectral motion relative to the gap
        move = float(np.max(np.abs(gb - guess)))
        nsub = max(substeps, int(np.ceil(40 * move / gap)))
        if gap < 1e-6:
            nsub *= 4
        hl = dl / nsub
        Vt, gt = V, guess
        for s in range(nsub):
            la = a + s * hl
            k1, g1, _ = rhs(la, Vt, hl, gt)
            k2, _, _ = rhs(la + hl / 2, Vt + k1 / 2, hl, g1)
            k3, _, _ = rhs(la + hl / 2, Vt + k2 / 2, hl, g1)
            k4, g4, _ = rhs(la + hl, Vt + k3, hl, g1)
            Vt = Vt + (k1 + 2 * k2 + 2 * k3 + k4) / 6
            gt = g4
        Pb, gb, dec = spectral_projection(Mb, gt)
        V = Pb @ Vt
        guess = gb
        eigs.append(gb)
        vecs.append(V.copy())
        projs.append(Pb)
    return KatoFrame(path, np.array(eigs), np.array(vecs), np.array(projs),
                     complex(path[0]))


# ---------------------------------------------------------------------------
# argument principle


def argument_increments(values, closed=True):
    v = np.asarray(values, dtype=complex)
    if closed:
        v = np.append(v, v[0])
    return np.angle(v[1:] / v[:-1])


def unsafe_segments(values, closed=True, ratio=0.5, log_scale=None):
    """Indices i where |v[i+1]-v[i]| > ratio*min(|v[i]|, |v[i+1]|).

    With ``log_scale`` the samples are v·exp(log_scale); each pair is compared
    after dividing by its larger scale, so no sample has to be representable.
    """
    v = np.asarray(values, dtype=complex)
    ls = np.zeros(len(v)) if log_scale is None else np.asarray(log_scale, dtype=float)
    if closed:
        v = np.append(v, v[0])
        ls = np.append(ls, ls[0])
    c = np.maximum(ls[1:], ls[:-1])
    a = v[:-1] * np.exp(ls[:-1] - c)
    b = v[1:] * np.exp(ls[1:] - c)
    jump = np.abs(b - a)
    floor = ratio * np.minimum(np.abs(a), np.abs(b))
    return np.nonzero(jump > floor)[0]


def accumulate_argument(values, closed=True, tol=0.05) -> int:
    """Winding number of the sampled closed curve ``values`` around 0."""
    turns = float(np.sum(argument_increments(values, closed))) / (2 * np.pi)
    w = int(round(turns))
    if abs(turns - w) > tol:
        raise InconclusiveWinding(f"argument sum {turns:.4f} turns is not an integer")
    return w


@dataclass
class AdaptiveWinding:
    s: np.ndarray
    points: np.ndarray
    values: np.ndarray
    winding: int
    depth: int
    extra: dict = field(default_factory=dict)


def adaptive_winding(evaluate: Callable, path: Callable, n0=256, max_depth=10,
                     ratio=0.5) -> AdaptiveWinding:
    """Sample a closed path s∈[0,1) → λ, bisect unsafe segments, count.

    ``evaluate`` takes an array of λ and returns complex values.
    """
    s = np.arange(n0) / n0
    lam = np.array([path(t) for t in s])
    vals = np.asarray(evaluate(lam), dtype=complex)
    depth = 0
    while True:
        bad = unsafe_segments(vals, True, ratio)
        if len(bad) == 0:
            break
        if depth >= max_depth:
            raise InconclusiveWinding(f"{len(bad)} unsafe segments after {depth} refinements")
        s_next = np.append(s, 1.0)
        mids = 0.5 * (s_next[bad] + s_next[bad + 1])
        lm = np.array([path(t) for t in mids])
        vm = np.asarray(evaluate(lm), dtype=complex)
        s = np.concatenate([s, mids])
        lam = np.concatenate([lam, lm])
        vals = np.concatenate([vals, vm])
        order = np.argsort(s)
        s, lam, vals = s[order], lam[order], vals[order]
        depth += 1
    return AdaptiveWinding(s, lam, vals, accumulate_argument(vals), depth)


# ---------------------------------------------------------------------------
# Riccati invariant graph


@dataclass
class RiccatiReduction:
    x: np.ndarray
    Phi2: np.ndarray              # (len(x), k2, k1)
    eta_gap: np.ndarray
    delta: np.ndarray
    bound_integral: np.ndarray    # ∫ exp(-∫_y^x η) δ(y) dy
    delta_sup: float
    ratio_sup: float              # sup δ/η
    C_sup: float                  # sup|Φ₂| / sup(δ/η)
    C_pointwise: float            # sup_x |Φ₂(x)| / bound_integral(x)
    trajectory: Trajectory = None
    blocks: tuple = ()

    def phi_at(self, x):
        k2, k1 = self.Phi2.shape[1:]
        return self.trajectory.at(x)[: k2 * k1].reshape(k2, k1)

    def reduced_flow(self, x):
        """Matrix of the W₁ flow restricted to the graph W₂ = Φ₂W₁."""
        M1, M2, delta, theta = self.blocks
        k1 = M1(x).shape[0]
        T = theta(x)
        Phi = self.phi_at(x)
        return M1(x) + delta(x) * (T[:k1, :k1] + T[:k1, k1:] @ Phi)


def numerical_range_gap(M1, M2):
    h1 = 0.5 * (M1 + M1.conj().T)
    h2 = 0.5 * (M2 + M2.conj().T)
    return np.linalg.eigvalsh(h1)[0] - np.linalg.eigvalsh(h2)[-1]


def riccati_reduce(M1, M2, delta, theta, x_span, rtol=1e-11, atol=1e-13,
                   n_out=801) -> RiccatiReduction:
    """Integrate the invariant-graph equation for W₂ = Φ₂ W₁.

    System: W' = (diag(M₁, M₂) + δ Θ) W. The graph obeys
    Φ₂' = M₂Φ₂ − Φ₂M₁ + δ(Θ₂₁ + Θ₂₂Φ₂ − Φ₂Θ₁₁ − Φ₂Θ₁₂Φ₂), Φ₂(x_span[0]) = 0.
    Alongside, the comparison integral I' = −ηI + δ is integrated.
    """
    k1 = np.atleast_2d(M1(x_span[0])).shape[0]
    k2 = np.atleast_2d(M2(x_span[0])).shape[0]

    def rhs(x, z):
        Phi = z[: k2 * k1].reshape(k2, k1)
        I = z[k2 * k1].real
        A1 = np.atleast_2d(M1(x))
        A2 = np.atleast_2d(M2(x))
        T = np.atleast_2d(theta(x))
        d = float(delta(x))
        T11, T12 = T[:k1, :k1], T[:k1, k1:]
        T21, T22 = T[k1:, :k1], T[k1:, k1:]
        dPhi = A2 @ Phi - Phi @ A1 + d * (T21 + T22 @ Phi - Phi @ T11 - Phi @ T12 @ Phi)
        eta = numerical_range_gap(A1, A2)
        return np.concatenate([dPhi.ravel(), [-eta * I + d]])

    z0 = np.zeros(k2 * k1 + 1, dtype=complex)
    xs = np.linspace(x_span[0], x_span[1], n_out)
    traj = ode_integrate_complex(rhs, x_span, z0, rtol=rtol, atol=atol,
                                 checkpoints=list(xs[1:-1]))
    Z = np.array([traj.at(x) for x in xs])
    Phi = Z[:, : k2 * k1].reshape(len(xs), k2, k1)
    I = Z[:, -1].real
    eta = np.array([numerical_range_gap(np.atleast_2d(M1(x)), np.atleast_2d(M2(x)))
                    for x in xs])
    dl = np.array([float(delta(x)) for x in xs])
    if np.min(eta) <= 0:
        raise GapViolation("spectral gap is not positive")
    ratio = float(np.max(dl / eta))
    nrm = np.array([np.linalg.norm(P, 2) for P in Phi])
    sup_phi = float(np.max(nrm))
    if ratio > 0 and sup_phi > 10 * ratio:
        raise GapViolation(f"sup|Phi2|={sup_phi:.3g} exceeds 10 sup(delta/eta)")
    C_sup = sup_phi / ratio if ratio > 0 else 0.0
    mask = I > 1e-12 * max(np.max(I), 1e-300)
    C_pt = float(np.max(nrm[mask] / I[mask])) if np.any(mask) else 0.0
    return RiccatiReduction(xs, Phi, eta, dl, I, float(np.max(dl)), ratio, C_sup,
                            C_pt, traj, (M1, M2, delta, theta))


# ---------------------------------------------------------------------------
# small helpers


def gauss_legendre(f, a, b, n=64):
    """Gauss-Legendre quadrature of a vectorized f on [a, b]."""
    t, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (b - a) * t + 0.5 * (a + b)
    return 0.5 * (b - a) * np.sum(w * f(x), axis=-1)


def loglog_slope(x, y):
    """Least-squares slope and R² of log|y| against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y)))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1 - np.sum((ly - pred) ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(r2)
