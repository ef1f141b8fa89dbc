"""Low-frequency Green function by contour quadrature of the resolvent kernel.

G^I(x,t;y) = (1/2πi) ∫ e^{λt} G_λ(x,y) dλ over the imaginary axis |Im λ| ≤ R,
with a small quarter-circle detour around the translational pole at 0.
The excited (errfn) term and a Gaussian envelope fit are provided for
comparison with the low-frequency decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import QuadratureError
from .evans import EvansSystem, contour_radii, resolvent_on_grid
from .model import eigen_decomposition

DEFAULT_T = (5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 100.0)
DEFAULT_Y = (-1.5, -3.0, -5.0, -7.0, -9.0)


def errfn(z):
    """(1/√π) ∫_{−∞}^z e^{−s²} ds, rising from 0 to 1."""
    return 0.5 * erfc(-np.asarray(z, dtype=float))


# ---------------------------------------------------------------------------
# excited term


@dataclass
class ExcitedData:
    """Incoming characteristic families on the side of y and their shock weights."""
    side: str
    speeds: np.ndarray          # a_k of the incoming families
    diffusion: np.ndarray       # β_k = l_k L B r_k at the end state
    weights: np.ndarray         # (K, n): Ṽ_k = ṽ_k l_k


def excited_data(profile, side="-") -> ExcitedData:
    """Speeds, effective diffusions and weights of the families hitting the shock.

    A unit source along r_k that reaches the shock splits into outgoing waves
    and a shift along Ūₓ; ṽ_k is the [u]-coefficient of r_k in the basis
    {r_j⁺ (a_j⁺ > 0), r_j⁻ (a_j⁻ < 0), [u]}.
    """
    model = profile.model
    sh = profile.shock
    states = {"-": sh.u_minus, "+": sh.u_plus}
    cols = []
    for sd, keep in (("+", lambda a: a > 0), ("-", lambda a: a < 0)):
        mu, R, _ = eigen_decomposition(model.jacobian_f(states[sd]))
        cols += [R[:, j] for j in range(model.n) if keep(mu[j])]
    cols.append(sh.u_plus - sh.u_minus)
    M = np.column_stack(cols)
    u = states[side]
    mu, R, Lr = eigen_decomposition(model.jacobian_f(u))
    Bv = np.atleast_1d(model.jacobian_b(u))
    LB = np.outer(model.L, Bv)
    incoming = [k for k in range(model.n) if (mu[k] > 0 if side == "-" else mu[k] < 0)]
    speeds, betas, weights = [], [], []
    for k in incoming:
        v = np.linalg.solve(M, R[:, k])[-1]
        speeds.append(mu[k])
        betas.append(float(Lr[k] @ LB @ R[:, k]))
        weights.append(v * Lr[k])
    return ExcitedData(side, np.array(speeds), np.array(betas), np.array(weights))


def errfn_kernel(y, t, a, beta):
    """e_k(y,t) = errfn((−|y| + |a|t)/√(4βt)) − errfn((−|y| − |a|t)/√(4βt))."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    s = np.sqrt(4.0 * beta * t)
    return errfn((-np.abs(y) + abs(a) * t) / s) - errfn((-np.abs(y) - abs(a) * t) / s)


def excited_term(profile, x, t, y):
    """E(x,t;y) = Σ_k Ūₓ(x) Ṽ_k e_k(y,t); shape (len(x), n, n)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    data = excited_data(profile, "-" if y < 0 else "+")
    n = profile.model.n
    Ux = profile.U_x(x).reshape(len(x), n)
    out = np.zeros((len(x), n, n))
    for a, b, w in zip(data.speeds, data.diffusion, data.weights):
        out += float(errfn_kernel(y, t, a, b)) * Ux[:, :, None] * w[None, None, :]
    return out


# ---------------------------------------------------------------------------
# contour


@dataclass
class GreenContour:
    """Upper half of the contour with trapezoid weights for dλ."""
    lams: np.ndarray
    weights: np.ndarray
    rho: float
    R: float
    indent: str


def _trapezoid(nodes_s, lam_of, dlam_of):
    s = nodes_s
    w = np.full(len(s), s[1] - s[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return lam_of(s), w * dlam_of(s)


def green_contour(rho, R, samples=256, knee=None, indent="right") -> GreenContour:
    """Quarter circle |λ| = ρ from the real axis to iρ, then iξ for ρ ≤ ξ ≤ R.

    ``indent="right"`` keeps the pole at 0 to the left of the contour (the
    detour lies in Re λ > 0); ``"left"`` runs through Re λ < 0 instead. The
    segment is sampled geometrically up to ``knee`` and uniformly beyond it;
    each piece gets a composite trapezoid rule. The sample budget is split
    1 : 3 : 12 between the arc, the geometric part and the uniform part.
    """
    knee = min(R, max(50 * rho, 0.025 * R)) if knee is None else knee
    n_arc = max(4, samples // 16)
    n_geo = max(8, 3 * samples // 16)
    n_lin = max(8, samples - n_arc - n_geo)
    if indent == "right":
        th0, th1 = 0.0, 0.5 * np.pi
    elif indent == "left":
        th0, th1 = np.pi, 0.5 * np.pi
    else:
        raise ValueError("indent must be 'right' or 'left'")
    s = np.linspace(0.0, 1.0, n_arc + 1)
    l1, w1 = _trapezoid(s, lambda s: rho * np.exp(1j * (th0 + (th1 - th0) * s)),
                        lambda s: 1j * (th1 - th0) * rho * np.exp(1j * (th0 + (th1 - th0) * s)))
    g = np.log(knee / rho)
    s = np.linspace(0.0, 1.0, n_geo + 1)
    l2, w2 = _trapezoid(s, lambda s: 1j * rho * np.exp(g * s),
                        lambda s: 1j * g * rho * np.exp(g * s))
    s = np.linspace(0.0, 1.0, n_lin + 1)
    l3, w3 = _trapezoid(s, lambda s: 1j * (knee + (R - knee) * s),
                        lambda s: 1j * (R - knee) * np.ones_like(s))
    return GreenContour(np.concatenate([l1, l2, l3]), np.concatenate([w1, w2, w3]),
                        rho, R, indent)


# ---------------------------------------------------------------------------
# quadrature


@dataclass
class GreenSample:
    x: np.ndarray
    y: float
    t: np.ndarray
    GI: np.ndarray                 # (len(t), len(x), n, n), u-block of the kernel
    E: np.ndarray                  # same shape
    imag_ratio: float              # |Im G^I| / |G^I| before taking the real part
    samples: int
    envelope_params: tuple | None = None
    meta: dict = field(default_factory=dict)


def _integrate(contour: GreenContour, kernels, t):
    """(1/2πi)∫ over the full contour from the upper half: Im(I_u)/π and its conjugate twin."""
    ph = np.exp(np.outer(t, contour.lams))                  # (T, B)
    Iu = np.einsum("tb,b,bx...->tx...", ph, contour.weights, kernels)
    # lower half is the mirror image traversed backwards: total = I_u − conj(I_u)
    total = (Iu - np.conj(Iu)) / (2j * np.pi)
    return total


def low_freq_green(system: EvansSystem, x, t, y, r=None, R=None, samples=256,
                   indent="right", chunk=64) -> GreenSample:
    """G^I(x, t; y) on the grid ``x`` for all times ``t`` at one source point y."""
    frame = system.frame
    prof = frame.profile
    eps = prof.epsilon
    r0, R0 = contour_radii(eps)
    r = r0 if r is None else r
    R = R0 if R is None else R
    x = np.asarray(x, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    cont = green_contour(0.5 * r, R, samples, indent=indent)
    n = frame.n
    K = resolvent_on_grid(system, cont.lams, y, x, chunk=chunk)[:, :, :n, :n]
    # the mirrored half is summed exactly by construction, so the residual
    # imaginary part measures the asymmetry of the computed kernel
    K_conj = resolvent_on_grid(system, np.conj(cont.lams[:1]), y, x, path=False)[:, :, :n, :n]
    asym = float(np.max(np.abs(K_conj[0] - np.conj(K[0]))) / max(np.max(np.abs(K[0])), 1e-300))
    G = _integrate(cont, K, t)
    imag_ratio = max(asym, float(np.max(np.abs(G.imag)) / max(np.max(np.abs(G.real)), 1e-300)))
    E = np.stack([excited_term(prof, x, tt, y) for tt in t])
    return GreenSample(x, float(y), t, G.real, E, imag_ratio, samples,
                       meta={"rho": cont.rho, "R": cont.R, "indent": indent})


def check_convergence(system: EvansSystem, x, t, y, samples=256, tol=1e-3, **kw):
    """Run at ``samples`` and 2·``samples``; raise if G^I moved by more than tol."""
    a = low_freq_green(system, x, t, y, samples=samples, **kw)
    b = low_freq_green(system, x, t, y, samples=2 * samples, **kw)
    change = float(np.max(np.abs(a.GI - b.GI)) / np.max(np.abs(b.GI)))
    if change > tol:
        raise QuadratureError(f"G^I changed by {change:.3g} between {samples} and "
                              f"{2 * samples} contour samples")
    return b, change


# ---------------------------------------------------------------------------
# envelope


@dataclass
class EnvelopeFit:
    C: float
    M: float
    speed: float
    area: float


def fit_envelope(samples, speed, M_grid=None, floor=0.0) -> EnvelopeFit:
    """Smallest-area Gaussian C t^{-1/2} exp(−(x−y−at)²/(Mt)) above |G^I − E|.

    For each M the least admissible C is a maximum over all samples; the
    envelope's x-integral is C√(πM), which is minimized over the M grid.
    Values below ``floor`` (relative to the largest) are ignored.
    """
    M_grid = np.geomspace(1e-2, 1e4, 481) if M_grid is None else np.asarray(M_grid)
    rows = []
    for smp in samples:
        diff = np.abs(smp.GI - smp.E)
        diff = diff.reshape(diff.shape[0], diff.shape[1], -1).max(-1)    # (T, X)
        for it, tt in enumerate(smp.t):
            rows.append((diff[it], smp.x - smp.y - speed * tt, tt))
    dmax = max(float(np.max(d)) for d, _, _ in rows)
    best = None
    for M in M_grid:
        C = 0.0
        for d, z, tt in rows:
            keep = d > floor * dmax
            if np.any(keep):
                with np.errstate(over="ignore"):     # inf C just rules this M out
                    w = np.exp(z[keep] ** 2 / (M * tt))
                C = max(C, float(np.max(d[keep] * np.sqrt(tt) * w)))
        area = C * np.sqrt(np.pi * M)
        if np.isfinite(area) and (best is None or area < best.area):
            best = EnvelopeFit(C, float(M), float(speed), float(area))
    return best


def green_structure(system: EvansSystem, x=None, t=DEFAULT_T, ys=DEFAULT_Y, samples=256,
                    **kw):
    """G^I samples on the fixed grid and the fitted envelope, at ``samples`` contour points."""
    prof = system.frame.profile
    x = np.linspace(-40.0, 40.0, 201) if x is None else np.asarray(x, dtype=float)
    out = [low_freq_green(system, x, t, y, samples=samples, **kw) for y in ys]
    speed = float(excited_data(prof, "-").speeds[0]) if min(ys) < 0 else 0.0
    fit = fit_envelope(out, speed)
    for s in out:
        s.envelope_params = (fit.C, fit.M)
    return out, fit
