"""Independent reference computations used by the tests."""

import numpy as np


def hamer_shooting(eps, h=5e-4, h_far=1e-2, u_stop=5e-4, q0=1e-13):
    """Hamer profile by RK4 on (Q, P) with U = ±√(ε²/4 − 2Q) from the first integral.

    Each half is shot from its far field along the linear decay direction,
    with step ``h_far`` while |U| > ε/10 and ``h`` afterwards, and stopped at
    |U| = u_stop. The sonic point is placed by a cubic fit of U against x over
    the last stretch. Returns ((x, U) left half, (x, U) right half).
    """
    def half(sign):
        u_inf = sign * eps / 2
        kap = 1.0 / u_inf
        mu = (-kap + sign * np.sqrt(kap * kap + 4)) / 2

        def U_of(Q):
            return sign * np.sqrt(max(eps * eps / 4 - 2 * Q, 0.0))

        def rhs(z):
            Q, P = z
            return np.array([P, Q - P / U_of(Q)])

        z = np.array([q0, mu * q0])
        xs, Us = [0.0], [U_of(q0)]
        x = 0.0
        while abs(Us[-1]) > u_stop:
            step = sign * (h_far if abs(Us[-1]) > eps / 10 else h)
            k1 = rhs(z)
            k2 = rhs(z + 0.5 * step * k1)
            k3 = rhs(z + 0.5 * step * k2)
            k4 = rhs(z + step * k3)
            z = z + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            x += step
            xs.append(x)
            Us.append(U_of(z[0]))
        xs, Us = np.array(xs), np.array(Us)
        sel = np.abs(Us) < 10 * u_stop
        fit = np.polynomial.Polynomial.fit(xs[sel], Us[sel], 3)
        roots = fit.roots()
        roots = roots[np.abs(roots.imag) < 1e-12].real
        x0 = roots[np.argmin(np.abs(roots - xs[-1]))]
        return xs - x0, Us

    return half(+1.0), half(-1.0)
