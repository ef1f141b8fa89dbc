"""The resolvent kernel near lambda = 0 is dominated by the profile derivative.

Prints the shape correlation of lambda*G_lambda(., y) with the derivative of the
profile as lambda shrinks, and the jump condition residual at x = y.
"""

import numpy as np

from radshock.evans import EvansSystem, pole_correlation, resolvent_kernel
from radshock.model import hamer, hamer_shock
from radshock.profile import solve_profile
from radshock.spectral import assemble

prof = solve_profile(hamer(), hamer_shock(0.2))
system = EvansSystem(assemble(prof))
for lam in 0.04 * np.array([1e-1, 1e-2, 1e-3, 1e-4]):
    k = resolvent_kernel(system, lam, y=-1.0)
    corr, _ = pole_correlation(k, prof)
    print(f"lambda {lam:.1e}: correlation {corr:.8f}, jump residual {k.jump_residual:.1e}")
