"""Hamer shock: profile, structure checks and the winding-number test for condition (D).

Run: python3 demos/hamer_profile_and_evans.py [epsilon]
"""

import sys

from radshock.evans import EvansSystem, winding
from radshock.model import hamer, hamer_shock, structure_report
from radshock.profile import solve_profile
from radshock.spectral import assemble

eps = float(sys.argv[1]) if len(sys.argv) > 1 else 0.2
model, shock = hamer(), hamer_shock(eps)

rep = structure_report(model, shock)
print("structure hypotheses:", "all pass" if rep.passed else f"failed {rep.failed()}")

prof = solve_profile(model, shock)
print(f"profile on [-{prof.X:.1f}, {prof.X:.1f}] with {len(prof.grid)} nodes, "
      f"first-integral residual {prof.first_integral_residual():.1e}")

w = winding(EvansSystem(assemble(prof)))
print(f"semi-annulus r={w.r:.2e} R={w.R:.2f}: winding D- {w.winding_minus}, D+ {w.winding_plus}")
print(f"origin circle winding {w.circle_winding['-']}, |dD(0)| {abs(w.dD0):.3e}")
print("spectrally stable (condition D certified)" if w.certified else "NOT certified")
