"""A smoothed density step on the line with frozen far-field states.

The relaxation and limit solutions start from the two-state profile joining
rho = 1 to rho = 2.  The domain is wide enough that nothing reaches the
boundary cells before t_end; the solver checks this and would abort otherwise.
"""
import numpy as np

from relaxlimit.constitutive import make_gamma_law
from relaxlimit.grid import FARFIELD, Grid
from relaxlimit.profiles import make_profile, paired_initial_state
from relaxlimit.solvers import SolverConfig, run_to
from relaxlimit.systems import build_system, limit_of

system = build_system("euler", make_gamma_law(1.0, 2.0))
limit = limit_of(system)
grid = Grid(-4.0, 4.0, 256, FARFIELD)
rho0 = make_profile("two-state", grid, left=1.0, right=2.0, width=1.0)

for eps in (0.4, 0.2, 0.1):
    relax, bar = paired_initial_state(limit, rho0, eps, grid)
    final, ledger = run_to(relax, system, eps, SolverConfig(t_end=0.1), bar=bar, limit=limit)
    edge = np.max(np.abs(final.data[:, [0, -1]] - relax.data[:, [0, -1]]))
    print(f"eps={eps:<5g} phi(T)={ledger.phi_final:.3e}  phi(T)/eps^4={ledger.phi_final / eps ** 4:.3g}  "
          f"boundary drift={edge:.1e}")
