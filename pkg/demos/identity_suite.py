"""Closed-form relative quantities against their literal definitions.

Runs the randomized check suite twice: for the gamma law p = rho^2, where
everything holds, and for p = exp(rho), whose growth ratio rho p''/p' = rho is
unbounded.  The second run reports that structural hypothesis as violated but
still passes, since the identities themselves do not depend on it.
"""
from relaxlimit.checks import PressureSpec, run_checks

for spec in (PressureSpec(), PressureSpec(kind="exp")):
    suite = run_checks(seed=1, pressure=spec, n_states=2000, n_pairs=20_000)
    print(f"--- pressure law: {spec.kind}")
    for line in suite.lines():
        print(line)
    print(f"suite passed: {suite.passed}\n")
