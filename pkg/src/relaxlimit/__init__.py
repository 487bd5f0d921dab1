"""Relative-entropy verification of diffusive relaxation limits.

Solvers for three damped hyperbolic systems (isentropic Euler with friction,
the damped p-system, viscoelasticity with memory) and their parabolic limits,
plus the relative-entropy bookkeeping that measures how fast the relaxation
solutions approach the limit as the relaxation parameter eps shrinks.
"""

__version__ = "0.1.0"
