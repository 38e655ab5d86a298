"""Numerical tolerances used across the package.

All hard-coded tolerances live here so that geometry, tie-breaking and
refinement behaviour can be audited in one place.
"""

# Geometric predicates: containment half-plane tests, convexity cross
# products, coincident-point detection.
GEOM_TOL = 1e-12

# Tie resolution for multi-valued boundary projections: minimizers whose
# objective value is within TIE_TOL of the optimum are all reported.
TIE_TOL = 1e-9

# Interval width at which 1-D golden-section refinement on an edge stops.
REFINE_TOL = 1e-12

# Radii within FREEZE_TOL of their escape cost count as frozen.
FREEZE_TOL = 1e-12

# Reduced costs above -LP_TOL certify optimality of a transport plan;
# marginals are checked to the same tolerance.
LP_TOL = 1e-9
