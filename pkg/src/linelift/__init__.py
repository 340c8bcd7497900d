"""3D wireframe reconstruction from single 2D line drawings.

Pipeline: synthesize or load a drawing, detect pairwise geometric
constraints, select a consistent non-redundant equation subset, solve
for vertex depths, and evaluate against ground truth.
"""

__version__ = "0.1.0"
