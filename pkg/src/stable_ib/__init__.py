"""Stable discrete information bottleneck solvers.

Exact information measures, convexified and entropy-regularized IB objectives,
a per-beta Blahut-Arimoto baseline, and predictor-corrector continuation along
beta with Hessian eigenvalue monitoring.
"""

__version__ = "0.1.0"
