"""Reference plant: one process state driven by two first-order actuators.

States are ``(process, actuator 1, actuator 2)``. The safe set bounds the
actuator states and the normal-operation set mainly the process state.
Note that the normal-set matrix as published also has (small) nonzero
actuator entries; it is used verbatim.
"""
import numpy as np

from .ellipsoid import Ellipsoid, SafetySets
from .lti import FilterRealization, StateSpaceModel

A_P = np.array([[-10.0, 10.0, 10.0],
                [0.0, -150.0, 0.0],
                [0.0, 0.0, -150.0]])
B_P = np.array([[0.0, 0.0],
                [100.0, 0.0],
                [0.0, 100.0]])
R = np.diag([0.25, 0.25])
PSI = np.diag([0.001, 0.0156, 0.0156])
XI_P = np.diag([0.01, 0.001, 0.001])

ANALYSIS_ALPHA = 0.5
SCALARS = {"alpha": 1.0, "lam": 0.5, "delta": 0.9, "gamma": 0.61, "epsilon": 1e-8}
REPORTED_BETA = 0.4999

# Published synthesized filter, for informational comparison only: filter
# matrices are not unique (any state similarity works) and depend on solver.
REPORTED_FILTER = {
    "A_f": [[-12.75, 22.55, 22.55], [8.35, -151.39, 1.31], [8.35, 1.31, -151.39]],
    "B_f": [[-549.65, -549.65], [-647.31, -35.94], [-35.94, -647.31]],
    "C_f": [[-1e-4, 1.7e-3, 0.0], [-1e-4, 0.0, 1.7e-3]],
    "D_f": [[0.46, 2e-4], [2e-4, 0.46]],
}


def plant():
    return StateSpaceModel(A_P, B_P)


def sets(stealthy=True):
    return SafetySets(
        input=Ellipsoid(R),
        safe=Ellipsoid(PSI),
        normal=Ellipsoid(XI_P, rank_mode="psd") if stealthy else None,
    )


def reported_filter():
    return FilterRealization(**REPORTED_FILTER, gamma_f=np.ones(2))
