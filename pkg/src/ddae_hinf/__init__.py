"""Strong H-infinity norms of delay differential-algebraic systems.

Computes the strong H-infinity norm of a DDAE with a predictor-corrector
level-set method (spectral discretisation for prediction, Gauss-Newton on
the exact peak equations for correction), and tunes fixed-structure
controllers by nonsmooth minimisation of that norm.
"""
import os as _os

# cap BLAS threads before numpy is loaded
if _os.environ.get("DDAE_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["DDAE_THREADS"])

from .asymptotic import AsymptoticSystem, reduce_delays, strong_norm_ta, ta_correct  # noqa: E402
from .discretize import build, tn_eval  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .interconnect import (  # noqa: E402
    ControllerTemplate,
    DelayTermSeries,
    ParamClosedLoop,
    PlantSpec,
    assemble,
    instantiate,
    parameter_jacobian,
)
from .levelset import LevelSetOptions, StrongNormResult, strong_hinf_norm  # noqa: E402
from .model import DdaeSystem, partition, sigma_sweep, transfer, validate  # noqa: E402
from .stability import check_strong_stability  # noqa: E402
from .synthesis import ObjectiveEval, OptimizeOptions, gradient, objective, optimize  # noqa: E402

__version__ = "0.1.0"
