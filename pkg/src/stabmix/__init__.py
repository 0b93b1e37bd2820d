"""Stabilized explicit time integrators with order-preserving
mixed-precision and multirate variants, a reduced-precision floating-point
emulator, and an experiment harness."""

from . import (chebyshev, errors, harness, mp_rkc, mrkc, precision, problems,
               rkc)
from .chebyshev import (InnerCoefficients, RkcCoefficients,
                        make_inner_coefficients, make_rkc_coefficients,
                        select_stages, stability_boundary, stability_poly)
from .mp_rkc import (DeltaFStrategy, cost_report, mp_rkc_integrate,
                     mp_rkc_step, q_order_rk_linear_step)
from .mrkc import (MultiratePlan, averaged_force, mp_mrkc_integrate,
                   mrkc_integrate, phi, select_multirate_plan)
from .precision import (FORMATS, FloatFormat, LowPrecMatrix, get_format,
                        round_to, rounded_op, rounded_spmv, squeeze_matrix)
from .problems import (MultirateProblem, OdeProblem, build_multirate_surrogate,
                       build_problem, build_problem_1, build_problem_3,
                       build_problem_4, estimate_spectral_radius)
from .rkc import (IntegrationTrace, StepPlan, rk4_reference, rkc_integrate,
                  rkc_step)

__version__ = "0.1.0"
