"""taulab: exact finite-space engine for progressively enlarged filtrations.

The exact side (rational arithmetic throughout) builds product-space models
of random default times, computes compensators, drift operators and hedging
integrands, and certifies or refutes the martingale representation property
by node-wise rank tests.  The Monte Carlo side validates the continuous-time
story at simulation scale.
"""

from .finite_prob import (
    INF,
    FiniteSpace,
    Filtration,
    Partition,
    ProcessTable,
    StoppingTime,
    cond_exp,
    doob_decomposition,
    dual_projections,
    generate_partition,
    is_martingale,
    predictable_bracket,
    sigma_at,
)
from .enlargement import (
    DefaultKernel,
    EnlargedSpace,
    build_product_space,
    check_appendix_identities,
    fragment_filtration,
    fragment_process,
    g_star,
    gtau_equality,
)
from .models import (
    CoxParams,
    DensityParams,
    NaturalParams,
    cox_model,
    density_model,
    honest_time_model,
    natural_model_discrete,
)
from .calculus import (
    MeasureChange,
    azema_Z,
    build_sh_measure_honest,
    default_martingale_L,
    drift_after_honest_formula,
    drift_before_formula,
    drift_exact,
    drift_natural_formula,
    girsanov_transform,
    sh_measure_check,
    stochastic_exponential,
)
from .representation import (
    MrpCertificate,
    RepresentationTriple,
    fragment_mrp_check,
    honest_full_representation,
    immersion_check,
    integrand_solver_before,
    mrp_check,
    theorem_harness,
)

__version__ = "0.1.0"
