"""Fleet-level aggregation of site-level probabilistic generation forecasts.

Site forecasts arrive as quantile sets; a Gaussian copula fitted to the
probit of historical PIT values supplies the cross-site dependence, and
Monte-Carlo sampling of the joint distribution yields a calibrated
fleet-level forecast. Includes independence and quantile-sum baselines plus
a PICP/AIW evaluation harness.
"""

__version__ = "0.1.0"

from .marginals import (  # noqa: F401
    QuantileGrid,
    QuantileForecast,
    ForecastPanel,
    repair_monotone,
    cdf_eval,
    quantile_eval,
)
from .gaussian import (  # noqa: F401
    CholeskyFactor,
    std_normal_cdf,
    std_normal_inv,
    cholesky,
    sample_mvn,
    substream_seed,
)
from .copula import (  # noqa: F401
    ActualsPanel,
    CopulaModel,
    fit_copula,
    pit_matrix,
    probit_matrix,
    identity_model,
    model_from_sigma,
    save_model,
    load_model,
)
from .aggregate import (  # noqa: F401
    FleetSampleSet,
    QuantileAggregate,
    copula_aggregate,
    indep_aggregate,
    qsum_aggregate,
    empirical_quantile,
    prediction_interval,
)
from .metrics import (  # noqa: F401
    IntervalRecord,
    EvalReport,
    picp,
    aiw,
    hourly_report,
)
