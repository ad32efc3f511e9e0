"""Latent driver-trait inference and personalized safety-interface decisions.

The pipeline has four stages, one module each:

- :mod:`driverlatent.simulator` builds synthetic driver cohorts and lap
  trajectories with randomized yellow-light onsets and optional warning
  interfaces.
- :mod:`driverlatent.snippets` turns trajectories into fixed-length
  training windows, behavior statistics, and per-subject decision targets.
- :mod:`driverlatent.encoder` trains the contrastive recurrent encoder
  that maps a driving-history window to a 2-D latent trait vector.
- :mod:`driverlatent.svr` and :mod:`driverlatent.evaluate` fit the
  epsilon-SVR decision model on the latents and score it with
  leave-one-out cross-validation.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config  # noqa: F401
from .simulator import (  # noqa: F401
    DriverParams,
    FactorVector,
    HmiConfig,
    HmiTrigger,
    HmiType,
    LightState,
    Scenario,
    Trajectory,
    generate_dataset,
    go_probability,
    sample_cohort,
    simulate_lap,
)
from .snippets import (  # noqa: F401
    BehaviorStats,
    DecisionTarget,
    Snippet,
    batch_normalize_factors,
    decision_targets,
    extract_snippets,
    filter_min_exposure,
    yellow_speed_stats,
)
from .encoder import (  # noqa: F401
    EncoderModel,
    LatentPoint,
    encode,
    grad_check,
    load_model,
    loss_contrastive,
    loss_kl,
    loss_reconstruction,
    loss_total,
    save_model,
    train,
    windowed_average_latent,
)
from .svr import HmiDecision, SvrModel, decide, fit_svr, kernel_poly3, predict  # noqa: F401
from .evaluate import (  # noqa: F401
    EvalReport,
    FoldResult,
    balanced_accuracy,
    baseline_rules,
    cohens_kappa,
    correlation_report,
    loocv,
    normalized_kl,
    policy_speed,
    sequential_stream_eval,
)
