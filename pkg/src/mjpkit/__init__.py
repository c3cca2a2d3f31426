"""mjpkit: Markov jump process kinetics - simulation, bridges, inference.

The package covers the full pipeline for stochastic kinetic models:

* exact forward simulation (Gillespie's direct method) and complete-data
  likelihoods (:mod:`mjpkit.simulate`);
* Gaussian transition approximations - one-step Euler-Maruyama of the
  chemical Langevin diffusion and the linear noise approximation
  (:mod:`mjpkit.approx`);
* samplers for trajectories conditioned on an end-point observation:
  myopic importance sampling, conditioned-hazard importance sampling, and
  a bridge particle filter (:mod:`mjpkit.bridge`);
* sequential filtering and particle marginal Metropolis-Hastings over log
  rate constants (:mod:`mjpkit.inference`);
* built-in example models and exact truncated-CTMC oracles
  (:mod:`mjpkit.models`);
* a model-file format and CLI (:mod:`mjpkit.modelfile`, :mod:`mjpkit.cli`).
"""

__version__ = "0.1.0"

from .approx import GaussianApprox, LnaSolution, cle_predictive, lna_integrate, lna_predictive
from .bridge import (
    BridgeConfig,
    ParticleEnsemble,
    bridge_pf,
    conditioned_hazard,
    conditioned_is,
    conditioned_is_logweight,
    ess,
    myopic_is,
    resample_multinomial,
    resample_systematic,
    sample_conditioned_path,
)
from .errors import InvariantViolation, NumericalFailure
from .inference import (
    ObservationSeries,
    PmmhChain,
    Prior,
    chain_ess,
    estimate_tau2,
    pmmh,
    run_filter,
    sequence_ess,
)
from .models import (
    TruncatedCtmc,
    birth_death,
    ctmc_transition,
    distribution_quantile,
    hmm_loglik,
    lotka_volterra,
    motility,
    transition_distribution,
)
from .network import (
    ReactionNetwork,
    State,
    apply_reaction,
    evaluate_hazards,
    total_hazard,
)
from .observe import ObservationModel, error_free_observation, gaussian_loglik
from .rng import RngStream
from .simulate import (
    Trajectory,
    complete_data_loglik,
    simulate,
    state_at,
    trajectory_csv,
    write_trajectory_csv,
)

__all__ = [
    "BridgeConfig",
    "GaussianApprox",
    "InvariantViolation",
    "LnaSolution",
    "NumericalFailure",
    "ObservationModel",
    "ObservationSeries",
    "ParticleEnsemble",
    "PmmhChain",
    "Prior",
    "ReactionNetwork",
    "RngStream",
    "State",
    "Trajectory",
    "TruncatedCtmc",
    "apply_reaction",
    "birth_death",
    "bridge_pf",
    "chain_ess",
    "cle_predictive",
    "complete_data_loglik",
    "conditioned_hazard",
    "conditioned_is",
    "conditioned_is_logweight",
    "ctmc_transition",
    "distribution_quantile",
    "error_free_observation",
    "ess",
    "estimate_tau2",
    "evaluate_hazards",
    "gaussian_loglik",
    "hmm_loglik",
    "lna_integrate",
    "lna_predictive",
    "lotka_volterra",
    "motility",
    "myopic_is",
    "pmmh",
    "resample_multinomial",
    "resample_systematic",
    "run_filter",
    "sample_conditioned_path",
    "sequence_ess",
    "simulate",
    "state_at",
    "total_hazard",
    "trajectory_csv",
    "transition_distribution",
    "write_trajectory_csv",
]
