"""Diffusion schedules, traversal costs, and schedule optimisation.

The toolkit covers the full loop at desk scale: analytic Gaussian-mixture
targets with closed-form diffused scores, a small learned score network with
hand-written reverse-mode gradients, Monte-Carlo estimators of incremental
traversal costs, geodesic reparametrisation of discretisation schedules, and
samplers/metrics/CLI to run the experiments end to end.
"""

__version__ = "0.1.0"

from .schedules import (
    NoiseSchedule,
    VPLinearSchedule,
    VPCosineSchedule,
    VESigmaSchedule,
    DiscretisationSchedule,
    baseline_schedule,
    uniform_grid,
)
from .targets import GmmTarget, DiffusedGmm, cantor_target, bimodal_target
from .scorenet import ScoreNetwork, AdamState, adam_step, dsm_loss, dsm_loss_value
from .sources import OracleScore, LearnedScore, hutchinson_trace_grad
from .costs import (
    CostProfile,
    corrector_cost,
    predictor_cost,
    profile,
    local_cost,
)
from .schedule_opt import (
    FlatPathError,
    MonotoneInterpolant,
    ScheduleOptimizer,
    length_energy,
    mix_schedules,
    update_schedule,
)
from .samplers import SamplerConfig, langevin_corrector, sample_path
from .training import AdaptiveTrainer, TrainRun
from .metrics import EvalReport, detect_modes, evaluate, wasserstein1

__all__ = [
    "AdamState",
    "AdaptiveTrainer",
    "CostProfile",
    "DiffusedGmm",
    "DiscretisationSchedule",
    "EvalReport",
    "FlatPathError",
    "GmmTarget",
    "LearnedScore",
    "MonotoneInterpolant",
    "NoiseSchedule",
    "OracleScore",
    "SamplerConfig",
    "ScheduleOptimizer",
    "ScoreNetwork",
    "TrainRun",
    "VESigmaSchedule",
    "VPCosineSchedule",
    "VPLinearSchedule",
    "adam_step",
    "baseline_schedule",
    "bimodal_target",
    "cantor_target",
    "corrector_cost",
    "detect_modes",
    "dsm_loss",
    "dsm_loss_value",
    "evaluate",
    "hutchinson_trace_grad",
    "langevin_corrector",
    "length_energy",
    "local_cost",
    "mix_schedules",
    "predictor_cost",
    "profile",
    "sample_path",
    "uniform_grid",
    "update_schedule",
    "wasserstein1",
]
