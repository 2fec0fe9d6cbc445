from .mdp_policy import StagePolicy
from .mdp_embedding import FeatureMap, FiniteModel, KernelEmbedding, policy_embedding
from .mdp_fenchel import (
    ConvexOracle,
    make_distance_to_ball_oracle,
    make_distance_to_point_oracle,
    make_linear_oracle,
)
from .mdp_dualopt import DualState, StepSchedule, dual_step, project_cone_slab
from .mdp_knr import KnrEstimate, KnrTruth, StateActionFeature, StateGrid
from .mdp_lowrank import ModelClass, StageDataset
from .mdp_planner import LinearCost, PlanResult, plan_known_model, value_iteration
from .mdp_vpdpo import (
    VPDPO,
    ExperimentSpec,
    GroundTruth,
    KnownEnvironment,
    KnrEnvironment,
    LowRankEnvironment,
    ground_truth_solve,
    run,
)
from .presets import PRESETS, get_preset
from .config import load_config
from .harness import cli_run, main

__all__ = [
    "StagePolicy",
    "FeatureMap",
    "FiniteModel",
    "KernelEmbedding",
    "policy_embedding",
    "ConvexOracle",
    "make_distance_to_ball_oracle",
    "make_distance_to_point_oracle",
    "make_linear_oracle",
    "DualState",
    "StepSchedule",
    "dual_step",
    "project_cone_slab",
    "KnrEstimate",
    "KnrTruth",
    "StateActionFeature",
    "StateGrid",
    "ModelClass",
    "StageDataset",
    "LinearCost",
    "PlanResult",
    "plan_known_model",
    "value_iteration",
    "VPDPO",
    "ExperimentSpec",
    "GroundTruth",
    "KnownEnvironment",
    "KnrEnvironment",
    "LowRankEnvironment",
    "ground_truth_solve",
    "run",
    "PRESETS",
    "get_preset",
    "load_config",
    "cli_run",
    "main",
]
