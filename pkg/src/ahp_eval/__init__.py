"""Score open-ended answers with multi-criteria AHP over pairwise judgments."""

from __future__ import annotations

from ._kernels import USING_NUMBA
from .ahp import (
    ComparisonTensor,
    CriterionScoreMatrix,
    FinalScores,
    JudgmentValue,
    PairwiseMatrix,
    WeightVector,
    aggregate_scores,
    build_comparison_matrix,
    build_preference_matrix,
    consistency_ratio,
    criteria_weights,
    criterion_scores,
    judgment_to_value,
    principal_eigenvector,
    score_tensor,
)
from .backends import CountingBackend, FixtureBackend, LLMBackend, LLMConfig, OracleBackend, OracleProfile
from .cache import JudgmentCache
from .criteria import CriterionSet, generate_criteria, load_criteria
from .dataset import GroundTruth, Response, ResponseSet, load_dataset, save_dataset
from .judge import JudgeRecord, JudgeRequest, compare, parse_judgment
from .metrics import concordance_index, criteria_ablation, judgment_distribution, soft_concordance_index
from .pipeline import EvaluationConfig, enumerate_pairs, resume, run_evaluation
from .scale import JudgmentScale

__version__ = "0.1.0"
