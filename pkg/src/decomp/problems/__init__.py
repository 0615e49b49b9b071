"""Problem instances for decentralized compositional minimax optimization."""

from .auroc import (
    AurocDataset,
    AurocProblem,
    AurocSample,
    auroc_score,
    bayes_auroc,
    logistic_loss,
    make_auroc,
    make_gaussian_auroc_data,
)
from .base import BestResponse, PhiGrad, ProblemConstants, ProblemInstance
from .synthetic import QuadraticProblem, TanhProblem, make_quadratic, make_tanh

__all__ = [
    "AurocDataset",
    "AurocProblem",
    "AurocSample",
    "BestResponse",
    "PhiGrad",
    "ProblemConstants",
    "ProblemInstance",
    "QuadraticProblem",
    "TanhProblem",
    "auroc_score",
    "bayes_auroc",
    "logistic_loss",
    "make_auroc",
    "make_gaussian_auroc_data",
    "make_quadratic",
    "make_tanh",
]
