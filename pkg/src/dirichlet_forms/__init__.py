"""Dirichlet distributions on finite and truncated infinite simplices, their
two Dirichlet forms, and Monte Carlo certifiers for (weighted, super)
Poincare inequalities."""

from .simplex import (
    AlphaSequence,
    CylinderFunction,
    DirichletParams,
    InfiniteDirichletParams,
    SimplexPoint,
    WeightSequence,
    monomial_family,
)
from .measures import MonteCarloEstimate, SplitMeasures
from .forms import FormSpec
from .inequalities import BetaBoundSpec, CertificateReport

__all__ = [
    "AlphaSequence",
    "BetaBoundSpec",
    "CertificateReport",
    "CylinderFunction",
    "DirichletParams",
    "FormSpec",
    "InfiniteDirichletParams",
    "MonteCarloEstimate",
    "SimplexPoint",
    "SplitMeasures",
    "WeightSequence",
    "monomial_family",
]
