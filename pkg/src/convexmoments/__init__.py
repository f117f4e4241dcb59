"""Numerical checks of moment and small-ball inequalities for
(-1/r)-concave random vectors: samplers with exact oracles, robust moment
estimators, level-set geometry and budgeted theorem checks."""

from .distributions import DistributionSpec, make_distribution, sample
from .verify import CheckReport

__all__ = ["CheckReport", "DistributionSpec", "make_distribution", "sample"]
__version__ = "0.1.0"
