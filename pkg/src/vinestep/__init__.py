"""Stepwise estimation for high-dimensional vine copulas.

Subpackages cover pair-copula primitives, vine tree structures, the joint
model (simulation, pseudo-data, scores), stepwise maximum-likelihood
fitting, analytic score differentiation, the estimating-function
diagnostics used to certify asymptotic regimes, and the simulation-study
driver behind the command line interface.
"""

from vinestep.paircop import FamilyTag, PairCopula
from vinestep.vinestruct import Edge, RVineStructure, build_cvine, build_dvine
from vinestep.vinemodel import ThetaModelSpec, VineModel

__all__ = [
    "Edge",
    "FamilyTag",
    "PairCopula",
    "RVineStructure",
    "ThetaModelSpec",
    "VineModel",
    "build_cvine",
    "build_dvine",
]

__version__ = "0.1.0"
