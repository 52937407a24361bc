"""Hawkes order flows, propagator prices and metaorder impact.

Modules
-------
kernel       excitation kernels, Fourier transforms, near-critical families
resolvent    resolvent of the kernel and the martingale propagator
simulation   thinning and branching simulation of buy/sell flows
price        propagator and anticipation prices, martingale drift test
impact       metaorder impact curves and their near-critical limit
longmemory   increment covariance: Fourier inversion, fBm limit, estimation
manipulation round-trip costs and indifference prices
"""
__version__ = "0.1.0"

from .errors import (AccuracyWarning, AssumptionError, ConfigurationError, CriticalityError,
                     DomainError, HawkesImpactError, HorizonError, InsufficientDataError,
                     MissingParameterError, NumericalError)
from .kernel import KernelSpec, NearCriticalFamily, make_near_critical
from .resolvent import (PropagatorKernel, ResolventGrid, compute_resolvent,
                        propagator_closed_form, propagator_from_resolvent)
from .simulation import EventStream, MarketConfig, Metaorder, simulate_branching, simulate_thinning

__all__ = [
    "AccuracyWarning", "AssumptionError", "ConfigurationError", "CriticalityError", "DomainError",
    "EventStream", "HawkesImpactError", "HorizonError", "InsufficientDataError", "KernelSpec",
    "MarketConfig", "Metaorder", "MissingParameterError", "NearCriticalFamily", "NumericalError",
    "PropagatorKernel", "ResolventGrid", "compute_resolvent", "make_near_critical",
    "propagator_closed_form", "propagator_from_resolvent", "simulate_branching",
    "simulate_thinning",
]
