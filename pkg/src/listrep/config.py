"""Numerical tolerances and budgets shared across the package."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # probability rows must sum to one within this
    row_sum: float = 1e-9
    # value/occupancy agreement between independent computations
    value_match: float = 1e-9
    # binary search precision for critical thresholds
    crit_precision: float = 1e-9
    crit_iterations: int = 40
    # tests never probe closer than this to a critical threshold
    crit_probe: float = 1e-6
    # brute-force enumeration cap on |A|^(|S|H)
    enumeration_cap: int = 2**20
    # maximum episodes (or generative samples) a single batch may request
    sample_budget: int = 10**7


TOL = Tolerances()
