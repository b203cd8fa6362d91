"""Revenue-driven edge caching: workload model, demand prediction and K-slot planning."""
from .core import (CachePlan, DemandEstimate, RequestTrace, RevenueParams, SlotOutcome,
                   average_revenue, cache_hit_ratio, expected_total_revenue,
                   realized_slot_revenue)

__all__ = ["CachePlan", "DemandEstimate", "RequestTrace", "RevenueParams", "SlotOutcome",
           "average_revenue", "cache_hit_ratio", "expected_total_revenue",
           "realized_slot_revenue"]
__version__ = "0.1.0"
