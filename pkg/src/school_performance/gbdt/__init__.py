"""`school_performance.gbdt`.

Gradient-boosted decision trees for the centralized baseline.
"""
