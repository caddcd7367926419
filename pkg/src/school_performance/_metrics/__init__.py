"""Internal helpers for `school_performance.metrics`."""
