"""`school_performance.utils`.

Utility methods and functions. See `README.md` for more details.
"""
