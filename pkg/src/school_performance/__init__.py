"""`school_performance`.

See `README.md` for more details.
"""
