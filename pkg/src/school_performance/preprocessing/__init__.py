"""`school_performance.preprocessing`.

Loading, cleaning, encoding and partitioning of student microdata.
"""
