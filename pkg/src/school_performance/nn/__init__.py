"""`school_performance.nn`.

Dense binary classifier trained with manual backpropagation and FedProx.
"""
