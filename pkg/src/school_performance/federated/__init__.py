"""`school_performance.federated`.

Server-side orchestration of federated training rounds.
"""
