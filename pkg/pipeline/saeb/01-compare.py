"""Run the centralized vs federated comparison for the toml-specified data.

1. read or synthesise the microdata
2. preprocess: clean, impute, one-hot encode
3. stratified split and school partitioning
4. fit and evaluate the boosted-tree benchmark
5. run the FedProx simulation over the school clients
6. report the accuracy gap
"""
import time

from pyprojroot import here

from school_performance.cli import (
    ComparisonReport,
    cmd_centralized,
    cmd_federated,
    cmd_preprocess,
    format_report,
    prepare_data,
)
from school_performance.config import load_config
from school_performance.utils.io import write_frame

CONFIG = load_config(here("pipeline/saeb/config/experiment.toml"))
PROFILING = CONFIG.profiling
OUT_DIR = CONFIG.out_dir

pre_data = time.perf_counter()
data = prepare_data(CONFIG, partition=True)
post_data = time.perf_counter()
if PROFILING:
    print(f"Data preparation in {post_data - pre_data:0.4f} seconds")

cmd_preprocess(CONFIG, data)

pre_central = time.perf_counter()
central = cmd_centralized(CONFIG, data)
post_central = time.perf_counter()
if PROFILING:
    print(f"Centralized arm in {post_central - pre_central:0.4f} seconds")

federated = cmd_federated(CONFIG, data)
post_fed = time.perf_counter()
if PROFILING:
    print(f"Federated arm in {post_fed - post_central:0.4f} seconds")

report = ComparisonReport.from_results(
    central,
    federated,
    {
        "data": post_data - pre_data,
        "centralized": post_central - pre_central,
        "federated": post_fed - post_central,
    },
)
write_frame(report.to_frame(), OUT_DIR / "comparison_report.csv")
print(format_report(report))
if PROFILING:
    print(f"Pipeline execution in {post_fed - pre_data:0.4f}")
