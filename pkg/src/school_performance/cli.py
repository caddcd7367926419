"""Command line harness for the centralized vs federated experiment.

Verbs::

    school-performance preprocess   --config <toml>
    school-performance centralized  --config <toml>
    school-performance federated    --config <toml> [--rounds --mu --fedavg]
    school-performance compare      --config <toml>
    school-performance synthesize   --config <toml>

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
error. Every command is a pure function of its configuration: the CSV and
model files it writes are byte-identical across reruns. Only the text
report's runtime lines vary.
"""
import argparse
import pathlib
import sys
import time
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from school_performance.config import ExperimentConfig, load_config
from school_performance.federated.server import (
    RoundRecord,
    best_round,
    history_to_frame,
    predict_global,
    run_federation,
)
from school_performance.gbdt import booster
from school_performance.metrics import (
    RocCurve,
    RoundMetrics,
    classification_report,
    confusion,
    evaluate,
    roc_auc,
    roc_to_frame,
)
from school_performance.preprocessing.dataset import (
    ClientPartition,
    Dataset,
    SplitDataset,
)
from school_performance.preprocessing.pipeline import (
    partition_by_school,
    preprocess,
    stratified_split,
)
from school_performance.preprocessing.synthetic import generate_synthetic
from school_performance.utils.constants import PROCESSED_FILENAME
from school_performance.utils.io import (
    read_raw_table,
    write_frame,
    write_processed,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

DEFAULT_CONFIG = "pipeline/saeb/config/experiment.toml"
SYNTHETIC_FILENAME = "synthetic_microdata.csv"
_EXPECTED_ERRORS = (
    FileNotFoundError,
    IndexError,
    KeyError,
    TypeError,
    ValueError,
)


@dataclass(frozen=True)
class PreparedData:
    """Output of the data phase shared by every modelling command."""

    dataset: Dataset
    threshold: float
    split: Optional[SplitDataset] = None
    clients: Optional[List[ClientPartition]] = None


@dataclass(frozen=True)
class CentralizedResult:
    """Fitted benchmark and its test-set evaluation."""

    model: booster.BoostedEnsemble
    metrics: RoundMetrics
    report: pd.DataFrame
    roc: Optional[RocCurve]
    importance: list


@dataclass(frozen=True)
class FederatedResult:
    """Round history and the evaluation of the final global model."""

    history: List[RoundRecord]
    peak_round: int
    peak_accuracy: float
    final: RoundMetrics
    report: pd.DataFrame
    roc: Optional[RocCurve]


@dataclass(frozen=True)
class ComparisonReport:
    """Centralized vs federated outcome on one shared split.

    `gap_pp` is 100 * (centralized accuracy - federated peak accuracy), in
    percentage points. `runtimes` holds wall-clock seconds per phase and is
    the only field that varies between identical runs.
    """

    centralized: RoundMetrics
    federated_final: RoundMetrics
    peak_round: int
    peak_accuracy: float
    gap_pp: float
    runtimes: Dict[str, float]

    @classmethod
    def from_results(
        cls,
        central: CentralizedResult,
        federated: FederatedResult,
        runtimes: Dict[str, float],
    ) -> "ComparisonReport":
        """Assemble the report, deriving the accuracy gap."""
        return cls(
            centralized=central.metrics,
            federated_final=federated.final,
            peak_round=federated.peak_round,
            peak_accuracy=federated.peak_accuracy,
            gap_pp=100.0
            * (central.metrics.accuracy - federated.peak_accuracy),
            runtimes=dict(runtimes),
        )

    def to_frame(self) -> pd.DataFrame:
        """Deterministic quantity/value table, runtimes excluded."""
        rows = [
            (f"centralized_{k}", v)
            for k, v in self.centralized.to_dict().items()
        ]
        rows += [
            (f"federated_final_{k}", v)
            for k, v in self.federated_final.to_dict().items()
        ]
        rows += [
            ("federated_peak_round", self.peak_round),
            ("federated_peak_accuracy", self.peak_accuracy),
            ("gap_pp", self.gap_pp),
        ]
        return pd.DataFrame(rows, columns=["quantity", "value"])


def _pct(value: float) -> str:
    return f"{100 * value:.2f}%"


def _metric_line(metrics: RoundMetrics) -> str:
    auc = "n/a" if metrics.auc is None else f"{metrics.auc:.4f}"
    return (
        f"accuracy {_pct(metrics.accuracy)} | precision "
        f"{_pct(metrics.precision)} | recall {_pct(metrics.recall)} | "
        f"F1 {_pct(metrics.f1)} | AUC {auc}"
    )


def format_report(report: ComparisonReport) -> str:
    """Human-readable comparison, percentages to 2 decimal places."""
    lines = [
        "Centralized vs federated comparison",
        "===================================",
        "1. How well does the centralized benchmark predict above-average "
        "performance?",
        f"   {_metric_line(report.centralized)}",
        "2. How close does federated training get without pooling the data?",
        f"   peak accuracy {_pct(report.peak_accuracy)} in round "
        f"{report.peak_round}",
        f"   final round: {_metric_line(report.federated_final)}",
        "3. What does keeping the data at the schools cost?",
        f"   accuracy gap {report.gap_pp:.2f} percentage points",
    ]
    if report.runtimes:
        lines.append("Runtime (varies between runs):")
        lines += [
            f"   {k}: {v:0.4f} seconds" for k, v in report.runtimes.items()
        ]
    return "\n".join(lines)


def _profile(config: ExperimentConfig, label: str, start: float) -> float:
    now = time.perf_counter()
    if config.profiling:
        print(f"{label} in {now - start:0.4f} seconds")
    return now


def load_raw(config: ExperimentConfig) -> pd.DataFrame:
    """Read the configured microdata file or generate synthetic data."""
    if config.data_path is not None:
        return read_raw_table(
            config.data_path,
            config.pipeline,
            delimiter=config.delimiter,
            chunk_size=config.chunk_size,
        )
    s = config.synthetic
    return generate_synthetic(
        schools=s.schools,
        rows_per_school=s.rows_per_school,
        heterogeneity=s.heterogeneity,
        seed=s.seed,
        noise=s.noise,
        missing_rate=s.missing_rate,
    )


def prepare_data(
    config: ExperimentConfig, split: bool = True, partition: bool = False
) -> PreparedData:
    """Load, clean and encode the data, then split and partition it.

    Parameters
    ----------
    config : ExperimentConfig
        Experiment settings.
    split : bool, optional
        Build the stratified train/test split, by default True.
    partition : bool, optional
        Partition the training split into school clients, by default False.
        Implies `split`.

    Returns
    -------
    PreparedData
        The dataset with its threshold, and split and clients on request.

    """
    start = time.perf_counter()
    dataset, threshold = preprocess(load_raw(config), config.pipeline)
    start = _profile(config, "preprocess", start)
    n0, n1 = dataset.class_counts()
    print(
        f"{dataset.n_rows} rows, {dataset.width} encoded features, class "
        f"balance {_pct(n0 / dataset.n_rows)} / {_pct(n1 / dataset.n_rows)} "
        f"(median threshold {threshold:.4f})"
    )
    if not (split or partition):
        return PreparedData(dataset, threshold)

    data_split = stratified_split(
        dataset, test_fraction=config.test_fraction, seed=config.split_seed
    )
    print(
        f"Stratified split: {data_split.train.n_rows} train rows, "
        f"{data_split.test.n_rows} test rows"
    )
    clients = None
    if partition:
        clients = partition_by_school(
            data_split.train,
            min_rows=config.min_rows,
            sample_size=config.clients,
            seed=config.partition_seed,
        )
        print(
            f"{len(clients)} school clients with "
            f"{sum(c.n_k for c in clients)} training rows"
        )
    _profile(config, "split", start)
    return PreparedData(dataset, threshold, data_split, clients)


def cmd_preprocess(
    config: ExperimentConfig, data: Optional[PreparedData] = None
) -> pathlib.Path:
    """Write the processed dataset and print its shape and class balance."""
    data = prepare_data(config, split=False) if data is None else data
    path = write_processed(data.dataset, config.out_dir / PROCESSED_FILENAME)
    print(f"Processed data written to {path}")
    return path


def _roc_or_none(
    scores: np.ndarray, actual: np.ndarray
) -> Optional[RocCurve]:
    if actual.min() == actual.max():
        return None
    return roc_auc(scores, actual)


def cmd_centralized(
    config: ExperimentConfig, data: Optional[PreparedData] = None
) -> CentralizedResult:
    """Fit the boosted benchmark on the training split and evaluate it.

    Writes centralized_metrics.csv, classification_report_centralized.csv,
    roc_centralized.csv, gbdt_model.txt and feature_importance.csv.
    """
    data = prepare_data(config) if data is None else data
    train, test = data.split.train, data.split.test
    start = time.perf_counter()
    model = booster.fit(train, config.boosting, progress=config.progress)
    start = _profile(config, "centralized fit", start)

    probs, labels = booster.predict(model, test.features)
    metrics = evaluate(probs, labels, test.labels)
    cm = confusion(labels, test.labels)
    report = classification_report(cm)
    roc = _roc_or_none(probs, test.labels)
    importance = booster.feature_importance(model)

    out = config.out_dir
    write_frame(
        pd.DataFrame([{**metrics.to_dict(), **asdict(cm)}]),
        out / "centralized_metrics.csv",
    )
    write_frame(report, out / "classification_report_centralized.csv")
    if roc is not None:
        write_frame(roc_to_frame(roc), out / "roc_centralized.csv")
    booster.dump_model(model, out / "gbdt_model.txt")
    write_frame(
        booster.importance_to_frame(importance, top=config.top_features),
        out / "feature_importance.csv",
    )
    print(f"Centralized benchmark: {_metric_line(metrics)}")
    print(report.to_string(index=False))
    return CentralizedResult(model, metrics, report, roc, importance)


def cmd_federated(
    config: ExperimentConfig, data: Optional[PreparedData] = None
) -> FederatedResult:
    """Run the federated simulation and evaluate its final global model.

    Writes round_history.csv, roc_federated.csv,
    classification_report_federated.csv and federated_summary.csv, plus
    per-round checkpoints when enabled. No client rows are written.

    Raises
    ------
    ValueError
        The federation is configured with zero rounds.

    """
    if config.federation.num_rounds < 1:
        raise ValueError("The federated run needs at least one round.")
    data = prepare_data(config, partition=True) if data is None else data
    test = data.split.test
    start = time.perf_counter()
    checkpoint_dir = (
        config.out_dir / "checkpoints" if config.checkpoints else None
    )
    history = run_federation(
        data.clients,
        test,
        config.federation,
        progress=config.progress,
        checkpoint_dir=checkpoint_dir,
    )
    _profile(config, "federated run", start)

    peak_round, peak_accuracy = best_round(history)
    final = history[-1]
    probs = predict_global(final.global_model, test)
    labels = (probs > 0.5).astype(np.int64)
    cm = confusion(labels, test.labels)
    report = classification_report(cm)
    roc = _roc_or_none(probs, test.labels)

    out = config.out_dir
    write_frame(history_to_frame(history), out / "round_history.csv")
    write_frame(report, out / "classification_report_federated.csv")
    if roc is not None:
        write_frame(roc_to_frame(roc), out / "roc_federated.csv")
    summary = {
        "strategy": config.federation.strategy,
        "rounds": len(history),
        "peak_round": peak_round,
        "peak_accuracy": peak_accuracy,
        **{f"final_{k}": v for k, v in final.metrics.to_dict().items()},
        **{f"final_{k}": v for k, v in asdict(cm).items()},
    }
    write_frame(pd.DataFrame([summary]), out / "federated_summary.csv")
    print(
        f"Federated ({config.federation.strategy}): peak accuracy "
        f"{_pct(peak_accuracy)} in round {peak_round}"
    )
    print(f"Final round {final.round}: {_metric_line(final.metrics)}")
    print(report.to_string(index=False))
    return FederatedResult(
        history, peak_round, peak_accuracy, final.metrics, report, roc
    )


def cmd_compare(
    config: ExperimentConfig, data: Optional[PreparedData] = None
) -> ComparisonReport:
    """Run both arms on one split and report the accuracy gap.

    Writes comparison_report.csv (deterministic) and comparison_report.txt
    (including runtimes) beside the outputs of both arms.
    """
    runtimes = {}
    start = time.perf_counter()
    if data is None:
        data = prepare_data(config, partition=True)
        runtimes["data"] = time.perf_counter() - start
        start = time.perf_counter()
    central = cmd_centralized(config, data)
    runtimes["centralized"] = time.perf_counter() - start
    start = time.perf_counter()
    federated = cmd_federated(config, data)
    runtimes["federated"] = time.perf_counter() - start

    report = ComparisonReport.from_results(central, federated, runtimes)
    write_frame(report.to_frame(), config.out_dir / "comparison_report.csv")
    text = format_report(report)
    with open(
        config.out_dir / "comparison_report.txt", "w", encoding="utf-8"
    ) as f:
        f.write(text + "\n")
    print(text)
    return report


def cmd_synthesize(config: ExperimentConfig) -> pathlib.Path:
    """Write a synthetic microdata file in the external raw schema.

    Raises
    ------
    ValueError
        The configuration has no [SYNTHETIC] section.

    """
    if config.synthetic is None:
        raise ValueError("`synthesize` needs a [SYNTHETIC] config section.")
    table = load_raw(config)
    path = write_frame(
        table, config.out_dir / SYNTHETIC_FILENAME, sep=config.delimiter
    )
    print(
        f"{len(table)} rows for {table.iloc[:, 0].nunique()} schools "
        f"written to {path}"
    )
    return path


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        default=DEFAULT_CONFIG,
        help=f"Experiment TOML file (default: {DEFAULT_CONFIG}).",
    )
    common.add_argument("--out", help="Output directory override.")
    common.add_argument(
        "--seed", type=int, help="Override every seed of the experiment."
    )
    common.add_argument("--rounds", type=int, help="Federated rounds.")
    common.add_argument("--mu", type=float, help="FedProx proximal weight.")
    common.add_argument(
        "--clients", type=int, help="Number of schools sampled as clients."
    )
    common.add_argument(
        "--min-rows",
        type=int,
        help="Minimum training rows of an eligible school.",
    )
    common.add_argument(
        "--fedavg",
        action="store_true",
        help="Train clients without the proximal term.",
    )
    common.add_argument(
        "--n-jobs", type=int, help="Concurrent client trainings per round."
    )
    common.add_argument(
        "--progress", action="store_true", help="Show progress bars."
    )

    parser = argparse.ArgumentParser(
        prog="school-performance",
        description="Centralized vs federated prediction of school "
        "performance.",
    )
    verbs = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("preprocess", "Clean and encode the microdata."),
        ("centralized", "Fit and evaluate the boosted-tree benchmark."),
        ("federated", "Run the FedProx simulation over school clients."),
        ("compare", "Run both arms on one split and report the gap."),
        ("synthesize", "Write a synthetic microdata file."),
    ):
        verbs.add_parser(name, parents=[common], help=helptext)
    return parser


def apply_overrides(
    config: ExperimentConfig, args: argparse.Namespace
) -> ExperimentConfig:
    """Apply command line flags on top of a loaded configuration."""
    if args.seed is not None:
        config = config.with_seed(args.seed)
    federation = config.federation
    if args.rounds is not None:
        federation = replace(federation, num_rounds=args.rounds)
    if args.mu is not None:
        federation = replace(federation, proximal_mu=args.mu)
    if args.fedavg:
        federation = replace(federation, strategy="fedavg")
    if args.n_jobs is not None:
        federation = replace(federation, n_jobs=args.n_jobs)
    changes = {"federation": federation}
    if args.out is not None:
        changes["out_dir"] = pathlib.Path(args.out)
    if args.clients is not None:
        changes["clients"] = args.clients
    if args.min_rows is not None:
        changes["min_rows"] = args.min_rows
    if args.progress:
        changes["progress"] = True
    return replace(config, **changes)


COMMANDS = {
    "preprocess": cmd_preprocess,
    "centralized": cmd_centralized,
    "federated": cmd_federated,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the `school-performance` command.

    Returns
    -------
    int
        The process exit code.

    """
    args = _build_parser().parse_args(argv)
    try:
        config = apply_overrides(load_config(args.config), args)
        if args.command == "synthesize" and config.synthetic is None:
            raise ValueError(
                "`synthesize` needs a [SYNTHETIC] config section."
            )
    except _EXPECTED_ERRORS as err:
        print(f"Configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "synthesize":
        try:
            cmd_synthesize(config)
        except Exception as err:
            print(f"Runtime error: {err}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    try:
        data = prepare_data(
            config,
            split=args.command != "preprocess",
            partition=args.command in ("federated", "compare"),
        )
    except (*_EXPECTED_ERRORS, pd.errors.ParserError) as err:
        print(f"Data error: {err}", file=sys.stderr)
        return EXIT_DATA

    try:
        COMMANDS[args.command](config, data)
    except Exception as err:
        print(f"Runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
