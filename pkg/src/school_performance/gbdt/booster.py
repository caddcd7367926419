"""Regularised gradient boosting for the centralized baseline.

Fits an additive ensemble of `TreeNode` trees to the logistic loss; the
model's probability for a row is sigmoid(base_score + sum(eta * tree(x))).
"""
import pathlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit
from tqdm import tqdm

from school_performance.gbdt.tree import (
    TreeNode,
    _predict_tree,
    build_tree,
    grad_hess,
)
from school_performance.nn.model import bce_loss
from school_performance.preprocessing.dataset import Dataset
from school_performance.utils.defence import (
    _check_in_range,
    _check_parent_dir_exists,
    _check_positive,
    _enforce_file_extension,
    _is_expected_filetype,
    _type_defence,
)

FORMAT_TAG = "school-performance-gbdt"
FORMAT_VERSION = "v1"
_CONFIG_FIELDS = (
    "n_trees",
    "max_depth",
    "eta",
    "reg_lambda",
    "gamma",
    "min_child_weight",
    "seed",
)


@dataclass(frozen=True)
class BoostConfig:
    """Boosting hyperparameters.

    Parameters
    ----------
    n_trees : int
        Boosting rounds, by default 100. 0 gives the prior-only model.
    max_depth : int
        Maximum tree depth, by default 6. 0 grows single leaves.
    eta : float
        Shrinkage applied to every tree, in (0, 1], by default 0.3.
    reg_lambda : float
        L2 penalty on leaf scores, by default 1.
    gamma : float
        Penalty per leaf, subtracted from every split gain, by default 0.
    min_child_weight : float
        Minimum hessian sum of a child, by default 1.
    seed : int
        Recorded with the model, by default 42. Fitting draws no random
        numbers.

    """

    n_trees: int = 100
    max_depth: int = 6
    eta: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 42

    def __post_init__(self):
        for nm in ("n_trees", "max_depth", "seed"):
            _type_defence(getattr(self, nm), nm, int)
        for nm in ("n_trees", "max_depth"):
            if getattr(self, nm) < 0:
                raise ValueError(
                    f"`{nm}` must be >= 0. Got {getattr(self, nm)}"
                )
        _check_in_range(self.eta, "eta", 0, 1, closed_low=False)
        for nm in ("reg_lambda", "gamma", "min_child_weight"):
            _check_positive(getattr(self, nm), nm, allow_zero=True)


@dataclass(frozen=True)
class BoostedEnsemble:
    """A fitted booster.

    Parameters
    ----------
    trees : tuple
        Trees in boosting order.
    base_score : float
        Initial log-odds, the logit of the training class prior.
    config : BoostConfig
        Hyperparameters used to fit.
    feature_names : tuple
        Names of the training columns, fixing the expected width.

    """

    trees: Tuple[TreeNode, ...]
    base_score: float
    config: BoostConfig
    feature_names: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        for tree in self.trees:
            for node in tree.iter_nodes():
                if (
                    not node.is_leaf
                    and node.feature_index >= self.n_features
                ):
                    raise ValueError(
                        f"Tree splits on feature {node.feature_index} but "
                        f"only {self.n_features} features are known."
                    )

    @property
    def n_features(self) -> int:
        """Width of the feature matrix the ensemble expects."""
        return len(self.feature_names)


def _margin(model: BoostedEnsemble, x: np.ndarray) -> np.ndarray:
    margin = np.full(len(x), model.base_score, dtype=np.float64)
    for tree in model.trees:
        margin = margin + model.config.eta * _predict_tree(tree, x)
    return margin


def fit(
    train: Dataset,
    config: Optional[BoostConfig] = None,
    progress: bool = False,
) -> BoostedEnsemble:
    """Fit a boosted ensemble to a training set.

    The base score is the logit of the class-1 prior. Each round computes
    gradients and hessians at the current predictions, grows a tree with
    `build_tree()` and adds it shrunk by eta.

    Parameters
    ----------
    train : Dataset
        Encoded training rows.
    config : BoostConfig, optional
        Hyperparameters, by default `BoostConfig()`.
    progress : bool, optional
        Show a tqdm progress bar with the running training loss, by default
        False.

    Returns
    -------
    BoostedEnsemble
        The fitted model.

    Raises
    ------
    ValueError
        `train` holds a single class.

    """
    _type_defence(train, "train", Dataset)
    config = BoostConfig() if config is None else config
    _type_defence(config, "config", BoostConfig)
    y = train.labels
    if y.size == 0 or y.min() == y.max():
        raise ValueError(
            "Boosting needs both classes in `train`. Got class counts "
            f"{train.class_counts()}"
        )
    prior = float(y.mean())
    base_score = float(np.log(prior / (1.0 - prior)))

    x = train.features
    margin = np.full(train.n_rows, base_score, dtype=np.float64)
    trees = []
    rounds = tqdm(range(config.n_trees), disable=not progress)
    for t in rounds:
        g, h = grad_hess(expit(margin), y)
        tree = build_tree(x, g, h, config)
        trees.append(tree)
        margin = margin + config.eta * _predict_tree(tree, x)
        if progress:
            rounds.set_description(
                f"Tree {t + 1}: train loss {bce_loss(expit(margin), y):.4f}"
            )
    return BoostedEnsemble(
        trees=tuple(trees),
        base_score=base_score,
        config=config,
        feature_names=train.feature_names,
    )


def predict(
    model: BoostedEnsemble, features
) -> Tuple[np.ndarray, np.ndarray]:
    """Class-1 probabilities and labels for a feature matrix.

    Labels are 1 where the probability is strictly greater than 0.5.

    Raises
    ------
    ValueError
        The feature width differs from the training width.

    """
    _type_defence(model, "model", BoostedEnsemble)
    x = np.asarray(features)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(
            f"`features` must have shape (rows, {model.n_features}). "
            f"Got {x.shape}"
        )
    probs = expit(_margin(model, x))
    return probs, (probs > 0.5).astype(np.int64)


def feature_importance(model: BoostedEnsemble) -> List[Tuple[str, float]]:
    """Total split gain per feature over all trees.

    Only features used in at least one split are listed, by descending
    gain then ascending feature index.
    """
    _type_defence(model, "model", BoostedEnsemble)
    totals: Dict[int, float] = {}
    for tree in model.trees:
        for node in tree.iter_nodes():
            if not node.is_leaf:
                totals[node.feature_index] = (
                    totals.get(node.feature_index, 0.0) + node.gain
                )
    ranked = sorted(totals.items(), key=lambda item: (-item[1], item[0]))
    return [(model.feature_names[j], gain) for j, gain in ranked]


def importance_to_frame(
    ranking: List[Tuple[str, float]], top: int = 15
) -> pd.DataFrame:
    """Tabulate the `top` entries of a ranking as rank, feature, gain."""
    _type_defence(top, "top", int)
    rows = ranking[:top]
    return pd.DataFrame(
        {
            "rank": list(range(1, len(rows) + 1)),
            "feature": [name for name, _ in rows],
            "gain": [gain for _, gain in rows],
        }
    )


def _g17(value: float) -> str:
    return format(float(value), ".17g")


def dump_model(
    model: BoostedEnsemble, path: Union[str, pathlib.Path]
) -> pathlib.Path:
    """Write an ensemble as a text tree dump.

    The file starts with a header (format tag, base_score, config and one
    "feature <i> <name>" line per column), then one block per tree opened by
    "booster[<k>]". Nodes are numbered depth first; internal nodes read
    "<id> <feature>:<left>,<right> gain=<g> cover=<c> weight=<w>" and
    leaves "<id> leaf:<w> cover=<c>". Reals carry 17 significant digits so
    a reloaded model predicts bit-identically.

    Returns
    -------
    pathlib.Path
        The path written to, coerced to ".txt".

    """
    _type_defence(model, "model", BoostedEnsemble)
    _check_parent_dir_exists(path, "path", create=True)
    path = _enforce_file_extension(
        path, exp_ext=".txt", default_ext=".txt", param_nm="path"
    )
    cfg = " ".join(
        f"{nm}={_g17(getattr(model.config, nm))}"
        if isinstance(getattr(model.config, nm), float)
        else f"{nm}={getattr(model.config, nm)}"
        for nm in _CONFIG_FIELDS
    )
    lines = [
        f"{FORMAT_TAG} {FORMAT_VERSION}",
        f"base_score {_g17(model.base_score)}",
        f"config {cfg}",
    ]
    lines += [f"feature {i} {nm}" for i, nm in enumerate(model.feature_names)]
    for k, tree in enumerate(model.trees):
        lines.append(f"booster[{k}]")
        ids = {id(node): i for i, node in enumerate(tree.iter_nodes())}
        for node in tree.iter_nodes():
            nid = ids[id(node)]
            if node.is_leaf:
                lines.append(
                    f"{nid} leaf:{_g17(node.weight)} cover={_g17(node.cover)}"
                )
            else:
                lines.append(
                    f"{nid} {node.feature_index}:{ids[id(node.left)]},"
                    f"{ids[id(node.right)]} gain={_g17(node.gain)} "
                    f"cover={_g17(node.cover)} weight={_g17(node.weight)}"
                )
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


def _parse_fields(tokens: List[str]) -> Dict[str, str]:
    return dict(tok.split("=", 1) for tok in tokens)


def _link(records: Dict[int, tuple], nid: int) -> TreeNode:
    kind, *rest = records[nid]
    if kind == "leaf":
        weight, cover = rest
        return TreeNode(weight=weight, cover=cover)
    feature, left, right, gain, cover, weight = rest
    return TreeNode(
        weight=weight,
        feature_index=feature,
        left=_link(records, left),
        right=_link(records, right),
        gain=gain,
        cover=cover,
    )


def _parse_tree(block: List[str], path) -> TreeNode:
    records = {}
    for line in block:
        nid, spec, *fields = line.split()
        extra = _parse_fields(fields)
        if spec.startswith("leaf:"):
            records[int(nid)] = (
                "leaf",
                float(spec[len("leaf:") :]),
                float(extra["cover"]),
            )
        else:
            feature, children = spec.split(":")
            left, right = children.split(",")
            records[int(nid)] = (
                "split",
                int(feature),
                int(left),
                int(right),
                float(extra["gain"]),
                float(extra["cover"]),
                float(extra["weight"]),
            )
    if 0 not in records:
        raise ValueError(f"{path}: tree without a root node.")
    return _link(records, 0)


def load_model(path: Union[str, pathlib.Path]) -> BoostedEnsemble:
    """Read an ensemble written by `dump_model()`.

    Raises
    ------
    FileNotFoundError
        `path` does not exist.
    ValueError
        The file is not a tree dump or is malformed.

    """
    _is_expected_filetype(path, "path", exp_ext=".txt")
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines or lines[0].split() != [FORMAT_TAG, FORMAT_VERSION]:
        raise ValueError(f"{path} is not a {FORMAT_VERSION} tree dump.")
    try:
        base_score = float(lines[1].split()[1])
        raw_cfg = _parse_fields(lines[2].split()[1:])
        config = BoostConfig(
            **{
                nm: int(raw_cfg[nm])
                if nm in ("n_trees", "max_depth", "seed")
                else float(raw_cfg[nm])
                for nm in _CONFIG_FIELDS
            }
        )
        names, cursor = [], 3
        while cursor < len(lines) and lines[cursor].startswith("feature "):
            _, idx, name = lines[cursor].split(" ", 2)
            if int(idx) != len(names):
                raise ValueError(f"{path}: feature {idx} out of order.")
            names.append(name)
            cursor += 1
        trees, block = [], None
        for line in lines[cursor:]:
            if line.startswith("booster["):
                if block is not None:
                    trees.append(_parse_tree(block, path))
                block = []
            elif block is None:
                raise ValueError(f"{path}: unexpected line {line!r}.")
            else:
                block.append(line)
        if block is not None:
            trees.append(_parse_tree(block, path))
    except (IndexError, KeyError) as err:
        raise ValueError(f"{path}: malformed tree dump ({err!r}).") from err
    return BoostedEnsemble(
        trees=tuple(trees),
        base_score=base_score,
        config=config,
        feature_names=tuple(names),
    )
