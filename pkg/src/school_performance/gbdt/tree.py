"""Regression trees grown on second-order logistic-loss statistics.

Features are one-hot and therefore binary: every split sends rows with
feature value 0 to the left child and value 1 to the right child.
"""
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Optional, Tuple

import numpy as np

from school_performance.utils.defence import _check_same_length

if TYPE_CHECKING:
    from school_performance.gbdt.booster import BoostConfig

# floating-point zero guard on split gains
MIN_SPLIT_GAIN = 1e-12


@dataclass(frozen=True)
class TreeNode:
    """A leaf, or an internal node splitting on one binary feature.

    Parameters
    ----------
    weight : float
        Leaf score. Internal nodes keep the score they would have had as a
        leaf; it is not used for prediction.
    feature_index : int, optional
        Split feature, None for a leaf.
    left : TreeNode, optional
        Child taken when the feature value is 0.
    right : TreeNode, optional
        Child taken when the feature value is 1.
    gain : float
        Realised split gain, 0 for a leaf.
    cover : float
        Sum of hessians of the rows reaching the node.

    """

    weight: float = 0.0
    feature_index: Optional[int] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    gain: float = 0.0
    cover: float = 0.0

    def __post_init__(self):
        children = (self.left is None, self.right is None)
        if self.feature_index is None and children != (True, True):
            raise ValueError("A leaf must not have children.")
        if self.feature_index is not None:
            if children != (False, False):
                raise ValueError("An internal node needs both children.")
            if self.feature_index < 0:
                raise ValueError(
                    f"`feature_index` must be >= 0. Got {self.feature_index}"
                )

    @property
    def is_leaf(self) -> bool:
        """True when the node has no split."""
        return self.feature_index is None

    def depth(self) -> int:
        """Number of split levels below this node."""
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def iter_nodes(self) -> Iterator["TreeNode"]:
        """Walk the tree depth first, node before left before right."""
        yield self
        if not self.is_leaf:
            yield from self.left.iter_nodes()
            yield from self.right.iter_nodes()

    def n_splits(self) -> int:
        """Number of internal nodes."""
        return sum(not n.is_leaf for n in self.iter_nodes())


def grad_hess(
    predictions: np.ndarray, labels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of the logistic loss w.r.t. the logit.

    Parameters
    ----------
    predictions : np.ndarray
        Current probabilities p.
    labels : np.ndarray
        Binary labels y.

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
        g = p - y and h = p * (1 - p).

    Raises
    ------
    ValueError
        Lengths differ or a probability lies outside [0, 1].

    Examples
    --------
    >>> g, h = grad_hess([0.5], [1])
    >>> float(g[0]), float(h[0])
    (-0.5, 0.25)

    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _check_same_length(p, y, "predictions", "labels")
    if not ((p >= 0.0) & (p <= 1.0)).all():
        raise ValueError("`predictions` must lie within [0, 1].")
    return p - y, p * (1.0 - p)


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    """Optimal leaf score -G / (H + lambda).

    Raises
    ------
    ValueError
        H + lambda is not positive.

    Examples
    --------
    >>> leaf_weight(2.0, 4.0, 1.0)
    -0.4

    """
    denom = H + reg_lambda
    if not denom > 0:
        raise ValueError(
            f"Leaf weight undefined: H + lambda must be > 0. Got {denom}"
        )
    return -G / denom


def split_gain(
    G_L: float,
    H_L: float,
    G_R: float,
    H_R: float,
    reg_lambda: float,
    gamma: float,
) -> float:
    """Loss reduction of splitting a node into two children.

    Computes 0.5 * [G_L^2 / (H_L + lambda) + G_R^2 / (H_R + lambda)
    - (G_L + G_R)^2 / (H_L + H_R + lambda)] - gamma.

    Raises
    ------
    ValueError
        A child has H + lambda <= 0.

    Examples
    --------
    >>> split_gain(-2.0, 2.0, 2.0, 2.0, reg_lambda=0.0, gamma=0.0)
    2.0

    """
    if not (H_L + reg_lambda > 0 and H_R + reg_lambda > 0):
        raise ValueError("Split gain undefined: H + lambda must be > 0.")
    G, H = G_L + G_R, H_L + H_R
    return (
        0.5
        * (
            G_L**2 / (H_L + reg_lambda)
            + G_R**2 / (H_R + reg_lambda)
            - G**2 / (H + reg_lambda)
        )
        - gamma
    )


def _best_split(
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    config: "BoostConfig",
) -> Tuple[int, float]:
    """Max-gain feature over all binary splits of a node's rows.

    Returns (feature index, gain); ties resolve to the smallest index and
    the gain is -inf when no feature gives an admissible split.
    """
    lam = config.reg_lambda
    right = x.astype(np.float64)
    left = 1.0 - right
    G_R, H_R = g @ right, h @ right
    G_L, H_L = g @ left, h @ left
    n_right = right.sum(axis=0)
    n_left = len(g) - n_right
    G, H = g.sum(), h.sum()

    admissible = (
        (n_left > 0)
        & (n_right > 0)
        & (H_L >= config.min_child_weight)
        & (H_R >= config.min_child_weight)
        & (H_L + lam > 0)
        & (H_R + lam > 0)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = (
            0.5
            * (
                G_L**2 / (H_L + lam)
                + G_R**2 / (H_R + lam)
                - G**2 / (H + lam)
            )
            - config.gamma
        )
    gains = np.where(admissible, gains, -np.inf)
    best = int(np.argmax(gains))
    return best, float(gains[best])


def _grow(
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    depth: int,
    config: "BoostConfig",
) -> TreeNode:
    if rows.size == 0:
        return TreeNode(weight=0.0)
    g_node, h_node = g[rows], h[rows]
    G, H = float(g_node.sum()), float(h_node.sum())
    # no curvature: the node cannot move the loss
    if H + config.reg_lambda > 0:
        weight = leaf_weight(G, H, config.reg_lambda)
    else:
        weight = 0.0
    if depth >= config.max_depth:
        return TreeNode(weight=weight, cover=H)

    x_node = x[rows]
    feature, gain = _best_split(x_node, g_node, h_node, config)
    if not gain > MIN_SPLIT_GAIN:
        return TreeNode(weight=weight, cover=H)
    goes_right = x_node[:, feature] == 1
    return TreeNode(
        weight=weight,
        feature_index=feature,
        left=_grow(x, g, h, rows[~goes_right], depth + 1, config),
        right=_grow(x, g, h, rows[goes_right], depth + 1, config),
        gain=gain,
        cover=H,
    )


def build_tree(features, g, h, config: "BoostConfig") -> TreeNode:
    """Greedily grow one tree, depth first.

    At every node each feature's 0/1 split is scored with `split_gain()`.
    The node splits on the best feature when its gain exceeds
    MIN_SPLIT_GAIN, both children are non-empty and each child's hessian
    sum reaches `config.min_child_weight`; otherwise it becomes a leaf
    with `leaf_weight()`.

    Parameters
    ----------
    features : array-like
        Binary matrix, rows by features.
    g : array-like
        Per-row gradients.
    h : array-like
        Per-row hessians.
    config : BoostConfig
        Supplies max_depth, reg_lambda, gamma and min_child_weight.

    Returns
    -------
    TreeNode
        Root of the grown tree. No rows gives a single zero leaf.

    Raises
    ------
    ValueError
        `features` is not a 2-d matrix or lengths differ.

    """
    x = np.asarray(features)
    if x.ndim != 2:
        raise ValueError(f"`features` expected a 2-d matrix. Got {x.ndim}")
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    _check_same_length(x, g, "features", "g")
    _check_same_length(g, h, "g", "h")
    return _grow(x, g, h, np.arange(len(g)), 0, config)


def _predict_tree(node: TreeNode, x: np.ndarray) -> np.ndarray:
    """Leaf score reached by every row of `x`."""
    out = np.empty(len(x), dtype=np.float64)
    pending = [(node, np.arange(len(x)))]
    while pending:
        current, rows = pending.pop()
        if current.is_leaf:
            out[rows] = current.weight
            continue
        goes_right = x[rows, current.feature_index] == 1
        pending.append((current.left, rows[~goes_right]))
        pending.append((current.right, rows[goes_right]))
    return out
