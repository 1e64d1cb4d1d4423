"""Greedy binary decision trees: Gini classification and second-order regression.

Split thresholds are midpoints between consecutive distinct sorted feature
values; the routing rule is `go left iff x[feature] < threshold`. Ties among
equal-gain splits break toward the lowest feature index, then lowest threshold
(guaranteed by the ascending search order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    feature: int | None = None
    threshold: float | None = None
    gain: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.value is not None


@dataclass
class Tree:
    root: TreeNode
    feature_names: tuple[str, ...]
    depth: int


def _node_depth(node: TreeNode) -> int:
    if node.is_leaf:
        return 0
    return 1 + max(_node_depth(node.left), _node_depth(node.right))


def _split_candidates(
    sorted_vals: np.ndarray, m: int, min_leaf: int
) -> np.ndarray:
    """Boolean mask over split positions i (left = first i+1 rows) that are valid."""
    valid = sorted_vals[:-1, :] != sorted_vals[1:, :]
    n_left = np.arange(1, m)[:, None]
    valid &= (n_left >= min_leaf) & ((m - n_left) >= min_leaf)
    return valid


def _pick_best(score: np.ndarray, features: np.ndarray, sorted_vals: np.ndarray):
    """First argmax over (feature, position) order; returns (feature, threshold, score)."""
    flat = score.T.reshape(-1)
    best = int(np.argmax(flat))
    best_score = flat[best]
    if not np.isfinite(best_score):
        return None
    n_pos = score.shape[0]
    f_local, pos = divmod(best, n_pos)
    feature = int(features[f_local])
    threshold = float((sorted_vals[pos, f_local] + sorted_vals[pos + 1, f_local]) / 2.0)
    return feature, threshold, float(best_score)


def _best_gini_split(X, y, idx, features, min_leaf):
    """Best Gini split for the node rows; returns (feature, threshold, gain) or None.

    gain is the mean impurity decrease over the node rows and must be > 0.
    """
    m = idx.size
    if m < 2 * min_leaf or m < 2:
        return None
    sub = X[np.ix_(idx, features)]
    order = np.argsort(sub, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(sub, order, axis=0)
    sorted_labels = y[idx][order]

    total_pos = float(sorted_labels[:, 0].sum())
    parent_cost = 2.0 * total_pos * (m - total_pos) / m

    cum_pos = np.cumsum(sorted_labels, axis=0)[:-1, :]
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    n_right = m - n_left
    pos_right = total_pos - cum_pos
    cost = 2.0 * (
        cum_pos * (n_left - cum_pos) / n_left + pos_right * (n_right - pos_right) / n_right
    )
    valid = _split_candidates(sorted_vals, m, min_leaf)
    score = np.where(valid, parent_cost - cost, -np.inf)

    picked = _pick_best(score, features, sorted_vals)
    if picked is None or picked[2] <= 0.0:
        return None
    feature, threshold, gain_total = picked
    return feature, threshold, gain_total / m


def _best_newton_split(X, g, h, idx, features, min_leaf, reg_lambda, gamma):
    """Best second-order split: gain = 0.5*(GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)) - gamma."""
    m = idx.size
    if m < 2 * min_leaf or m < 2:
        return None
    sub = X[np.ix_(idx, features)]
    order = np.argsort(sub, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(sub, order, axis=0)
    g_sorted = g[idx][order]
    h_sorted = h[idx][order]

    g_total = float(g_sorted[:, 0].sum())
    h_total = float(h_sorted[:, 0].sum())
    parent_term = g_total * g_total / (h_total + reg_lambda)

    gl = np.cumsum(g_sorted, axis=0)[:-1, :]
    hl = np.cumsum(h_sorted, axis=0)[:-1, :]
    gr = g_total - gl
    hr = h_total - hl
    gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent_term) - gamma

    valid = _split_candidates(sorted_vals, m, min_leaf)
    score = np.where(valid, gain, -np.inf)
    picked = _pick_best(score, features, sorted_vals)
    if picked is None or picked[2] <= 0.0:
        return None
    return picked


def _select_features(d: int, subset_size: int | None, rng: np.random.Generator | None) -> np.ndarray:
    if subset_size is None or subset_size >= d or rng is None:
        return np.arange(d)
    return np.sort(rng.choice(d, size=subset_size, replace=False))


def fit_classification_tree(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: tuple[str, ...],
    *,
    max_depth: int = 25,
    min_leaf: int = 1,
    feature_subset_size: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Greedy Gini tree; leaf value is the positive-class fraction.

    At each node a fresh uniform subset of feature_subset_size features is
    considered (all features when None). Stops at max_depth, min_leaf, or a
    pure node; an unsplittable node becomes a leaf with the label mean.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    d = X.shape[1]

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        m = idx.size
        pos = float(y[idx].sum())
        if depth >= max_depth or pos == 0.0 or pos == m or m < 2 * min_leaf:
            return TreeNode(value=pos / m)
        features = _select_features(d, feature_subset_size, rng)
        best = _best_gini_split(X, y, idx, features, min_leaf)
        if best is None:
            return TreeNode(value=pos / m)
        feature, threshold, gain = best
        mask = X[idx, feature] < threshold
        return TreeNode(
            feature=feature,
            threshold=threshold,
            gain=gain,
            left=build(idx[mask], depth + 1),
            right=build(idx[~mask], depth + 1),
        )

    root = build(np.arange(X.shape[0]), 0)
    return Tree(root=root, feature_names=tuple(feature_names), depth=_node_depth(root))


def fit_regression_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    feature_names: tuple[str, ...],
    *,
    max_depth: int = 2,
    min_leaf: int = 1,
    reg_lambda: float = 1.0,
    gamma: float = 0.0,
) -> Tree:
    """Second-order regression tree on gradients/hessians with Newton leaves.

    A split is accepted only when its gain is positive; leaf value is
    -G/(H + reg_lambda). The accepted gain is recorded on the node for
    importance accounting.
    """
    X = np.asarray(X, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if g.shape[0] != X.shape[0] or h.shape[0] != X.shape[0]:
        raise ValueError("g and h must align with X rows")
    if (h < 0).any():
        raise ValueError("hessians must be nonnegative")
    features = np.arange(X.shape[1])

    def leaf(idx: np.ndarray) -> TreeNode:
        value = -float(g[idx].sum()) / (float(h[idx].sum()) + reg_lambda)
        return TreeNode(value=value + 0.0)

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return leaf(idx)
        best = _best_newton_split(X, g, h, idx, features, min_leaf, reg_lambda, gamma)
        if best is None:
            return leaf(idx)
        feature, threshold, gain = best
        mask = X[idx, feature] < threshold
        return TreeNode(
            feature=feature,
            threshold=threshold,
            gain=gain,
            left=build(idx[mask], depth + 1),
            right=build(idx[~mask], depth + 1),
        )

    root = build(np.arange(X.shape[0]), 0)
    return Tree(root=root, feature_names=tuple(feature_names), depth=_node_depth(root))


def predict_tree(tree: Tree, row: np.ndarray) -> float:
    """Leaf value reached by the routing rule; a row at a threshold goes right."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (len(tree.feature_names),):
        raise ValueError(
            f"row has {row.shape} values, tree expects {len(tree.feature_names)} features"
        )
    node = tree.root
    while not node.is_leaf:
        node = node.left if row[node.feature] < node.threshold else node.right
    return float(node.value)


def predict_tree_batch(tree: Tree, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(tree.feature_names):
        raise ValueError(
            f"X has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"tree expects {len(tree.feature_names)}"
        )
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(tree.root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.value
            continue
        mask = X[idx, node.feature] < node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


def iter_internal_nodes(tree: Tree):
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        yield node
        stack.append(node.left)
        stack.append(node.right)


def tree_to_dict(tree: Tree) -> dict:
    """JSON-ready nested nodes {feature, threshold, gain, left, right} / {leaf}."""

    def encode(node: TreeNode) -> dict:
        if node.is_leaf:
            return {"leaf": node.value}
        return {
            "feature": tree.feature_names[node.feature],
            "threshold": node.threshold,
            "gain": node.gain,
            "left": encode(node.left),
            "right": encode(node.right),
        }

    return encode(tree.root)


def tree_from_dict(payload: dict, feature_names: tuple[str, ...]) -> Tree:
    index = {name: j for j, name in enumerate(feature_names)}

    def decode(obj: dict) -> TreeNode:
        if "leaf" in obj:
            return TreeNode(value=float(obj["leaf"]))
        name = obj["feature"]
        if name not in index:
            raise ValueError(f"tree references unknown feature {name!r}")
        return TreeNode(
            feature=index[name],
            threshold=float(obj["threshold"]),
            gain=obj.get("gain"),
            left=decode(obj["left"]),
            right=decode(obj["right"]),
        )

    root = decode(payload)
    return Tree(root=root, feature_names=tuple(feature_names), depth=_node_depth(root))
