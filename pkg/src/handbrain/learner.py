"""Gradient-boosted decision trees with a time-weighted focal loss.

Second-order (Newton) boosting over exact greedy axis-aligned splits, written
against desk-scale datasets: no histogram binning, no subsampling. Missing
values (NaN) are routed to whichever split side maximizes gain. Per-sample
weights exp(beta * minmax(elapsed)) scale both gradient and Hessian, so late
thinking-window samples dominate the fit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import FEATURE_COLUMNS, FeatureRow

MARGIN_CLAMP = 30.0  # keeps log(p_t) finite at saturated margins
HESSIAN_FLOOR = 1e-16  # applied where Hessians are aggregated during boosting
LEAF_CLAMP = 4.0


@dataclass(frozen=True)
class LossParams:
    gamma: float = 2.0  # focusing exponent; 0 recovers cross-entropy
    alpha: float = 0.25  # class weight
    beta: float = 1.0  # time-weight exponent; 0 disables weighting

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass(frozen=True)
class TrainParams:
    trees: int = 200
    depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 5
    reg_lambda: float = 1.0
    loss: LossParams = field(default_factory=LossParams)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def focal_terms(margin, y, lp: LossParams):
    """Loss, gradient, and Hessian of the focal loss w.r.t. the margin.

    Returns exact first/second derivatives (the Hessian floor is applied at
    the point of use in boosting, where positivity is required).
    """
    m = np.clip(np.asarray(margin, dtype=float), -MARGIN_CLAMP, MARGIN_CLAMP)
    y = np.asarray(y, dtype=float)
    p = sigmoid(m)
    p_t = np.where(y == 1, p, 1.0 - p)
    u = 1.0 - p_t
    log_pt = np.log(p_t)
    sign = np.where(y == 1, 1.0, -1.0)

    loss = -lp.alpha * u**lp.gamma * log_pt
    inner = lp.gamma * p_t * log_pt - u
    grad = sign * lp.alpha * u**lp.gamma * inner
    # d/dp_t of u^gamma * inner, then chain through dp_t/dm = sign * p_t * u
    f_prime = -lp.gamma * u ** (lp.gamma - 1.0) * inner + u**lp.gamma * (
        lp.gamma * log_pt + lp.gamma + 1.0
    )
    hess = lp.alpha * p_t * u * f_prime
    if np.ndim(margin) == 0:
        return float(loss), float(grad), float(hess)
    return loss, grad, hess


def time_weight(elapsed_norm, beta: float):
    """Per-sample weight exp(beta * t) for min-max normalized elapsed time t."""
    return np.exp(beta * np.asarray(elapsed_norm, dtype=float))


# ---------------------------------------------------------------------------
# Trees


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    missing_left: bool = True
    left: int = -1
    right: int = -1
    value: float = 0.0  # leaf log-odds increment
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class Tree:
    nodes: list

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            node = self.nodes[0]
            while not node.is_leaf:
                v = X[i, node.feature]
                if np.isnan(v):
                    node = self.nodes[node.left if node.missing_left else node.right]
                elif v <= node.threshold:
                    node = self.nodes[node.left]
                else:
                    node = self.nodes[node.right]
            out[i] = node.value
        return out


def _leaf_value(G: float, H: float, reg_lambda: float) -> float:
    return float(np.clip(-G / (H + reg_lambda), -LEAF_CLAMP, LEAF_CLAMP))


def _best_split(col, g, h, min_leaf, reg_lambda):
    """Best (gain, threshold, missing_left) for one feature column, or None."""
    nan_mask = np.isnan(col)
    finite = ~nan_mask
    n_fin = int(finite.sum())
    if n_fin < 2:
        return None
    order = np.argsort(col[finite], kind="stable")
    values = col[finite][order]
    g_sorted = g[finite][order]
    h_sorted = h[finite][order]
    G_all, H_all = g.sum(), h.sum()
    G_nan, H_nan = g[nan_mask].sum(), h[nan_mask].sum()
    n_nan = int(nan_mask.sum())

    g_cum = np.cumsum(g_sorted)[:-1]
    h_cum = np.cumsum(h_sorted)[:-1]
    counts = np.arange(1, n_fin)
    valid = values[1:] != values[:-1]  # split only between distinct values
    if not valid.any():
        return None

    parent = G_all * G_all / (H_all + reg_lambda)
    best = None
    for missing_left in (True, False):
        GL = g_cum + (G_nan if missing_left else 0.0)
        HL = h_cum + (H_nan if missing_left else 0.0)
        nL = counts + (n_nan if missing_left else 0)
        GR, HR = G_all - GL, H_all - HL
        nR = (n_fin + n_nan) - nL
        gains = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda) - parent)
        ok = valid & (nL >= min_leaf) & (nR >= min_leaf)
        if not ok.any():
            continue
        gains = np.where(ok, gains, -np.inf)
        k = int(np.argmax(gains))
        if best is None or gains[k] > best[0] + 1e-15:
            threshold = float((values[k] + values[k + 1]) / 2.0)
            best = (float(gains[k]), threshold, missing_left)
    return best


def _grow_tree(X, g, h, params: TrainParams, importance: np.ndarray) -> Tree:
    nodes: list[TreeNode] = []

    def build(idx: np.ndarray, depth: int) -> int:
        node_id = len(nodes)
        nodes.append(TreeNode())
        G, H = float(g[idx].sum()), float(h[idx].sum())
        node = nodes[node_id]
        node.value = _leaf_value(G, H, params.reg_lambda)
        if depth >= params.depth or idx.size < 2 * params.min_leaf:
            return node_id

        best = None
        for f in range(X.shape[1]):
            cand = _best_split(X[idx, f], g[idx], h[idx], params.min_leaf, params.reg_lambda)
            if cand and (best is None or cand[0] > best[1][0] + 1e-15):
                best = (f, cand)
        if best is None or best[1][0] <= 1e-12:
            return node_id

        f, (gain, threshold, missing_left) = best
        col = X[idx, f]
        nan_mask = np.isnan(col)
        go_left = (col <= threshold) | (nan_mask if missing_left else np.zeros_like(nan_mask))
        node.feature = f
        node.threshold = threshold
        node.missing_left = missing_left
        node.gain = gain
        importance[f] += gain
        node.left = build(idx[go_left], depth + 1)
        node.right = build(idx[~go_left], depth + 1)
        return node_id

    build(np.arange(X.shape[0]), 0)
    return Tree(nodes)


# ---------------------------------------------------------------------------
# Model


@dataclass
class BoostedModel:
    feature_names: list
    base_score: float  # log-odds prior
    learning_rate: float
    loss: LossParams
    trees: list
    elapsed_range: tuple  # (min, max) elapsed seen at training time
    importance: dict = field(default_factory=dict)  # feature -> summed split gain

    def margins(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict_proba_matrix(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.margins(X))

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(json.dumps(model_to_dict(self), sort_keys=True).encode()).hexdigest()


def rows_to_matrix(rows: Sequence[FeatureRow], feature_names: Sequence[str]) -> np.ndarray:
    X = np.empty((len(rows), len(feature_names)))
    for i, row in enumerate(rows):
        for j, name in enumerate(feature_names):
            if name not in row.features:
                raise ValueError(f"row lacks feature {name!r} required by the model")
            X[i, j] = row.features[name]
    return X


def train(
    rows: Sequence[FeatureRow],
    params: Optional[TrainParams] = None,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
) -> BoostedModel:
    """Fit the boosted ensemble on labeled feature rows.

    Deterministic given (rows, params, seed). Requires both classes present.
    """
    params = params or TrainParams()
    names = list(feature_names or FEATURE_COLUMNS)
    if not rows:
        raise ValueError("no training rows")
    y = np.array([1.0 if r.label_switch else 0.0 for r in rows])
    if y.min() == y.max():
        raise ValueError("training data must contain both classes")
    X = rows_to_matrix(rows, names)

    elapsed = np.array([r.elapsed_s for r in rows], dtype=float)
    lo, hi = float(np.nanmin(elapsed)), float(np.nanmax(elapsed))
    norm = np.zeros_like(elapsed) if hi <= lo else (elapsed - lo) / (hi - lo)
    weights = time_weight(np.nan_to_num(norm), params.loss.beta)

    base_rate = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    base = math.log(base_rate / (1 - base_rate))
    margins = np.full(len(rows), base)

    importance = np.zeros(len(names))
    trees = []
    rng = np.random.default_rng(seed)  # reserved for future subsampling; keeps seed in the API
    del rng
    for _ in range(params.trees):
        _, grad, hess = focal_terms(margins, y, params.loss)
        grad = grad * weights
        hess = np.maximum(hess * weights, HESSIAN_FLOOR)
        tree = _grow_tree(X, grad, hess, params, importance)
        trees.append(tree)
        margins += params.learning_rate * tree.predict(X)

    model = BoostedModel(
        feature_names=names,
        base_score=base,
        learning_rate=params.learning_rate,
        loss=params.loss,
        trees=trees,
        elapsed_range=(lo, hi),
    )
    model.importance = {
        name: float(importance[i]) for i, name in enumerate(names) if importance[i] > 0
    }
    return model


def training_loss_curve(
    rows: Sequence[FeatureRow], params: TrainParams, seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
) -> list:
    """Weighted mean focal loss after each boosting round (for monotonicity checks)."""
    params = params or TrainParams()
    names = list(feature_names or FEATURE_COLUMNS)
    y = np.array([1.0 if r.label_switch else 0.0 for r in rows])
    X = rows_to_matrix(rows, names)
    elapsed = np.array([r.elapsed_s for r in rows], dtype=float)
    lo, hi = float(np.nanmin(elapsed)), float(np.nanmax(elapsed))
    norm = np.zeros_like(elapsed) if hi <= lo else (elapsed - lo) / (hi - lo)
    weights = time_weight(np.nan_to_num(norm), params.loss.beta)

    model = train(rows, params, seed, names)
    margins = np.full(len(rows), model.base_score)
    curve = []
    for tree in model.trees:
        margins += model.learning_rate * tree.predict(X)
        loss, _, _ = focal_terms(margins, y, params.loss)
        curve.append(float(np.average(loss, weights=weights)))
    return curve


def predict_proba(model: BoostedModel, row: FeatureRow) -> float:
    """Switch probability for a single row; pure function of (model, row)."""
    X = rows_to_matrix([row], model.feature_names)
    return float(model.predict_proba_matrix(X)[0])


def predict_proba_rows(model: BoostedModel, rows: Sequence[FeatureRow]) -> np.ndarray:
    return model.predict_proba_matrix(rows_to_matrix(rows, model.feature_names))


@dataclass
class Metrics:
    accuracy: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    importance: list  # (feature, gain) descending

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "importance": [{"feature": f, "gain": g} for f, g in self.importance],
        }


def evaluate_metrics(
    model: BoostedModel, rows: Sequence[FeatureRow], threshold: float = 0.5
) -> Metrics:
    if not rows:
        raise ValueError("no evaluation rows")
    probs = predict_proba_rows(model, rows)
    preds = probs >= threshold
    truth = np.array([r.label_switch for r in rows])
    tp = int(np.sum(preds & truth))
    fp = int(np.sum(preds & ~truth))
    tn = int(np.sum(~preds & ~truth))
    fn = int(np.sum(~preds & truth))
    accuracy = (tp + tn) / len(rows)
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    ranked = sorted(model.importance.items(), key=lambda kv: (-kv[1], kv[0]))
    return Metrics(accuracy, f1, tp, fp, tn, fn, ranked)


# ---------------------------------------------------------------------------
# Serialization (versioned JSON; round-trips predictions bit-for-bit)

MODEL_VERSION = 1


def model_to_dict(model: BoostedModel) -> dict:
    return {
        "version": MODEL_VERSION,
        "feature_names": model.feature_names,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "loss": {"gamma": model.loss.gamma, "alpha": model.loss.alpha, "beta": model.loss.beta},
        "elapsed_range": list(model.elapsed_range),
        "importance": model.importance,
        "trees": [
            [
                {
                    "f": n.feature,
                    "t": n.threshold,
                    "ml": n.missing_left,
                    "l": n.left,
                    "r": n.right,
                    "v": n.value,
                    "g": n.gain,
                }
                for n in tree.nodes
            ]
            for tree in model.trees
        ],
    }


def model_from_dict(data: dict) -> BoostedModel:
    if data.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {data.get('version')!r}")
    trees = [
        Tree(
            [
                TreeNode(
                    feature=n["f"],
                    threshold=n["t"],
                    missing_left=n["ml"],
                    left=n["l"],
                    right=n["r"],
                    value=n["v"],
                    gain=n["g"],
                )
                for n in nodes
            ]
        )
        for nodes in data["trees"]
    ]
    return BoostedModel(
        feature_names=list(data["feature_names"]),
        base_score=data["base_score"],
        learning_rate=data["learning_rate"],
        loss=LossParams(**data["loss"]),
        trees=trees,
        elapsed_range=tuple(data["elapsed_range"]),
        importance=dict(data.get("importance", {})),
    )


def save_model(model: BoostedModel, path) -> None:
    from pathlib import Path

    Path(path).write_text(json.dumps(model_to_dict(model)), "utf-8")


def load_model(path) -> BoostedModel:
    from pathlib import Path

    return model_from_dict(json.loads(Path(path).read_text("utf-8")))


# ---------------------------------------------------------------------------
# Validation holdout for tuning (last segment of each training game)


def validation_holdout(rows: Sequence[FeatureRow]) -> tuple:
    """Hold out each session's final 3-5 analyzed turns as a validation set."""
    by_session: dict = {}
    for row in rows:
        by_session.setdefault(row.session_id, set()).add(row.turn)
    held: set = set()
    for session, turns in by_session.items():
        ordered = sorted(turns)
        tail = ordered[-min(5, max(3, len(ordered) // 4)) :]
        held.update((session, t) for t in tail)
    fit = [r for r in rows if (r.session_id, r.turn) not in held]
    val = [r for r in rows if (r.session_id, r.turn) in held]
    return fit, val


def select_params(
    rows: Sequence[FeatureRow],
    candidates: Sequence[TrainParams],
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
) -> TrainParams:
    """Pick the candidate with the best validation F1 (ties keep earlier entries)."""
    fit, val = validation_holdout(rows)
    if not fit or not val:
        return candidates[0]
    best, best_f1 = candidates[0], -1.0
    for cand in candidates:
        try:
            model = train(fit, cand, seed, feature_names)
        except ValueError:
            continue
        f1 = evaluate_metrics(model, val).f1
        if f1 > best_f1 + 1e-12:
            best, best_f1 = cand, f1
    return best
