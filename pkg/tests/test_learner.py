import json
import math
import random

import numpy as np
import pytest

from handbrain.features import FeatureRow
from handbrain.learner import (
    BoostedModel,
    LossParams,
    Metrics,
    TrainParams,
    evaluate_metrics,
    focal_terms,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_proba,
    predict_proba_rows,
    save_model,
    select_params,
    sigmoid,
    time_weight,
    train,
    training_loss_curve,
    validation_holdout,
)


def make_row(x, label, elapsed=1.0, session="s0", turn=2, extra=None):
    feats = {"x": x, "elapsed_s": elapsed}
    feats.update(extra or {})
    return FeatureRow(
        session_id=session,
        turn=turn,
        elapsed_s=elapsed,
        features=feats,
        label_switch=bool(label),
        label_mode="hand",
        turn_eval_delta=0.0,
    )


def separable_rows(n=500, seed=0):
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        x = rng.uniform(-1, 1)
        rows.append(make_row(x, x > 0, elapsed=rng.uniform(1, 5), turn=2 + i // 3))
    return rows


def fd_terms(margin, y, lp, eps_g=1e-3, eps_h=1e-2):
    """Central finite differences of the focal loss in the margin.

    Five-point stencils keep the second-difference cancellation error well
    below the 1e-4 comparison tolerance across the whole parameter range.
    """

    def loss(m):
        return focal_terms(m, y, lp)[0]

    grad = (
        loss(margin - 2 * eps_g) - 8 * loss(margin - eps_g)
        + 8 * loss(margin + eps_g) - loss(margin + 2 * eps_g)
    ) / (12 * eps_g)
    hess = (
        -loss(margin + 2 * eps_h) + 16 * loss(margin + eps_h) - 30 * loss(margin)
        + 16 * loss(margin - eps_h) - loss(margin - 2 * eps_h)
    ) / (12 * eps_h * eps_h)
    return grad, hess


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


class TestFocalTerms:
    def test_cross_entropy_reduction_at_half(self):
        loss, _, _ = focal_terms(0.0, 1, LossParams(gamma=0.0, alpha=1.0, beta=0.0))
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_closed_form_gamma_two(self):
        margin = math.log(0.9 / 0.1)  # p = 0.9
        loss, _, _ = focal_terms(margin, 1, LossParams(gamma=2.0, alpha=1.0, beta=0.0))
        assert loss == pytest.approx(0.01 * -math.log(0.9), rel=1e-9)
        assert loss == pytest.approx(1.0536e-3, rel=1e-3)

    def test_matches_cross_entropy_everywhere_at_gamma_zero(self):
        rng = random.Random(3)
        lp = LossParams(gamma=0.0, alpha=1.0, beta=0.0)
        for _ in range(200):
            m, y = rng.uniform(-8, 8), rng.choice([0, 1])
            loss, grad, hess = focal_terms(m, y, lp)
            p = 1 / (1 + math.exp(-m))
            ce = -(y * math.log(p) + (1 - y) * math.log(1 - p))
            assert abs(loss - ce) < 1e-9
            assert abs(grad - (p - y)) < 1e-9
            assert abs(hess - p * (1 - p)) < 1e-9

    def test_derivatives_match_finite_differences(self):
        rng = random.Random(11)
        worst_g = worst_h = 0.0
        for _ in range(400):
            lp = LossParams(
                gamma=rng.uniform(0, 5), alpha=rng.uniform(0.05, 1.0), beta=rng.uniform(0, 3)
            )
            m, y = rng.uniform(-6, 6), rng.choice([0, 1])
            _, grad, hess = focal_terms(m, y, lp)
            fd_g, fd_h = fd_terms(m, y, lp)
            worst_g = max(worst_g, rel_err(grad, fd_g))
            worst_h = max(worst_h, rel_err(hess, fd_h))
        assert worst_g < 1e-4
        assert worst_h < 1e-4

    def test_vectorized_matches_scalar(self):
        lp = LossParams(gamma=1.7, alpha=0.4, beta=0.0)
        margins = np.array([-2.0, 0.0, 3.0])
        labels = np.array([1, 0, 1])
        loss_v, grad_v, hess_v = focal_terms(margins, labels, lp)
        for i in range(3):
            l, g, h = focal_terms(float(margins[i]), int(labels[i]), lp)
            assert l == pytest.approx(loss_v[i])
            assert g == pytest.approx(grad_v[i])
            assert h == pytest.approx(hess_v[i])

    def test_saturated_margins_stay_finite(self):
        for m in (-1e6, 1e6):
            for y in (0, 1):
                loss, grad, hess = focal_terms(m, y, LossParams(gamma=3.0, alpha=0.5))
                assert math.isfinite(loss) and math.isfinite(grad) and math.isfinite(hess)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            LossParams(gamma=-1)
        with pytest.raises(ValueError):
            LossParams(alpha=0.0)
        with pytest.raises(ValueError):
            LossParams(beta=-0.5)


class TestTimeWeight:
    def test_zero_elapsed_unit_weight(self):
        assert time_weight(0.0, 1.0) == pytest.approx(1.0)

    def test_full_elapsed_e(self):
        assert time_weight(1.0, 1.0) == pytest.approx(math.e)

    def test_strictly_increasing(self):
        grid = np.linspace(0, 1, 50)
        w = time_weight(grid, 2.0)
        assert np.all(np.diff(w) > 0)

    def test_beta_zero_uniform(self):
        assert np.all(time_weight(np.linspace(0, 1, 5), 0.0) == 1.0)


PLAIN = LossParams(gamma=0.0, alpha=1.0, beta=0.0)


class TestTrain:
    def test_separable_reaches_perfect_f1(self):
        rows = separable_rows(500, seed=1)
        params = TrainParams(trees=50, depth=3, learning_rate=0.3, min_leaf=5, loss=PLAIN)
        model = train(rows, params, seed=0, feature_names=["x"])
        metrics = evaluate_metrics(model, rows)
        assert metrics.f1 == 1.0

    def test_constant_features_converge_to_base_rate(self):
        rng = random.Random(2)
        rows = [make_row(1.0, rng.random() < 0.3, turn=2 + i) for i in range(400)]
        params = TrainParams(trees=100, depth=3, learning_rate=0.2, loss=PLAIN)
        model = train(rows, params, seed=0, feature_names=["x"])
        probs = predict_proba_rows(model, rows)
        target = sum(r.label_switch for r in rows) / len(rows)
        assert np.all(np.abs(probs - target) <= 0.02)

    def test_deterministic_digest(self):
        rows = separable_rows(200, seed=5)
        params = TrainParams(trees=20, depth=3, loss=LossParams())
        a = train(rows, params, seed=3, feature_names=["x", "elapsed_s"])
        b = train(rows, params, seed=3, feature_names=["x", "elapsed_s"])
        assert a.digest() == b.digest()

    def test_single_class_rejected(self):
        rows = [make_row(0.5, True, turn=2 + i) for i in range(20)]
        with pytest.raises(ValueError, match="both classes"):
            train(rows, TrainParams(trees=5), feature_names=["x"])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            train([], TrainParams(trees=5), feature_names=["x"])

    def test_training_loss_non_increasing(self):
        rows = separable_rows(300, seed=7)
        for lp in (PLAIN, LossParams(gamma=2.0, alpha=0.25, beta=1.0)):
            params = TrainParams(trees=40, depth=3, learning_rate=0.3, loss=lp)
            curve = training_loss_curve(rows, params, seed=0, feature_names=["x", "elapsed_s"])
            diffs = np.diff(curve)
            assert np.all(diffs <= 1e-12), f"loss increased with {lp}"

    def test_missing_values_routed_not_fatal(self):
        rng = random.Random(8)
        rows = []
        for i in range(300):
            x = rng.uniform(-1, 1)
            rows.append(make_row(x if rng.random() > 0.2 else float("nan"), x > 0, turn=2 + i))
        params = TrainParams(trees=30, depth=3, learning_rate=0.3, loss=PLAIN)
        model = train(rows, params, feature_names=["x"])
        metrics = evaluate_metrics(model, rows)
        assert metrics.accuracy > 0.75

    def test_time_weight_shifts_root_statistics_monotonically(self):
        rows = separable_rows(100, seed=9)
        lp = LossParams(gamma=0.0, alpha=1.0, beta=2.0)
        elapsed = np.array([r.elapsed_s for r in rows])
        lo, hi = elapsed.min(), elapsed.max()

        def weighted_g_sum(extra_elapsed):
            all_rows = rows + [make_row(0.4, False, elapsed=extra_elapsed, turn=999)]
            e = np.array([r.elapsed_s for r in all_rows])
            norm = (e - e.min()) / (e.max() - e.min())
            w = time_weight(norm, lp.beta)
            y = np.array([1.0 if r.label_switch else 0.0 for r in all_rows])
            margins = np.zeros(len(all_rows))
            _, g, h = focal_terms(margins, y, lp)
            return np.sum(g * w), np.sum(np.maximum(h * w, 1e-16))

        base_g, base_h = weighted_g_sum(lo)  # duplicate with minimal elapsed
        late_g, late_h = weighted_g_sum(hi)  # duplicate with maximal elapsed
        no_g = np.sum(focal_terms(np.zeros(len(rows)), np.array([float(r.label_switch) for r in rows]), lp)[1])
        assert abs(late_g - no_g) >= abs(base_g - no_g)


class TestPredict:
    def test_empty_model_is_half(self):
        model = BoostedModel(
            feature_names=["x"],
            base_score=0.0,
            learning_rate=0.1,
            loss=LossParams(),
            trees=[],
            elapsed_range=(0.0, 1.0),
        )
        assert predict_proba(model, make_row(0.3, True)) == 0.5

    def test_monotone_on_separable_toy(self):
        rows = separable_rows(400, seed=3)
        params = TrainParams(trees=30, depth=3, learning_rate=0.3, loss=PLAIN)
        model = train(rows, params, feature_names=["x"])
        assert predict_proba(model, make_row(-1.0, False)) < 0.5
        assert predict_proba(model, make_row(1.0, True)) > 0.5

    def test_batch_equals_single(self):
        rows = separable_rows(120, seed=4)
        model = train(rows, TrainParams(trees=15, depth=3, loss=PLAIN), feature_names=["x"])
        batch = predict_proba_rows(model, rows[:10])
        singles = [predict_proba(model, r) for r in rows[:10]]
        assert np.allclose(batch, singles, atol=0)

    def test_unknown_layout_rejected(self):
        model = train(separable_rows(60, seed=6), TrainParams(trees=5, loss=PLAIN), feature_names=["x"])
        bad = FeatureRow("s", 2, 1.0, {"y": 1.0}, True, "hand", 0.0)
        with pytest.raises(ValueError, match="lacks feature"):
            predict_proba(model, bad)


class TestMetrics:
    def test_perfect_predictions(self):
        rows = separable_rows(200, seed=10)
        params = TrainParams(trees=40, depth=3, learning_rate=0.3, loss=PLAIN)
        model = train(rows, params, feature_names=["x"])
        metrics = evaluate_metrics(model, rows)
        assert metrics.accuracy == 1.0 and metrics.f1 == 1.0

    def test_all_negative_predictor_zero_f1(self):
        model = BoostedModel(
            feature_names=["x"],
            base_score=-10.0,
            learning_rate=0.1,
            loss=LossParams(),
            trees=[],
            elapsed_range=(0.0, 1.0),
        )
        rows = [make_row(0.1, True, turn=2 + i) for i in range(10)]
        metrics = evaluate_metrics(model, rows)
        assert metrics.f1 == 0.0 and metrics.accuracy == 0.0

    def test_hand_computed_f1(self):
        # tp=2, fp=1, fn=1, tn=1 -> F1 = 2*2/(2*2+1+1) = 2/3
        model = BoostedModel(
            feature_names=["x"],
            base_score=0.0,
            learning_rate=1.0,
            loss=LossParams(),
            trees=[],
            elapsed_range=(0.0, 1.0),
        )
        from handbrain.learner import Tree, TreeNode

        model.trees = [
            Tree(
                [
                    TreeNode(feature=0, threshold=0.5, missing_left=True, left=1, right=2),
                    TreeNode(value=-5.0),
                    TreeNode(value=5.0),
                ]
            )
        ]
        rows = [
            make_row(1.0, True),  # tp
            make_row(1.0, True),  # tp
            make_row(1.0, False),  # fp
            make_row(0.0, True),  # fn
            make_row(0.0, False),  # tn
        ]
        metrics = evaluate_metrics(model, rows)
        assert (metrics.tp, metrics.fp, metrics.fn, metrics.tn) == (2, 1, 1, 1)
        assert metrics.f1 == pytest.approx(2 / 3)

    def test_importance_ranked_descending(self):
        rng = random.Random(12)
        rows = []
        for i in range(300):
            x = rng.uniform(-1, 1)
            rows.append(make_row(x, x > 0, turn=2 + i, extra={"noise": rng.random()}))
        model = train(
            rows,
            TrainParams(trees=20, depth=3, learning_rate=0.3, loss=PLAIN),
            feature_names=["x", "noise"],
        )
        metrics = evaluate_metrics(model, rows)
        gains = [g for _, g in metrics.importance]
        assert gains == sorted(gains, reverse=True)
        assert metrics.importance[0][0] == "x"


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rows = separable_rows(150, seed=13)
        model = train(rows, TrainParams(trees=25, depth=4), feature_names=["x", "elapsed_s"])
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        a = predict_proba_rows(model, rows)
        b = predict_proba_rows(loaded, rows)
        assert np.array_equal(a, b)
        assert loaded.digest() == model.digest()

    def test_version_guard(self):
        data = model_to_dict(
            train(separable_rows(60, seed=14), TrainParams(trees=2), feature_names=["x"])
        )
        data["version"] = 99
        with pytest.raises(ValueError, match="version"):
            model_from_dict(data)

    def test_json_is_plain_data(self):
        model = train(separable_rows(60, seed=15), TrainParams(trees=2), feature_names=["x"])
        text = json.dumps(model_to_dict(model))
        assert "x" in text


class TestValidationTuning:
    def test_holdout_partitions(self):
        rows = separable_rows(200, seed=16)
        fit, val = validation_holdout(rows)
        assert fit and val
        fit_keys = {(r.session_id, r.turn) for r in fit}
        val_keys = {(r.session_id, r.turn) for r in val}
        assert not fit_keys & val_keys

    def test_select_params_prefers_better_candidate(self):
        rows = separable_rows(400, seed=17)
        good = TrainParams(trees=40, depth=3, learning_rate=0.3, loss=PLAIN)
        useless = TrainParams(trees=1, depth=1, learning_rate=0.001, loss=PLAIN)
        chosen = select_params(rows, [useless, good], feature_names=["x"])
        assert chosen == good
