import math
import random

import numpy as np
import pytest

from handbrain.engine import BuiltinEngine, EngineConfig
from handbrain.features import (
    MISSING,
    BoardGeometry,
    DEFAULT_GEOMETRY,
    EmotionSample,
    FeatureRow,
    GazeSample,
    build_feature_rows,
    decisive_material,
    dwell_ratio,
    fixation_count,
    gaze_entropy,
    mean_surprise,
    rows_from_csv,
    rows_to_csv,
    split_dataset,
    turn_task_inputs,
    vertical_dispersion,
)
from handbrain.chess import parse_fen
from handbrain.session import ControlMode, Phase, Session, turn_records

GEOM = DEFAULT_GEOMETRY


def g(t, x, y, valid=True):
    return GazeSample(t=t, x=x, y=y, valid=valid)


def e(t, surprise):
    rest = (1.0 - surprise) / 6.0
    return EmotionSample(t=t, probs=(rest, rest, rest, rest, rest, surprise, rest))


class TestVerticalDispersion:
    def test_range_of_two_points(self):
        assert vertical_dispersion([g(0, 0, 100), g(33, 0, 700)]) == 600.0

    def test_single_point_zero(self):
        assert vertical_dispersion([g(0, 10, 400)]) == 0.0

    def test_empty_is_missing(self):
        assert math.isnan(vertical_dispersion([]))
        assert math.isnan(vertical_dispersion([g(0, 1, 2, valid=False)]))

    def test_outlier_trimmed_when_large_window(self):
        rng = random.Random(0)
        samples = [g(i * 33, 0, rng.uniform(0, 1000)) for i in range(100)]
        samples.append(g(99 * 33 + 1, 0, 10_000))
        assert vertical_dispersion(samples) < 1000.0

    def test_trim_matches_brute_force_oracle(self):
        rng = random.Random(5)
        ys = [rng.uniform(0, 1000) for _ in range(60)]
        samples = [g(i, 0, y) for i, y in enumerate(ys)]
        lo, hi = np.percentile(np.array(ys), [2.5, 97.5])
        kept = [y for y in ys if lo <= y <= hi]
        assert vertical_dispersion(samples) == pytest.approx(max(kept) - min(kept))

    def test_small_window_untrimmed(self):
        samples = [g(i, 0, y) for i, y in enumerate([0, 500, 10_000])]
        assert vertical_dispersion(samples) == 10_000.0


class TestGazeEntropy:
    def test_one_cell_zero_bits(self):
        samples = [g(i, 150, 150) for i in range(30)]
        assert gaze_entropy(samples, GEOM) == 0.0

    def test_uniform_over_cells_six_bits(self):
        samples = []
        for row in range(8):
            for col in range(8):
                samples.append(g(len(samples), 100 + col * 100 + 50, 100 + row * 100 + 50))
        assert gaze_entropy(samples, GEOM) == pytest.approx(6.0)

    def test_two_cells_one_bit(self):
        samples = [g(i, 150, 150) for i in range(10)] + [g(i + 10, 850, 850) for i in range(10)]
        assert gaze_entropy(samples, GEOM) == pytest.approx(1.0)

    def test_off_board_pooled(self):
        samples = [g(0, 5, 5), g(1, 2000, 2000)]  # both off-board -> one cell
        assert gaze_entropy(samples, GEOM) == 0.0

    def test_empty_missing(self):
        assert math.isnan(gaze_entropy([], GEOM))

    def test_bounded_by_log2_65(self):
        rng = random.Random(9)
        samples = [g(i, rng.uniform(0, 1200), rng.uniform(0, 1200)) for i in range(500)]
        assert 0.0 <= gaze_entropy(samples, GEOM) <= math.log2(65)


class TestDwellRatio:
    def test_all_on_board_full_window(self):
        samples = [g(i * 100, 500, 500) for i in range(20)]  # 2 s of samples
        assert dwell_ratio(samples, GEOM, 2.0) == pytest.approx(1.0)

    def test_none_on_board(self):
        samples = [g(i * 100, 5, 5) for i in range(20)]
        assert dwell_ratio(samples, GEOM, 2.0) == 0.0

    def test_half_on_board(self):
        on = [g(i * 100, 500, 500) for i in range(10)]
        off = [g(1000 + i * 100, 5, 5) for i in range(10)]
        assert dwell_ratio(on + off, GEOM, 2.0) == pytest.approx(0.5)

    def test_requires_positive_thinking_time(self):
        with pytest.raises(ValueError):
            dwell_ratio([g(0, 1, 1)], GEOM, 0.0)

    def test_clamped_to_unit_interval(self):
        samples = [g(i * 100, 500, 500) for i in range(40)]  # 4 s of gaze
        assert dwell_ratio(samples, GEOM, 1.0) == 1.0


class TestMeanSurprise:
    def test_constant(self):
        assert mean_surprise([e(0, 0.3), e(500, 0.3)], 0, 1000) == pytest.approx(0.3)

    def test_window_filtering(self):
        samples = [e(100, 0.2), e(900, 0.4), e(5000, 0.9)]
        assert mean_surprise(samples, 0, 1000) == pytest.approx(0.3)

    def test_empty_window_missing(self):
        assert math.isnan(mean_surprise([e(5000, 0.5)], 0, 1000))

    def test_bad_window_rejected(self):
        with pytest.raises(ValueError):
            mean_surprise([], 10, 10)


class TestFixationCount:
    def test_steady_gaze_one_fixation(self):
        samples = [g(i * 33, 400 + (i % 3), 400) for i in range(10)]
        assert fixation_count(samples) == 1.0

    def test_saccades_no_fixation(self):
        samples = [g(i * 33, 100 + 300 * i, 100 + 300 * i) for i in range(10)]
        assert fixation_count(samples) == 0.0

    def test_two_separate_fixations(self):
        a = [g(i * 33, 200, 200) for i in range(8)]
        b = [g(1000 + i * 33, 800, 800) for i in range(8)]
        assert fixation_count(a + b) == 2.0

    def test_too_short_run_not_counted(self):
        samples = [g(0, 200, 200), g(50, 201, 201)]  # 50 ms < 100 ms
        assert fixation_count(samples) == 0.0


# ---------------------------------------------------------------------------
# Row building against a session log with controlled timing


def build_timed_log(thinking_s, modes=None, seed=0, gaze_hz=30):
    """Drive a live session with prescribed per-turn thinking durations."""
    rng = random.Random(seed)
    team = BuiltinEngine(EngineConfig(role="teammate", depth=1))
    opp = BuiltinEngine(EngineConfig(role="opponent", depth=1))
    sess = Session("timed", team, opp)
    sess.start(t_ms=0)
    t = 0
    for i, think in enumerate(thinking_s):
        if sess.state.phase is not Phase.FINISHED and sess.state.phase is not Phase.AWAIT_MODE:
            break
        t0 = t
        # stream gaze at ~gaze_hz and emotion at ~3 Hz across the window
        step = int(1000 / gaze_hz)
        gaze = [
            {"t": t0 + j * step, "x": rng.uniform(150, 850), "y": rng.uniform(150, 850), "valid": True}
            for j in range(max(1, int(think * gaze_hz)))
        ]
        sess.step({"kind": "gaze_batch", "samples": gaze}, t_ms=t0)
        emo = [
            {"t": t0 + j * 333, "probs": {"surprise": 0.25, "neutral": 0.75}}
            for j in range(max(1, int(think * 3)))
        ]
        sess.step({"kind": "emotion_batch", "samples": emo}, t_ms=t0)
        t = t0 + int(round(think * 1000))
        mode = (modes or [])[i] if modes and i < len(modes) else rng.choice(["hand", "brain"])
        sess.step({"kind": "choose_mode", "mode": mode}, t_ms=t)
        t += 150  # the opponent reply lands here; next thinking window starts then
        if sess.state.phase is Phase.AWAIT_PIECE:
            piece = sess.legal_piece_types()[0]
            sess.step({"kind": "choose_piece", "piece": piece.name.lower()}, t_ms=t)
        elif sess.state.phase is Phase.AWAIT_MOVE:
            mv = sess.legal_constrained_moves()[0]
            sess.step({"kind": "move", "uci": mv.uci()}, t_ms=t)
    return sess


def flat_inputs(log, eval_before=50.0, eval_after=30.0, frag=0.05):
    turns = [r.turn for r in turn_records(log)]
    return (
        {t: (eval_before, eval_after) for t in turns},
        {t: frag for t in turns},
    )


class TestBuildFeatureRows:
    def test_sampling_contract(self):
        sess = build_timed_log([3.0, 4.2, 0.4, 2.0], seed=1)
        evals, frags = flat_inputs(sess.log)
        rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        by_turn = {}
        for row in rows:
            by_turn.setdefault(row.turn, []).append(row.elapsed_s)
        assert 1 not in by_turn  # first move of the game always excluded
        assert by_turn[2] == [1.0, 2.0, 3.0, 4.0]  # 4.2 s -> 4 whole-second samples
        assert by_turn[3] == [pytest.approx(0.4)]  # sub-second turn -> decision-time row
        assert by_turn[4] == [1.0, 2.0]

    def test_row_count_identity(self):
        thinking = [2.0, 3.7, 1.2, 0.8, 5.0]
        sess = build_timed_log(thinking, seed=2)
        evals, frags = flat_inputs(sess.log)
        rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        records = [r for r in turn_records(sess.log) if r.turn != 1]
        expected = sum(max(1, int(r.thinking_s)) for r in records)
        assert len(rows) == expected

    def test_decisive_eval_excluded(self):
        sess = build_timed_log([2.0, 2.0, 2.0], seed=3)
        evals, frags = flat_inputs(sess.log)
        evals[2] = (1200.0, 1150.0)
        rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        assert all(r.turn != 2 for r in rows)
        assert any(r.turn == 3 for r in rows)

    def test_decisive_material_detector(self):
        assert decisive_material(parse_fen("8/8/8/4k3/8/8/8/KQ6 w - - 0 1"))
        assert not decisive_material(parse_fen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"))
        assert not decisive_material(parse_fen("8/8/8/4k3/8/8/8/KB6 w - - 0 1"))

    def test_labels_shared_within_turn(self):
        sess = build_timed_log([2.0, 3.5, 2.5], modes=["hand", "brain", "brain"], seed=4)
        evals, frags = flat_inputs(sess.log)
        rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        turn2 = [r for r in rows if r.turn == 2]
        assert all(r.label_switch for r in turn2)  # hand -> brain is a switch
        turn3 = [r for r in rows if r.turn == 3]
        assert all(not r.label_switch for r in turn3)
        assert {r.label_mode for r in turn3} == {ControlMode.BRAIN.value}

    def test_no_sentinels_with_valid_streams(self):
        sess = build_timed_log([2.0, 3.0, 2.0, 4.0], seed=5)
        evals, frags = flat_inputs(sess.log)
        rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        assert rows
        for row in rows:
            for name, value in row.features.items():
                assert not math.isnan(value), (row.turn, row.elapsed_s, name)

    def test_causality_under_truncation(self):
        sess = build_timed_log([2.0, 5.0], seed=6)
        evals, frags = flat_inputs(sess.log)
        full_rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        # Re-extract from a log whose turn-2 gaze/emotion stream stops 2 s in.
        records = turn_records(sess.log)
        t_start = records[1].t_start
        cutoff = t_start + 2000
        from handbrain.session import GAZE_BATCH, EMOTION_BATCH, SessionEvent, SessionLog

        truncated = SessionLog()
        truncated.events = [
            SessionEvent(
                ev.t,
                ev.seq,
                ev.kind,
                {"samples": [s for s in ev.payload["samples"] if s["t"] <= cutoff]}
                if ev.kind in (GAZE_BATCH, EMOTION_BATCH)
                else ev.payload,
            )
            for ev in sess.log.events
        ]
        cut_rows = build_feature_rows(truncated, k=3, evals=evals, frags=frags)
        full_by_key = {(r.turn, r.elapsed_s): r for r in full_rows}
        for row in cut_rows:
            if row.turn == 2 and row.elapsed_s <= 2.0:
                assert row.features == full_by_key[(row.turn, row.elapsed_s)].features

    def test_k_must_be_3_or_5(self):
        sess = build_timed_log([2.0, 2.0], seed=7)
        evals, frags = flat_inputs(sess.log)
        with pytest.raises(ValueError):
            build_feature_rows(sess.log, k=4, evals=evals, frags=frags)

    def test_turn_task_inputs_cover_all_turns(self):
        sess = build_timed_log([1.0, 1.0, 1.0], seed=8)
        evals, frags = turn_task_inputs(sess.log)
        turns = {r.turn for r in turn_records(sess.log)}
        assert set(evals) == turns and set(frags) == turns
        assert all(0.0 <= f <= 1.0 for f in frags.values())


class TestCsv:
    def test_round_trip_with_missing(self):
        sess = build_timed_log([2.0, 3.0], seed=9, gaze_hz=30)
        evals, frags = flat_inputs(sess.log)
        rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        rows[0].features["gaze_entropy"] = MISSING
        text = rows_to_csv(rows)
        back = rows_from_csv(text)
        assert len(back) == len(rows)
        assert math.isnan(back[0].features["gaze_entropy"])
        assert back[1].features["gaze_dispersion"] == pytest.approx(
            rows[1].features["gaze_dispersion"]
        )
        assert back[0].label_switch == rows[0].label_switch
        first_line = text.splitlines()[0]
        assert first_line.startswith("session_id,turn,label_switch,label_mode,turn_eval_delta")

    def test_missing_written_as_empty_field(self):
        sess = build_timed_log([2.0, 2.0], seed=10)
        evals, frags = flat_inputs(sess.log)
        rows = build_feature_rows(sess.log, k=3, evals=evals, frags=frags)
        rows[0].features["dwell_ratio"] = MISSING
        line = rows_to_csv(rows[:1]).splitlines()[1]
        assert ",," in line


def synthetic_rows(n_turns: int, sessions: int = 4, seed: int = 0) -> list[FeatureRow]:
    rng = random.Random(seed)
    rows = []
    per_session = n_turns // sessions
    for s in range(sessions):
        for turn in range(2, per_session + 2):
            for elapsed in range(1, rng.randint(2, 4)):
                rows.append(
                    FeatureRow(
                        session_id=f"s{s}",
                        turn=turn,
                        elapsed_s=float(elapsed),
                        features={"elapsed_s": float(elapsed), "x": rng.random()},
                        label_switch=rng.random() < 0.4,
                        label_mode="hand",
                        turn_eval_delta=rng.uniform(-50, 50),
                    )
                )
    return rows


class TestSplitDataset:
    def test_partition_is_exclusive_and_total(self):
        rows = synthetic_rows(40, sessions=4, seed=1)
        split = split_dataset(rows, seed=7)
        train_keys = {(r.session_id, r.turn) for r in split.train}
        test_keys = {(r.session_id, r.turn) for r in split.test}
        assert not (train_keys & test_keys)
        assert len(split.train) + len(split.test) == len(rows)

    def test_deterministic(self):
        rows = synthetic_rows(60, sessions=3, seed=2)
        a = split_dataset(rows, seed=9)
        b = split_dataset(rows, seed=9)
        assert [id(r) for r in a.train] == [id(r) for r in b.train]
        assert a.manifest == b.manifest

    def test_segments_are_consecutive_and_short(self):
        rows = synthetic_rows(100, sessions=2, seed=3)
        split = split_dataset(rows, seed=11)
        for session, segments in split.manifest.items():
            for seg in segments:
                turns = seg["turns"]
                assert 1 <= len(turns) <= 5
                assert turns == list(range(turns[0], turns[0] + len(turns)))

    def test_train_band_on_large_corpus(self):
        rows = synthetic_rows(1000, sessions=10, seed=4)
        split = split_dataset(rows, seed=13)
        turn_count = lambda rs: len({(r.session_id, r.turn) for r in rs})
        frac = turn_count(split.train) / (turn_count(split.train) + turn_count(split.test))
        assert 0.65 <= frac <= 0.75

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            split_dataset([], seed=0)
