import math
import statistics

import pytest

from handbrain.chess import legal_moves, parse_fen
from handbrain.features import build_feature_rows, turn_task_inputs
from handbrain.fragility import fragility_score
from handbrain.session import ReplayError, SessionLog, replay_session, turn_records
from handbrain.simulator import (
    DEMO_POLICY,
    TruthPolicy,
    default_engines,
    generate_session,
    truth_labels,
)

# steep threshold rule on fragility: deterministic switching, zero noise
THRESHOLD_POLICY = TruthPolicy(intercept=-1e6 * 0.009, w_fragility=1e6, noise=0.0)


class TestGeneration:
    def test_byte_identical_given_seed(self):
        a = generate_session(DEMO_POLICY, default_engines(), turns=12, seed=5)
        b = generate_session(DEMO_POLICY, default_engines(), turns=12, seed=5)
        assert len(a.events) == len(b.events)
        assert all(x.to_json() == y.to_json() for x, y in zip(a.events, b.events))

    def test_different_seeds_differ(self):
        a = generate_session(DEMO_POLICY, default_engines(), turns=10, seed=1)
        b = generate_session(DEMO_POLICY, default_engines(), turns=10, seed=2)
        assert [e.to_json() for e in a.events] != [e.to_json() for e in b.events]

    def test_replayable_with_legal_final_position(self):
        log = generate_session(DEMO_POLICY, default_engines(), turns=15, seed=9)
        state = replay_session(log)
        assert state.result is not None
        parse_fen(state.fen)  # validates all position invariants

    def test_turns_guard(self):
        with pytest.raises(ValueError):
            generate_session(DEMO_POLICY, default_engines(), turns=1, seed=0)

    def test_noise_guard(self):
        with pytest.raises(ValueError):
            TruthPolicy(noise=0.5)

    def test_rows_have_no_sentinels(self):
        log = generate_session(DEMO_POLICY, default_engines(), turns=15, seed=21)
        evals, frags = turn_task_inputs(log)
        rows = build_feature_rows(log, k=3, evals=evals, frags=frags)
        assert rows
        for row in rows:
            for name, value in row.features.items():
                assert not (isinstance(value, float) and math.isnan(value)), name

    def test_policy_round_trip(self):
        again = TruthPolicy.from_dict(DEMO_POLICY.to_dict())
        assert again == DEMO_POLICY


class TestTruthLabels:
    def test_regenerate_matches_exactly(self):
        log = generate_session(DEMO_POLICY, default_engines(), turns=12, seed=31)
        first = truth_labels(log, DEMO_POLICY)
        second = truth_labels(log, DEMO_POLICY)
        assert first == second
        assert set(first) == {r.turn for r in turn_records(log) if r.turn >= 2}

    def test_zero_noise_threshold_policy_is_binary(self):
        log = generate_session(THRESHOLD_POLICY, default_engines(), turns=15, seed=33)
        probs = truth_labels(log, THRESHOLD_POLICY)
        assert probs
        assert all(p in (0.0, 1.0) for p in probs.values())

    def test_labels_predict_realized_switches_at_zero_noise(self):
        log = generate_session(THRESHOLD_POLICY, default_engines(), turns=20, seed=35)
        probs = truth_labels(log, THRESHOLD_POLICY)
        for rec in turn_records(log):
            if rec.turn in probs:
                assert rec.switch == (probs[rec.turn] == 1.0)

    def test_foreign_log_rejected(self):
        from handbrain.engine import BuiltinEngine, EngineConfig
        from handbrain.session import Session

        sess = Session(
            "manual",
            BuiltinEngine(EngineConfig(role="teammate", depth=1)),
            BuiltinEngine(EngineConfig(role="opponent", depth=1)),
        )
        sess.start(t_ms=0)
        with pytest.raises(ReplayError, match="not a simulator"):
            truth_labels(sess.log, DEMO_POLICY)

    def test_policy_mismatch_rejected(self):
        log = generate_session(DEMO_POLICY, default_engines(), turns=8, seed=37)
        other = TruthPolicy(intercept=1.0)
        with pytest.raises(ReplayError, match="policy"):
            truth_labels(log, other)

    def test_noise_flip_rate(self):
        policy = TruthPolicy(
            intercept=THRESHOLD_POLICY.intercept,
            w_fragility=THRESHOLD_POLICY.w_fragility,
            noise=0.2,
        )
        flips = labeled = 0
        session = 0
        while labeled < 2000:
            session += 1
            log = generate_session(policy, default_engines(), turns=40, seed=4000 + session)
            probs = truth_labels(log, policy)
            for rec in turn_records(log):
                if rec.turn in probs:
                    intended = probs[rec.turn] == 1.0
                    labeled += 1
                    flips += rec.switch != intended
        rate = flips / labeled
        assert abs(rate - 0.2) <= 0.03


class TestDirectionalEffect:
    def test_fragility_policy_raises_switch_rate_in_fragile_turns(self):
        policy = TruthPolicy(intercept=-1.8, w_fragility=60.0, noise=0.0)
        frag_switch = []
        for seed in range(50):
            log = generate_session(policy, default_engines(), turns=10, seed=7000 + seed)
            for rec in turn_records(log):
                if rec.turn >= 2:
                    frag_switch.append((fragility_score(parse_fen(rec.fen_before)), rec.switch))
        median_frag = statistics.median(f for f, _ in frag_switch)
        high = [s for f, s in frag_switch if f > median_frag]
        low = [s for f, s in frag_switch if f <= median_frag]
        assert sum(high) / len(high) > sum(low) / len(low)
