"""Server-side per-second switch prediction during the thinking window."""

from __future__ import annotations

from typing import Optional

from ..chess.board import parse_fen
from ..engine import EngineConfig, open_engine
from ..features import (
    FeatureRow,
    dwell_ratio,
    emotion_samples,
    gaze_entropy,
    gaze_samples,
    geometry_from_log,
    local_feature_block,
    mean_surprise,
    turn_summary,
    vertical_dispersion,
)
from ..fragility import fragility_score
from ..learner import BoostedModel, predict_proba
from ..session import Phase, Session, turn_records


class LivePredictor:
    """Builds the in-progress turn's feature row each whole second and scores it.

    Uses the same window statistics as offline extraction, so live gauge
    values match what the dataset pipeline would produce.
    """

    def __init__(self, model: BoostedModel, eval_cfg: Optional[EngineConfig] = None, k: int = 3):
        self.model = model
        self.k = k
        self._engine = open_engine(eval_cfg or EngineConfig(role="evaluator", depth=1))
        self._evals: dict = {}  # turn -> (before, after)
        self._frags: dict = {}
        self._emitted: set = set()  # (turn, elapsed_s)

    def close(self):
        self._engine.close()

    def _ensure_inputs(self, records, current_fen: str, current_turn: int):
        for rec in records:
            if rec.turn not in self._evals:
                self._evals[rec.turn] = (
                    float(self._engine.evaluate(parse_fen(rec.fen_before)).as_cp()),
                    float(self._engine.evaluate(parse_fen(rec.fen_after)).as_cp()),
                )
                self._frags[rec.turn] = fragility_score(parse_fen(rec.fen_before))
        if current_turn not in self._frags:
            pos = parse_fen(current_fen)
            self._frags[current_turn] = fragility_score(pos)
            self._evals[current_turn] = (float(self._engine.evaluate(pos).as_cp()), 0.0)

    def pending_predictions(self, session: Session, now_ms: int) -> list:
        """(elapsed_s, p_switch) for each new whole second of the current window."""
        state = session.state
        if state is None or state.phase is not Phase.AWAIT_MODE or state.turn_index < 2:
            return []
        turn = state.turn_index
        t_start = state.last_opponent_move_t
        whole_seconds = int((now_ms - t_start) / 1000)
        if whole_seconds < 1:
            return []

        records = turn_records(session.log)
        self._ensure_inputs(records, state.fen, turn)
        geometry = geometry_from_log(session.log)
        gaze = gaze_samples(session.log)
        emotions = emotion_samples(session.log)
        preceding = [
            turn_summary(r, gaze, emotions, self._evals, self._frags)
            for r in records[-self.k :]
        ]
        if not preceding:
            return []
        local = local_feature_block(preceding)

        out = []
        for elapsed in range(1, whole_seconds + 1):
            key = (turn, elapsed)
            if key in self._emitted:
                continue
            self._emitted.add(key)
            cutoff = t_start + elapsed * 1000
            window = [s for s in gaze if t_start <= s.t <= cutoff]
            feats = {
                "gaze_entropy": gaze_entropy(window, geometry),
                "gaze_dispersion": vertical_dispersion(window),
                "dwell_ratio": dwell_ratio(window, geometry, float(elapsed)),
                "surprise_mean": mean_surprise(emotions, t_start, cutoff),
                "eval_cp": self._evals[turn][0],
                "fragility": self._frags[turn],
                "elapsed_s": float(elapsed),
            }
            feats.update(local)
            row = FeatureRow(
                session_id=session.session_id,
                turn=turn,
                elapsed_s=float(elapsed),
                features=feats,
                label_switch=False,  # unknown at prediction time
                label_mode="",
                turn_eval_delta=0.0,
            )
            out.append((float(elapsed), predict_proba(self.model, row)))
        return out
