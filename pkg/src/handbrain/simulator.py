"""Synthetic session generator with a known ground-truth switching policy.

Stands in for the unavailable human dataset: seeded games played through the
real session protocol, with gaze synthesized as bursts around candidate-move
squares and emotion streams that spike after large evaluation swings. Every
random draw comes from purpose-keyed substreams of the session seed, so
`truth_labels` can re-derive the exact per-turn switch probabilities from a
log alone.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import asdict, dataclass
from typing import Optional

from .chess.board import PieceType, Position, legal_moves_of_type, parse_fen
from .engine import BuiltinEngine, EngineConfig, open_engine, static_eval
from .chess.board import _apply_unchecked
from .fragility import fragility_score
from .session import ControlMode, Phase, ReplayError, Session, SessionLog, turn_records

SIM_VERSION = 1
BOARD_PX = (100.0, 100.0, 800.0)  # virtual screen geometry for gaze synthesis
GAZE_HZ = 30
EMOTION_HZ = 3
THINK_MEDIAN_S = 4.0
THINK_SIGMA = 0.6
THINK_RANGE_S = (0.5, 60.0)
SURPRISE_SWING_CP = 80


@dataclass(frozen=True)
class TruthPolicy:
    """Logistic switching policy over task/behavioral turn state."""

    intercept: float = 0.0
    w_fragility: float = 0.0
    w_entropy: float = 0.0  # per-turn gaze-dispersion target in [0, 1]
    w_elapsed: float = 0.0  # thinking time / 60 s
    w_prev_mode: float = 0.0  # 1 when the previous turn was brain
    w_eval: float = 0.0  # evaluation, cp/100 clipped to [-10, 10]
    noise: float = 0.0  # label-flip probability

    def __post_init__(self):
        if not 0.0 <= self.noise < 0.5:
            raise ValueError("noise must be in [0, 0.5)")

    def switch_probability(
        self,
        fragility: float,
        entropy_target: float,
        elapsed_s: float,
        prev_mode: ControlMode,
        eval_cp: float,
    ) -> float:
        z = (
            self.intercept
            + self.w_fragility * fragility
            + self.w_entropy * entropy_target
            + self.w_elapsed * (elapsed_s / 60.0)
            + self.w_prev_mode * (1.0 if prev_mode is ControlMode.BRAIN else 0.0)
            + self.w_eval * max(-10.0, min(10.0, eval_cp / 100.0))
        )
        if z >= 700.0:  # extreme coefficients saturate to a hard threshold rule
            return 1.0
        if z <= -700.0:
            return 0.0
        return 1.0 / (1.0 + math.exp(-z))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TruthPolicy":
        return cls(**data)


# A mildly fragility/attention-driven policy; the CLI default.
DEMO_POLICY = TruthPolicy(
    intercept=-2.2,
    w_fragility=14.0,
    w_entropy=1.6,
    w_elapsed=0.8,
    w_prev_mode=0.3,
    w_eval=0.0,
    noise=0.05,
)


def _substream(seed: int, *key) -> random.Random:
    digest = hashlib.sha256(f"{seed}|{'|'.join(map(str, key))}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _thinking_time_ms(seed: int, turn: int) -> int:
    rng = _substream(seed, "think", turn)
    t = THINK_MEDIAN_S * math.exp(THINK_SIGMA * rng.gauss(0.0, 1.0))
    return int(round(max(THINK_RANGE_S[0], min(THINK_RANGE_S[1], t)) * 1000))


def _entropy_target(seed: int, turn: int) -> float:
    return _substream(seed, "target", turn).random()


def _square_center(sq: int) -> tuple:
    x0, y0, size = BOARD_PX
    cell = size / 8.0
    file, rank = sq & 7, sq >> 3
    return (x0 + (file + 0.5) * cell, y0 + (7 - rank + 0.5) * cell)


def _candidate_squares(pos: Position, target: float) -> list:
    count = 1 + int(round(target * 9))
    seen: list = []
    for mv in sorted(legal_moves_of_type(pos, None), key=lambda m: m.uci()):
        if mv.to_sq not in seen:
            seen.append(mv.to_sq)
        if len(seen) >= count:
            break
    return seen or [28]  # e4 as a neutral anchor if no legal moves


def _synth_gaze(rng: random.Random, pos: Position, target: float, t0: int, t1: int) -> list:
    candidates = [_square_center(sq) for sq in _candidate_squares(pos, target)]
    sigma = 18.0 + 70.0 * target
    step = int(1000 / GAZE_HZ)
    samples = []
    for t in range(t0, t1, step):
        if rng.random() < 0.06:  # occasional off-board excursion
            x = rng.uniform(0, BOARD_PX[0] + BOARD_PX[2] + 200)
            y = rng.choice([rng.uniform(0, BOARD_PX[1] - 5), rng.uniform(905, 1080)])
        else:
            cx, cy = candidates[rng.randrange(len(candidates))]
            x = rng.gauss(cx, sigma)
            y = rng.gauss(cy, sigma)
        samples.append({"t": t, "x": round(x, 1), "y": round(y, 1), "valid": True})
    return samples


def _synth_emotion(rng: random.Random, surprised: bool, t0: int, t1: int) -> list:
    step = int(1000 / EMOTION_HZ)
    samples = []
    for t in range(t0, t1, step):
        base = 0.55 if (surprised and t - t0 < 2000) else 0.18
        s = min(0.95, max(0.02, rng.gauss(base, 0.04)))
        rest = 1.0 - s
        neutral = rest * 0.7
        other = rest * 0.3 / 5.0
        samples.append(
            {
                "t": t,
                "probs": {
                    "angry": other,
                    "disgust": other,
                    "fear": other,
                    "happy": other,
                    "sad": other,
                    "surprise": s,
                    "neutral": neutral,
                },
            }
        )
    return samples


def _human_move(pos: Position, piece: PieceType, rng: random.Random):
    """Imperfect 1-ply move choice: softmax over the top 3 static scores."""
    moves = sorted(legal_moves_of_type(pos, piece), key=lambda m: m.uci())
    scored = sorted(
        ((static_eval(_apply_unchecked(pos, m)) * pos.side, m) for m in moves),
        key=lambda t: (-t[0], t[1].uci()),
    )[:3]
    weights = [math.exp(s / 100.0) for s, _ in scored]
    pick = rng.random() * sum(weights)
    acc = 0.0
    for w, (_, mv) in zip(weights, scored):
        acc += w
        if pick <= acc:
            return mv
    return scored[-1][1]


def _human_piece_choice(pos: Position, rng: random.Random) -> PieceType:
    movable = [t for t in PieceType if legal_moves_of_type(pos, t)]
    weights = [len(legal_moves_of_type(pos, t)) for t in movable]
    pick = rng.random() * sum(weights)
    acc = 0.0
    for w, t in zip(weights, movable):
        acc += w
        if pick <= acc:
            return t
    return movable[-1]


def generate_session(
    policy: TruthPolicy,
    engines: tuple,
    turns: int,
    seed: int,
    session_id: Optional[str] = None,
) -> SessionLog:
    """Play one synthetic hand-and-brain session; deterministic given seed."""
    if turns < 2:
        raise ValueError("turns must be >= 2")
    teammate_cfg, opponent_cfg = engines
    teammate = open_engine(teammate_cfg)
    opponent = open_engine(opponent_cfg)
    evaluator = BuiltinEngine(EngineConfig(role="evaluator", depth=1))
    sid = session_id or f"sim-{seed}"
    sess = Session(sid, teammate, opponent)
    meta = {
        "simulator": {"version": SIM_VERSION, "seed": seed, "policy": policy.to_dict()},
        "board_px": list(BOARD_PX),
    }
    sess.start(t_ms=0, meta=meta)

    prev_mode: Optional[ControlMode] = None
    prev_eval: Optional[float] = None
    t = 0
    try:
        for turn in range(1, turns + 1):
            if sess.state.phase is Phase.FINISHED:
                break
            assert sess.state.phase is Phase.AWAIT_MODE
            pos = sess.state.position
            frag = fragility_score(pos)
            eval_cp = float(evaluator.evaluate(pos).as_cp())
            target = _entropy_target(seed, turn)
            think_ms = _thinking_time_ms(seed, turn)
            t0 = t

            surprised = prev_eval is not None and abs(eval_cp - prev_eval) >= SURPRISE_SWING_CP
            gaze = _synth_gaze(_substream(seed, "gaze", turn), pos, target, t0, t0 + think_ms)
            emotion = _synth_emotion(
                _substream(seed, "emotion", turn), surprised, t0, t0 + think_ms
            )
            if gaze:
                sess.step({"kind": "gaze_batch", "samples": gaze}, t_ms=t0)
            if emotion:
                sess.step({"kind": "emotion_batch", "samples": emotion}, t_ms=t0)

            if prev_mode is None:
                mode = (
                    ControlMode.HAND
                    if _substream(seed, "mode", turn).random() < 0.5
                    else ControlMode.BRAIN
                )
            else:
                p = policy.switch_probability(frag, target, think_ms / 1000.0, prev_mode, eval_cp)
                switch = _substream(seed, "switch", turn).random() < p
                if policy.noise > 0 and _substream(seed, "noise", turn).random() < policy.noise:
                    switch = not switch
                mode = prev_mode.other if switch else prev_mode

            t = t0 + think_ms
            sess.step({"kind": "choose_mode", "mode": mode.value}, t_ms=t)
            act_rng = _substream(seed, "act", turn)
            t += act_rng.randrange(200, 900)
            if sess.state.phase is Phase.AWAIT_PIECE:
                piece = _human_piece_choice(sess.state.position, act_rng)
                sess.step({"kind": "choose_piece", "piece": piece.name.lower()}, t_ms=t)
            elif sess.state.phase is Phase.AWAIT_MOVE:
                mv = _human_move(sess.state.position, sess.state.required_type, act_rng)
                sess.step({"kind": "move", "uci": mv.uci()}, t_ms=t)
            prev_mode = mode
            prev_eval = eval_cp

        if sess.state.phase is not Phase.FINISHED:
            sess.step({"kind": "resign"}, t_ms=t + 500)
    finally:
        teammate.close()
        opponent.close()
        evaluator.close()
    return sess.log


def truth_labels(log: SessionLog, policy: TruthPolicy) -> dict:
    """Recompute the per-turn switch probabilities the generator sampled from.

    Only works on logs produced by this simulator (the seed and policy are
    embedded in SessionStart); raises ReplayError on foreign logs.
    """
    if not log.events:
        raise ReplayError(0, "missing SessionStart")
    meta = log.events[0].payload.get("simulator")
    if not meta or meta.get("version") != SIM_VERSION:
        raise ReplayError(0, "not a simulator-generated log")
    if meta.get("policy") != policy.to_dict():
        raise ReplayError(0, "policy does not match the one embedded in the log")
    seed = meta["seed"]

    evaluator = BuiltinEngine(EngineConfig(role="evaluator", depth=1))
    probs: dict = {}
    try:
        prev_mode: Optional[ControlMode] = None
        for rec in turn_records(log):
            if prev_mode is not None:
                pos = parse_fen(rec.fen_before)
                eval_cp = float(evaluator.evaluate(pos).as_cp()) if policy.w_eval else 0.0
                probs[rec.turn] = policy.switch_probability(
                    fragility_score(pos),
                    _entropy_target(seed, rec.turn),
                    (rec.t_mode - rec.t_start) / 1000.0,
                    prev_mode,
                    eval_cp,
                )
            prev_mode = rec.mode
    finally:
        evaluator.close()
    return probs


def default_engines(seed: int = 0) -> tuple:
    """Fast deterministic engine pair used for bulk simulation."""
    return (
        EngineConfig(role="teammate", depth=1, seed=seed),
        EngineConfig(role="opponent", depth=1, seed=seed),
    )
