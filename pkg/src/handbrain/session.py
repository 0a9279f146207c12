"""Hand-and-brain turn protocol: state machine, event log, codec, and replay.

Every session is an append-only stream of timestamped events. The live
service and the offline replayer share one pure transition function, so a
persisted log always re-derives the exact final state without touching any
engine. The human plays White; the opponent engine plays Black.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from .chess.board import (
    STARTPOS_FEN,
    Move,
    PieceType,
    Position,
    _apply_unchecked,
    legal_moves,
    legal_moves_of_type,
    outcome_if_over,
    parse_fen,
    to_fen,
)
from .engine import NoMoveOfTypeError


class ControlMode(str, enum.Enum):
    HAND = "hand"  # AI names the piece type, human plays the move
    BRAIN = "brain"  # human names the piece type, AI plays the move

    @property
    def other(self) -> "ControlMode":
        return ControlMode.BRAIN if self is ControlMode.HAND else ControlMode.HAND


class Phase(str, enum.Enum):
    AWAIT_MODE = "await_mode"
    AWAIT_PIECE = "await_piece"  # brain mode, human to name a type
    AWAIT_MOVE = "await_move"  # hand mode, human to move the required type
    AWAIT_AI_PIECE = "await_ai_piece"  # transient: resolved synchronously by the service
    AWAIT_AI_MOVE = "await_ai_move"  # transient: resolved synchronously by the service
    OPPONENT = "opponent"
    FINISHED = "finished"


# Event kinds as persisted in JSON Lines logs.
SESSION_START = "SessionStart"
OPPONENT_MOVE = "OpponentMove"
MODE_CHOSEN = "ModeChosen"
PIECE_CHOSEN = "PieceTypeChosen"
MOVE_MADE = "MoveMade"
GAZE_BATCH = "GazeBatch"
EMOTION_BATCH = "EmotionBatch"
PREDICTION_EMITTED = "PredictionEmitted"
SESSION_END = "SessionEnd"

EMOTION_CATEGORIES = ("angry", "disgust", "fear", "happy", "sad", "surprise", "neutral")


class ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ReplayError(Exception):
    def __init__(self, index: int, message: str):
        super().__init__(f"event {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class SessionEvent:
    t: int  # ms since session start
    seq: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"t": self.t, "seq": self.seq, "kind": self.kind, "payload": self.payload},
            separators=(",", ":"),
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "SessionEvent":
        raw = json.loads(line)
        return cls(t=int(raw["t"]), seq=int(raw["seq"]), kind=raw["kind"], payload=raw["payload"])


class SessionLog:
    """Append-only, strictly ordered event stream of one session."""

    def __init__(self, events: Optional[list[SessionEvent]] = None):
        self.events: list[SessionEvent] = list(events or [])

    def append(self, event: SessionEvent) -> None:
        if self.events:
            last = self.events[-1]
            if event.seq != last.seq + 1 or event.t < last.t:
                raise ProtocolError("ordering", "events must be strictly ordered")
        self.events.append(event)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(e.to_json() for e in self.events) + "\n", "utf-8")

    @classmethod
    def load(cls, path) -> "SessionLog":
        events = []
        for i, line in enumerate(Path(path).read_text("utf-8").splitlines()):
            if not line.strip():
                continue
            try:
                events.append(SessionEvent.from_json(line))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ReplayError(i, f"bad log line: {exc}") from exc
        return cls(events)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


@dataclass(frozen=True)
class SessionState:
    position: Position
    phase: Phase
    turn_index: int  # 1-based player-turn counter
    required_type: Optional[PieceType]
    mode_history: tuple  # ControlMode per completed (or in-progress) player turn
    result: Optional[str]
    last_opponent_move_t: int  # thinking windows start here (SessionStart.t for turn 1)
    history_keys: tuple  # repetition keys of all positions seen

    @property
    def fen(self) -> str:
        return to_fen(self.position)

    def repetitions(self) -> int:
        key = self.position.repetition_key()
        return sum(1 for k in self.history_keys if k == key)


def initial_state(event: SessionEvent) -> SessionState:
    if event.kind != SESSION_START:
        raise ProtocolError("missing_start", "missing SessionStart")
    pos = parse_fen(event.payload.get("fen", STARTPOS_FEN))
    return SessionState(
        position=pos,
        phase=Phase.AWAIT_MODE,
        turn_index=1,
        required_type=None,
        mode_history=(),
        result=None,
        last_opponent_move_t=event.t,
        history_keys=(pos.repetition_key(),),
    )


def transition(state: SessionState, event: SessionEvent) -> SessionState:
    """Pure state transition; raises ProtocolError and leaves `state` untouched."""
    kind = event.kind
    if state.phase is Phase.FINISHED:
        raise ProtocolError("finished", "session already finished")

    if kind == SESSION_START:
        raise ProtocolError("out_of_phase", "duplicate SessionStart")

    if kind in (GAZE_BATCH, EMOTION_BATCH):
        return state  # behavioral streams carry no game-state change

    if kind == PREDICTION_EMITTED:
        if state.phase is not Phase.AWAIT_MODE:
            raise ProtocolError("out_of_phase", "prediction outside thinking window")
        return state

    if kind == SESSION_END:
        result = event.payload.get("result")
        reason = event.payload.get("reason", "")
        if result == "*":
            if reason != "aborted":
                raise ProtocolError("bad_result", "result '*' is only valid for aborts")
        elif result not in ("1-0", "0-1", "1/2-1/2"):
            raise ProtocolError("bad_result", f"bad result {result!r}")
        elif reason not in ("resignation", "aborted"):
            over = outcome_if_over(state.position, state.repetitions())
            if over is None or over != result:
                raise ProtocolError("bad_result", "result does not match the position")
        return replace(state, phase=Phase.FINISHED, result=result)

    if kind == MODE_CHOSEN:
        if state.phase is not Phase.AWAIT_MODE:
            raise ProtocolError("out_of_phase", f"mode choice during {state.phase.value}")
        mode = ControlMode(event.payload["mode"])
        next_phase = Phase.AWAIT_PIECE if mode is ControlMode.BRAIN else Phase.AWAIT_AI_PIECE
        return replace(state, phase=next_phase, mode_history=state.mode_history + (mode,))

    if kind == PIECE_CHOSEN:
        piece = PieceType[event.payload["piece"].upper()]
        by = event.payload.get("by")
        if state.phase is Phase.AWAIT_PIECE and by == "human":
            pass
        elif state.phase is Phase.AWAIT_AI_PIECE and by == "ai":
            pass
        else:
            raise ProtocolError("out_of_phase", f"piece choice by {by} during {state.phase.value}")
        if not legal_moves_of_type(state.position, piece):
            raise ProtocolError("no_move_of_type", f"no legal {piece.name.lower()} move")
        next_phase = Phase.AWAIT_AI_MOVE if by == "human" else Phase.AWAIT_MOVE
        return replace(state, phase=next_phase, required_type=piece)

    if kind == MOVE_MADE:
        by = event.payload.get("by")
        if state.phase is Phase.AWAIT_MOVE and by == "human":
            pass
        elif state.phase is Phase.AWAIT_AI_MOVE and by == "ai":
            pass
        else:
            raise ProtocolError("out_of_phase", f"move by {by} during {state.phase.value}")
        return _apply_player_move(state, event)

    if kind == OPPONENT_MOVE:
        if state.phase is not Phase.OPPONENT:
            raise ProtocolError("out_of_phase", f"opponent move during {state.phase.value}")
        mv = _parse_move(event.payload.get("uci", ""))
        if mv not in legal_moves(state.position):
            raise ProtocolError("illegal_move", f"illegal opponent move {event.payload.get('uci')}")
        pos = _apply_unchecked(state.position, mv)  # membership just verified
        return replace(
            state,
            position=pos,
            phase=Phase.AWAIT_MODE,
            turn_index=state.turn_index + 1,
            required_type=None,
            last_opponent_move_t=event.t,
            history_keys=state.history_keys + (pos.repetition_key(),),
        )

    raise ProtocolError("unknown_kind", f"unknown event kind {kind!r}")


def _parse_move(uci: str) -> Move:
    try:
        return Move.from_uci(uci)
    except ValueError as exc:
        raise ProtocolError("bad_move", str(exc)) from exc


def _apply_player_move(state: SessionState, event: SessionEvent) -> SessionState:
    mv = _parse_move(event.payload.get("uci", ""))
    assert state.required_type is not None
    constrained = legal_moves_of_type(state.position, state.required_type)
    if mv not in constrained:
        if mv in legal_moves(state.position):
            raise ProtocolError(
                "constraint_violation",
                f"move must be with a {state.required_type.name.lower()}",
            )
        raise ProtocolError("illegal_move", f"illegal move {mv.uci()}")
    pos = _apply_unchecked(state.position, mv)  # constrained membership just verified
    return replace(
        state,
        position=pos,
        phase=Phase.OPPONENT,
        required_type=None,
        history_keys=state.history_keys + (pos.repetition_key(),),
    )


# ---------------------------------------------------------------------------
# Live session service


class Session:
    """Single-owner live session driving the automaton and the engines.

    Intents come from the human side; teammate/opponent engine calls are
    resolved synchronously and appended to the same log, which keeps one time
    base for game and behavioral events.
    """

    def __init__(
        self,
        session_id: str,
        teammate,
        opponent,
        start_fen: str = STARTPOS_FEN,
        clock: Optional[Callable[[], int]] = None,
    ):
        self.session_id = session_id
        self.teammate = teammate
        self.opponent = opponent
        self.start_fen = start_fen
        self._clock = clock or (lambda: 0)
        self.log = SessionLog()
        self.state: Optional[SessionState] = None

    # -- event plumbing ----------------------------------------------------

    def _now(self, t_ms: Optional[int]) -> int:
        t = self._clock() if t_ms is None else t_ms
        if self.log.events:
            t = max(t, self.log.events[-1].t)  # timestamps are monotone
        return int(t)

    def _emit(self, kind: str, payload: dict, t_ms: Optional[int]) -> SessionEvent:
        event = SessionEvent(t=self._now(t_ms), seq=len(self.log.events), kind=kind, payload=payload)
        assert self.state is not None or kind == SESSION_START
        self.state = initial_state(event) if kind == SESSION_START else transition(self.state, event)
        self.log.append(event)
        return event

    # -- lifecycle ----------------------------------------------------------

    def start(self, t_ms: Optional[int] = None, meta: Optional[dict] = None) -> list[SessionEvent]:
        if self.state is not None:
            raise ProtocolError("out_of_phase", "session already started")
        payload = {"session_id": self.session_id, "fen": self.start_fen}
        payload.update(meta or {})
        return [self._emit(SESSION_START, payload, t_ms)]

    def step(self, intent: dict, t_ms: Optional[int] = None) -> list[SessionEvent]:
        """Validate one human intent, advance the automaton, return emitted events.

        On rejection the state is unchanged and a ProtocolError is raised.
        """
        if self.state is None:
            raise ProtocolError("out_of_phase", "session not started")
        kind = intent.get("kind")
        if kind == "choose_mode":
            return self._on_choose_mode(intent, t_ms)
        if kind == "choose_piece":
            return self._on_choose_piece(intent, t_ms)
        if kind == "move":
            return self._on_move(intent, t_ms)
        if kind == "resign":
            self._require_live()
            return [self._emit(SESSION_END, {"result": "0-1", "reason": "resignation"}, t_ms)]
        if kind == "abort":
            self._require_live()
            return [self._emit(SESSION_END, {"result": "*", "reason": "aborted"}, t_ms)]
        if kind == "gaze_batch":
            self._require_live()
            return [self._emit(GAZE_BATCH, {"samples": intent.get("samples", [])}, t_ms)]
        if kind == "emotion_batch":
            self._require_live()
            return [self._emit(EMOTION_BATCH, {"samples": intent.get("samples", [])}, t_ms)]
        raise ProtocolError("unknown_kind", f"unknown intent kind {kind!r}")

    def _require_live(self):
        assert self.state is not None
        if self.state.phase is Phase.FINISHED:
            raise ProtocolError("finished", "session already finished")

    # -- intent handlers ----------------------------------------------------

    def _on_choose_mode(self, intent: dict, t_ms) -> list[SessionEvent]:
        state = self.state
        assert state is not None
        if state.phase is not Phase.AWAIT_MODE:
            raise ProtocolError("out_of_phase", f"mode choice during {state.phase.value}")
        try:
            mode = ControlMode(intent.get("mode"))
        except ValueError:
            raise ProtocolError("bad_mode", f"unknown mode {intent.get('mode')!r}") from None
        events = [self._emit(MODE_CHOSEN, {"mode": mode.value, "turn": state.turn_index}, t_ms)]
        if mode is ControlMode.HAND:
            piece = self._teammate_piece_type()
            events.append(
                self._emit(PIECE_CHOSEN, {"by": "ai", "piece": piece.name.lower()}, t_ms)
            )
        return events

    def _on_choose_piece(self, intent: dict, t_ms) -> list[SessionEvent]:
        state = self.state
        assert state is not None
        if state.phase is not Phase.AWAIT_PIECE:
            raise ProtocolError("out_of_phase", f"piece choice during {state.phase.value}")
        piece = self._parse_piece(intent.get("piece"))
        if not legal_moves_of_type(state.position, piece):
            raise ProtocolError("no_move_of_type", f"no legal {piece.name.lower()} move")
        events = [self._emit(PIECE_CHOSEN, {"by": "human", "piece": piece.name.lower()}, t_ms)]
        try:
            mv = self.teammate.best_move(state.position, piece)
        except NoMoveOfTypeError:  # pragma: no cover - guarded above
            raise ProtocolError("no_move_of_type", f"no legal {piece.name.lower()} move")
        events.append(self._emit(MOVE_MADE, {"by": "ai", "uci": mv.uci()}, t_ms))
        events.extend(self._after_player_move(t_ms))
        return events

    def _on_move(self, intent: dict, t_ms) -> list[SessionEvent]:
        state = self.state
        assert state is not None
        if state.phase is not Phase.AWAIT_MOVE:
            raise ProtocolError("out_of_phase", f"move during {state.phase.value}")
        events = [self._emit(MOVE_MADE, {"by": "human", "uci": intent.get("uci", "")}, t_ms)]
        events.extend(self._after_player_move(t_ms))
        return events

    def _after_player_move(self, t_ms) -> list[SessionEvent]:
        events = []
        state = self.state
        assert state is not None
        over = outcome_if_over(state.position, state.repetitions())
        if over is not None:
            events.append(self._emit(SESSION_END, {"result": over, "reason": "game_over"}, t_ms))
            return events
        reply = self.opponent.best_move(state.position, None)
        events.append(self._emit(OPPONENT_MOVE, {"uci": reply.uci()}, t_ms))
        state = self.state
        over = outcome_if_over(state.position, state.repetitions())
        if over is not None:
            events.append(self._emit(SESSION_END, {"result": over, "reason": "game_over"}, t_ms))
        return events

    def _teammate_piece_type(self) -> PieceType:
        state = self.state
        assert state is not None
        mv = self.teammate.best_move(state.position, None)
        return PieceType(abs(state.position.board[mv.from_sq]))

    @staticmethod
    def _parse_piece(name) -> PieceType:
        try:
            return PieceType[str(name).upper()]
        except KeyError:
            raise ProtocolError("bad_piece", f"unknown piece type {name!r}") from None

    def record_prediction(self, elapsed_s: float, p_switch: float, t_ms: Optional[int] = None):
        state = self.state
        assert state is not None
        payload = {"turn": state.turn_index, "elapsed": elapsed_s, "p_switch": p_switch}
        return self._emit(PREDICTION_EMITTED, payload, t_ms)

    # -- views ----------------------------------------------------------------

    def legal_piece_types(self) -> list[PieceType]:
        state = self.state
        assert state is not None
        return [t for t in PieceType if legal_moves_of_type(state.position, t)]

    def legal_constrained_moves(self) -> list[Move]:
        state = self.state
        assert state is not None
        if state.phase is Phase.AWAIT_MOVE and state.required_type is not None:
            return legal_moves_of_type(state.position, state.required_type)
        return legal_moves(state.position)


def replay_session(log: SessionLog) -> SessionState:
    """Re-derive the final state purely from events, never re-querying engines."""
    return replay_prefix(log, len(log.events))


def replay_prefix(log: SessionLog, upto: int) -> SessionState:
    if not log.events:
        raise ReplayError(0, "missing SessionStart")
    state: Optional[SessionState] = None
    for i, event in enumerate(log.events[:upto]):
        try:
            state = initial_state(event) if i == 0 else transition(state, event)
        except ProtocolError as exc:
            raise ReplayError(i, str(exc)) from exc
    assert state is not None
    return state


# ---------------------------------------------------------------------------
# Log introspection shared by features/stats/replay tooling


@dataclass
class TurnRecord:
    turn: int
    mode: ControlMode
    t_start: int  # opponent's previous move (or session start), ms
    t_mode: int  # mode selection time, ms
    fen_before: str
    fen_after: str  # after White's move
    white_move: str
    switch: Optional[bool]  # None for turn 1

    @property
    def thinking_s(self) -> float:
        return (self.t_mode - self.t_start) / 1000.0


def turn_records(log: SessionLog) -> list[TurnRecord]:
    """Per-player-turn digest of a (possibly unfinished) session log."""
    records: list[TurnRecord] = []
    state: Optional[SessionState] = None
    pending: Optional[dict] = None
    prev_mode: Optional[ControlMode] = None
    for i, event in enumerate(log.events):
        try:
            new_state = initial_state(event) if i == 0 else transition(state, event)
        except ProtocolError as exc:
            raise ReplayError(i, str(exc)) from exc
        if event.kind == MODE_CHOSEN:
            assert state is not None
            mode = ControlMode(event.payload["mode"])
            pending = {
                "turn": state.turn_index,
                "mode": mode,
                "t_start": state.last_opponent_move_t,
                "t_mode": event.t,
                "fen_before": state.fen,
                "switch": None if prev_mode is None else mode is not prev_mode,
            }
            prev_mode = mode
        elif event.kind == MOVE_MADE and pending is not None:
            pending["fen_after"] = new_state.fen
            pending["white_move"] = event.payload["uci"]
            records.append(TurnRecord(**pending))
            pending = None
        state = new_state
    return records


def gaze_stream(log: SessionLog) -> list[dict]:
    samples = []
    for event in log.events:
        if event.kind == GAZE_BATCH:
            samples.extend(event.payload.get("samples", []))
    return samples


def emotion_stream(log: SessionLog) -> list[dict]:
    samples = []
    for event in log.events:
        if event.kind == EMOTION_BATCH:
            samples.extend(event.payload.get("samples", []))
    return samples
