"""FastAPI service wrapping the core package.

REST endpoints expose the batch pipeline (simulate/extract/train/eval/
analyze/fragility/replay) over pure-JSON payloads; live hand-and-brain play
runs over a WebSocket speaking the JSON wire protocol. The CLI is a thin
client of this app.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .. import wire
from ..chess.board import ChessError, Move, parse_fen, square_name
from ..chess.pgn import PgnError, game_to_pgn, iter_pgn_positions
from ..engine import EngineConfig, EngineError, open_engine
from ..features import (
    build_feature_rows,
    rows_from_csv,
    rows_to_csv,
    split_dataset,
    turn_task_inputs,
    BEHAVIORAL_FEATURES,
    FEATURE_COLUMNS,
)
from ..fragility import fragility_report
from ..learner import (
    LossParams,
    TrainParams,
    evaluate_metrics,
    load_model,
    model_from_dict,
    model_to_dict,
    train,
)
from ..session import (
    MOVE_MADE,
    OPPONENT_MOVE,
    Phase,
    ProtocolError,
    ReplayError,
    Session,
    SessionEvent,
    SessionLog,
    replay_prefix,
    turn_records,
)
from ..simulator import TruthPolicy, DEMO_POLICY, generate_session
from ..stats import analysis_report, report_markdown
from .models import (
    AnalyzeRequest,
    AnalyzeResponse,
    EngineCfg,
    EvalRequest,
    EvalResponse,
    ExtractRequest,
    ExtractResponse,
    FragilityPgnRequest,
    FragilityPgnResponse,
    FragilityRequest,
    FragilityResponse,
    HealthResponse,
    PieceFragility,
    PositionScore,
    ReplayRequest,
    ReplayResponse,
    SessionLogPayload,
    SimulateRequest,
    SimulateResponse,
    TrainRequest,
    TrainResponse,
)
from .predictor import LivePredictor

VERSION = "0.1.0"

PUBLIC_PHASES = {
    Phase.AWAIT_MODE: "await_mode",
    Phase.AWAIT_PIECE: "await_piece",
    Phase.AWAIT_MOVE: "await_move",
    Phase.OPPONENT: "opponent",
    Phase.FINISHED: "finished",
}


@dataclass
class ServeSettings:
    teammate: EngineConfig = field(
        default_factory=lambda: EngineConfig(role="teammate", depth=2)
    )
    opponent: EngineConfig = field(
        default_factory=lambda: EngineConfig(role="opponent", depth=2)
    )
    logdir: Optional[str] = None
    model_path: Optional[str] = None
    eval_depth: int = 1
    ui_dir: Optional[str] = None


def _log_to_payload(log: SessionLog, session_id: str) -> SessionLogPayload:
    return SessionLogPayload(
        session_id=session_id,
        events=[
            {"t": e.t, "seq": e.seq, "kind": e.kind, "payload": e.payload} for e in log.events
        ],
    )


def _log_from_events(events: list[dict]) -> SessionLog:
    log = SessionLog()
    log.events = [
        SessionEvent(t=int(e["t"]), seq=int(e["seq"]), kind=e["kind"], payload=e["payload"])
        for e in events
    ]
    return log


def create_app(settings: Optional[ServeSettings] = None) -> FastAPI:
    settings = settings or ServeSettings()
    app = FastAPI(title="handbrain", version=VERSION)
    model = load_model(settings.model_path) if settings.model_path else None

    def bad_request(exc: Exception) -> HTTPException:
        return HTTPException(status_code=400, detail=str(exc))

    def engine_error(exc: EngineError) -> HTTPException:
        return HTTPException(status_code=502, detail=f"engine: {exc}")

    @app.get("/api/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=VERSION)

    @app.post("/api/fragility", response_model=FragilityResponse)
    def fragility(req: FragilityRequest) -> FragilityResponse:
        try:
            pos = parse_fen(req.fen)
        except ChessError as exc:
            raise bad_request(exc) from exc
        rep = fragility_report(pos)
        pieces = [
            PieceFragility(
                square=square_name(sq),
                color="white" if color > 0 else "black",
                piece=ptype.name.lower(),
                betweenness=rep.betweenness.get(sq, 0.0),
                attacked=sq in rep.attacked,
            )
            for sq, (color, ptype) in sorted(rep.nodes.items())
        ]
        return FragilityResponse(fen=req.fen, score=rep.score, pieces=pieces)

    @app.post("/api/fragility/pgn", response_model=FragilityPgnResponse)
    def fragility_pgn(req: FragilityPgnRequest) -> FragilityPgnResponse:
        from ..fragility import fragility_score

        games: list[list[PositionScore]] = []
        current: list[PositionScore] = []
        try:
            for pos, mv in iter_pgn_positions(req.pgn):
                from ..chess.board import to_fen

                current.append(
                    PositionScore(
                        fen=to_fen(pos), move=mv.uci() if mv else None, score=fragility_score(pos)
                    )
                )
                if mv is None:
                    games.append(current)
                    current = []
        except (ChessError, PgnError) as exc:
            raise bad_request(exc) from exc
        if current:
            games.append(current)
        return FragilityPgnResponse(games=games)

    @app.post("/api/replay", response_model=ReplayResponse)
    def replay(req: ReplayRequest) -> ReplayResponse:
        try:
            log = _log_from_events(req.events)
        except (KeyError, TypeError, ValueError) as exc:
            raise bad_request(f"bad event stream: {exc}") from exc
        upto = req.upto if req.upto is not None else len(log.events)
        try:
            state = replay_prefix(log, upto)
        except ReplayError as exc:
            raise bad_request(exc) from exc
        pgn = None
        if req.include_pgn:
            moves = [
                Move.from_uci(e.payload["uci"])
                for e in log.events[:upto]
                if e.kind in (MOVE_MADE, OPPONENT_MOVE)
            ]
            pgn = game_to_pgn(moves, state.result or "*")
        return ReplayResponse(
            fen=state.fen,
            phase=PUBLIC_PHASES.get(state.phase, state.phase.value),
            turn=state.turn_index,
            result=state.result,
            mode_history=[m.value for m in state.mode_history],
            events=upto,
            pgn=pgn,
        )

    @app.post("/api/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        policy = TruthPolicy.from_dict(req.policy) if req.policy else DEMO_POLICY
        teammate = (req.teammate or EngineCfg(role="teammate", depth=1)).to_config("teammate")
        opponent = (req.opponent or EngineCfg(role="opponent", depth=1)).to_config("opponent")
        logs = []
        try:
            for i in range(req.sessions):
                sid = f"sim-{req.seed}-{i}"
                log = generate_session(
                    policy, (teammate, opponent), req.turns, seed=req.seed + i, session_id=sid
                )
                logs.append(_log_to_payload(log, sid))
        except EngineError as exc:
            raise engine_error(exc) from exc
        except ValueError as exc:
            raise bad_request(exc) from exc
        return SimulateResponse(logs=logs)

    @app.post("/api/extract", response_model=ExtractResponse)
    def extract(req: ExtractRequest) -> ExtractResponse:
        rows = []
        eval_cfg = EngineConfig(role="evaluator", depth=req.eval_depth)
        try:
            for payload in req.logs:
                log = _log_from_events(payload.events)
                evals, frags = turn_task_inputs(log, eval_cfg)
                rows.extend(
                    build_feature_rows(
                        log, req.k, evals, frags, session_id=payload.session_id
                    )
                )
        except (ReplayError, ChessError, KeyError, ValueError) as exc:
            raise bad_request(exc) from exc
        except EngineError as exc:
            raise engine_error(exc) from exc
        response = ExtractResponse(csv=rows_to_csv(rows), rows=len(rows))
        if req.split_seed is not None and rows:
            split = split_dataset(rows, req.split_seed)
            response.train_csv = rows_to_csv(split.train)
            response.test_csv = rows_to_csv(split.test)
            response.manifest = split.manifest
        return response

    @app.post("/api/train", response_model=TrainResponse)
    def train_endpoint(req: TrainRequest) -> TrainResponse:
        try:
            rows = rows_from_csv(req.csv)
            params = TrainParams(
                trees=req.trees,
                depth=req.depth,
                learning_rate=req.learning_rate,
                min_leaf=req.min_leaf,
                loss=LossParams(gamma=req.gamma, alpha=req.alpha, beta=req.beta),
            )
            names = BEHAVIORAL_FEATURES if req.no_task_features else FEATURE_COLUMNS
            fitted = train(rows, params, seed=req.seed, feature_names=names)
            metrics = evaluate_metrics(fitted, rows)
        except ValueError as exc:
            raise bad_request(exc) from exc
        return TrainResponse(
            model=model_to_dict(fitted),
            features_used=list(names),
            train_rows=len(rows),
            train_metrics=metrics.to_dict(),
        )

    @app.post("/api/eval", response_model=EvalResponse)
    def eval_endpoint(req: EvalRequest) -> EvalResponse:
        try:
            fitted = model_from_dict(req.model)
            rows = rows_from_csv(req.csv)
            metrics = evaluate_metrics(fitted, rows, threshold=req.threshold)
        except ValueError as exc:
            raise bad_request(exc) from exc
        return EvalResponse(metrics=metrics.to_dict(), rows=len(rows))

    @app.post("/api/analyze", response_model=AnalyzeResponse)
    def analyze(req: AnalyzeRequest) -> AnalyzeResponse:
        try:
            rows = rows_from_csv(req.csv)
            report = analysis_report(rows, alpha=req.alpha)
        except ValueError as exc:
            raise bad_request(exc) from exc
        return AnalyzeResponse(report=report, markdown=report_markdown(report))

    @app.websocket("/ws/session")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        session_id = uuid.uuid4().hex[:12]
        origin = time.monotonic()
        clock = lambda: int((time.monotonic() - origin) * 1000)  # noqa: E731
        teammate = open_engine(settings.teammate)
        opponent = open_engine(settings.opponent)
        predictor = (
            LivePredictor(model, EngineConfig(role="evaluator", depth=settings.eval_depth))
            if model
            else None
        )
        sess = Session(session_id, teammate, opponent, clock=clock)
        logfile = None
        if settings.logdir:
            Path(settings.logdir).mkdir(parents=True, exist_ok=True)
            logfile = open(Path(settings.logdir) / f"{session_id}.jsonl", "a", encoding="utf-8")

        def persist(events):
            if logfile:
                for event in events:
                    logfile.write(event.to_json() + "\n")
                logfile.flush()

        async def send_state():
            state = sess.state
            types = (
                [t.name.lower() for t in sess.legal_piece_types()]
                if state.phase in (Phase.AWAIT_MODE, Phase.AWAIT_PIECE)
                else ([state.required_type.name.lower()] if state.required_type else [])
            )
            moves = (
                [m.uci() for m in sess.legal_constrained_moves()]
                if state.phase is not Phase.FINISHED
                else []
            )
            last_move = next(
                (
                    e.payload["uci"]
                    for e in reversed(sess.log.events)
                    if e.kind in (MOVE_MADE, OPPONENT_MOVE)
                ),
                None,
            )
            msg = wire.StateMsg(
                session=session_id,
                fen=state.fen,
                phase=PUBLIC_PHASES[state.phase],
                turn=state.turn_index,
                t=clock(),
                mode=state.mode_history[-1].value if state.mode_history else None,
                required_piece=(
                    state.required_type.name.lower() if state.required_type else None
                ),
                legal_piece_types=types,
                legal_moves=moves,
                last_move=last_move,
                result=state.result,
            )
            await ws.send_text(wire.encode(msg).decode())

        async def emit_predictions():
            if predictor is None:
                return
            for elapsed, p in predictor.pending_predictions(sess, clock()):
                events = [sess.record_prediction(elapsed, p)]
                persist(events)
                await ws.send_text(
                    wire.encode(
                        wire.PredictionMsg(turn=sess.state.turn_index, elapsed=elapsed, p_switch=p)
                    ).decode()
                )

        try:
            persist(sess.start())
            await send_state()
            while True:
                raw = await ws.receive_text()
                try:
                    msg = wire.decode(raw)
                except wire.CodecError as exc:
                    await ws.send_text(
                        wire.encode(
                            wire.ErrorMsg(code="codec", message=str(exc), path=exc.path)
                        ).decode()
                    )
                    continue
                intent = _message_to_intent(msg)
                if intent is None:
                    await ws.send_text(
                        wire.encode(
                            wire.ErrorMsg(code="client_only", message=f"clients cannot send {msg.kind}")
                        ).decode()
                    )
                    continue
                try:
                    events = sess.step(intent)
                except ProtocolError as exc:
                    await ws.send_text(
                        wire.encode(wire.ErrorMsg(code=exc.code, message=str(exc))).decode()
                    )
                    continue
                except EngineError as exc:
                    await ws.send_text(
                        wire.encode(wire.ErrorMsg(code="engine", message=str(exc))).decode()
                    )
                    continue
                persist(events)
                await emit_predictions()
                await send_state()
                if sess.state.phase is Phase.FINISHED:
                    break
        except WebSocketDisconnect:
            if sess.state is not None and sess.state.phase is not Phase.FINISHED:
                persist(sess.step({"kind": "abort"}))
        finally:
            teammate.close()
            opponent.close()
            if predictor:
                predictor.close()
            if logfile:
                logfile.close()

    if settings.ui_dir and Path(settings.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=settings.ui_dir, html=True), name="ui")

    return app


def _message_to_intent(msg) -> Optional[dict]:
    if isinstance(msg, wire.ChooseModeMsg):
        return {"kind": "choose_mode", "mode": msg.mode}
    if isinstance(msg, wire.ChoosePieceMsg):
        return {"kind": "choose_piece", "piece": msg.piece}
    if isinstance(msg, wire.MoveMsg):
        return {"kind": "move", "uci": msg.uci}
    if isinstance(msg, wire.ResignMsg):
        return {"kind": "resign"}
    if isinstance(msg, wire.GazeBatchMsg):
        return {
            "kind": "gaze_batch",
            "samples": [s.model_dump() for s in msg.samples],
        }
    if isinstance(msg, wire.EmotionBatchMsg):
        return {
            "kind": "emotion_batch",
            "samples": [s.model_dump() for s in msg.samples],
        }
    return None
