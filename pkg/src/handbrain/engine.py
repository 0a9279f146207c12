"""Engine bridge: evaluation, constrained best moves, and piece-type picking.

Two backends share one interface: a deterministic builtin alpha-beta searcher
(no external binaries needed, used by all tests and the simulator) and a UCI
client driving an external engine over stdin/stdout. Constrained moves go
through `searchmoves` on UCI engines and through root-move filtering on the
builtin one.
"""

from __future__ import annotations

import hashlib
import math
import queue
import random
import subprocess
import threading
from dataclasses import dataclass, replace
from typing import Optional

from .chess.board import (
    BLACK,
    WHITE,
    Move,
    PieceType,
    Position,
    _apply_unchecked,
    _pseudo_moves,
    in_check,
    legal_moves,
    legal_moves_of_type,
)

MATE_SCORE = 30000
_MATE_BOUND = MATE_SCORE - 1000


class EngineError(Exception):
    pass


class EngineTransportError(EngineError):
    """Engine process unreachable, crashed, or failed the UCI handshake."""


class EngineTimeoutError(EngineError):
    """Engine did not answer within the allotted time."""


class NoMoveOfTypeError(EngineError):
    def __init__(self, piece_type: Optional[PieceType]):
        name = piece_type.name.lower() if piece_type else "any"
        super().__init__(f"no legal move of type {name}")
        self.piece_type = piece_type


@dataclass(frozen=True)
class EngineConfig:
    role: str = "evaluator"  # teammate | opponent | evaluator
    path: str = "builtin"
    depth: Optional[int] = None
    movetime_ms: Optional[int] = None
    elo: Optional[int] = None
    seed: int = 0
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.role not in ("teammate", "opponent", "evaluator"):
            raise ValueError(f"unknown engine role {self.role!r}")
        if (self.depth is None) == (self.movetime_ms is None):
            raise ValueError("exactly one of depth/movetime_ms must be set")

    @property
    def is_builtin(self) -> bool:
        return self.path == "builtin"

    def effective_depth(self) -> int:
        """Search depth for the builtin engine (movetime is mapped to depth)."""
        if self.depth is not None:
            return max(1, self.depth)
        assert self.movetime_ms is not None
        if self.movetime_ms <= 150:
            return 1
        if self.movetime_ms <= 1500:
            return 2
        return 3


@dataclass(frozen=True)
class Evaluation:
    """Score from White's perspective: centipawns or a mate-in-N-plies sentinel."""

    cp: Optional[int]
    mate: Optional[int]  # signed plies to mate (positive: White mates)
    depth: int

    def __post_init__(self):
        if (self.cp is None) == (self.mate is None):
            raise ValueError("exactly one of cp/mate must be set")

    def as_cp(self) -> int:
        if self.cp is not None:
            return self.cp
        assert self.mate is not None
        return MATE_SCORE - abs(self.mate) if self.mate > 0 else -(MATE_SCORE - abs(self.mate))

    @classmethod
    def from_score(cls, score_white: int, depth: int) -> "Evaluation":
        if abs(score_white) > _MATE_BOUND:
            plies = MATE_SCORE - abs(score_white)
            return cls(cp=None, mate=plies if score_white > 0 else -plies, depth=depth)
        return cls(cp=score_white, mate=None, depth=depth)


# ---------------------------------------------------------------------------
# Builtin engine

PIECE_VALUES = {
    PieceType.PAWN: 100,
    PieceType.KNIGHT: 320,
    PieceType.BISHOP: 330,
    PieceType.ROOK: 500,
    PieceType.QUEEN: 900,
    PieceType.KING: 0,
}

# Piece-square tables, laid out visually from rank 8; white pieces index with
# sq ^ 56, black pieces with sq.
_PST = {
    PieceType.PAWN: (
        0, 0, 0, 0, 0, 0, 0, 0,
        50, 50, 50, 50, 50, 50, 50, 50,
        10, 10, 20, 30, 30, 20, 10, 10,
        5, 5, 10, 25, 25, 10, 5, 5,
        0, 0, 0, 20, 20, 0, 0, 0,
        5, -5, -10, 0, 0, -10, -5, 5,
        5, 10, 10, -20, -20, 10, 10, 5,
        0, 0, 0, 0, 0, 0, 0, 0,
    ),
    PieceType.KNIGHT: (
        -50, -40, -30, -30, -30, -30, -40, -50,
        -40, -20, 0, 0, 0, 0, -20, -40,
        -30, 0, 10, 15, 15, 10, 0, -30,
        -30, 5, 15, 20, 20, 15, 5, -30,
        -30, 0, 15, 20, 20, 15, 0, -30,
        -30, 5, 10, 15, 15, 10, 5, -30,
        -40, -20, 0, 5, 5, 0, -20, -40,
        -50, -40, -30, -30, -30, -30, -40, -50,
    ),
    PieceType.BISHOP: (
        -20, -10, -10, -10, -10, -10, -10, -20,
        -10, 0, 0, 0, 0, 0, 0, -10,
        -10, 0, 5, 10, 10, 5, 0, -10,
        -10, 5, 5, 10, 10, 5, 5, -10,
        -10, 0, 10, 10, 10, 10, 0, -10,
        -10, 10, 10, 10, 10, 10, 10, -10,
        -10, 5, 0, 0, 0, 0, 5, -10,
        -20, -10, -10, -10, -10, -10, -10, -20,
    ),
    PieceType.ROOK: (
        0, 0, 0, 0, 0, 0, 0, 0,
        5, 10, 10, 10, 10, 10, 10, 5,
        -5, 0, 0, 0, 0, 0, 0, -5,
        -5, 0, 0, 0, 0, 0, 0, -5,
        -5, 0, 0, 0, 0, 0, 0, -5,
        -5, 0, 0, 0, 0, 0, 0, -5,
        -5, 0, 0, 0, 0, 0, 0, -5,
        0, 0, 0, 5, 5, 0, 0, 0,
    ),
    PieceType.QUEEN: (
        -20, -10, -10, -5, -5, -10, -10, -20,
        -10, 0, 0, 0, 0, 0, 0, -10,
        -10, 0, 5, 5, 5, 5, 0, -10,
        -5, 0, 5, 5, 5, 5, 0, -5,
        0, 0, 5, 5, 5, 5, 0, -5,
        -10, 5, 5, 5, 5, 5, 0, -10,
        -10, 0, 5, 0, 0, 0, 0, -10,
        -20, -10, -10, -5, -5, -10, -10, -20,
    ),
    PieceType.KING: (
        -30, -40, -40, -50, -50, -40, -40, -30,
        -30, -40, -40, -50, -50, -40, -40, -30,
        -30, -40, -40, -50, -50, -40, -40, -30,
        -30, -40, -40, -50, -50, -40, -40, -30,
        -20, -30, -30, -40, -40, -30, -30, -20,
        -10, -20, -20, -20, -20, -20, -20, -10,
        20, 20, 0, 0, 0, 0, 20, 20,
        20, 30, 10, 0, 0, 10, 30, 20,
    ),
}


def static_eval(pos: Position) -> int:
    """Material + piece-square score in centipawns from White's perspective.

    Exactly anti-symmetric under board mirroring, which the Evaluation
    invariant (mirrored positions negate) relies on.
    """
    score = 0
    white_material = black_material = 0
    white_king = black_king = 0
    for sq, p in enumerate(pos.board):
        if p == 0:
            continue
        ptype = PieceType(abs(p))
        value = PIECE_VALUES[ptype]
        if p > 0:
            score += value + _PST[ptype][sq ^ 56]
            white_material += value
            if ptype == PieceType.KING:
                white_king = sq
        else:
            score -= value + _PST[ptype][sq]
            black_material += value
            if ptype == PieceType.KING:
                black_king = sq

    # Mop-up: drive a bare king to the edge when the other side can win.
    if black_material == 0 and white_material >= PIECE_VALUES[PieceType.ROOK]:
        score += _mopup_bonus(white_king, black_king)
    elif white_material == 0 and black_material >= PIECE_VALUES[PieceType.ROOK]:
        score -= _mopup_bonus(black_king, white_king)
    return score


def _mopup_bonus(strong_king: int, bare_king: int) -> int:
    bf, br = bare_king & 7, bare_king >> 3
    edge_dist = abs(2 * bf - 7) + abs(2 * br - 7)  # 0 center .. 14 corner
    kings_apart = abs((strong_king & 7) - bf) + abs((strong_king >> 3) - br)
    return 200 + 8 * edge_dist + 6 * (14 - kings_apart)


def _order_moves(pos: Position, moves: list[Move]) -> list[Move]:
    def key(m: Move):
        victim = abs(pos.board[m.to_sq])
        attacker = abs(pos.board[m.from_sq])
        return (-victim, attacker, m.uci())

    return sorted(moves, key=key)


def _negamax(pos: Position, depth: int, alpha: int, beta: int, ply: int) -> int:
    moves = legal_moves(pos)
    if not moves:
        return -(MATE_SCORE - ply) if in_check(pos) else 0
    if depth == 0:
        return static_eval(pos) * pos.side
    best = -MATE_SCORE - 1
    for mv in _order_moves(pos, moves):
        score = -_negamax(_apply_unchecked(pos, mv), depth - 1, -beta, -alpha, ply + 1)
        if score > best:
            best = score
        if best > alpha:
            alpha = best
        if alpha >= beta:
            break
    return best


class BuiltinEngine:
    """Deterministic fixed-depth searcher; a pure function of (pos, cfg)."""

    def __init__(self, cfg: EngineConfig):
        self.cfg = cfg

    def evaluate(self, pos: Position) -> Evaluation:
        depth = self.cfg.effective_depth()
        score = _negamax(pos, depth, -MATE_SCORE - 1, MATE_SCORE + 1, 0) * pos.side
        return Evaluation.from_score(score, depth)

    def best_move(self, pos: Position, constraint: Optional[PieceType] = None) -> Move:
        moves = legal_moves_of_type(pos, constraint)
        if not moves:
            raise NoMoveOfTypeError(constraint)
        depth = self.cfg.effective_depth()
        best_mv, best_score = None, -MATE_SCORE - 1
        for mv in _order_moves(pos, moves):
            score = -_negamax(
                _apply_unchecked(pos, mv), depth - 1, -MATE_SCORE - 1, -best_score, 1
            )
            if score > best_score:
                best_mv, best_score = mv, score
        assert best_mv is not None
        return best_mv

    def close(self):
        pass


# ---------------------------------------------------------------------------
# UCI client


class UciEngine:
    """Child-process UCI engine handle; owned by a single session at a time."""

    def __init__(self, cfg: EngineConfig):
        self.cfg = cfg
        try:
            self._proc = subprocess.Popen(
                [cfg.path],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise EngineTransportError(f"cannot start engine {cfg.path!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._options: set[str] = set()
        self._handshake()

    def _pump(self):
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(None)  # EOF marker

    def _send(self, command: str):
        if self._proc.poll() is not None or self._proc.stdin is None:
            raise EngineTransportError("engine process exited")
        try:
            self._proc.stdin.write(command + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EngineTransportError(f"engine pipe broken: {exc}") from exc

    def _read_until(self, token: str, timeout: float) -> list[str]:
        seen = []
        while True:
            try:
                line = self._lines.get(timeout=timeout)
            except queue.Empty:
                raise EngineTimeoutError(f"timed out waiting for {token!r}") from None
            if line is None:
                raise EngineTransportError("engine closed its output stream")
            seen.append(line)
            if line.split() and line.split()[0] == token:
                return seen

    def _handshake(self):
        self._send("uci")
        for line in self._read_until("uciok", self.cfg.timeout_s):
            parts = line.split()
            if len(parts) >= 3 and parts[0] == "option" and parts[1] == "name":
                self._options.add(parts[2])
        if self.cfg.elo is not None and "UCI_Elo" in self._options:
            self._send("setoption name UCI_LimitStrength value true")
            self._send(f"setoption name UCI_Elo value {self.cfg.elo}")
        self._send("isready")
        self._read_until("readyok", self.cfg.timeout_s)

    def _go(self, pos: Position, root_moves: Optional[list[Move]]) -> tuple[str, Optional[dict]]:
        from .chess.board import to_fen

        self._send(f"position fen {to_fen(pos)}")
        if self.cfg.depth is not None:
            go = f"go depth {self.cfg.depth}"
            timeout = self.cfg.timeout_s
        else:
            go = f"go movetime {self.cfg.movetime_ms}"
            timeout = self.cfg.movetime_ms / 1000 + self.cfg.timeout_s
        if root_moves is not None:
            go += " searchmoves " + " ".join(m.uci() for m in root_moves)
        self._send(go)
        score = None
        for line in self._read_until("bestmove", timeout):
            parts = line.split()
            if parts and parts[0] == "info" and "score" in parts:
                i = parts.index("score")
                try:
                    score = {"kind": parts[i + 1], "value": int(parts[i + 2])}
                except (IndexError, ValueError):
                    pass
            if parts and parts[0] == "bestmove":
                return parts[1], score
        raise EngineTransportError("missing bestmove")  # pragma: no cover

    def evaluate(self, pos: Position) -> Evaluation:
        _, score = self._go(pos, None)
        depth = self.cfg.depth or 0
        if score is None:
            raise EngineTransportError("engine reported no score")
        # UCI scores are side-to-move relative; normalize to White's view.
        value = score["value"] * (1 if pos.side == WHITE else -1)
        if score["kind"] == "mate":
            plies = max(1, 2 * abs(value) - 1)  # mate in N moves ~ 2N-1 plies
            return Evaluation(cp=None, mate=plies if value > 0 else -plies, depth=depth)
        return Evaluation(cp=value, mate=None, depth=depth)

    def best_move(self, pos: Position, constraint: Optional[PieceType] = None) -> Move:
        root = None
        if constraint is not None:
            root = legal_moves_of_type(pos, constraint)
            if not root:
                raise NoMoveOfTypeError(constraint)
        uci, _ = self._go(pos, root)
        mv = Move.from_uci(uci)
        if mv not in legal_moves_of_type(pos, constraint):
            raise EngineTransportError(f"engine answered illegal/constrained-violating {uci}")
        return mv

    def close(self):
        try:
            self._send("quit")
        except EngineError:
            pass
        try:
            self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self._proc.kill()


def open_engine(cfg: EngineConfig):
    return BuiltinEngine(cfg) if cfg.is_builtin else UciEngine(cfg)


# ---------------------------------------------------------------------------
# Module-level operations


def evaluate(pos: Position, cfg: EngineConfig) -> Evaluation:
    engine = open_engine(cfg)
    try:
        return engine.evaluate(pos)
    finally:
        engine.close()


def constrained_best_move(
    pos: Position, constraint: Optional[PieceType], cfg: EngineConfig
) -> Move:
    engine = open_engine(cfg)
    try:
        return engine.best_move(pos, constraint)
    finally:
        engine.close()


def pick_piece_type(pos: Position, cfg: EngineConfig) -> PieceType:
    """Piece type of the engine's unrestricted best move (hand-mode selection)."""
    engine = open_engine(cfg)
    try:
        mv = engine.best_move(pos, None)
    finally:
        engine.close()
    return PieceType(abs(pos.board[mv.from_sq]))


FALLBACK_TEMPERATURE = 1.0
FALLBACK_TOP_K = 3


def fallback_move(pos: Position, constraint: Optional[PieceType], seed: int) -> Move:
    """Deterministic imperfect move policy: 2-ply material+mobility scoring with
    softmax sampling over the top 3 candidates.

    Used as the offline stand-in for a human-like teammate engine.
    """
    candidates = legal_moves_of_type(pos, constraint)
    if not candidates:
        raise NoMoveOfTypeError(constraint)

    scored = []
    for mv in sorted(candidates, key=Move.uci):
        after = _apply_unchecked(pos, mv)
        replies = legal_moves(after)
        if not replies:
            worst = (MATE_SCORE - 1) if in_check(after) else 0
        else:
            worst = min(-static_eval(_apply_unchecked(after, r)) * after.side for r in replies)
            worst -= 2 * len(replies)  # opponent freedom counts against us
        own_mobility = len(_pseudo_moves(replace(after, side=pos.side, ep=None), None))
        scored.append((worst + 2 * own_mobility, mv))

    scored.sort(key=lambda t: (-t[0], t[1].uci()))
    top = scored[:FALLBACK_TOP_K]
    weights = [math.exp(s / (100.0 * FALLBACK_TEMPERATURE)) for s, _ in top]
    total = sum(weights)

    digest = hashlib.sha256(
        f"{pos.repetition_key()}|{constraint}|{seed}".encode()
    ).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    pick = rng.random() * total
    acc = 0.0
    for w, (_, mv) in zip(weights, top):
        acc += w
        if pick <= acc:
            return mv
    return top[-1][1]
