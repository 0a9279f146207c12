"""SAN notation and minimal PGN export/import on top of the rules kernel."""

from __future__ import annotations

import re
from typing import Iterator, Optional

from .board import (
    BLACK,
    STARTPOS_FEN,
    WHITE,
    ChessError,
    Move,
    PieceType,
    Position,
    apply_move,
    in_check,
    legal_moves,
    parse_fen,
    square_name,
)


class PgnError(ChessError):
    pass


def san(pos: Position, mv: Move) -> str:
    """Standard algebraic notation for a legal move in `pos`."""
    moves = legal_moves(pos)
    if mv not in moves:
        raise PgnError(f"move {mv.uci()} not legal in position")
    piece = abs(pos.board[mv.from_sq])
    capture = pos.board[mv.to_sq] != 0 or (piece == PieceType.PAWN and mv.to_sq == pos.ep)

    if piece == PieceType.KING and abs(mv.to_sq - mv.from_sq) == 2:
        text = "O-O" if mv.to_sq > mv.from_sq else "O-O-O"
    elif piece == PieceType.PAWN:
        text = square_name(mv.from_sq)[0] + "x" if capture else ""
        text += square_name(mv.to_sq)
        if mv.promotion:
            text += "=" + mv.promotion.letter
    else:
        text = PieceType(piece).letter
        # Disambiguate against same-type moves onto the same target square.
        rivals = [
            m
            for m in moves
            if m.to_sq == mv.to_sq and m.from_sq != mv.from_sq and abs(pos.board[m.from_sq]) == piece
        ]
        if rivals:
            same_file = any((m.from_sq & 7) == (mv.from_sq & 7) for m in rivals)
            same_rank = any((m.from_sq >> 3) == (mv.from_sq >> 3) for m in rivals)
            if not same_file:
                text += square_name(mv.from_sq)[0]
            elif not same_rank:
                text += square_name(mv.from_sq)[1]
            else:
                text += square_name(mv.from_sq)
        if capture:
            text += "x"
        text += square_name(mv.to_sq)

    after = apply_move(pos, mv)
    if in_check(after):
        text += "#" if not legal_moves(after) else "+"
    return text


def parse_san(pos: Position, text: str) -> Move:
    """Resolve a SAN token against the legal moves of `pos`."""
    wanted = text.strip().rstrip("!?")
    for mv in legal_moves(pos):
        if san(pos, mv).rstrip("+#") == wanted.rstrip("+#"):
            return mv
    raise PgnError(f"no legal move matches SAN {text!r}")


def game_to_pgn(
    moves: list[Move],
    result: str,
    start_fen: str = STARTPOS_FEN,
    tags: Optional[dict] = None,
) -> str:
    """Render a finished game as PGN with SAN movetext and a Result tag."""
    headers = {"Event": "hand-and-brain session", "Result": result}
    if start_fen != STARTPOS_FEN:
        headers["SetUp"] = "1"
        headers["FEN"] = start_fen
    headers.update(tags or {})
    lines = [f'[{key} "{value}"]' for key, value in headers.items()]
    lines.append("")

    pos = parse_fen(start_fen)
    tokens = []
    for mv in moves:
        if pos.side == WHITE:
            tokens.append(f"{pos.fullmove}.")
        elif not tokens:
            tokens.append(f"{pos.fullmove}...")
        tokens.append(san(pos, mv))
        pos = apply_move(pos, mv)
    tokens.append(result)

    movetext, line = [], ""
    for tok in tokens:
        if len(line) + len(tok) + 1 > 80:
            movetext.append(line)
            line = tok
        else:
            line = tok if not line else line + " " + tok
    movetext.append(line)
    return "\n".join(lines + movetext) + "\n"


_TAG_RE = re.compile(r"^\[(\w+)\s+\"(.*)\"\]\s*$")
_SKIP_TOKENS = re.compile(r"\{[^}]*\}|;[^\n]*|\$\d+")


def iter_pgn_positions(text: str) -> Iterator[tuple[Position, Optional[Move]]]:
    """Yield (position, move_played) for every position of the games in a PGN string.

    The final position of each game is yielded with move None. Variations are
    not supported; comments and NAGs are skipped.
    """
    for tags, movetext in _split_games(text):
        fen = tags.get("FEN", STARTPOS_FEN)
        pos = parse_fen(fen)
        clean = _SKIP_TOKENS.sub(" ", movetext)
        for token in clean.split():
            if re.fullmatch(r"\d+\.(\.\.)?|\.\.\.", token):
                continue
            if token in ("1-0", "0-1", "1/2-1/2", "*"):
                break
            token = re.sub(r"^\d+\.(\.\.)?", "", token)
            if not token:
                continue
            mv = parse_san(pos, token)
            yield pos, mv
            pos = apply_move(pos, mv)
        yield pos, None


def _split_games(text: str) -> Iterator[tuple[dict, str]]:
    tags: dict = {}
    body: list[str] = []
    seen_moves = False
    for line in text.splitlines():
        m = _TAG_RE.match(line)
        if m:
            if seen_moves:
                yield tags, " ".join(body)
                tags, body, seen_moves = {}, [], False
            tags[m.group(1)] = m.group(2)
        elif line.strip():
            body.append(line.strip())
            seen_moves = True
    if body or tags:
        yield tags, " ".join(body)
