from .board import (
    BLACK,
    FAMILIARIZATION_FENS,
    STARTPOS_FEN,
    WHITE,
    FenError,
    IllegalMoveError,
    Move,
    PieceType,
    Position,
    apply_move,
    in_check,
    legal_moves,
    legal_moves_of_type,
    mirror,
    outcome_if_over,
    parse_fen,
    perft,
    to_fen,
)
from .pgn import game_to_pgn, iter_pgn_positions, parse_san, san

__all__ = [
    "BLACK",
    "FAMILIARIZATION_FENS",
    "STARTPOS_FEN",
    "WHITE",
    "FenError",
    "IllegalMoveError",
    "Move",
    "PieceType",
    "Position",
    "apply_move",
    "in_check",
    "legal_moves",
    "legal_moves_of_type",
    "mirror",
    "outcome_if_over",
    "parse_fen",
    "perft",
    "to_fen",
    "game_to_pgn",
    "iter_pgn_positions",
    "parse_san",
    "san",
]
