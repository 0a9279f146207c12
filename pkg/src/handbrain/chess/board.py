"""Chess rules kernel: FEN parsing, legal move generation, move application, perft.

Squares are indexed 0..63 with a1 = 0, b1 = 1, ..., h8 = 63. Pieces are small
signed ints (positive white, negative black); `Position` and `Move` are frozen
values, so every operation here is a pure function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Optional

WHITE = 1
BLACK = -1

STARTPOS_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"

# Castling-rights bitmask.
CASTLE_WK, CASTLE_WQ, CASTLE_BK, CASTLE_BQ = 1, 2, 4, 8

_PIECE_CHARS = "PNBRQK"


class PieceType(enum.IntEnum):
    PAWN = 1
    KNIGHT = 2
    BISHOP = 3
    ROOK = 4
    QUEEN = 5
    KING = 6

    @property
    def letter(self) -> str:
        return _PIECE_CHARS[self.value - 1]

    @classmethod
    def from_letter(cls, letter: str) -> "PieceType":
        idx = _PIECE_CHARS.find(letter.upper())
        if idx < 0:
            raise ValueError(f"unknown piece letter {letter!r}")
        return cls(idx + 1)


class ChessError(Exception):
    pass


class FenError(ChessError):
    """Raised for malformed or inconsistent FEN input; names the bad field."""

    def __init__(self, message: str, field: str = "fen"):
        super().__init__(f"{field}: {message}")
        self.field = field


class IllegalMoveError(ChessError):
    def __init__(self, move: "Move", reason: str = "illegal move"):
        super().__init__(f"{reason}: {move.uci()}")
        self.move = move


def square(file: int, rank: int) -> int:
    return rank * 8 + file


def square_name(sq: int) -> str:
    return "abcdefgh"[sq & 7] + str((sq >> 3) + 1)


def parse_square(name: str) -> int:
    if len(name) != 2 or name[0] not in "abcdefgh" or name[1] not in "12345678":
        raise ValueError(f"bad square {name!r}")
    return square("abcdefgh".index(name[0]), int(name[1]) - 1)


@dataclass(frozen=True, slots=True)
class Move:
    from_sq: int
    to_sq: int
    promotion: Optional[PieceType] = None

    def uci(self) -> str:
        suffix = self.promotion.letter.lower() if self.promotion else ""
        return square_name(self.from_sq) + square_name(self.to_sq) + suffix

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        if len(text) not in (4, 5):
            raise ValueError(f"bad UCI move {text!r}")
        promo = PieceType.from_letter(text[4]) if len(text) == 5 else None
        return cls(parse_square(text[:2]), parse_square(text[2:4]), promo)

    def __str__(self) -> str:
        return self.uci()


@dataclass(frozen=True, slots=True)
class Position:
    """Immutable full game state (minus repetition history, kept at session level)."""

    board: tuple  # 64 ints: 0 empty, +t white, -t black (t = PieceType value)
    side: int  # WHITE or BLACK
    castling: int  # bitmask of CASTLE_* flags
    ep: Optional[int]  # en-passant target square
    halfmove: int
    fullmove: int

    def piece_at(self, sq: int) -> int:
        return self.board[sq]

    def king_square(self, color: int) -> int:
        return self.board.index(PieceType.KING * color)

    def piece_count(self, color: Optional[int] = None) -> int:
        if color is None:
            return sum(1 for p in self.board if p)
        return sum(1 for p in self.board if p * color > 0)

    def occupied_squares(self) -> Iterable[int]:
        return (sq for sq, p in enumerate(self.board) if p)

    def repetition_key(self) -> tuple:
        # Halfmove/fullmove clocks excluded per the threefold-repetition rule.
        return (self.board, self.side, self.castling, self.ep)


# ---------------------------------------------------------------------------
# Precomputed attack geometry


def _build_step_table(offsets: list[tuple[int, int]]) -> list[tuple[int, ...]]:
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        targets = []
        for df, dr in offsets:
            nf, nr = f + df, r + dr
            if 0 <= nf < 8 and 0 <= nr < 8:
                targets.append(square(nf, nr))
        table.append(tuple(targets))
    return table


def _build_rays(dirs: list[tuple[int, int]]) -> list[tuple[tuple[int, ...], ...]]:
    table = []
    for sq in range(64):
        f, r = sq & 7, sq >> 3
        rays = []
        for df, dr in dirs:
            ray = []
            nf, nr = f + df, r + dr
            while 0 <= nf < 8 and 0 <= nr < 8:
                ray.append(square(nf, nr))
                nf += df
                nr += dr
            rays.append(tuple(ray))
        table.append(tuple(rays))
    return table


KNIGHT_TARGETS = _build_step_table(
    [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)]
)
KING_TARGETS = _build_step_table(
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
)
ORTHO_RAYS = _build_rays([(1, 0), (-1, 0), (0, 1), (0, -1)])
DIAG_RAYS = _build_rays([(1, 1), (1, -1), (-1, 1), (-1, -1)])
# PAWN_CAPTURES[color][sq] -> squares a pawn of `color` on sq attacks.
PAWN_CAPTURES = {
    WHITE: _build_step_table([(-1, 1), (1, 1)]),
    BLACK: _build_step_table([(-1, -1), (1, -1)]),
}


def _attacked(board, sq: int, by: int) -> bool:
    """True if any piece of color `by` attacks `sq` on the given board."""
    for src in PAWN_CAPTURES[-by][sq]:  # reverse pawn geometry
        if board[src] == PieceType.PAWN * by:
            return True
    kn = PieceType.KNIGHT * by
    for src in KNIGHT_TARGETS[sq]:
        if board[src] == kn:
            return True
    kg = PieceType.KING * by
    for src in KING_TARGETS[sq]:
        if board[src] == kg:
            return True
    rook, queen, bishop = PieceType.ROOK * by, PieceType.QUEEN * by, PieceType.BISHOP * by
    for ray in ORTHO_RAYS[sq]:
        for s in ray:
            p = board[s]
            if p:
                if p == rook or p == queen:
                    return True
                break
    for ray in DIAG_RAYS[sq]:
        for s in ray:
            p = board[s]
            if p:
                if p == bishop or p == queen:
                    return True
                break
    return False


def in_check(pos: Position, color: Optional[int] = None) -> bool:
    color = pos.side if color is None else color
    return _attacked(pos.board, pos.king_square(color), -color)


# ---------------------------------------------------------------------------
# FEN


def parse_fen(text: str) -> Position:
    """Parse a 6-field FEN string into a validated Position."""
    fields = text.split()
    if len(fields) != 6:
        raise FenError(f"expected 6 fields, got {len(fields)}", "fen")
    placement, side_f, castle_f, ep_f, half_f, full_f = fields

    ranks = placement.split("/")
    if len(ranks) != 8:
        raise FenError(f"expected 8 ranks, got {len(ranks)}", "placement")
    board = [0] * 64
    for rank_idx, row in enumerate(ranks):
        rank = 7 - rank_idx  # FEN lists rank 8 first
        file = 0
        for ch in row:
            if ch.isdigit():
                file += int(ch)
            else:
                if file >= 8:
                    raise FenError(f"rank {rank + 1} overflows 8 files", "placement")
                color = WHITE if ch.isupper() else BLACK
                try:
                    ptype = PieceType.from_letter(ch)
                except ValueError:
                    raise FenError(f"unknown piece char {ch!r}", "placement") from None
                board[square(file, rank)] = ptype * color
                file += 1
        if file != 8:
            raise FenError(f"rank {rank + 1} has {file} files, expected 8", "placement")

    if side_f not in ("w", "b"):
        raise FenError(f"side must be 'w' or 'b', got {side_f!r}", "side")
    side = WHITE if side_f == "w" else BLACK

    castling = 0
    if castle_f != "-":
        flags = {"K": CASTLE_WK, "Q": CASTLE_WQ, "k": CASTLE_BK, "q": CASTLE_BQ}
        seen = set()
        for ch in castle_f:
            if ch not in flags or ch in seen:
                raise FenError(f"bad castling token {castle_f!r}", "castling")
            seen.add(ch)
            castling |= flags[ch]

    ep = None
    if ep_f != "-":
        try:
            ep = parse_square(ep_f)
        except ValueError:
            raise FenError(f"bad en-passant square {ep_f!r}", "en_passant") from None
        if (ep >> 3) not in (2, 5):
            raise FenError(f"en-passant square {ep_f} not on rank 3 or 6", "en_passant")

    try:
        halfmove = int(half_f)
        fullmove = int(full_f)
    except ValueError:
        raise FenError("clock fields must be integers", "clocks") from None
    if halfmove < 0:
        raise FenError("halfmove clock must be >= 0", "clocks")
    if fullmove < 1:
        raise FenError("fullmove number must be >= 1", "clocks")

    pos = Position(tuple(board), side, castling, ep, halfmove, fullmove)
    _validate(pos)
    return pos


def _validate(pos: Position) -> None:
    for color, label in ((WHITE, "white"), (BLACK, "black")):
        kings = sum(1 for p in pos.board if p == PieceType.KING * color)
        if kings != 1:
            raise FenError(f"{label} must have exactly one king, found {kings}", "placement")
    for sq in range(8):
        if abs(pos.board[sq]) == PieceType.PAWN or abs(pos.board[56 + sq]) == PieceType.PAWN:
            raise FenError("pawns may not stand on rank 1 or 8", "placement")
    if _attacked(pos.board, pos.king_square(-pos.side), pos.side):
        raise FenError("side not to move is in check", "side")


def to_fen(pos: Position) -> str:
    rows = []
    for rank in range(7, -1, -1):
        row = ""
        empty = 0
        for file in range(8):
            p = pos.board[square(file, rank)]
            if p == 0:
                empty += 1
                continue
            if empty:
                row += str(empty)
                empty = 0
            letter = PieceType(abs(p)).letter
            row += letter if p > 0 else letter.lower()
        if empty:
            row += str(empty)
        rows.append(row)
    castle = "".join(
        ch
        for ch, flag in (("K", CASTLE_WK), ("Q", CASTLE_WQ), ("k", CASTLE_BK), ("q", CASTLE_BQ))
        if pos.castling & flag
    )
    return " ".join(
        [
            "/".join(rows),
            "w" if pos.side == WHITE else "b",
            castle or "-",
            square_name(pos.ep) if pos.ep is not None else "-",
            str(pos.halfmove),
            str(pos.fullmove),
        ]
    )


# ---------------------------------------------------------------------------
# Move generation


def _pseudo_moves(pos: Position, constraint: Optional[PieceType]) -> list[Move]:
    board, side, ep = pos.board, pos.side, pos.ep
    moves: list[Move] = []
    promo_types = (PieceType.QUEEN, PieceType.ROOK, PieceType.BISHOP, PieceType.KNIGHT)

    for sq, piece in enumerate(board):
        if piece * side <= 0:
            continue
        ptype = abs(piece)
        if constraint is not None and ptype != constraint:
            continue

        if ptype == PieceType.PAWN:
            forward = sq + 8 * side
            last_rank = (forward >> 3) in (0, 7)
            if board[forward] == 0:
                if last_rank:
                    moves.extend(Move(sq, forward, pt) for pt in promo_types)
                else:
                    moves.append(Move(sq, forward))
                    start_rank = 1 if side == WHITE else 6
                    double = sq + 16 * side
                    if (sq >> 3) == start_rank and board[double] == 0:
                        moves.append(Move(sq, double))
            for target in PAWN_CAPTURES[side][sq]:
                if board[target] * side < 0 or target == ep:
                    if (target >> 3) in (0, 7):
                        moves.extend(Move(sq, target, pt) for pt in promo_types)
                    else:
                        moves.append(Move(sq, target))
        elif ptype == PieceType.KNIGHT:
            moves.extend(Move(sq, t) for t in KNIGHT_TARGETS[sq] if board[t] * side <= 0)
        elif ptype == PieceType.KING:
            moves.extend(Move(sq, t) for t in KING_TARGETS[sq] if board[t] * side <= 0)
            moves.extend(_castling_moves(pos))
        else:
            rays = ()
            if ptype in (PieceType.ROOK, PieceType.QUEEN):
                rays += ORTHO_RAYS[sq]
            if ptype in (PieceType.BISHOP, PieceType.QUEEN):
                rays += DIAG_RAYS[sq]
            for ray in rays:
                for t in ray:
                    occupant = board[t]
                    if occupant * side > 0:
                        break
                    moves.append(Move(sq, t))
                    if occupant:
                        break
    return moves


def _castling_moves(pos: Position) -> list[Move]:
    board, side = pos.board, pos.side
    moves = []
    rank_base = 0 if side == WHITE else 56
    king_sq = rank_base + 4
    if board[king_sq] != PieceType.KING * side:
        return moves
    kingside = CASTLE_WK if side == WHITE else CASTLE_BK
    queenside = CASTLE_WQ if side == WHITE else CASTLE_BQ
    # King may not castle out of, through, or into check.
    if pos.castling & kingside and board[rank_base + 7] == PieceType.ROOK * side:
        if board[rank_base + 5] == 0 and board[rank_base + 6] == 0:
            if not any(_attacked(board, s, -side) for s in (king_sq, rank_base + 5, rank_base + 6)):
                moves.append(Move(king_sq, rank_base + 6))
    if pos.castling & queenside and board[rank_base] == PieceType.ROOK * side:
        if board[rank_base + 1] == 0 and board[rank_base + 2] == 0 and board[rank_base + 3] == 0:
            if not any(_attacked(board, s, -side) for s in (king_sq, rank_base + 3, rank_base + 2)):
                moves.append(Move(king_sq, rank_base + 2))
    return moves


def _king_safe_after(pos: Position, mv: Move) -> bool:
    board, side = pos.board, pos.side
    b = list(board)
    piece = b[mv.from_sq]
    b[mv.to_sq] = piece if mv.promotion is None else mv.promotion * side
    b[mv.from_sq] = 0
    if abs(piece) == PieceType.PAWN and mv.to_sq == pos.ep and board[mv.to_sq] == 0:
        b[mv.to_sq - 8 * side] = 0  # en-passant removes the bypassed pawn
    king = mv.to_sq if abs(piece) == PieceType.KING else b.index(PieceType.KING * side)
    return not _attacked(b, king, -side)


def legal_moves(pos: Position) -> list[Move]:
    return [m for m in _pseudo_moves(pos, None) if _king_safe_after(pos, m)]


def legal_moves_of_type(pos: Position, constraint: Optional[PieceType] = None) -> list[Move]:
    """All legal moves, optionally restricted to one moved-piece type.

    An empty list is a valid result meaning "no legal move of that type".
    """
    return [m for m in _pseudo_moves(pos, constraint) if _king_safe_after(pos, m)]


def moved_piece_type(pos: Position, mv: Move) -> PieceType:
    return PieceType(abs(pos.board[mv.from_sq]))


def captured_piece_type(pos: Position, mv: Move) -> Optional[PieceType]:
    target = pos.board[mv.to_sq]
    if target:
        return PieceType(abs(target))
    if abs(pos.board[mv.from_sq]) == PieceType.PAWN and mv.to_sq == pos.ep:
        return PieceType.PAWN
    return None


def _apply_unchecked(pos: Position, mv: Move) -> Position:
    board = list(pos.board)
    side = pos.side
    piece = board[mv.from_sq]
    ptype = abs(piece)
    is_capture = board[mv.to_sq] != 0

    board[mv.to_sq] = piece if mv.promotion is None else mv.promotion * side
    board[mv.from_sq] = 0

    if ptype == PieceType.PAWN and mv.to_sq == pos.ep and not is_capture:
        board[mv.to_sq - 8 * side] = 0
        is_capture = True

    if ptype == PieceType.KING and abs(mv.to_sq - mv.from_sq) == 2:
        rank_base = 0 if side == WHITE else 56
        if mv.to_sq > mv.from_sq:  # kingside: rook h->f
            board[rank_base + 5] = board[rank_base + 7]
            board[rank_base + 7] = 0
        else:  # queenside: rook a->d
            board[rank_base + 3] = board[rank_base]
            board[rank_base] = 0

    castling = pos.castling
    if ptype == PieceType.KING:
        castling &= ~(CASTLE_WK | CASTLE_WQ) if side == WHITE else ~(CASTLE_BK | CASTLE_BQ)
    for corner, flag in ((7, CASTLE_WK), (0, CASTLE_WQ), (63, CASTLE_BK), (56, CASTLE_BQ)):
        if mv.from_sq == corner or mv.to_sq == corner:
            castling &= ~flag

    ep = None
    if ptype == PieceType.PAWN and abs(mv.to_sq - mv.from_sq) == 16:
        ep = mv.from_sq + 8 * side

    halfmove = 0 if (ptype == PieceType.PAWN or is_capture) else pos.halfmove + 1
    fullmove = pos.fullmove + (1 if side == BLACK else 0)
    return Position(tuple(board), -side, castling, ep, halfmove, fullmove)


def apply_move(pos: Position, mv: Move) -> Position:
    """Apply a legal move, returning the successor position.

    Raises IllegalMoveError when `mv` is not legal in `pos`.
    """
    if mv not in legal_moves(pos):
        raise IllegalMoveError(mv)
    return _apply_unchecked(pos, mv)


def perft(pos: Position, depth: int) -> int:
    """Count leaf nodes of the legal move tree to `depth` (the generator oracle)."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth == 0:
        return 1
    moves = legal_moves(pos)
    if depth == 1:
        return len(moves)
    return sum(perft(_apply_unchecked(pos, m), depth - 1) for m in moves)


# ---------------------------------------------------------------------------
# Game termination helpers (repetition/50-move counting lives at session level)


def is_checkmate(pos: Position) -> bool:
    return in_check(pos) and not legal_moves(pos)


def is_stalemate(pos: Position) -> bool:
    return not in_check(pos) and not legal_moves(pos)


def outcome_if_over(pos: Position, repetitions: int = 1) -> Optional[str]:
    """Result string ('1-0', '0-1', '1/2-1/2') if the position ends the game, else None."""
    if not legal_moves(pos):
        if in_check(pos):
            return "1-0" if pos.side == BLACK else "0-1"
        return "1/2-1/2"
    if repetitions >= 3 or pos.halfmove >= 100:
        return "1/2-1/2"
    return None


def mirror(pos: Position) -> Position:
    """Flip ranks and swap colors; evaluations of the mirror negate exactly."""
    board = [0] * 64
    for sq, p in enumerate(pos.board):
        board[sq ^ 56] = -p
    castling = 0
    if pos.castling & CASTLE_WK:
        castling |= CASTLE_BK
    if pos.castling & CASTLE_WQ:
        castling |= CASTLE_BQ
    if pos.castling & CASTLE_BK:
        castling |= CASTLE_WK
    if pos.castling & CASTLE_BQ:
        castling |= CASTLE_WQ
    ep = pos.ep ^ 56 if pos.ep is not None else None
    return replace(pos, board=tuple(board), side=-pos.side, castling=castling, ep=ep)


# Stand-in familiarization positions (opening, two middlegames, endgame), all
# near-level; the originally used positions were never published.
FAMILIARIZATION_FENS = [
    # Italian, symmetric development
    "r1bqk1nr/pppp1ppp/2n5/2b1p3/2B1P3/5N2/PPPP1PPP/RNBQK1NR w KQkq - 4 4",
    # Carlsbad-structure middlegame
    "r1bq1rk1/pp2bppp/2n1pn2/2pp4/3P1B2/2P1PN2/PP1NBPPP/R2Q1RK1 w - - 2 9",
    # Open-file middlegame, balanced material
    "2rq1rk1/pb2bppp/1pn1pn2/8/3P4/1BN1PN2/PP1B1PPP/R2QR1K1 w - - 6 13",
    # Symmetric rook endgame
    "3r2k1/5pp1/7p/8/8/7P/5PP1/3R2K1 w - - 0 32",
]
