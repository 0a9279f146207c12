"""Independent naive move generator used only as a test oracle.

Deliberately structured differently from the production kernel: board as a
dict keyed by (file, rank), move candidates found by scanning all 64x64
square pairs with per-piece reachability predicates, legality by full-board
attack rescan after applying the move. Slow and simple on purpose.
"""

from __future__ import annotations

WHITE, BLACK = "w", "b"


def board_from_fen(fen: str) -> dict:
    placement, side, castling, ep, _half, _full = fen.split()
    squares = {}
    for r_idx, row in enumerate(placement.split("/")):
        rank = 7 - r_idx
        file = 0
        for ch in row:
            if ch.isdigit():
                file += int(ch)
            else:
                squares[(file, rank)] = (WHITE if ch.isupper() else BLACK, ch.upper())
                file += 1
    return {
        "squares": squares,
        "side": WHITE if side == "w" else BLACK,
        "castling": castling if castling != "-" else "",
        "ep": _sq_from_name(ep) if ep != "-" else None,
    }


def _sq_from_name(name):
    return ("abcdefgh".index(name[0]), int(name[1]) - 1)


def _name(sq):
    return "abcdefgh"[sq[0]] + str(sq[1] + 1)


def _path_clear(squares, a, b):
    df = (b[0] > a[0]) - (b[0] < a[0])
    dr = (b[1] > a[1]) - (b[1] < a[1])
    cur = (a[0] + df, a[1] + dr)
    while cur != b:
        if cur in squares:
            return False
        cur = (cur[0] + df, cur[1] + dr)
    return True


def _reaches(squares, frm, to, piece, color, for_attack):
    """Can `piece` on `frm` move/attack `to` geometry-wise (ignoring king safety)?"""
    dx, dy = to[0] - frm[0], to[1] - frm[1]
    adx, ady = abs(dx), abs(dy)
    if (dx, dy) == (0, 0):
        return False
    kind = piece
    if kind == "N":
        return {adx, ady} == {1, 2}
    if kind == "K":
        return adx <= 1 and ady <= 1
    if kind == "R":
        return (dx == 0 or dy == 0) and _path_clear(squares, frm, to)
    if kind == "B":
        return adx == ady and _path_clear(squares, frm, to)
    if kind == "Q":
        return (dx == 0 or dy == 0 or adx == ady) and _path_clear(squares, frm, to)
    if kind == "P":
        # Only the attack geometry is needed here; pushes are handled inline
        # by the caller.
        fwd = 1 if color == WHITE else -1
        return for_attack and dy == fwd and adx == 1
    return False


def _attacked_by(state, target, color):
    for frm, (c, piece) in state["squares"].items():
        if c != color:
            continue
        if _reaches(state["squares"], frm, target, piece, c, for_attack=True):
            return True
    return False


def _king_pos(state, color):
    for sq, (c, piece) in state["squares"].items():
        if c == color and piece == "K":
            return sq
    raise AssertionError("no king")


def _apply(state, frm, to, promo):
    squares = dict(state["squares"])
    color, piece = squares.pop(frm)
    if piece == "P" and to == state["ep"] and to not in squares:
        squares.pop((to[0], frm[1]))
    if piece == "K" and abs(to[0] - frm[0]) == 2:
        rank = frm[1]
        if to[0] == 6:
            squares[(5, rank)] = squares.pop((7, rank))
        else:
            squares[(3, rank)] = squares.pop((0, rank))
    squares[to] = (color, promo or piece)
    new = dict(state)
    new["squares"] = squares
    new["side"] = BLACK if color == WHITE else WHITE
    new["ep"] = None
    if piece == "P" and abs(to[1] - frm[1]) == 2:
        new["ep"] = (frm[0], (frm[1] + to[1]) // 2)
    return new


def legal_moves_uci(fen: str) -> set:
    """Set of legal moves in UCI notation, computed the slow exhaustive way."""
    state = board_from_fen(fen)
    color = state["side"]
    other = BLACK if color == WHITE else WHITE
    squares = state["squares"]
    out = set()

    for frm, (c, piece) in squares.items():
        if c != color:
            continue
        for tf in range(8):
            for tr in range(8):
                to = (tf, tr)
                if to == frm:
                    continue
                occupant = squares.get(to)
                if occupant and occupant[0] == color:
                    continue
                promos = [None]
                if piece == "P":
                    fwd = 1 if color == WHITE else -1
                    dy, adx = to[1] - frm[1], abs(to[0] - frm[0])
                    single = dy == fwd and adx == 0 and to not in squares
                    double = (
                        dy == 2 * fwd
                        and adx == 0
                        and frm[1] == (1 if color == WHITE else 6)
                        and to not in squares
                        and (frm[0], frm[1] + fwd) not in squares
                    )
                    capture = dy == fwd and adx == 1 and (to in squares or to == state["ep"])
                    if not (single or double or capture):
                        continue
                    if to[1] in (0, 7):
                        promos = ["Q", "R", "B", "N"]
                elif piece == "K" and abs(to[0] - frm[0]) == 2 and to[1] == frm[1]:
                    if not _castle_ok(state, frm, to, color, other):
                        continue
                elif not _reaches(squares, frm, to, piece, color, for_attack=True):
                    continue
                for promo in promos:
                    after = _apply(state, frm, to, promo)
                    if not _attacked_by(after, _king_pos(after, color), other):
                        out.add(_name(frm) + _name(to) + (promo.lower() if promo else ""))
    return out


def _castle_ok(state, frm, to, color, other):
    squares = state["squares"]
    rank = 0 if color == WHITE else 7
    if frm != (4, rank):
        return False
    rights = state["castling"]
    flag = ("K" if to[0] == 6 else "Q")
    if color == BLACK:
        flag = flag.lower()
    if flag not in rights:
        return False
    rook_file = 7 if to[0] == 6 else 0
    if squares.get((rook_file, rank)) != (color, "R"):
        return False
    between = [(5, rank), (6, rank)] if to[0] == 6 else [(1, rank), (2, rank), (3, rank)]
    if any(sq in squares for sq in between):
        return False
    transit = [(4, rank), (5, rank), (6, rank)] if to[0] == 6 else [(4, rank), (3, rank), (2, rank)]
    return not any(_attacked_by(state, sq, other) for sq in transit)


def perft_oracle(fen: str, depth: int) -> int:
    if depth == 0:
        return 1
    from handbrain.chess import Move, apply_move, parse_fen, to_fen

    total = 0
    pos = parse_fen(fen)
    for uci in sorted(legal_moves_uci(fen)):
        if depth == 1:
            total += 1
        else:
            nxt = apply_move(pos, Move.from_uci(uci))
            total += perft_oracle(to_fen(nxt), depth - 1)
    return total
