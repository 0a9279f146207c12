"""Tiny scripted UCI engine used to exercise the protocol client offline.

Modes (first CLI arg):
  normal  - answers the handshake, echoes a fixed score, plays the first
            searchmove when restricted, else the first legal move.
  mute    - completes the handshake but never answers `go` (timeout path).
  crash   - exits mid-handshake (transport-error path).
"""

import sys

sys.path.insert(0, __file__.rsplit("/", 2)[0] + "/src")

from handbrain.chess import Move, legal_moves, parse_fen, STARTPOS_FEN  # noqa: E402


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "normal"
    fen = STARTPOS_FEN
    for raw in sys.stdin:
        line = raw.strip()
        if line == "uci":
            if mode == "crash":
                return
            print("id name fake-uci")
            print("option name UCI_Elo type spin default 1500 min 800 max 2600")
            print("option name UCI_LimitStrength type check default false")
            print("uciok", flush=True)
        elif line == "isready":
            print("readyok", flush=True)
        elif line.startswith("position fen "):
            fen = line[len("position fen "):]
        elif line.startswith("go"):
            if mode == "mute":
                continue
            tokens = line.split()
            if "searchmoves" in tokens:
                move = tokens[tokens.index("searchmoves") + 1]
            else:
                move = sorted(m.uci() for m in legal_moves(parse_fen(fen)))[0]
            print("info depth 1 score cp 13 pv " + move)
            print("bestmove " + move, flush=True)
        elif line == "quit":
            return


if __name__ == "__main__":
    main()
