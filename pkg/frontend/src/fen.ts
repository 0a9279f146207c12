// FEN parsing/serialization on a 64-cell board, a1 = index 0, h8 = 63.

export interface BoardFen {
  board: (string | null)[]; // piece letters, white upper / black lower
  side: "w" | "b";
  castling: string; // subset of "KQkq" or "-"
  ep: string; // square name or "-"
  halfmove: number;
  fullmove: number;
}

export const GLYPHS: Record<string, string> = {
  K: "♔", Q: "♕", R: "♖", B: "♗", N: "♘", P: "♙",
  k: "♚", q: "♛", r: "♜", b: "♝", n: "♞", p: "♟",
};

export function squareName(index: number): string {
  return "abcdefgh"[index & 7] + String((index >> 3) + 1);
}

export function squareIndex(name: string): number {
  return (name.charCodeAt(1) - 49) * 8 + (name.charCodeAt(0) - 97);
}

export function parseFen(fen: string): BoardFen {
  const fields = fen.trim().split(/\s+/);
  if (fields.length !== 6) throw new Error(`expected 6 FEN fields, got ${fields.length}`);
  const ranks = fields[0].split("/");
  if (ranks.length !== 8) throw new Error(`expected 8 ranks, got ${ranks.length}`);
  const board: (string | null)[] = new Array(64).fill(null);
  for (let r = 0; r < 8; r++) {
    const rank = 7 - r;
    let file = 0;
    for (const ch of ranks[r]) {
      if (ch >= "1" && ch <= "8") {
        file += Number(ch);
      } else {
        if (!"pnbrqkPNBRQK".includes(ch)) throw new Error(`bad piece char ${ch}`);
        board[rank * 8 + file] = ch;
        file += 1;
      }
    }
    if (file !== 8) throw new Error(`rank ${rank + 1} has ${file} files`);
  }
  if (fields[1] !== "w" && fields[1] !== "b") throw new Error(`bad side ${fields[1]}`);
  return {
    board,
    side: fields[1],
    castling: fields[2],
    ep: fields[3],
    halfmove: Number(fields[4]),
    fullmove: Number(fields[5]),
  };
}

export function renderFen(b: BoardFen): string {
  const rows: string[] = [];
  for (let rank = 7; rank >= 0; rank--) {
    let row = "";
    let empty = 0;
    for (let file = 0; file < 8; file++) {
      const piece = b.board[rank * 8 + file];
      if (piece === null) {
        empty += 1;
      } else {
        if (empty) row += String(empty);
        empty = 0;
        row += piece;
      }
    }
    if (empty) row += String(empty);
    rows.push(row);
  }
  return [
    rows.join("/"),
    b.side,
    b.castling || "-",
    b.ep || "-",
    String(b.halfmove),
    String(b.fullmove),
  ].join(" ");
}
