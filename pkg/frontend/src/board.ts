// DOM chessboard: renders a FEN, highlights, and click-to-move selection.

import { GLYPHS, parseFen, squareName } from "./fen.js";

export interface BoardOptions {
  onSquareClick?: (square: string) => void;
}

export class BoardView {
  private root: HTMLElement;
  private cells: HTMLElement[] = [];
  private options: BoardOptions;

  constructor(root: HTMLElement, options: BoardOptions = {}) {
    this.root = root;
    this.options = options;
    this.root.classList.add("board");
    for (let rank = 7; rank >= 0; rank--) {
      for (let file = 0; file < 8; file++) {
        const index = rank * 8 + file;
        const cell = document.createElement("div");
        cell.className = `sq ${(rank + file) % 2 ? "light" : "dark"}`;
        cell.dataset.square = squareName(index);
        cell.addEventListener("click", () => this.options.onSquareClick?.(cell.dataset.square!));
        this.root.appendChild(cell);
        this.cells[index] = cell;
      }
    }
  }

  setFen(fen: string): void {
    const { board } = parseFen(fen);
    for (let i = 0; i < 64; i++) {
      const piece = board[i];
      this.cells[i].textContent = piece ? GLYPHS[piece] : "";
      this.cells[i].classList.toggle("white-piece", !!piece && piece === piece.toUpperCase());
    }
  }

  clearMarks(): void {
    for (const cell of this.cells) {
      cell.classList.remove("selected", "selectable", "target", "last-move");
    }
  }

  mark(square: string, cls: "selected" | "selectable" | "target" | "last-move"): void {
    const cell = this.root.querySelector<HTMLElement>(`[data-square="${square}"]`);
    cell?.classList.add(cls);
  }

  markLastMove(uci: string | null): void {
    if (!uci || uci.length < 4) return;
    this.mark(uci.slice(0, 2), "last-move");
    this.mark(uci.slice(2, 4), "last-move");
  }
}
