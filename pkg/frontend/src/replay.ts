// Session-log replay: a pure reducer mirroring the server's event semantics,
// so scrubbing to any event shows exactly the FEN the `replay` CLI reports.

import { BoardFen, parseFen, renderFen, squareIndex, squareName } from "./fen.js";

export interface LogEvent {
  t: number;
  seq: number;
  kind: string;
  payload: Record<string, any>;
}

export interface Snapshot {
  fen: string;
  turn: number;
  phase: string;
  result: string | null;
  lastMove: string | null;
  mode: string | null; // mode chosen for the current turn, if any
  prediction: number | null; // latest gauge value for the current turn
  t: number;
  kind: string; // event that produced this snapshot
}

export function parseLog(text: string): LogEvent[] {
  const events: LogEvent[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let raw: any;
    try {
      raw = JSON.parse(line);
    } catch (err) {
      throw new Error(`line ${i + 1}: not valid JSON`);
    }
    if (typeof raw.t !== "number" || typeof raw.kind !== "string") {
      throw new Error(`line ${i + 1}: missing t/kind`);
    }
    events.push({ t: raw.t, seq: raw.seq ?? i, kind: raw.kind, payload: raw.payload ?? {} });
  }
  return events;
}

/** Apply a UCI move with full FEN bookkeeping (castling, ep, clocks). */
export function applyUci(b: BoardFen, uci: string): BoardFen {
  const from = squareIndex(uci.slice(0, 2));
  const to = squareIndex(uci.slice(2, 4));
  const promo = uci.length > 4 ? uci[4] : null;
  const board = b.board.slice();
  const piece = board[from];
  if (!piece) throw new Error(`no piece on ${uci.slice(0, 2)}`);
  const isWhite = piece === piece.toUpperCase();
  const isPawn = piece.toLowerCase() === "p";
  const isKing = piece.toLowerCase() === "k";
  const captured = board[to] !== null;

  board[to] = promo ? (isWhite ? promo.toUpperCase() : promo.toLowerCase()) : piece;
  board[from] = null;

  let epCapture = false;
  if (isPawn && squareName(to) === b.ep && !captured) {
    board[to + (isWhite ? -8 : 8)] = null; // en passant removes the bypassed pawn
    epCapture = true;
  }
  if (isKing && Math.abs((to & 7) - (from & 7)) === 2) {
    const rank = from & 56;
    if (to > from) {
      board[rank + 5] = board[rank + 7];
      board[rank + 7] = null;
    } else {
      board[rank + 3] = board[rank + 0];
      board[rank + 0] = null;
    }
  }

  let castling = b.castling === "-" ? "" : b.castling;
  const drop = (flags: string) => {
    for (const f of flags) castling = castling.replace(f, "");
  };
  if (isKing) drop(isWhite ? "KQ" : "kq");
  for (const [corner, flag] of [
    [7, "K"],
    [0, "Q"],
    [63, "k"],
    [56, "q"],
  ] as [number, string][]) {
    if (from === corner || to === corner) drop(flag);
  }

  let ep = "-";
  if (isPawn && Math.abs(to - from) === 16) {
    ep = squareName(from + (isWhite ? 8 : -8));
  }
  return {
    board,
    side: b.side === "w" ? "b" : "w",
    castling: castling || "-",
    ep,
    halfmove: isPawn || captured || epCapture ? 0 : b.halfmove + 1,
    fullmove: b.fullmove + (b.side === "b" ? 1 : 0),
  };
}

/** One snapshot per event; snapshot i is the state after events[0..i]. */
export function reduceLog(events: LogEvent[]): Snapshot[] {
  if (events.length === 0 || events[0].kind !== "SessionStart") {
    throw new Error("log must begin with SessionStart");
  }
  const startFen =
    events[0].payload.fen ?? "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";
  let board = parseFen(startFen);
  let turn = 1;
  let phase = "await_mode";
  let result: string | null = null;
  let lastMove: string | null = null;
  let mode: string | null = null;
  let prediction: number | null = null;

  const snapshots: Snapshot[] = [];
  for (const event of events) {
    switch (event.kind) {
      case "SessionStart":
        break;
      case "ModeChosen":
        mode = event.payload.mode ?? null;
        // raw server phases, including the transient AI ones, so replay
        // snapshots compare 1:1 against the server's replay output
        phase = mode === "brain" ? "await_piece" : "await_ai_piece";
        break;
      case "PieceTypeChosen":
        phase = event.payload.by === "human" ? "await_ai_move" : "await_move";
        break;
      case "MoveMade":
        board = applyUci(board, event.payload.uci);
        lastMove = event.payload.uci;
        phase = "opponent";
        break;
      case "OpponentMove":
        board = applyUci(board, event.payload.uci);
        lastMove = event.payload.uci;
        turn += 1;
        phase = "await_mode";
        mode = null;
        prediction = null;
        break;
      case "PredictionEmitted":
        prediction = event.payload.p_switch ?? null;
        break;
      case "SessionEnd":
        result = event.payload.result ?? null;
        phase = "finished";
        break;
      default:
        break; // gaze/emotion batches carry no board change
    }
    snapshots.push({
      fen: renderFen(board),
      turn,
      phase,
      result,
      lastMove,
      mode,
      prediction,
      t: event.t,
      kind: event.kind,
    });
  }
  return snapshots;
}

export interface GazePoint {
  t: number;
  x: number;
  y: number;
}

/** Gaze samples in (uptoT - windowMs, uptoT], for the fading heat trail. */
export function gazeTrail(events: LogEvent[], uptoT: number, windowMs = 4000): GazePoint[] {
  const points: GazePoint[] = [];
  for (const event of events) {
    if (event.kind !== "GazeBatch") continue;
    if (event.t > uptoT) break;
    for (const s of event.payload.samples ?? []) {
      if (s.valid !== false && s.t <= uptoT && s.t > uptoT - windowMs) {
        points.push({ t: s.t, x: s.x, y: s.y });
      }
    }
  }
  return points;
}

export function boardGeometry(events: LogEvent[]): { x0: number; y0: number; size: number } {
  const px = events[0]?.payload?.board_px;
  if (Array.isArray(px) && px.length === 3) {
    return { x0: px[0], y0: px[1], size: px[2] };
  }
  return { x0: 100, y0: 100, size: 800 };
}
