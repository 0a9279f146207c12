// Wire protocol types and the client-side intent guard.
//
// The guard is the invariant keeper: the UI routes every user action through
// buildIntent, which returns null unless the action is legal in the last
// server state, so the client never emits an out-of-schema or out-of-phase
// message (the server still re-validates).

export type Phase = "await_mode" | "await_piece" | "await_move" | "opponent" | "finished";

export interface StateMsg {
  kind: "state";
  session: string;
  fen: string;
  phase: Phase;
  turn: number;
  t: number;
  mode?: string | null;
  required_piece?: string | null;
  legal_piece_types: string[];
  legal_moves: string[];
  last_move?: string | null;
  result?: string | null;
}

export interface PredictionMsg {
  kind: "prediction";
  turn: number;
  elapsed: number;
  p_switch: number;
}

export interface ErrorMsg {
  kind: "error";
  code: string;
  message: string;
  path?: string | null;
}

export type ServerMsg = StateMsg | PredictionMsg | ErrorMsg;

export type Intent =
  | { kind: "choose_mode"; mode: "hand" | "brain" }
  | { kind: "choose_piece"; piece: string }
  | { kind: "move"; uci: string }
  | { kind: "resign" }
  | { kind: "gaze_batch"; samples: { t: number; x: number; y: number; valid: boolean }[] };

export type UiAction =
  | { type: "mode"; mode: string }
  | { type: "piece"; piece: string }
  | { type: "move"; uci: string }
  | { type: "resign" };

const PHASES: Phase[] = ["await_mode", "await_piece", "await_move", "opponent", "finished"];

export function parseServerMsg(raw: string): ServerMsg | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  switch (msg.kind) {
    case "state":
      if (
        typeof msg.fen === "string" &&
        typeof msg.turn === "number" &&
        PHASES.includes(msg.phase as Phase) &&
        Array.isArray(msg.legal_piece_types) &&
        Array.isArray(msg.legal_moves)
      ) {
        return msg as unknown as StateMsg;
      }
      return null;
    case "prediction":
      if (typeof msg.p_switch === "number" && typeof msg.turn === "number") {
        return msg as unknown as PredictionMsg;
      }
      return null;
    case "error":
      if (typeof msg.code === "string" && typeof msg.message === "string") {
        return msg as unknown as ErrorMsg;
      }
      return null;
    default:
      return null;
  }
}

/** Client-side legality guard; null means "do not send anything". */
export function buildIntent(state: StateMsg | null, action: UiAction): Intent | null {
  if (!state || state.phase === "finished") return null;
  switch (action.type) {
    case "mode":
      if (state.phase !== "await_mode") return null;
      if (action.mode !== "hand" && action.mode !== "brain") return null;
      return { kind: "choose_mode", mode: action.mode };
    case "piece":
      if (state.phase !== "await_piece") return null;
      if (!state.legal_piece_types.includes(action.piece)) return null;
      return { kind: "choose_piece", piece: action.piece };
    case "move":
      if (state.phase !== "await_move") return null;
      if (!state.legal_moves.includes(action.uci)) return null;
      return { kind: "move", uci: action.uci };
    case "resign":
      return { kind: "resign" };
  }
}

export function encodeIntent(intent: Intent): string {
  return JSON.stringify(intent);
}
