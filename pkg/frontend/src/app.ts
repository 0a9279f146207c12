// Application wiring: the live play panel and the session replay panel.

import { BoardView } from "./board.js";
import { GameClient } from "./client.js";
import { Gauge } from "./gauge.js";
import { buildIntent, StateMsg, UiAction } from "./protocol.js";
import {
  boardGeometry,
  gazeTrail,
  LogEvent,
  parseLog,
  reduceLog,
  Snapshot,
} from "./replay.js";

const PIECES = ["pawn", "knight", "bishop", "rook", "queen", "king"];

const FRIENDLY_PHASE: Record<string, string> = {
  await_mode: "choose your control mode",
  await_piece: "you are the brain: pick a piece type",
  await_move: "you are the hand: play a move",
  await_ai_piece: "teammate is picking a piece type",
  await_ai_move: "teammate is moving",
  opponent: "opponent is thinking",
  finished: "game over",
};

export class App {
  private doc: Document;
  private client: GameClient;
  private board!: BoardView;
  private gauge!: Gauge;
  private state: StateMsg | null = null;
  private selectedSquare: string | null = null;
  private gazeTimer: number | null = null;

  // replay panel
  private replayBoard!: BoardView;
  private replayEvents: LogEvent[] = [];
  private snapshots: Snapshot[] = [];

  constructor(doc: Document) {
    this.doc = doc;
    this.client = new GameClient({
      onMessage: (msg) => {
        if (msg.kind === "state") this.onState(msg);
        else if (msg.kind === "prediction") this.gauge.show(msg.p_switch);
        else this.status(`rejected (${msg.code}): ${msg.message}`);
      },
      onOpen: () => {
        this.status("connected");
        this.startGazeStream();
      },
      onClose: () => {
        this.status("disconnected");
        this.stopGazeStream();
      },
    });
  }

  mount(): void {
    this.board = new BoardView(this.el("play-board"), {
      onSquareClick: (sq) => this.onSquare(sq),
    });
    this.gauge = new Gauge(this.el("gauge"));
    this.replayBoard = new BoardView(this.el("replay-board"));

    this.el("connect").addEventListener("click", () => {
      const url = (this.el("server-url") as HTMLInputElement).value;
      this.client.connect(url.replace(/^http/, "ws") + "/ws/session");
    });
    this.el("resign").addEventListener("click", () => this.act({ type: "resign" }));
    for (const mode of ["hand", "brain"]) {
      this.el(`mode-${mode}`).addEventListener("click", () => this.act({ type: "mode", mode }));
    }
    const pieceRow = this.el("piece-row");
    for (const piece of PIECES) {
      const btn = this.doc.createElement("button");
      btn.id = `piece-${piece}`;
      btn.textContent = piece;
      btn.addEventListener("click", () => this.act({ type: "piece", piece }));
      pieceRow.appendChild(btn);
    }

    this.el("log-file").addEventListener("change", (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (!file) return;
      file.text().then((text) => this.loadReplay(text));
    });
    this.el("log-url-load").addEventListener("click", () => {
      const url = (this.el("log-url") as HTMLInputElement).value;
      fetch(url)
        .then((r) => r.text())
        .then((text) => this.loadReplay(text))
        .catch((err) => this.replayStatus(`fetch failed: ${err}`));
    });
    (this.el("scrubber") as HTMLInputElement).addEventListener("input", (ev) => {
      this.showSnapshot(Number((ev.target as HTMLInputElement).value));
    });

    this.board.setFen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1");
    this.refreshControls();
  }

  // ----- live play ---------------------------------------------------------

  private act(action: UiAction): void {
    const intent = buildIntent(this.state, action);
    if (!intent) {
      this.hint("that action is not available right now");
      return;
    }
    if (!this.client.send(intent)) {
      this.hint("waiting for the server to answer");
    }
  }

  private onState(state: StateMsg): void {
    this.state = state;
    this.selectedSquare = null;
    this.board.setFen(state.fen);
    this.board.clearMarks();
    this.board.markLastMove(state.last_move ?? null);
    if (state.phase === "await_move") {
      for (const uci of state.legal_moves) this.board.mark(uci.slice(0, 2), "selectable");
    }
    if (state.phase !== "await_mode") this.gauge.hide();
    this.refreshControls();
    const headline =
      state.phase === "finished"
        ? `game over: ${state.result ?? "?"}`
        : FRIENDLY_PHASE[state.phase] ?? state.phase;
    this.el("turn-label").textContent = `turn ${state.turn}`;
    this.status(headline);
    if (state.required_piece && state.phase === "await_move") {
      this.hint(`the AI picked ${state.required_piece}: move a ${state.required_piece}`);
    } else {
      this.hint("");
    }
  }

  private onSquare(square: string): void {
    const state = this.state;
    if (!state || state.phase !== "await_move") return;
    if (this.selectedSquare === null) {
      if (state.legal_moves.some((m) => m.startsWith(square))) {
        this.selectedSquare = square;
        this.board.clearMarks();
        this.board.mark(square, "selected");
        for (const uci of state.legal_moves) {
          if (uci.startsWith(square)) this.board.mark(uci.slice(2, 4), "target");
        }
      } else {
        this.hint("no legal move with that square");
      }
      return;
    }
    const prefix = this.selectedSquare + square;
    const candidates = state.legal_moves.filter((m) => m.startsWith(prefix));
    this.selectedSquare = null;
    if (candidates.length === 0) {
      this.board.clearMarks();
      for (const uci of state.legal_moves) this.board.mark(uci.slice(0, 2), "selectable");
      this.hint("not a legal destination");
      return;
    }
    // promotions default to the queen option when present
    const uci = candidates.find((m) => m.length === 4) ?? candidates.find((m) => m.endsWith("q")) ?? candidates[0];
    this.act({ type: "move", uci });
  }

  private refreshControls(): void {
    const state = this.state;
    const phase = state?.phase ?? "finished";
    (this.el("mode-hand") as HTMLButtonElement).disabled = phase !== "await_mode";
    (this.el("mode-brain") as HTMLButtonElement).disabled = phase !== "await_mode";
    (this.el("resign") as HTMLButtonElement).disabled = !state || phase === "finished";
    for (const piece of PIECES) {
      const btn = this.el(`piece-${piece}`) as HTMLButtonElement;
      btn.disabled = phase !== "await_piece" || !state?.legal_piece_types.includes(piece);
    }
  }

  /** Streams coarse synthetic cursor-gaze so server-side prediction has input. */
  private startGazeStream(): void {
    const samples: { t: number; x: number; y: number; valid: boolean }[] = [];
    const origin = performance.now();
    this.doc.addEventListener("mousemove", (ev) => {
      samples.push({
        t: Math.round(performance.now() - origin),
        x: ev.clientX,
        y: ev.clientY,
        valid: true,
      });
    });
    this.gazeTimer = window.setInterval(() => {
      if (samples.length && this.client.connected) {
        this.client.send({ kind: "gaze_batch", samples: samples.splice(0) });
      }
    }, 1000);
  }

  private stopGazeStream(): void {
    if (this.gazeTimer !== null) window.clearInterval(this.gazeTimer);
    this.gazeTimer = null;
  }

  // ----- replay ------------------------------------------------------------

  private loadReplay(text: string): void {
    try {
      this.replayEvents = parseLog(text);
      this.snapshots = reduceLog(this.replayEvents);
    } catch (err) {
      this.replayStatus(String(err));
      return;
    }
    const scrubber = this.el("scrubber") as HTMLInputElement;
    scrubber.min = "1";
    scrubber.max = String(this.snapshots.length);
    scrubber.value = String(this.snapshots.length);
    scrubber.disabled = false;
    this.showSnapshot(this.snapshots.length);
  }

  private showSnapshot(index: number): void {
    const snap = this.snapshots[index - 1];
    if (!snap) return;
    this.replayBoard.setFen(snap.fen);
    this.replayBoard.clearMarks();
    this.replayBoard.markLastMove(snap.lastMove);
    const bits = [
      `event ${index}/${this.snapshots.length} (${snap.kind})`,
      `turn ${snap.turn}`,
      snap.mode ? `mode: ${snap.mode}` : null,
      snap.prediction !== null ? `p(switch) ${(snap.prediction * 100).toFixed(0)}%` : null,
      snap.result ? `result ${snap.result}` : snap.phase,
      snap.fen,
    ].filter(Boolean);
    this.replayStatus(bits.join(" · "));
    this.drawGaze(snap.t);
  }

  private drawGaze(uptoT: number): void {
    const canvas = this.el("gaze-canvas") as HTMLCanvasElement;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const geom = boardGeometry(this.replayEvents);
    const points = gazeTrail(this.replayEvents, uptoT);
    const scale = canvas.width / geom.size;
    for (const p of points) {
      const age = (uptoT - p.t) / 4000; // 0 fresh .. 1 old
      ctx.fillStyle = `rgba(255, 80, 40, ${0.65 * (1 - age)})`;
      ctx.beginPath();
      ctx.arc((p.x - geom.x0) * scale, (p.y - geom.y0) * scale, 7 * (1 - 0.5 * age), 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  // ----- misc --------------------------------------------------------------

  private el(id: string): HTMLElement {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node;
  }

  private status(text: string): void {
    this.el("status").textContent = text;
  }

  private hint(text: string): void {
    this.el("hint").textContent = text;
  }

  private replayStatus(text: string): void {
    this.el("replay-status").textContent = text;
  }
}
