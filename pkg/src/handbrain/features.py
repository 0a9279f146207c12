"""Behavioral and task feature extraction from session logs.

One FeatureRow is emitted per whole second of a turn's thinking window (one
sub-second row for very fast turns), using only data observable up to that
instant. Missing behavioral values are carried as NaN sentinels end to end,
never silently zeroed; the CSV format writes them as empty fields.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .chess.board import PieceType, Position, parse_fen
from .engine import PIECE_VALUES, EngineConfig, open_engine
from .fragility import fragility_score
from .session import SessionLog, TurnRecord, emotion_stream, gaze_stream, turn_records

MISSING = float("nan")

DECISIVE_EVAL_CP = 1000  # |eval| at or beyond this marks a decided position

FIXATION_RADIUS_PX = 50.0
FIXATION_MIN_MS = 100.0
DISPERSION_TRIM_MIN_N = 40


@dataclass(frozen=True)
class GazeSample:
    t: int  # ms
    x: float
    y: float
    valid: bool = True


@dataclass(frozen=True)
class EmotionSample:
    t: int  # ms
    probs: tuple  # 7 floats over EMOTION_CATEGORIES order

    def surprise(self) -> float:
        return self.probs[5]


@dataclass(frozen=True)
class BoardGeometry:
    """Screen-space board rectangle used for entropy cells and dwell tests."""

    x0: float = 100.0
    y0: float = 100.0
    size: float = 800.0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x0 + self.size and self.y0 <= y < self.y0 + self.size

    def cell_index(self, x: float, y: float) -> int:
        """0..63 for on-board samples, 64 for the pooled off-board cell."""
        if not self.contains(x, y):
            return 64
        col = int((x - self.x0) * 8 / self.size)
        row = int((y - self.y0) * 8 / self.size)
        return min(row, 7) * 8 + min(col, 7)


DEFAULT_GEOMETRY = BoardGeometry()


# ---------------------------------------------------------------------------
# Per-window gaze/emotion statistics


def _valid(samples: Sequence[GazeSample]) -> list[GazeSample]:
    return [s for s in samples if s.valid]


def vertical_dispersion(window: Sequence[GazeSample]) -> float:
    """Vertical gaze range in px, outlier-trimmed for windows of 40+ samples."""
    ys = np.array([s.y for s in _valid(window)], dtype=float)
    if ys.size == 0:
        return MISSING
    if ys.size >= DISPERSION_TRIM_MIN_N:
        lo, hi = np.percentile(ys, [2.5, 97.5])
        ys = ys[(ys >= lo) & (ys <= hi)]
    return float(ys.max() - ys.min())


def gaze_entropy(window: Sequence[GazeSample], geometry: BoardGeometry = DEFAULT_GEOMETRY) -> float:
    """Shannon entropy (bits) of samples over the 64 board cells + 1 off-board cell."""
    samples = _valid(window)
    if not samples:
        return MISSING
    counts = np.zeros(65)
    for s in samples:
        counts[geometry.cell_index(s.x, s.y)] += 1
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def dwell_ratio(
    window: Sequence[GazeSample],
    geometry: BoardGeometry,
    thinking_time_s: float,
) -> float:
    """Fraction of thinking time spent gazing inside the board rectangle."""
    if thinking_time_s <= 0:
        raise ValueError("thinking_time_s must be positive")
    samples = sorted(_valid(window), key=lambda s: s.t)
    if not samples:
        return MISSING
    if len(samples) == 1:
        return 0.0
    gaps = [b.t - a.t for a, b in zip(samples, samples[1:])]
    mean_gap = sum(gaps) / len(gaps)  # the final sample covers one nominal period
    dwell_ms = 0.0
    for s, gap in zip(samples, gaps + [mean_gap]):
        if geometry.contains(s.x, s.y):
            dwell_ms += gap
    return min(1.0, max(0.0, dwell_ms / 1000.0 / thinking_time_s))


def mean_surprise(emotions: Sequence[EmotionSample], t0: int, t1: int) -> float:
    """Average surprise probability over samples in [t0, t1] ms."""
    if t0 >= t1:
        raise ValueError("window must satisfy t0 < t1")
    values = [e.surprise() for e in emotions if t0 <= e.t <= t1]
    if not values:
        return MISSING
    return sum(values) / len(values)


def fixation_count(
    window: Sequence[GazeSample],
    radius_px: float = FIXATION_RADIUS_PX,
    min_duration_ms: float = FIXATION_MIN_MS,
) -> float:
    """Dispersion-based (I-DT) fixation count: runs of >=100 ms inside a 50 px radius."""
    samples = sorted(_valid(window), key=lambda s: s.t)
    if not samples:
        return MISSING
    count = 0
    i, n = 0, len(samples)
    limit = 2 * radius_px
    while i < n:
        min_x = max_x = samples[i].x
        min_y = max_y = samples[i].y
        j = i + 1
        while j < n:
            min_x, max_x = min(min_x, samples[j].x), max(max_x, samples[j].x)
            min_y, max_y = min(min_y, samples[j].y), max(max_y, samples[j].y)
            if max_x - min_x > limit or max_y - min_y > limit:
                break
            j += 1
        if j - i >= 2 and samples[j - 1].t - samples[i].t >= min_duration_ms:
            count += 1
            i = j
        else:
            i += 1
    return float(count)


# ---------------------------------------------------------------------------
# Feature rows

BEHAVIORAL_FEATURES = [
    "gaze_entropy",
    "gaze_dispersion",
    "dwell_ratio",
    "surprise_mean",
    "local_dispersion_change",
    "local_fixation_mean",
    "local_surprise_mean",
]
# Dropped by the --no-task-features ablation (evaluation/fragility/time).
TASK_FEATURES = [
    "eval_cp",
    "fragility",
    "local_eval_delta_mean",
    "local_eval_delta_last",
    "local_fragility_mean",
    "local_fragility_max",
    "elapsed_s",
]
FEATURE_COLUMNS = BEHAVIORAL_FEATURES + TASK_FEATURES

_META_COLUMNS = ["session_id", "turn", "label_switch", "label_mode", "turn_eval_delta"]


@dataclass
class FeatureRow:
    session_id: str
    turn: int
    elapsed_s: float
    features: dict
    label_switch: bool
    label_mode: str
    turn_eval_delta: float  # outcome variable for the stats report, never a model input


def decisive_material(pos: Position) -> bool:
    """Bare king facing at least a queen of extra material."""
    white = sum(PIECE_VALUES[PieceType(p)] for p in pos.board if p > 0)
    black = sum(PIECE_VALUES[PieceType(-p)] for p in pos.board if p < 0)
    return (white == 0 and black >= PIECE_VALUES[PieceType.QUEEN]) or (
        black == 0 and white >= PIECE_VALUES[PieceType.QUEEN]
    )


def geometry_from_log(log: SessionLog) -> BoardGeometry:
    if log.events and log.events[0].payload.get("board_px"):
        x0, y0, size = log.events[0].payload["board_px"]
        return BoardGeometry(x0, y0, size)
    return DEFAULT_GEOMETRY


def gaze_samples(log: SessionLog) -> list[GazeSample]:
    return sorted(
        (
            GazeSample(int(s["t"]), float(s["x"]), float(s["y"]), bool(s.get("valid", True)))
            for s in gaze_stream(log)
        ),
        key=lambda s: s.t,
    )


def emotion_samples(log: SessionLog) -> list[EmotionSample]:
    out = []
    for s in emotion_stream(log):
        probs = s["probs"]
        if isinstance(probs, dict):
            from .session import EMOTION_CATEGORIES

            probs = tuple(float(probs.get(c, 0.0)) for c in EMOTION_CATEGORIES)
        out.append(EmotionSample(int(s["t"]), tuple(probs)))
    return sorted(out, key=lambda s: s.t)


def turn_task_inputs(
    log: SessionLog, eval_cfg: Optional[EngineConfig] = None
) -> tuple[dict, dict]:
    """Per-turn (eval_before, eval_after) centipawns and fragility of each turn's position."""
    cfg = eval_cfg or EngineConfig(role="evaluator", depth=1)
    engine = open_engine(cfg)
    evals: dict = {}
    frags: dict = {}
    try:
        for rec in turn_records(log):
            before = parse_fen(rec.fen_before)
            after = parse_fen(rec.fen_after)
            evals[rec.turn] = (
                float(engine.evaluate(before).as_cp()),
                float(engine.evaluate(after).as_cp()),
            )
            frags[rec.turn] = fragility_score(before)
    finally:
        engine.close()
    return evals, frags


def build_feature_rows(
    log: SessionLog,
    k: int,
    evals: Mapping[int, tuple],
    frags: Mapping[int, float],
    session_id: Optional[str] = None,
) -> list[FeatureRow]:
    """One-second-interval samples for every analyzable turn of one session.

    Skips the first turn of the game and turns in decided positions (|eval|
    >= 1000 cp or bare-king material imbalance). `k` is the local-statistics
    window in preceding turns.
    """
    if k not in (3, 5):
        raise ValueError("k must be 3 or 5")
    records = turn_records(log)
    if not records:
        return []
    sid = session_id or log.events[0].payload.get("session_id", "session")
    geometry = geometry_from_log(log)
    gaze = gaze_samples(log)
    emotions = emotion_samples(log)

    per_turn = {r.turn: turn_summary(r, gaze, emotions, evals, frags) for r in records}

    rows: list[FeatureRow] = []
    for idx, rec in enumerate(records):
        if rec.turn == 1:
            continue  # no prior context on the first move
        eval_before, _ = evals[rec.turn]
        if abs(eval_before) >= DECISIVE_EVAL_CP or decisive_material(parse_fen(rec.fen_before)):
            continue  # decided position: the mode choice is trivial

        preceding = [per_turn[r.turn] for r in records[max(0, idx - k) : idx]]
        local = local_feature_block(preceding)
        thinking = rec.thinking_s
        points = [float(s) for s in range(1, int(thinking) + 1)] or [thinking]
        for elapsed in points:
            cutoff = rec.t_start + int(round(elapsed * 1000))
            window = [s for s in gaze if rec.t_start <= s.t <= cutoff]
            feats = {
                "gaze_entropy": gaze_entropy(window, geometry),
                "gaze_dispersion": vertical_dispersion(window),
                "dwell_ratio": dwell_ratio(window, geometry, elapsed) if elapsed > 0 else MISSING,
                "surprise_mean": (
                    mean_surprise(emotions, rec.t_start, cutoff) if cutoff > rec.t_start else MISSING
                ),
                "eval_cp": eval_before,
                "fragility": frags[rec.turn],
                "elapsed_s": elapsed,
            }
            feats.update(local)
            rows.append(
                FeatureRow(
                    session_id=sid,
                    turn=rec.turn,
                    elapsed_s=elapsed,
                    features=feats,
                    label_switch=bool(rec.switch),
                    label_mode=rec.mode.value,
                    turn_eval_delta=evals[rec.turn][1] - evals[rec.turn][0],
                )
            )
    return rows


def turn_summary(rec: TurnRecord, gaze, emotions, evals, frags) -> dict:
    window = [s for s in gaze if rec.t_start <= s.t <= rec.t_mode]
    return {
        "dispersion": vertical_dispersion(window),
        "fixations": fixation_count(window),
        "surprise": mean_surprise(emotions, rec.t_start, max(rec.t_mode, rec.t_start + 1)),
        "eval_delta": evals[rec.turn][1] - evals[rec.turn][0],
        "fragility": frags[rec.turn],
    }


def local_feature_block(preceding: list[dict]) -> dict:
    assert preceding, "turn 1 is excluded, so at least one prior turn exists"
    disp = [p["dispersion"] for p in preceding]
    return {
        "local_dispersion_change": disp[-1] - disp[0],
        "local_fixation_mean": _mean(p["fixations"] for p in preceding),
        "local_surprise_mean": _mean(p["surprise"] for p in preceding),
        "local_eval_delta_mean": _mean(p["eval_delta"] for p in preceding),
        "local_eval_delta_last": preceding[-1]["eval_delta"],
        "local_fragility_mean": _mean(p["fragility"] for p in preceding),
        "local_fragility_max": max(p["fragility"] for p in preceding),
    }


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values)


# ---------------------------------------------------------------------------
# CSV dataset format


def rows_to_csv(rows: Sequence[FeatureRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_META_COLUMNS + FEATURE_COLUMNS)
    for row in rows:
        meta = [
            row.session_id,
            row.turn,
            int(row.label_switch),
            row.label_mode,
            _cell(row.turn_eval_delta),
        ]
        writer.writerow(meta + [_cell(row.features.get(c, MISSING)) for c in FEATURE_COLUMNS])
    return buf.getvalue()


def _cell(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def rows_from_csv(text: str) -> list[FeatureRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[: len(_META_COLUMNS)] != _META_COLUMNS:
        raise ValueError("dataset CSV must start with the canonical meta columns")
    feature_names = header[len(_META_COLUMNS) :]
    rows = []
    for record in reader:
        if not record:
            continue
        meta, values = record[: len(_META_COLUMNS)], record[len(_META_COLUMNS) :]
        features = {name: _parse_cell(v) for name, v in zip(feature_names, values)}
        rows.append(
            FeatureRow(
                session_id=meta[0],
                turn=int(meta[1]),
                elapsed_s=features.get("elapsed_s", MISSING),
                features=features,
                label_switch=bool(int(meta[2])),
                label_mode=meta[3],
                turn_eval_delta=_parse_cell(meta[4]),
            )
        )
    return rows


def _parse_cell(text: str) -> float:
    return MISSING if text == "" else float(text)


# ---------------------------------------------------------------------------
# Temporally coherent split


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)  # session -> list of segment dicts

    def train_fraction(self) -> float:
        total = len(self.train) + len(self.test)
        return len(self.train) / total if total else 0.0


TRAIN_FRACTION = 0.7
SEGMENT_LENGTHS = (3, 4, 5)


def split_dataset(rows: Sequence[FeatureRow], seed: int) -> DatasetSplit:
    """70/30 split that assigns whole 3-5 turn segments, never splitting a turn."""
    if not rows:
        raise ValueError("no rows to split")
    rng = random.Random(seed)

    by_session: dict = {}
    for row in rows:
        by_session.setdefault(row.session_id, set()).add(row.turn)

    segments = []  # (session, tuple_of_turns)
    for session in sorted(by_session):
        turns = sorted(by_session[session])
        i = 0
        while i < len(turns):
            length = rng.choice(SEGMENT_LENGTHS)
            segments.append((session, tuple(turns[i : i + length])))
            i += length

    rng.shuffle(segments)
    total_turns = sum(len(t) for _, t in segments)
    target = TRAIN_FRACTION * total_turns
    assigned: dict = {}
    train_turns = 0
    for session, turns in segments:
        part = "train" if train_turns < target else "test"
        if part == "train":
            train_turns += len(turns)
        assigned[(session, turns)] = part
    # Tiny corpora can leave one side empty; both partitions must be usable.
    if len(segments) >= 2:
        parts = set(assigned.values())
        if parts == {"train"}:
            assigned[segments[-1]] = "test"
        elif parts == {"test"}:
            assigned[segments[0]] = "train"

    manifest: dict = {}
    lookup: dict = {}
    for (session, turns), part in assigned.items():
        manifest.setdefault(session, []).append({"turns": list(turns), "partition": part})
        for turn in turns:
            lookup[(session, turn)] = part
    for session in manifest:
        manifest[session].sort(key=lambda seg: seg["turns"][0])

    split = DatasetSplit(manifest=manifest)
    for row in rows:
        (split.train if lookup[(row.session_id, row.turn)] == "train" else split.test).append(row)
    return split
