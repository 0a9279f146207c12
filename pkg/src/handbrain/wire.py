"""JSON wire protocol for UI clients: typed messages plus encode/decode.

Unknown fields are preserved on decode so older servers tolerate newer
clients; unknown message kinds are rejected with a JSON-pointer style path.
"""

from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError


class CodecError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class _Msg(BaseModel):
    model_config = ConfigDict(extra="allow")


class StateMsg(_Msg):
    kind: Literal["state"] = "state"
    session: str
    fen: str
    phase: str
    turn: int
    t: int
    mode: Optional[str] = None
    required_piece: Optional[str] = None
    legal_piece_types: list[str] = []
    legal_moves: list[str] = []
    last_move: Optional[str] = None
    result: Optional[str] = None


class ChooseModeMsg(_Msg):
    kind: Literal["choose_mode"] = "choose_mode"
    mode: str


class ChoosePieceMsg(_Msg):
    kind: Literal["choose_piece"] = "choose_piece"
    piece: str


class MoveMsg(_Msg):
    kind: Literal["move"] = "move"
    uci: str


class ResignMsg(_Msg):
    kind: Literal["resign"] = "resign"


class GazePoint(_Msg):
    t: int
    x: float
    y: float
    valid: bool = True


class GazeBatchMsg(_Msg):
    kind: Literal["gaze_batch"] = "gaze_batch"
    samples: list[GazePoint]


class EmotionPoint(_Msg):
    t: int
    probs: dict[str, float]


class EmotionBatchMsg(_Msg):
    kind: Literal["emotion_batch"] = "emotion_batch"
    samples: list[EmotionPoint]


class PredictionMsg(_Msg):
    kind: Literal["prediction"] = "prediction"
    turn: int
    elapsed: float
    p_switch: float


class ErrorMsg(_Msg):
    kind: Literal["error"] = "error"
    code: str
    message: str
    path: Optional[str] = None


Message = Annotated[
    Union[
        StateMsg,
        ChooseModeMsg,
        ChoosePieceMsg,
        MoveMsg,
        ResignMsg,
        GazeBatchMsg,
        EmotionBatchMsg,
        PredictionMsg,
        ErrorMsg,
    ],
    Field(discriminator="kind"),
]

_adapter: TypeAdapter = TypeAdapter(Message)


def encode(message) -> bytes:
    return message.model_dump_json().encode("utf-8")


def decode(data) -> Message:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return _adapter.validate_json(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        if first.get("type") in ("union_tag_not_found", "union_tag_invalid"):
            raise CodecError("/kind", first.get("msg", "bad message kind")) from exc
        loc = [str(part) for part in first.get("loc", ())]
        if len(loc) > 1 and loc[0] in _KINDS:  # pydantic prefixes the union tag
            loc = loc[1:]
        path = "/" + "/".join(loc) if loc else "/"
        raise CodecError(path, first.get("msg", "invalid message")) from exc


_KINDS = {
    "state",
    "choose_mode",
    "choose_piece",
    "move",
    "resign",
    "gaze_batch",
    "emotion_batch",
    "prediction",
    "error",
}
