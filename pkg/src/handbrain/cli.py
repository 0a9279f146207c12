"""`handbrain` command line: a thin client over the HTTP service.

Every batch subcommand talks to the FastAPI app, by default in-process (no
server needed), or to a remote instance via --url. File I/O stays on the
client side; the service works on pure JSON payloads.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 engine or
transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENGINE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_USAGE)


class ApiClient:
    """POSTs to a remote server when --url is given, else to the in-process app."""

    def __init__(self, url: Optional[str] = None):
        if url:
            import httpx

            self._client = httpx.Client(base_url=url.rstrip("/"), timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # starlette >= 1.3 prefers the not-yet-published httpx2 here
                warnings.filterwarnings("ignore", message=".*httpx2.*")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except Exception as exc:  # connection-level failure
            raise CliError(f"cannot reach server: {exc}", EXIT_ENGINE) from exc
        if response.status_code == 502 or response.status_code == 504:
            raise CliError(f"engine failure: {response.text}", EXIT_ENGINE)
        if response.status_code >= 400:
            raise CliError(f"request failed ({response.status_code}): {response.text}", EXIT_DATA)
        return response.json()

    def close(self):
        self._client.close()


def _engine_cfg_arg(text: str, role: str) -> dict:
    """Parse --teammate/--opponent/--evaluator values.

    Accepts "builtin", "builtin:depth=3", "builtin:movetime=200", inline
    JSON, or a path to a JSON file.
    """
    text = text.strip()
    if text.startswith("{"):
        cfg = json.loads(text)
    elif Path(text).is_file():
        cfg = json.loads(Path(text).read_text("utf-8"))
    else:
        parts = text.split(":")
        if parts[0] != "builtin":
            raise CliError(f"engine spec {text!r}: not 'builtin', JSON, or a file", EXIT_USAGE)
        cfg = {"path": "builtin"}
        for part in parts[1:]:
            key, _, value = part.partition("=")
            if key == "depth":
                cfg["depth"] = int(value)
            elif key == "movetime":
                cfg["movetime_ms"] = int(value)
            elif key == "elo":
                cfg["elo"] = int(value)
            elif key == "seed":
                cfg["seed"] = int(value)
            else:
                raise CliError(f"unknown engine option {key!r}", EXIT_USAGE)
    cfg["role"] = role
    if "depth" not in cfg and "movetime_ms" not in cfg:
        cfg["depth"] = 1
    return cfg


def _read_text(path: str, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}")
    return p.read_text("utf-8")


def _read_json(path: str, what: str) -> dict:
    try:
        return json.loads(_read_text(path, what))
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} is not valid JSON: {exc}") from exc


def _write_json(path: str, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", "utf-8")


def _load_logs_payload(logdir: str) -> list:
    root = Path(logdir)
    if not root.is_dir():
        raise CliError(f"log directory not found: {logdir}")
    payloads = []
    for path in sorted(root.glob("*.jsonl")):
        events = []
        for i, line in enumerate(path.read_text("utf-8").splitlines()):
            if not line.strip():
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CliError(f"{path.name}:{i + 1}: bad JSON line: {exc}") from exc
        if events:
            session_id = events[0].get("payload", {}).get("session_id", path.stem)
            payloads.append({"session_id": session_id, "events": events})
    if not payloads:
        raise CliError(f"no .jsonl session logs in {logdir}")
    return payloads


def build_parser() -> _Parser:
    parser = _Parser(prog="handbrain", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file presetting any flag (flags override)")
    parser.add_argument("--url", help="remote service URL (default: run in-process)")
    parser.add_argument("--seed", type=int, help="global seed fallback")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the session server")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--teammate", default="builtin:depth=2")
    p.add_argument("--opponent", default="builtin:depth=2")
    p.add_argument("--logdir", default="logs")
    p.add_argument("--model", help="model.json for live switch predictions")
    p.add_argument("--eval-depth", type=int, default=1)
    p.add_argument("--ui", help="directory of built web UI to serve at /")

    p = sub.add_parser("simulate", help="generate synthetic sessions")
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--turns", type=int, default=20)
    p.add_argument("--policy", help="policy JSON file (default: built-in demo policy)")
    p.add_argument("--seed", type=int, dest="cmd_seed")
    p.add_argument("--teammate", default="builtin:depth=1")
    p.add_argument("--opponent", default="builtin:depth=1")
    p.add_argument("--logdir", required=True)

    p = sub.add_parser("extract", help="build the feature dataset from session logs")
    p.add_argument("--logdir", required=True)
    p.add_argument("--k", type=int, default=3, choices=(3, 5))
    p.add_argument("--out", required=True, help="full dataset CSV path")
    p.add_argument("--eval-depth", type=int, default=1)
    p.add_argument("--split-seed", type=int, help="also write a 70/30 segment split")
    p.add_argument("--train-out", help="train partition CSV (with --split-seed)")
    p.add_argument("--test-out", help="test partition CSV (with --split-seed)")
    p.add_argument("--manifest-out", help="segment->partition manifest JSON")

    p = sub.add_parser("train", help="train the switch predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-task-features", action="store_true")
    p.add_argument("--seed", type=int, dest="cmd_seed")
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--beta", type=float, default=1.0)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="write metrics JSON here (default: stdout)")

    p = sub.add_parser("analyze", help="switch-vs-stay statistical report")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report path (.json or .md)")
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("fragility", help="position fragility score")
    p.add_argument("--fen")
    p.add_argument("--pgn", help="PGN file: score every position of every game")
    p.add_argument("--out", help="write JSON here (default: stdout table)")

    p = sub.add_parser("replay", help="re-derive state from a session log")
    p.add_argument("--log", required=True)
    p.add_argument("--upto", type=int, help="replay only the first N events")
    p.add_argument("--pgn-out", help="also export the game as PGN")
    return parser


def _config_namespace(config_path: str, command: str) -> argparse.Namespace:
    """Pre-populate a namespace from the config file.

    argparse only applies a default when the attribute is absent from the
    namespace, while explicit flags always overwrite it; that gives exactly
    the "config presets any flag, flags override" contract.
    """
    namespace = argparse.Namespace()
    config = _read_json(config_path, "config file")
    scoped = {k: v for k, v in config.items() if not isinstance(v, dict)}
    scoped.update(config.get(command, {}))
    for key, value in scoped.items():
        setattr(namespace, key.replace("-", "_"), value)
    return namespace


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        prelim, _ = parser.parse_known_args(argv)
        namespace = (
            _config_namespace(prelim.config, prelim.command)
            if prelim.config
            else argparse.Namespace()
        )
        args = parser.parse_args(argv, namespace)
        return _dispatch(args)
    except CliError as exc:
        print(f"handbrain: {exc}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        return 130


def _seed_of(args) -> int:
    cmd_seed = getattr(args, "cmd_seed", None)
    if cmd_seed is not None:
        return cmd_seed
    return args.seed if args.seed is not None else 0


def _dispatch(args) -> int:
    if args.command == "serve":
        return _cmd_serve(args)
    client = ApiClient(args.url)
    try:
        handler = {
            "simulate": _cmd_simulate,
            "extract": _cmd_extract,
            "train": _cmd_train,
            "eval": _cmd_eval,
            "analyze": _cmd_analyze,
            "fragility": _cmd_fragility,
            "replay": _cmd_replay,
        }[args.command]
        return handler(args, client)
    finally:
        client.close()


def _cmd_serve(args) -> int:
    import uvicorn

    from .engine import EngineConfig
    from .service import ServeSettings, create_app

    settings = ServeSettings(
        teammate=EngineConfig(**_engine_cfg_arg(args.teammate, "teammate")),
        opponent=EngineConfig(**_engine_cfg_arg(args.opponent, "opponent")),
        logdir=args.logdir,
        model_path=args.model,
        eval_depth=args.eval_depth,
        ui_dir=args.ui,
    )
    if settings.model_path and not Path(settings.model_path).is_file():
        raise CliError(f"model not found: {settings.model_path}")
    app = create_app(settings)
    print(f"serving on http://{args.host}:{args.port} (logs -> {args.logdir})", file=sys.stderr)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _cmd_simulate(args, client: ApiClient) -> int:
    payload = {
        "sessions": args.sessions,
        "turns": args.turns,
        "seed": _seed_of(args),
        "teammate": _engine_cfg_arg(args.teammate, "teammate"),
        "opponent": _engine_cfg_arg(args.opponent, "opponent"),
    }
    if args.policy:
        payload["policy"] = _read_json(args.policy, "policy file")
    data = client.post("/api/simulate", payload)
    outdir = Path(args.logdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for entry in data["logs"]:
        lines = [
            json.dumps(e, separators=(",", ":"), sort_keys=True) for e in entry["events"]
        ]
        (outdir / f"{entry['session_id']}.jsonl").write_text("\n".join(lines) + "\n", "utf-8")
    print(f"wrote {len(data['logs'])} session logs to {outdir}", file=sys.stderr)
    return EXIT_OK


def _cmd_extract(args, client: ApiClient) -> int:
    payload = {
        "logs": _load_logs_payload(args.logdir),
        "k": args.k,
        "eval_depth": args.eval_depth,
    }
    if args.split_seed is not None:
        payload["split_seed"] = args.split_seed
    data = client.post("/api/extract", payload)
    Path(args.out).write_text(data["csv"], "utf-8")
    print(f"wrote {data['rows']} rows to {args.out}", file=sys.stderr)
    if args.split_seed is not None:
        if args.train_out:
            Path(args.train_out).write_text(data["train_csv"], "utf-8")
        if args.test_out:
            Path(args.test_out).write_text(data["test_csv"], "utf-8")
        if args.manifest_out:
            _write_json(args.manifest_out, data["manifest"])
    return EXIT_OK


def _cmd_train(args, client: ApiClient) -> int:
    payload = {
        "csv": _read_text(args.data, "dataset"),
        "trees": args.trees,
        "depth": args.depth,
        "learning_rate": args.learning_rate,
        "min_leaf": args.min_leaf,
        "gamma": args.gamma,
        "alpha": args.alpha,
        "beta": args.beta,
        "no_task_features": args.no_task_features,
        "seed": _seed_of(args),
    }
    data = client.post("/api/train", payload)
    _write_json(args.out, data["model"])
    if args.verbose:
        print(json.dumps(data["train_metrics"], indent=2, sort_keys=True), file=sys.stderr)
    print(
        f"trained on {data['train_rows']} rows "
        f"({len(data['features_used'])} features) -> {args.out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_eval(args, client: ApiClient) -> int:
    payload = {
        "model": _read_json(args.model, "model"),
        "csv": _read_text(args.data, "dataset"),
        "threshold": args.threshold,
    }
    data = client.post("/api/eval", payload)
    text = json.dumps(data["metrics"], indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_analyze(args, client: ApiClient) -> int:
    payload = {"csv": _read_text(args.data, "dataset"), "alpha": args.alpha}
    data = client.post("/api/analyze", payload)
    out = Path(args.out)
    if out.suffix == ".md":
        out.write_text(data["markdown"], "utf-8")
    else:
        _write_json(args.out, data["report"])
    print(f"wrote report to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_fragility(args, client: ApiClient) -> int:
    if bool(args.fen) == bool(args.pgn):
        raise CliError("provide exactly one of --fen or --pgn", EXIT_USAGE)
    if args.fen:
        data = client.post("/api/fragility", {"fen": args.fen})
        if args.out:
            _write_json(args.out, data)
        else:
            print(f"fragility {data['score']:.6f}  ({args.fen})")
            print(f"{'square':<7}{'piece':<14}{'betweenness':>12}  attacked")
            for piece in data["pieces"]:
                name = f"{piece['color']} {piece['piece']}"
                flag = "yes" if piece["attacked"] else ""
                print(f"{piece['square']:<7}{name:<14}{piece['betweenness']:>12.4f}  {flag}")
        return EXIT_OK
    data = client.post("/api/fragility/pgn", {"pgn": _read_text(args.pgn, "PGN file")})
    if args.out:
        _write_json(args.out, data)
    else:
        for g, game in enumerate(data["games"]):
            for entry in game:
                move = entry["move"] or "-"
                print(f"game {g + 1} {move:<6} {entry['score']:.6f}")
    return EXIT_OK


def _cmd_replay(args, client: ApiClient) -> int:
    events = []
    for i, line in enumerate(_read_text(args.log, "session log").splitlines()):
        if not line.strip():
            continue
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.log}:{i + 1}: bad JSON line: {exc}") from exc
    payload = {"events": events, "include_pgn": bool(args.pgn_out)}
    if args.upto is not None:
        payload["upto"] = args.upto
    data = client.post("/api/replay", payload)
    if args.pgn_out:
        Path(args.pgn_out).write_text(data["pgn"], "utf-8")
    print(
        json.dumps(
            {k: data[k] for k in ("fen", "phase", "turn", "result", "events")},
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
