"""Command-line entry points.

    ocmsim run CONFIG [--out-dir DIR] [--seed N] [--threads N] [--server URL]
    ocmsim compare A B [--server URL]
    ocmsim serve [--host HOST] [--port PORT]

`run` executes a config in process by default, or forwards it to a
running service with --server; either way the artifacts land in the
output directory and the summary goes to stdout as JSON.  Failures
print a machine-readable error to stderr and exit with 2 (bad config
or input file), 3 (physics precondition), or 4 (resource cap);
anything unexpected exits 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig, parse_run_config
from .errors import FormatError, OcmError, PhysicsError, ResourceCapError
from .experiments import RunResult, compare_distributions, execute_run

_EXIT_BY_ERROR = [
    (ResourceCapError, 4),
    (FormatError, 2),
    (PhysicsError, 3),
]

_EXIT_BY_STATUS = {409: 3, 413: 4, 422: 2}


def _fail(exc: Exception, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)
    return code


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.threads is not None:
        cfg = cfg.model_copy(update={"threads": args.threads})
    if args.out_dir is not None:
        cfg = cfg.model_copy(
            update={"output": cfg.output.model_copy(update={"directory": args.out_dir})}
        )
    if args.seed is not None:
        if not hasattr(cfg.experiment, "seed"):
            raise FormatError(
                f"--seed given but a {cfg.experiment.kind} experiment takes none"
            )
        cfg = cfg.model_copy(
            update={"experiment": cfg.experiment.model_copy(update={"seed": args.seed})}
        )
    return cfg


def _write_artifacts(res: RunResult, directory: str) -> list[str]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in res.artifacts.items():
        (out / name).write_bytes(text.encode())
        written.append(str(out / name))
    return written


def _remote_run(cfg: RunConfig, server: str) -> RunResult:
    import httpx

    reply = httpx.post(f"{server.rstrip('/')}/run",
                       json=cfg.model_dump(mode="json"), timeout=600.0)
    _raise_for_remote(reply)
    body = reply.json()
    return RunResult(artifacts=body["artifacts"], summary=body["summary"],
                     manifest=body["manifest"])


def _remote_compare(a: str, b: str, server: str) -> dict:
    import httpx

    reply = httpx.post(f"{server.rstrip('/')}/compare",
                       json={"a": a, "b": b}, timeout=600.0)
    _raise_for_remote(reply)
    return reply.json()


def _raise_for_remote(reply) -> None:
    if reply.status_code == 200:
        return
    try:
        body = reply.json()
        message = body.get("message", reply.text)
        name = body.get("error", "")
    except ValueError:
        message, name = reply.text, ""
    exc_type = {"ResourceCapError": ResourceCapError, "FormatError": FormatError,
                "PhysicsError": PhysicsError}.get(name)
    if exc_type is None:
        exc_type = {3: PhysicsError, 4: ResourceCapError}.get(
            _EXIT_BY_STATUS.get(reply.status_code), FormatError)
    raise exc_type(f"server: {message}")


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(parse_run_config(_read_text(args.config)), args)
    res = _remote_run(cfg, args.server) if args.server else execute_run(cfg)
    written = _write_artifacts(res, cfg.output.directory)
    print(json.dumps({"out_dir": cfg.output.directory, "artifacts": written,
                      "summary": res.summary}, sort_keys=True))
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    a, b = _read_text(args.a), _read_text(args.b)
    report = _remote_compare(a, b, args.server) if args.server \
        else compare_distributions(a, b)
    print(json.dumps(report, sort_keys=True))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocmsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a YAML/JSON run config")
    p_run.add_argument("--out-dir", default=None, help="override output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override experiment seed")
    p_run.add_argument("--threads", type=int, default=None, help="override worker threads")
    p_run.add_argument("--server", default=None, help="run on a service at this base URL")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="diff two serialized distributions")
    p_cmp.add_argument("a")
    p_cmp.add_argument("b")
    p_cmp.add_argument("--server", default=None, help="compare on a service at this base URL")
    p_cmp.set_defaults(func=_cmd_compare)

    p_srv = sub.add_parser("serve", help="start the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OcmError as exc:
        for exc_type, code in _EXIT_BY_ERROR:
            if isinstance(exc, exc_type):
                return _fail(exc, code)
        return _fail(exc, 1)
    except Exception as exc:  # pragma: no cover - last-resort reporting
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
