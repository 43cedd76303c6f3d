"""``orderpick`` command line: a thin client over the service handlers.

Without ``--server`` the handlers run in-process; with it the same request
is POSTed to a running service.  Exit codes: 0 success, 2 configuration
error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from pydantic import ValidationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="YAML experiment config")
    p.add_argument("--preset", help="named preset (paper, tiny)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set training.lr=1e-3 (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--server", help="base URL of a running service; default runs in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orderpick", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run episodes with a scripted or learned policy")
    _common(p)
    p.add_argument("--policy", choices=["fm", "pdm", "random", "checkpoint"])
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--parallel", type=int, help="episode worker processes")
    p.add_argument("--events", action="store_true", help="also write the per-tick event log")

    p = sub.add_parser("train", help="train HSNAC or SNAC")
    _common(p)
    p.add_argument("--algorithm", choices=["hsnac", "snac"])
    p.add_argument("--episodes", type=int, help="training episodes")
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("eval", help="evaluate a training checkpoint")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=int)
    p.add_argument("--events", action="store_true")

    p = sub.add_parser("bench", help="measure simulator steps per second")
    _common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--envs", type=int)

    p = sub.add_parser("export-layout", help="write the warehouse graph")
    _common(p)
    p.add_argument("--format", choices=["json", "text"], default="json")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _overrides(args) -> list[str]:
    out = list(args.overrides)
    flag_map = {"seed": "seed", "output_dir": "output_dir", "policy": "policy", "checkpoint": "checkpoint",
                "parallel": "parallel", "algorithm": "training.algorithm", "samples": "bench.samples",
                "envs": "bench.n_envs"}
    for attr, key in flag_map.items():
        if args.command == "eval" and attr == "checkpoint":
            continue
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value}")
    episodes = getattr(args, "episodes", None)
    if episodes is not None:
        out.append(f"{'training.episodes' if args.command == 'train' else 'episodes'}={episodes}")
    return out


def build_request(args) -> dict:
    from .config import read_file

    body = {"preset": args.preset, "config": read_file(args.config) if args.config else {},
            "overrides": _overrides(args)}
    if args.command in ("simulate", "eval"):
        body["record_events"] = args.events
    if args.command == "eval":
        body["checkpoint"] = args.checkpoint
    if args.command == "train":
        body["resume"] = args.resume
    if args.command == "export-layout":
        body["format"] = args.format
    return body


def _remote(server: str, command: str, body: dict) -> dict:
    import httpx

    try:
        resp = httpx.post(f"{server.rstrip('/')}/{command}", json=body, timeout=None)
    except httpx.HTTPError as exc:
        raise RuntimeError(f"cannot reach {server}: {exc}") from exc
    if resp.status_code == 422:
        raise _RemoteConfigError(resp.json().get("detail"))
    if resp.status_code >= 400:
        raise RuntimeError(f"server returned {resp.status_code}: {resp.text}")
    return resp.json()


class _RemoteConfigError(Exception):
    pass


def _local(command: str, body: dict) -> dict:
    from .service.app import HANDLERS

    model, handler = HANDLERS[command]
    kwargs = {}
    if command == "train":
        kwargs["on_point"] = lambda p: logging.getLogger("orderpick.train").info(
            "episode %d pick rate %.1f", p.episode, p.pick_rate)
    return handler(model(**body), **kwargs).model_dump(mode="json")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve":
        import uvicorn

        uvicorn.run("orderpick.service.app:app", host=args.host, port=args.port)
        return EXIT_OK

    from .config import ConfigError
    from .service.app import ServiceError

    try:
        body = build_request(args)
        out = _remote(args.server, args.command, body) if args.server else _local(args.command, body)
    except (ConfigError, ValidationError, _RemoteConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ServiceError as exc:
        print(f"{'config error' if exc.status == 422 else 'error'}: {exc.detail}", file=sys.stderr)
        return EXIT_CONFIG if exc.status == 422 else EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(out, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
