"""Command-line client for the simulation service.

The CLI is a thin HTTP client: by default it mounts the service in-process
(ASGI transport, no server needed); pass --server to target a running
instance instead.  ``drsim serve`` starts one.

Exit codes: 0 ok, 2 validation failure, 3 parse failure, 4 runtime invariant
breach, 5 I/O or transport error.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Optional

import httpx

from .metrics import render_text, report_to_canonical_json
from .scenario import ScenarioParseError, load_file
from .sweep import render_sweep_text

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARSE = 3
EXIT_INVARIANT = 4
EXIT_IO = 5


def _post(path: str, body: dict, server: Optional[str]) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(path, json=body)

    async def _inprocess() -> httpx.Response:
        from .service.app import app
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://drsim.local",
                                     timeout=600.0) as client:
            return await client.post(path, json=body)

    return asyncio.run(_inprocess())


def _write_output(text_or_bytes, out: Optional[str]) -> None:
    data = text_or_bytes if isinstance(text_or_bytes, bytes) else text_or_bytes.encode()
    if out is None or out == "-":
        sys.stdout.write(data.decode())
    else:
        Path(out).write_bytes(data)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = load_file(args.scenario)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    resp = _post("/validate", {"scenario": scenario}, args.server)
    body = resp.json()
    if body.get("ok"):
        print(f"{args.scenario}: ok")
        return EXIT_OK
    for diag in body.get("diagnostics", []):
        print(f"{args.scenario}: {diag}", file=sys.stderr)
    return EXIT_VALIDATION


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_file(args.scenario)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    body = {"scenario": scenario, "seed": args.seed,
            "include_trace": args.trace is not None}
    resp = _post("/run", body, args.server)
    if resp.status_code == 400:
        for diag in resp.json().get("diagnostics", []):
            print(f"{args.scenario}: {diag}", file=sys.stderr)
        return EXIT_VALIDATION
    resp.raise_for_status()
    payload = resp.json()
    report = payload["report"]
    if args.format == "text":
        _write_output(render_text(report), args.out)
    else:
        _write_output(report_to_canonical_json(report), args.out)
    if args.trace is not None:
        Path(args.trace).write_text(payload.get("trace_ndjson") or "")
    failures = payload.get("invariant_failures") or []
    if failures:
        for f in failures:
            print(f"invariant breach: {f}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        scenario = load_file(args.scenario)
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    resp = _post("/sweep", {"scenario": scenario, "seed": args.seed}, args.server)
    if resp.status_code == 400:
        for diag in resp.json().get("diagnostics", []):
            print(f"{args.scenario}: {diag}", file=sys.stderr)
        return EXIT_VALIDATION
    resp.raise_for_status()
    table = resp.json()
    if args.format == "text":
        _write_output(render_sweep_text(table), args.out)
    else:
        _write_output(report_to_canonical_json(table), args.out)
    if not table["ordering"]["pass"]:
        print("warning: mode ordering check FAILED (overrides are honored as "
              "user intent)", file=sys.stderr)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("drsim.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drsim",
        description="Deterministic two-zone HA/DR simulator: validate "
                    "scenarios, run them, and compare recovery modes.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON path")
    common.add_argument("--server", default=None,
                        help="base URL of a running drsim service "
                             "(default: in-process)")

    p_validate = sub.add_parser("validate", parents=[common],
                                help="validate a scenario file")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", parents=[common], help="execute a scenario")
    p_run.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_run.add_argument("--out", default=None, help="report path (default stdout)")
    p_run.add_argument("--format", choices=["json", "text"], default="json")
    p_run.add_argument("--trace", default=None, help="write the event trace here")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="run the scenario under all four DR modes")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--format", choices=["json", "text"], default="json")
    p_sweep.set_defaults(func=cmd_sweep)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (httpx.HTTPError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
