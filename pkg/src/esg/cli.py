"""Command line entry point: ``esg <command>``.

Exit codes for ``submit``: 0 success, 1 task failed, 2 usage or validation
error, 3 timeout or unreachable service.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading

from esg.client import (
    AuthRejected,
    ClientError,
    NotFound,
    PollPolicy,
    ServiceClient,
    ServiceUnavailable,
    TaskFailed,
    TimedOut,
    ValidationRejected,
)
from esg.config import Settings, load_settings
from esg.logs import configure_logging

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NO_VERDICT = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _shutdown_event() -> threading.Event:
    event = threading.Event()

    def handler(signum, frame):
        event.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    return event


def _broker(settings: Settings):
    from esg.broker import open_broker

    return open_broker(settings.broker_url, settings.broker_namespace)


def cmd_serve_api(settings: Settings, args) -> int:
    import uvicorn

    from esg.api import create_app

    app = create_app(settings.load_service(), _broker(settings), settings.auth_policy(),
                     max_body=settings.max_body_bytes,
                     exempt_openapi=settings.auth_exempt_openapi)
    host, port = settings.bind()
    # uvicorn installs its own SIGINT/SIGTERM handling
    uvicorn.run(app, host=host, port=port, log_config=None, access_log=False)
    return EXIT_OK


def cmd_serve_worker(settings: Settings, args) -> int:
    from esg.worker import Worker

    worker = Worker(settings.load_service(), _broker(settings), settings.subscriptions(),
                    heartbeat=settings.worker_heartbeat_s,
                    visibility=settings.worker_visibility_s,
                    grace=settings.worker_grace_s)
    worker.run(_shutdown_event())
    return EXIT_OK


def cmd_serve_gc(settings: Settings, args) -> int:
    from esg.gc import run_gc

    run_gc(_broker(settings), settings.gc_policy(), settings.gc_interval_s,
           shutdown_signal=_shutdown_event())
    return EXIT_OK


def cmd_openapi(settings: Settings, args) -> int:
    from esg.schema import emit_openapi

    spec = settings.load_service()
    if args.version is not None and args.version not in spec.versions:
        _err(f"unknown version {args.version!r}; known: {', '.join(spec.versions)}")
        return EXIT_USAGE
    doc = emit_openapi(spec, settings.auth_enabled, args.version,
                       exempt_openapi=settings.auth_exempt_openapi)
    sys.stdout.write(json.dumps(doc, indent=2, ensure_ascii=False) + "\n")
    return EXIT_OK


def cmd_submit(settings: Settings, args) -> int:
    try:
        with open(args.input) if args.input != "-" else sys.stdin as fh:
            payload = json.load(fh)
    except (OSError, ValueError) as exc:
        _err(f"cannot read input: {exc}")
        return EXIT_USAGE
    poll = PollPolicy(initial=args.poll_initial, max_wait=args.max_wait)
    with ServiceClient(settings.base_url, settings.token or None, poll=poll) as client:
        try:
            handle = client.submit(args.version, args.kind, payload)
            if not args.wait:
                print(json.dumps({"task_ID": handle.task_id, "status_url": handle.status_url,
                                  "result_url": handle.result_url}))
                return EXIT_OK
            result = client.wait(handle)
        except ValidationRejected as exc:
            print(json.dumps({"detail": exc.detail}, indent=2))
            _err("input rejected by the service")
            return EXIT_USAGE
        except (AuthRejected, NotFound) as exc:
            _err(str(exc))
            return EXIT_USAGE
        except TaskFailed as exc:
            print(json.dumps({"detail": exc.detail}))
            _err(str(exc))
            return EXIT_FAILED
        except (TimedOut, ServiceUnavailable) as exc:
            _err(str(exc))
            return EXIT_NO_VERDICT
        except ClientError as exc:
            _err(str(exc))
            return EXIT_NO_VERDICT
    print(json.dumps(result, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esg", description="Run and call forecasting services.")
    parser.add_argument("--config", help="TOML config file (ESG_CONFIG)")
    parser.add_argument("--service", help="service object as 'module:name'")
    parser.add_argument("--broker-url")
    parser.add_argument("--log-level")
    sub = parser.add_subparsers(dest="command", required=True)

    api = sub.add_parser("serve-api", help="run the HTTP API")
    api.add_argument("--bind", dest="bind_addr", help="host:port")
    api.set_defaults(func=cmd_serve_api)

    worker = sub.add_parser("serve-worker", help="run one worker")
    worker.add_argument("--subscriptions", dest="worker_subscriptions",
                        help="comma separated version:kind pairs")
    worker.add_argument("--heartbeat", dest="worker_heartbeat_s", type=float)
    worker.add_argument("--visibility", dest="worker_visibility_s", type=float)
    worker.set_defaults(func=cmd_serve_worker)

    gc = sub.add_parser("serve-gc", help="run the garbage collector")
    gc.add_argument("--interval", dest="gc_interval_s", type=float)
    gc.set_defaults(func=cmd_serve_gc)

    doc = sub.add_parser("openapi", help="print the OpenAPI document")
    doc.add_argument("--version", help="restrict to one version, e.g. v1")
    doc.set_defaults(func=cmd_openapi)

    submit = sub.add_parser("submit", help="submit a task and optionally wait for it")
    submit.add_argument("--kind", choices=["request", "fit-parameters"], default="request")
    submit.add_argument("--version", required=True)
    submit.add_argument("--input", required=True, help="JSON file, or - for stdin")
    submit.add_argument("--wait", action="store_true")
    submit.add_argument("--base-url")
    submit.add_argument("--token")
    submit.add_argument("--max-wait", type=float, default=None)
    submit.add_argument("--poll-initial", type=float, default=1.0)
    submit.set_defaults(func=cmd_submit)
    return parser


_SETTING_FLAGS = ("service", "broker_url", "log_level", "bind_addr", "worker_subscriptions",
                  "worker_heartbeat_s", "worker_visibility_s", "gc_interval_s", "base_url", "token")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    overrides = {name: getattr(args, name, None) for name in _SETTING_FLAGS}
    try:
        settings = load_settings(args.config, overrides=overrides)
    except (OSError, ValueError) as exc:
        _err(f"configuration error: {exc}")
        return EXIT_USAGE
    if args.command.startswith("serve-"):
        # stdout carries the result document for the other commands
        configure_logging(settings.log_level, sys.stdout)
    try:
        return args.func(settings, args)
    except (ValueError, ImportError, AttributeError) as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
