"""Bridge launcher: `mindful-bridge serve --config bridge.json`."""
from __future__ import annotations

import argparse
import json
import sys

from .app import BridgeConfig, PatchSpec, create_app, load_bridge_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mindful-bridge")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="run the classifier service")
    p.add_argument("--config", help="bridge JSON config")
    p.add_argument("--classifier", help="patch classifier JSON (mirror-patch mode)")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    return parser


def _config_from_args(args: argparse.Namespace) -> BridgeConfig:
    if args.config:
        config = load_bridge_config(args.config)
    elif args.classifier:
        with open(args.classifier, encoding="utf-8") as fh:
            classifier = json.load(fh)
        patches = tuple(
            PatchSpec(name=c["name"], region=tuple(int(v) for v in c["region"]),
                      gain=float(c["gain"]), bias=float(c["bias"]))
            for c in classifier.get("classes", [])
        )
        config = BridgeConfig(width=classifier.get("width"),
                              height=classifier.get("height"), patches=patches)
    else:
        print("error: serve needs --config or --classifier", file=sys.stderr)
        raise SystemExit(2)
    host = args.host if args.host is not None else config.host
    port = args.port if args.port is not None else config.port
    return BridgeConfig(host=host, port=port, mode=config.mode, width=config.width,
                        height=config.height, patches=config.patches,
                        model_path=config.model_path)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
