"""Command line entry point: model-server --model <id> --port <port>."""

from __future__ import annotations

import argparse
import sys

from .errors import ModelLoadError
from .models import MODEL_IDS
from .server import serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-server",
        description="Serve an image classifier over the hard-label HTTP protocol.",
    )
    parser.add_argument("--model", required=True, choices=MODEL_IDS,
                        help="model id; '-sim' ids use seeded random weights")
    parser.add_argument("--port", type=int, default=8000,
                        help="TCP port, 0 picks a free one (default 8000)")
    parser.add_argument("--device", default="cpu",
                        help="torch device for inference (default cpu)")
    parser.add_argument("--host", default="127.0.0.1",
                        help="bind address (default 127.0.0.1)")
    parser.add_argument("--verbose", action="store_true",
                        help="log each request to stderr")
    args = parser.parse_args(argv)
    try:
        serve(args.model, args.port, device=args.device, host=args.host,
              verbose=args.verbose)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
