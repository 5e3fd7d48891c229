"""xdnr-export command line: `export` embeddings, `serve` the scorer protocol."""

from __future__ import annotations

import argparse
import json
import shlex
import sys


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="xdnr-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("export", help="encode a texts file into the binary embedding format")
    p.add_argument("--texts", required=True, help='JSONL of {"id","text"}')
    p.add_argument("--model", default="hash:dim=384,seed=0",
                   help="hash:dim=N,seed=S or a sentence-transformers model name")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)

    p = sub.add_parser("serve", help="answer the engine's scorer protocol on stdin/stdout")
    p.add_argument("--mode", required=True, choices=["pair", "listwise"])
    p.add_argument("--model", default="hash:dim=384,seed=0")
    p.add_argument("--llm-cmd", help="listwise only: command receiving the prompt on stdin")
    p.add_argument("--llm-timeout", type=float, default=120.0)

    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1

    if args.command == "export":
        from .export import export

        try:
            manifest = export(args.texts, args.model, args.out, batch_size=args.batch_size)
        except (ValueError, OSError, RuntimeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(manifest.to_dict()))
        return 0

    from .encoders import make_encoder
    from .scorer import ScorerService, command_transport

    try:
        encoder = make_encoder(args.model)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    llm = None
    if args.llm_cmd:
        llm = command_transport(shlex.split(args.llm_cmd), timeout=args.llm_timeout)
    service = ScorerService(args.mode, encoder, llm=llm)
    return service.serve()


if __name__ == "__main__":
    sys.exit(main())
