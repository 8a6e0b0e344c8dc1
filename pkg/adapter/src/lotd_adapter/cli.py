"""Command-line front door: ``lotd-adapter dump`` and ``lotd-adapter answer``.

Exit codes follow the engine's convention: 1 for bad input (files,
JSON, arguments), 2 for contract violations (layer coverage, prompt
schema). Everything the subcommands print to stdout is JSON, so the two
CLIs compose in shell pipelines:

    lotd-adapter dump --image 640x480 --question "..." --out d.lotd
    evsel highlight d.lotd --out-prompt p.json
    lotd-adapter answer --prompt p.json --image 640x480
"""

import argparse
import json
import sys

from .config import AdapterConfig, CaptureContractError
from .passes import answer_pass, dump_pass


def _layers(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def build_parser():
    p = argparse.ArgumentParser(
        prog="lotd-adapter",
        description="capture/answer bridge between a model and the "
                    "evidence-selection engine")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="fake",
                        help="model identifier (fake, fake-leaky, or an "
                             "HF checkpoint name)")
    common.add_argument("--device", default="cpu")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for the fake backends")
    common.add_argument("--image", required=True,
                        help="image path, .npy array, or WxH synthetic size")

    d = sub.add_parser("dump", parents=[common],
                       help="run the capture pass and write a LOTD dump")
    d.add_argument("--question", required=True)
    d.add_argument("--context", default=None)
    d.add_argument("--context-file", default=None)
    d.add_argument("--out", required=True)
    d.add_argument("--capture-layers", type=_layers, default=None,
                   metavar="L0,L1,...")
    d.add_argument("--full-rows", action="store_true",
                   help="capture every attention row instead of the "
                        "object/final slice")
    d.add_argument("--allow-partial", action="store_true",
                   help="skip the layer-coverage check (the engine will "
                        "reject the dump; useful for testing that)")
    d.add_argument("--declare-sinks", action="store_true",
                   help="record the known sink dimension in the dump "
                        "instead of leaving detection to the engine")
    d.add_argument("--meta-out", default=None,
                   help="also write the meta record to this path")

    a = sub.add_parser("answer", parents=[common],
                       help="answer from a marked-prompt JSON")
    a.add_argument("--prompt", required=True,
                   help="prompt JSON produced by `evsel highlight`")
    a.add_argument("--shots", type=int, default=0,
                   help="prepend this many built-in few-shot exemplars")
    a.add_argument("--out", default=None,
                   help="write the answer record here as well as stdout")
    return p


def cmd_dump(args) -> int:
    if args.context is not None and args.context_file is not None:
        print("error: --context and --context-file are exclusive",
              file=sys.stderr)
        return 1
    context = args.context
    if args.context_file is not None:
        with open(args.context_file, "r", encoding="utf-8") as f:
            context = f.read()
    config = AdapterConfig(model=args.model, device=args.device,
                           capture_layers=args.capture_layers,
                           row_sliced=not args.full_rows, seed=args.seed)
    meta = dump_pass(args.image, args.question, context, config, args.out,
                     enforce_coverage=not args.allow_partial,
                     declare_sinks=args.declare_sinks)
    blob = json.dumps(meta, indent=2)
    print(blob)
    if args.meta_out:
        with open(args.meta_out, "w", encoding="utf-8") as f:
            f.write(blob + "\n")
    return 0


def cmd_answer(args) -> int:
    with open(args.prompt, "r", encoding="utf-8") as f:
        prompt = json.load(f)
    config = AdapterConfig(model=args.model, device=args.device,
                           n_exemplars=args.shots, seed=args.seed)
    record = answer_pass(prompt, args.image, config)
    blob = json.dumps(record, indent=2)
    print(blob)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(blob + "\n")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "dump":
            return cmd_dump(args)
        return cmd_answer(args)
    except CaptureContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
