"""Command-line interface.

Subcommands mirror the package's external contracts:

* ``select``    – run evidence selection on dump(s), emit report JSON
* ``highlight`` – selection plus the marker-highlighted prompt JSON
* ``bbox``      – all three bounding-box strategies for one dump
* ``eval-bbox`` – score predicted boxes against ground truth
* ``retrieve``  – top-n entities from an embedding knowledge base
* ``synth``     – generate a planted synthetic dump + ground truth
* ``stats``     – token reduction / prompt overhead arithmetic

Exit codes: 0 success, 1 unreadable or malformed input, 2 invariant
violation in otherwise well-formed input.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .dumpio import ContextInfo, read_dump
from .errors import EvselError, InputError, InvariantError
from .jsonio import dumps_canonical, write_canonical
from .pipeline import RunConfig, highlight, select_evidence
from .prompting import crop_spec
from .retrieval import load_kb, retrieve
from .boxmetrics import compare, summarize
from .synth import generate, spec_from_json
from .visual import (STRATEGIES, bbox, default_layer_ranges, filter_sinks,
                     sink_mask)


def _parse_layers(text):
    """Layer set syntax: 'a:b' (half-open range) or 'i,j,k'."""
    if text is None:
        return None
    text = text.strip()
    try:
        if ":" in text:
            a, b = text.split(":")
            lo, hi = int(a), int(b)
            if hi <= lo:
                raise ValueError
            return tuple(range(lo, hi))
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"cannot parse layer set {text!r} (use a:b or i,j,k)")


def _add_config_flags(p):
    p.add_argument("--q", type=float, default=25.0,
                   help="sink percentile threshold (default 25)")
    p.add_argument("--beta", type=float, default=2.0,
                   help="centroid box half-width in sigmas (default 2)")
    p.add_argument("--kappa", type=float, default=5.0,
                   help="sink-dimension detection multiplier (default 5)")
    p.add_argument("--strategy", choices=STRATEGIES,
                   default="weighted_centroid")
    p.add_argument("--alpha-mode", choices=("argmax", "threshold"),
                   default="argmax")
    p.add_argument("--alpha", type=float, default=None,
                   help="score fraction for threshold mode")
    p.add_argument("--granularity",
                   choices=("sentence", "passage", "all_context", "none"),
                   default="sentence")
    p.add_argument("--include-full-image", action="store_true")
    p.add_argument("--bbox-threshold", type=float, default=0.1)
    p.add_argument("--bbox-kernel", type=int, default=3)
    p.add_argument("--l-vis", default=None, metavar="A:B")
    p.add_argument("--l-txt", default=None, metavar="A:B")
    p.add_argument("--l-sink", default=None, metavar="A:B")


def _config_from_args(args):
    return RunConfig(
        q=args.q, beta=args.beta, kappa=args.kappa, strategy=args.strategy,
        alpha_mode=args.alpha_mode, alpha=args.alpha,
        granularity=args.granularity,
        include_full_image=args.include_full_image,
        bbox_threshold=args.bbox_threshold, bbox_kernel=args.bbox_kernel,
        l_vis=_parse_layers(args.l_vis), l_txt=_parse_layers(args.l_txt),
        l_sink=_parse_layers(args.l_sink))


def _emit(obj, out_path):
    if out_path:
        write_canonical(out_path, obj)
    else:
        sys.stdout.write(dumps_canonical(obj))


def _load_json(path, what):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise InputError(f"cannot read {what}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed {what} JSON: {exc}") from exc


def cmd_select(args):
    config = _config_from_args(args)
    if len(args.dumps) > 1 and not args.out_dir:
        raise InputError("multiple dumps need --out-dir")
    if args.out and args.out_dir:
        raise InputError("--out and --out-dir are mutually exclusive")
    index = []
    for path in args.dumps:
        dump = read_dump(path)
        report = select_evidence(dump, config)
        report = {"schema": report.pop("schema"), "dump": path, **report}
        if args.out_dir:
            os.makedirs(args.out_dir, exist_ok=True)
            stem = os.path.splitext(os.path.basename(path))[0]
            out = os.path.join(args.out_dir, stem + ".report.json")
            write_canonical(out, report)
            index.append({"dump": path, "report": out})
        else:
            _emit(report, args.out)
    if args.out_dir:
        write_canonical(os.path.join(args.out_dir, "index.json"),
                        {"reports": index})
    return 0


def cmd_highlight(args):
    config = _config_from_args(args)
    dump = read_dump(args.dump)
    question_text = None
    if args.question_file:
        try:
            with open(args.question_file, "r", encoding="utf-8") as f:
                question_text = f.read().strip("\n")
        except OSError as exc:
            raise InputError(f"cannot read question file: {exc}") from exc
    context = None
    if args.context_json:
        obj = _load_json(args.context_json, "context")
        try:
            context = ContextInfo(
                text=obj["text"],
                sentence_char_spans=tuple(
                    (int(a), int(b)) for a, b in obj["sentence_char_spans"]),
                passage_char_spans=(tuple(
                    (int(a), int(b)) for a, b in obj["passage_char_spans"])
                    if obj.get("passage_char_spans") else None))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed context JSON: {exc}") from exc
    report, prompt = highlight(dump, config, question_text=question_text,
                               context=context)
    _emit(prompt.to_json(), args.out)
    if args.report_out:
        report = {"schema": report.pop("schema"), "dump": args.dump, **report}
        write_canonical(args.report_out, report)
    return 0


def cmd_bbox(args):
    config = _config_from_args(args)
    dump = read_dump(args.dump)
    report = select_evidence(dump, config)
    a_vis = np.asarray(report["a_vis"])
    s_sink = np.asarray(report["s_sink"])
    grid_hw = (dump.dims.grid_h, dump.dims.grid_w)
    if report["sink_dims"]:
        vis = filter_sinks(a_vis, s_sink, grid_hw, config.q)
    else:
        vis = filter_sinks(a_vis, np.zeros_like(s_sink), grid_hw, q=100.0)
    out = {"schema": "evsel.bbox/1", "dump": args.dump,
           "grid": {"h": grid_hw[0], "w": grid_hw[1]},
           "image": {"width_px": dump.image.width_px,
                     "height_px": dump.image.height_px},
           "strategies": {}}
    for strategy in STRATEGIES:
        box = bbox(vis.grid, dump.image, strategy=strategy, beta=config.beta,
                   threshold=config.bbox_threshold, kernel=config.bbox_kernel)
        out["strategies"][strategy] = {
            "grid": [float(v) for v in box.grid_box],
            "px": [float(v) for v in box.pixel_box]}
    _emit(out, args.out)
    return 0


def _boxes_from_json(obj, what):
    rows = obj["boxes"] if isinstance(obj, dict) and "boxes" in obj else obj
    if not isinstance(rows, list):
        raise InputError(f"{what} must be a list of box records")
    out = []
    for i, rec in enumerate(rows):
        try:
            out.append({"id": str(rec["id"]),
                        "strategy": str(rec.get("strategy", "default")),
                        "box": tuple(float(v) for v in rec["box"])})
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed {what} record {i}: {exc}") from exc
        if len(out[-1]["box"]) != 4:
            raise InputError(f"{what} record {i}: box needs 4 numbers")
    return out


def cmd_eval_bbox(args):
    from .dumpio import ImageMeta
    preds = _boxes_from_json(_load_json(args.pred, "predictions"),
                             "predictions")
    gts = _boxes_from_json(_load_json(args.gt, "ground truth"),
                           "ground truth")
    gt_by_id = {g["id"]: g["box"] for g in gts}
    image = ImageMeta(width_px=args.width, height_px=args.height)
    items = []
    pairs = []
    for p in preds:
        if p["id"] not in gt_by_id:
            raise InputError(f"prediction {p['id']!r} has no ground truth")
        comp = compare(p["box"], gt_by_id[p["id"]], image)
        pairs.append((p["strategy"], comp))
        items.append({"id": p["id"], "strategy": p["strategy"],
                      **comp.to_json()})
    out = {"schema": "evsel.boxeval/1",
           "items": items, "summary": summarize(pairs)}
    _emit(out, args.out)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["id", "strategy", "iou", "coverage", "precision",
                        "center_distance"])
            for it in items:
                w.writerow([it["id"], it["strategy"], it["iou"],
                            it["coverage"], it["precision"],
                            it["center_distance"]])
    return 0


def cmd_retrieve(args):
    kb = load_kb(args.kb)
    query = _load_json(args.query, "query")
    if not isinstance(query, list):
        raise InputError("query must be a JSON array of numbers")
    result = retrieve(kb, query, n=args.n)
    out = {"schema": "evsel.retrieval/1", "n": result.n,
           "results": [{"index": i, "id": eid, "score": score,
                        "title": kb.entities[i].title}
                       for i, (eid, score) in zip(result.indices,
                                                  result.ranked)],
           "context_text": result.context_text}
    _emit(out, args.out)
    return 0


def cmd_synth(args):
    spec = spec_from_json(_load_json(args.spec, "synth spec"))
    dump, truth = generate(spec)
    from .dumpio import write_dump
    write_dump(dump, args.out)
    if args.truth:
        write_canonical(args.truth, truth)
    return 0


def cmd_stats(args):
    if args.dump:
        dump = read_dump(args.dump)
        before = dump.dims.n_visual
        if args.crop:
            try:
                box = tuple(float(v) for v in args.crop.split(","))
            except ValueError:
                raise InputError("--crop expects x1,y1,x2,y2")
            if len(box) != 4:
                raise InputError("--crop expects x1,y1,x2,y2")
        elif args.report:
            box = _load_json(args.report, "report").get("bbox_px")
            if not box:
                raise InputError("report JSON has no bbox_px")
        else:
            raise InputError("--dump needs --crop or --report")
        spec = crop_spec(box, dump.image, n_visual=before)
        after = spec.est_tokens
    else:
        if args.tokens_before is None or args.tokens_after is None:
            raise InputError(
                "need either --dump or both --tokens-before/--tokens-after")
        before, after = args.tokens_before, args.tokens_after
    if before <= 0:
        raise InvariantError("token count before must be positive")
    if after < 0 or after > before:
        raise InvariantError("token count after must lie in [0, before]")
    if args.answer_tokens <= 0:
        raise InvariantError("answer token count must be positive")
    out = {
        "schema": "evsel.stats/1",
        "visual_tokens_before": before,
        "visual_tokens_after": after,
        "reduction_pct": 100.0 * (before - after) / before,
        "answer_tokens": args.answer_tokens,
        "extra_tokens": args.extra_tokens,
        "overhead_pct": 100.0 * args.extra_tokens / args.answer_tokens,
    }
    _emit(out, args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="evsel",
        description="Training-free evidence selection over attention dumps")
    p.add_argument("--version", action="version",
                   version=f"evsel {__version__} (kernels: {BACKEND})")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("select", help="evidence report for dump(s)")
    ps.add_argument("dumps", nargs="+")
    ps.add_argument("--out", default=None)
    ps.add_argument("--out-dir", default=None)
    _add_config_flags(ps)
    ps.set_defaults(fn=cmd_select)

    ph = sub.add_parser("highlight", help="marker-highlighted prompt")
    ph.add_argument("--dump", required=True)
    ph.add_argument("--question-file", default=None)
    ph.add_argument("--context-json", default=None)
    ph.add_argument("--out", default=None)
    ph.add_argument("--report-out", default=None)
    _add_config_flags(ph)
    ph.set_defaults(fn=cmd_highlight)

    pb = sub.add_parser("bbox", help="all bbox strategies for one dump")
    pb.add_argument("--dump", required=True)
    pb.add_argument("--out", default=None)
    _add_config_flags(pb)
    pb.set_defaults(fn=cmd_bbox)

    pe = sub.add_parser("eval-bbox", help="compare predicted vs true boxes")
    pe.add_argument("--pred", required=True)
    pe.add_argument("--gt", required=True)
    pe.add_argument("--width", type=int, required=True)
    pe.add_argument("--height", type=int, required=True)
    pe.add_argument("--csv", default=None)
    pe.add_argument("--out", default=None)
    pe.set_defaults(fn=cmd_eval_bbox)

    pr = sub.add_parser("retrieve", help="top-n entities from a KB")
    pr.add_argument("--kb", required=True, help="KB manifest JSON path")
    pr.add_argument("--query", required=True,
                    help="JSON array file ('-' for stdin)")
    pr.add_argument("--n", type=int, default=3)
    pr.add_argument("--out", default=None)
    pr.set_defaults(fn=cmd_retrieve)

    pg = sub.add_parser("synth", help="generate a planted synthetic dump")
    pg.add_argument("--spec", required=True)
    pg.add_argument("--out", required=True)
    pg.add_argument("--truth", default=None)
    pg.set_defaults(fn=cmd_synth)

    pt = sub.add_parser("stats", help="token reduction / overhead arithmetic")
    pt.add_argument("--tokens-before", type=int, default=None)
    pt.add_argument("--tokens-after", type=float, default=None)
    pt.add_argument("--dump", default=None)
    pt.add_argument("--crop", default=None, help="x1,y1,x2,y2 in pixels")
    pt.add_argument("--report", default=None,
                    help="report JSON to take bbox_px from")
    pt.add_argument("--answer-tokens", type=float, default=18.0)
    pt.add_argument("--extra-tokens", type=float, default=1.0)
    pt.add_argument("--out", default=None)
    pt.set_defaults(fn=cmd_stats)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except EvselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
