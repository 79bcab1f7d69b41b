"""Command-line interface.

Exit codes: 0 success, 1 usage/configuration error, 2 data or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import __version__
from .acontrario import TAIL_MODES, AcontrarioConfig
from .core import CHANNELS, geometry_for
from .evaluation import pairs_from_files, roc_auc
from .exceptions import ConfigError, TamperError
from .features import CLASSIFIERS, HeatmapTransformer
from .io import atomic_write_text, read_image, write_heatmap, write_image, write_mask
from .pipeline import run_analysis
from .proposals import ProposalConfig, collect_proposals, load_external_proposals
from .synth import synth_heatmap, synth_tamper, synth_texture

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_tuple(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _grid_spec(text):
    sizes, _, step = text.partition(":")
    try:
        return _int_tuple(sizes), int(step or 4)
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"expected SIZES[:STEP] like 8,12,16:4, got {text!r}") from None


def _add_acontrario_args(p):
    g = p.add_argument_group("a-contrario")
    g.add_argument("--threshold", type=float, default=0.75, help="heatmap threshold c (default 0.75)")
    g.add_argument("--tail-mode", choices=TAIL_MODES, default="auto")
    g.add_argument("--auto-cutoff-n", type=int, default=10_000)
    g.add_argument("--score-decades", type=float, default=10.0)


def _add_proposal_args(p):
    g = p.add_argument_group("proposals")
    g.add_argument("--n-levels", type=int, default=32)
    g.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    g.add_argument("--min-cells", type=int, default=4)
    g.add_argument("--max-area-frac", type=float, default=0.9)
    g.add_argument("--polarity", choices=("upper", "lower", "both"), default="both")


def build_parser():
    parser = _Parser(prog="acontrario-tamper", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="seed for synthetic generators")
    parser.add_argument("--config", type=Path, help="YAML/JSON file of option defaults")
    # globals are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="score and localize tampering in one image", parents=[common])
    p.add_argument("image", nargs="?", type=Path, help="image file (optional with --classifier external)")
    p.add_argument("--heatmap", action="append", type=Path, default=[], help="ACHM heatmap file (repeatable)")
    p.add_argument("--classifier", choices=["auto", "external", *sorted(CLASSIFIERS)], default="auto")
    p.add_argument("--proposals", type=Path, help="external label-map proposals (16-bit PNG or PGM)")
    p.add_argument("--grid-proposals", type=_grid_spec, metavar="SIZES[:STEP]",
                   help="add square window proposals on the heatmap grid, e.g. 8,12,16:4")
    p.add_argument("--no-level-sets", action="store_true", help="skip image level-set proposals")
    p.add_argument("--id", dest="image_id", help="report id (default: input file stem)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (results do not depend on it)")
    _add_acontrario_args(p)
    _add_proposal_args(p)

    p = sub.add_parser("heatmap", help="write per-channel ACHM heatmaps for an image", parents=[common])
    p.add_argument("image", type=Path)
    p.add_argument("--channel", action="append", choices=CHANNELS, help="channel (repeatable; default all)")
    p.add_argument("--classifier", choices=["auto", *sorted(CLASSIFIERS)], default="auto")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("proposals", help="list region proposals for an image as JSON", parents=[common])
    p.add_argument("image", type=Path)
    p.add_argument("--external", type=Path, help="external label map")
    p.add_argument("--out", type=Path, help="output JSON file (default stdout)")
    _add_proposal_args(p)

    p = sub.add_parser("synth", help="synthetic data generators")
    ssub = p.add_subparsers(dest="synth_command", required=True, parser_class=_Parser)
    q = ssub.add_parser("heatmap", help="i.i.d. Bernoulli heatmap with an optional planted block", parents=[common])
    q.add_argument("--width", type=int, default=64)
    q.add_argument("--height", type=int, default=64)
    q.add_argument("--p-bg", type=float, default=0.05)
    q.add_argument("--plant", type=_int_tuple, metavar="U,V,W,H")
    q.add_argument("--p-fg", type=float, default=1.0)
    q.add_argument("--channel", choices=CHANNELS, default="rescale_up")
    q.add_argument("--out", type=Path, required=True)
    q = ssub.add_parser("tamper", help="resample a rectangle of an image", parents=[common])
    q.add_argument("image", nargs="?", type=Path, help="input image (default: synthetic texture)")
    q.add_argument("--texture-size", type=int, default=512)
    q.add_argument("--op", default="upsample:1.5", help="upsample:S, rotate:DEG or shear:K")
    q.add_argument("--rect", type=_int_tuple, required=True, metavar="X,Y,W,H")
    q.add_argument("--out", type=Path, required=True)
    q.add_argument("--mask-out", type=Path)
    q.add_argument("--pristine-out", type=Path, help="also save the untouched input")

    p = sub.add_parser("eval", help="evaluation")
    esub = p.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    q = esub.add_parser("roc", help="ROC AUC from a labels CSV (id,label[,score])", parents=[common])
    q.add_argument("--labels", type=Path, required=True)
    q.add_argument("--reports", type=Path, help="directory of <id>.json reports supplying the scores")
    return parser


def _all_parsers(parser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield from _all_parsers(child)


def _apply_config(parser, path):
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping of option names to values")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    known = set()
    for p in _all_parsers(parser):
        dests = {a.dest for a in p._actions}
        p.set_defaults(**{k: v for k, v in data.items() if k in dests})
        known |= dests
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")


def _cmd_analyze(args):
    if args.image is None and not args.heatmap:
        raise UsageError("analyze needs an image and/or --heatmap files")
    if args.image is None and args.classifier != "external":
        raise UsageError("without an image, use --classifier external with --heatmap files")
    report = run_analysis(
        args.image, args.out, args.heatmap, args.proposals, image_id=args.image_id,
        classifier=args.classifier,
        grid=args.grid_proposals,
        use_level_sets=not args.no_level_sets,
        proposal_config=ProposalConfig(args.n_levels, args.connectivity, args.min_cells,
                                       args.max_area_frac, args.polarity),
        acontrario_config=AcontrarioConfig(args.threshold, args.tail_mode, args.auto_cutoff_n,
                                           args.score_decades),
        n_jobs=args.jobs,
    )
    scores = " ".join(f"{ch}={s:.3f}" for ch, s in zip(CHANNELS, report.channel_scores))
    print(f"{report.image_id}: final_score={report.final_score:.4f} candidates={report.candidate_count} {scores}")
    print(f"report: {Path(args.out) / (report.image_id + '.json')}")


def _cmd_heatmap(args):
    image = read_image(args.image)
    tr = HeatmapTransformer(channels=args.channel, classifiers=None if args.classifier == "auto" else args.classifier,
                            n_jobs=args.jobs)
    heatmaps = tr.fit().transform(image)
    args.out.mkdir(parents=True, exist_ok=True)
    for hm in heatmaps:
        path = args.out / f"{args.image.stem}_{hm.channel}.achm"
        write_heatmap(path, hm)
        print(path)


def _cmd_proposals(args):
    image = read_image(args.image)
    geom = geometry_for(image.shape[1], image.shape[0])
    external = load_external_proposals(args.external, image.shape) if args.external else ()
    cfg = ProposalConfig(args.n_levels, args.connectivity, args.min_cells, args.max_area_frac, args.polarity)
    props = collect_proposals(image, geom, cfg, external)
    doc = {
        "image": args.image.name,
        "candidate_count": props.candidate_count,
        "regions": [{"id": r.id, "source": r.source, "pixel_area": r.pixel_area, "cells": r.cells.tolist()}
                    for r in props],
    }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _cmd_synth(args):
    if args.synth_command == "heatmap":
        planted = (args.plant, args.p_fg) if args.plant else None
        hm = synth_heatmap(args.width, args.height, args.p_bg, planted, seed=args.seed, channel=args.channel)
        write_heatmap(args.out, hm)
        print(f"{args.out}: {int((hm.values > 0).sum())} of {hm.values.size} cells set")
        return
    image = read_image(args.image) if args.image else synth_texture(args.texture_size, seed=args.seed)
    tampered, truth = synth_tamper(image, args.op, args.rect)
    if args.pristine_out:
        write_image(args.pristine_out, image)
    write_image(args.out, tampered)
    if args.mask_out:
        write_mask(args.mask_out, truth)
    print(args.out)


def _cmd_eval(args):
    pairs = pairs_from_files(args.labels, args.reports)
    print(f"auc={roc_auc(pairs):.6f} n={len(pairs)}")


COMMANDS = {"analyze": _cmd_analyze, "heatmap": _cmd_heatmap, "proposals": _cmd_proposals,
            "synth": _cmd_synth, "eval": _cmd_eval}


def main(argv=None):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            _apply_config(parser, known.config)
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TamperError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
