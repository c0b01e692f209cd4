"""Command line: ``hift {gradcheck,train,track,eval,ablate,synth}``.

Exit codes are 0 on success, 1 for config or contract errors and 2 for
numerical failures (NaN loss, gradient check breach).
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import evalbench, gradcheck, seqio
from .config import RunConfig
from .errors import HiFTError, NumericalError
from .tracker import track_sequence
from .training import eval_sequences, load_model, train

log = logging.getLogger("hift")

EXIT_OK, EXIT_CONTRACT, EXIT_NUMERIC = 0, 1, 2

# variant name -> (transformer overrides, label overrides)
ABLATIONS = {
    "Baseline": ({"variant": "baseline"}, {}),
    "Baseline+OT": ({"variant": "ot"}, {}),
    "Baseline+FT": ({"variant": "ft"}, {}),
    "Baseline+HFT+PE": ({"variant": "hft", "decoder_pe": True}, {}),
    "Baseline+HFT+RL": ({"variant": "hft"}, {"mode": "rectangle"}),
    "Baseline+HFT": ({"variant": "hft"}, {}),
}

# published ablation numbers (precision, success); reference only, not reproducible here
REFERENCE = {
    "Baseline": (0.611, 0.463),
    "Baseline+OT": (0.597, 0.446),
    "Baseline+FT": (0.675, 0.496),
    "Baseline+HFT+PE": (0.689, 0.523),
    "Baseline+HFT+RL": (0.629, 0.486),
    "Baseline+HFT": (0.763, 0.566),
}


def load_config(args, fallback_dir=None) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    elif fallback_dir and os.path.exists(os.path.join(fallback_dir, "config.echo")):
        cfg = RunConfig.load(os.path.join(fallback_dir, "config.echo"))
    else:
        cfg = RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(train={"seed": args.seed})
    return cfg


def _write(path, text):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def _pool_map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---- gradcheck ----------------------------------------------------------

def cmd_gradcheck(args):
    cfg = load_config(args)
    reports = gradcheck.run(cfg)
    lines = [r.line() for r in reports]
    bad = [r for r in reports if not r.ok]
    lines.append(f"{len(reports) - len(bad)}/{len(reports)} parameter groups within "
                 f"{cfg.gradcheck.tolerance:g}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "gradcheck.txt"), text)
    if bad:
        for r in bad:
            log.error("gradient mismatch in %s (%.3e)", r.name, r.max_rel_err)
        return EXIT_NUMERIC
    return EXIT_OK


# ---- train --------------------------------------------------------------

def cmd_train(args):
    cfg = load_config(args)
    out = args.out or "run"
    result = train(cfg, out)
    first, last = result.losses[0][1], result.losses[-1][1]
    print(f"trained {len(result.losses)} steps: loss {first:.4f} -> {last:.4f}; wrote {out}")
    return EXIT_OK


# ---- track --------------------------------------------------------------

def _track_one(job):
    cfg, checkpoint, seq_dir = job
    model = load_model(cfg, checkpoint)
    seq = seqio.read_sequence(seq_dir)
    boxes, scores = track_sequence(seq.frames, seq.boxes[0], model, cfg.tracker_config(),
                                   keep_scores=True)
    return seq.name, boxes, np.array(scores)


def cmd_track(args):
    ckpt_dir = os.path.dirname(os.path.abspath(args.checkpoint))
    cfg = load_config(args, fallback_dir=ckpt_dir)
    out = args.out or ckpt_dir
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "config.echo"), cfg.to_ini())
    results = _pool_map(_track_one, [(cfg, args.checkpoint, d) for d in args.sequences], args.jobs)
    single = len(results) == 1
    for name, boxes, scores in results:
        dest = out if single else os.path.join(out, name)
        os.makedirs(dest, exist_ok=True)
        seqio.write_boxes(os.path.join(dest, "results.txt"), boxes)
        if args.dump_scores:
            np.save(os.path.join(dest, "scores.npy"), scores)
        print(f"{name}: {len(boxes)} frames -> {os.path.join(dest, 'results.txt')}")
    return EXIT_OK


# ---- eval ---------------------------------------------------------------

def _pairs(results, groundtruth):
    """(results.txt, groundtruth.txt) pairs from two files or two directories."""
    if os.path.isfile(results):
        gt = groundtruth
        if os.path.isdir(gt):
            gt = os.path.join(gt, "groundtruth.txt")
        return [(results, gt)]
    pairs = []
    for name in sorted(os.listdir(groundtruth)):
        gt = os.path.join(groundtruth, name, "groundtruth.txt")
        res = os.path.join(results, name, "results.txt")
        if os.path.exists(gt) and os.path.exists(res):
            pairs.append((res, gt))
    if not pairs:
        raise HiFTError(f"no matching results/groundtruth pairs under {results} and {groundtruth}")
    return pairs


def evaluate_files(pairs):
    prec, succ = [], []
    for res, gt in pairs:
        ev = evalbench.evaluate(seqio.read_boxes(res), seqio.read_boxes(gt))
        prec.append(ev["precision"])
        succ.append(ev["success"])
    return evalbench.mean_curve(prec), evalbench.mean_curve(succ)


def cmd_eval(args):
    pairs = _pairs(args.results, args.groundtruth)
    prec, succ = evaluate_files(pairs)
    out = args.out or (os.path.dirname(os.path.abspath(args.results))
                       if os.path.isfile(args.results) else args.results)
    os.makedirs(out, exist_ok=True)
    summary = evalbench.summary_csv(prec, succ)
    _write(os.path.join(out, "metrics.csv"), summary)
    _write(os.path.join(out, "precision.csv"), evalbench.curve_csv(prec))
    _write(os.path.join(out, "success.csv"), evalbench.curve_csv(succ))
    sys.stdout.write(summary)
    return EXIT_OK


# ---- ablate -------------------------------------------------------------

def variant_config(cfg: RunConfig, variant) -> RunConfig:
    transformer, label = ABLATIONS[variant]
    return cfg.replace(transformer=transformer, label=label, train={"steps": cfg.ablate.steps})


def _ablate_one(job):
    cfg, variant, out = job
    vdir = os.path.join(out, variant)
    try:
        vcfg = variant_config(cfg, variant)
        result = train(vcfg, vdir)
        prec, succ = [], []
        for seq in eval_sequences(vcfg):
            boxes = track_sequence(seq.frames, seq.boxes[0], result.model, vcfg.tracker_config())
            ev = evalbench.evaluate(boxes, seq.boxes)
            prec.append(ev["precision"])
            succ.append(ev["success"])
        p, s = evalbench.mean_curve(prec), evalbench.mean_curve(succ)
        _write(os.path.join(vdir, "metrics.csv"), evalbench.summary_csv(p, s))
        return variant, evalbench.precision_at_20(p), evalbench.auc(s), result.losses[-1][1]
    except NumericalError as e:
        log.error("variant %s failed: %s", variant, e)
        return variant, None, None, None


def ablation_table(rows) -> str:
    """CSV with relative change against the Baseline row, plus reference columns."""
    base = {r[0]: r for r in rows}.get("Baseline")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "precision@20", "delta_pre_pct", "success_auc", "delta_suc_pct",
                "final_loss", "reference_precision", "reference_success", "reference_note"])

    def delta(v, b):
        if v is None or b is None or b == 0:
            return "n/a"
        return f"{100 * (v - b) / b:+.2f}"

    for variant, p, s, final in rows:
        ref_p, ref_s = REFERENCE.get(variant, ("", ""))
        note = "published value; not reproducible at desk scale"
        if p is None:
            w.writerow([variant, "FAILED", "n/a", "FAILED", "n/a", "FAILED", ref_p, ref_s, note])
            continue
        bp = base[1] if base else None
        bs = base[2] if base else None
        w.writerow([variant, f"{p:.4f}", delta(p, bp), f"{s:.4f}", delta(s, bs),
                    f"{final:.6f}", ref_p, ref_s, note])
    return buf.getvalue()


def cmd_ablate(args):
    cfg = load_config(args)
    out = args.out or "ablation"
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "config.echo"), cfg.to_ini())
    for v in cfg.ablate.variants:
        if v not in ABLATIONS:
            raise HiFTError(f"unknown ablation variant {v!r}; choose from {list(ABLATIONS)}")
    rows = _pool_map(_ablate_one, [(cfg, v, out) for v in cfg.ablate.variants], args.jobs)
    table = ablation_table(rows)
    _write(os.path.join(out, "ablation.csv"), table)
    sys.stdout.write(table)
    return EXIT_OK


# ---- synth --------------------------------------------------------------

def cmd_synth(args):
    """Write the held-out synthetic sequences to disk in the benchmark layout."""
    cfg = load_config(args)
    out = args.out or "sequences"
    for seq in eval_sequences(cfg):
        seqio.write_sequence(seq, os.path.join(out, seq.name))
        print(os.path.join(out, seq.name))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hift", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=False):
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--seed", type=int, help="overrides train.seed")
        sp.add_argument("--out", help="output directory")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("gradcheck", help="finite-difference gradient check on a tiny model")
    common(sp)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("train", help="train on synthetic sequences")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("track", help="track sequence directories with a checkpoint")
    common(sp, jobs=True)
    sp.add_argument("sequences", nargs="+", help="sequence directories")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dump-scores", action="store_true", help="save fused score maps")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("eval", help="precision/success metrics for tracking results")
    sp.add_argument("results", help="results.txt or a directory of <seq>/results.txt")
    sp.add_argument("groundtruth", help="groundtruth.txt or a directory of <seq>/groundtruth.txt")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train and evaluate the six ablation variants")
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("synth", help="write held-out synthetic sequences to disk")
    common(sp)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HiFTError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONTRACT
