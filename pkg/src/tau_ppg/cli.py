"""``tau`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .baselines import DETECTORS, run_detector
from .hr import heart_rate_or_none
from .labeling import dt_labels, hard_labels, peak_search, peak_search_hard
from .metrics import bland_altman, f1_at, hr_mae, hrv_time, nn_intervals, pearson
from .model import PRESETS, AdamWState, fit, from_preset, init_weights, predict_labels, variant
from .model.params import WeightsMismatch
from .signal import TARGET_FS, PpgSegment, preprocess, snr
from .synth import TIER_SNR_DB, generate_suite
from .tensor import NonFiniteError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_RADII = (5, 10)
HRV_FEATURES = ("mean_nn", "sdnn", "rmssd", "sdsd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- shared helpers ---------------------------------------------------------------

def threads():
    try:
        return max(1, int(os.environ.get("TAU_THREADS", "1")))
    except ValueError:
        raise UsageError("TAU_THREADS must be an integer") from None


def parallel_map(fn, items):
    """Map in a thread pool of ``TAU_THREADS`` workers; results keep input order."""
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def prepare(seg, raw=False):
    """Resample to 100 Hz, band-pass and z-score, carrying truth peaks along."""
    if raw:
        return seg
    x = preprocess(seg.samples, seg.fs, TARGET_FS)
    peaks = None
    if seg.truth_peaks is not None:
        p = np.rint(seg.truth_peaks * (TARGET_FS / seg.fs)).astype(np.int64)
        peaks = np.unique(np.clip(p, 0, x.size - 1))
    return PpgSegment(x, TARGET_FS, seg.subject_id, peaks, seg.ref_hr, dict(seg.meta))


def load_groups(paths):
    """(dataset name, sorted segments) for every input path."""
    groups = []
    for p in paths:
        name = Path(p).name or str(p)
        groups.append((name, io.read_dataset([p])))
    return groups


def make_detector(args):
    """Returns (name, fn(segment) -> peaks) with segments already prepared."""
    if args.detector == "tau":
        if not args.weights:
            raise UsageError("--detector tau needs --weights")
        cfg, weights = io.read_weights(args.weights)

        def fn(seg):
            y = predict_labels(seg.samples, cfg, weights)
            return peak_search_hard(y) if cfg.hard_labels else peak_search(y, cfg.threshold)

        return "tau", fn
    return args.detector, lambda seg: run_detector(args.detector, seg)


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ids_unique(segs):
    ids = [s.subject_id for s in segs]
    if len(set(ids)) != len(ids):
        raise io.DataFormatError("duplicate subject ids in input")


# -- commands -----------------------------------------------------------------------

def cmd_synth(args):
    out = _outdir(args.output)
    segs = generate_suite(args.tier, args.count, args.seed, args.duration, args.fs, args.jitter)
    for s in segs:
        io.write_segment(out / f"{s.subject_id}.csv", s)
    io.write_manifest(out / "manifest.json", "synth", vars_clean(args), args.seed,
                      {"segments": len(segs)})
    print(f"wrote {len(segs)} segments to {out}")


def cmd_preprocess(args):
    out = _outdir(args.output)
    segs = [s for _, g in load_groups(args.inputs) for s in g]
    _ids_unique(segs)
    for s in parallel_map(prepare, segs):
        io.write_segment(out / f"{s.subject_id}.csv", s)
    io.write_manifest(out / "manifest.json", "preprocess", vars_clean(args))
    print(f"wrote {len(segs)} segments to {out}")


def cmd_label(args):
    out = _outdir(args.output)
    segs = [s for _, g in load_groups(args.inputs) for s in g]
    for s in segs:
        if s.truth_peaks is None:
            raise io.DataFormatError(f"{s.subject_id}: no '# peaks=' header to label from")
        n = len(s)
        y = hard_labels(s.truth_peaks, n, args.hard_radius) if args.hard else dt_labels(s.truth_peaks, n)
        io.write_csv(out / f"{s.subject_id}.labels.csv", ["index", "label"], enumerate(y))
    io.write_manifest(out / "manifest.json", "label", vars_clean(args))
    print(f"wrote labels for {len(segs)} segments to {out}")


def cmd_train(args):
    cfg = from_preset(args.preset)
    if args.variant:
        cfg = variant(cfg, args.variant)
    segs = [prepare(s, args.raw) for _, g in load_groups(args.inputs) for s in g]
    data = []
    for s in segs:
        if s.truth_peaks is None:
            raise io.DataFormatError(f"{s.subject_id}: training needs '# peaks=' headers")
        if len(s) < cfg.min_length:
            raise io.DataFormatError(f"{s.subject_id}: {len(s)} samples is shorter than {cfg.min_length}")
        data.append((s.samples, s.truth_peaks))
    weights = init_weights(cfg, args.seed)
    steps = max(1, -(-len(data) // args.batch_size))
    state = AdamWState(lr=args.lr, restart_period=steps * max(1, args.epochs // 2))

    def log(epoch, loss, st):
        if not args.quiet:
            print(f"epoch {epoch + 1}/{args.epochs} loss {loss:.4f} lr {st.current_lr():.2e}", flush=True)

    history = fit(data, cfg, weights, epochs=args.epochs, batch_size=args.batch_size,
                  seed=args.seed, state=state, log=log)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_weights(out, cfg, weights)
    io.write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "train", cfg.to_dict(),
                      args.seed, {"args": vars_clean(args), "loss_history": history})
    print(f"wrote {out}")


def cmd_detect(args):
    name, fn = make_detector(args)
    segs = [prepare(s, args.raw) for _, g in load_groups(args.inputs) for s in g]
    _ids_unique(segs)
    peaks = parallel_map(fn, segs)
    rows = []
    for s, p in sorted(zip(segs, peaks), key=lambda sp: sp[0].subject_id):
        rows.append([s.subject_id, len(p), heart_rate_or_none(p, s.fs), " ".join(map(str, p))])
    io.write_csv(args.output, ["segment", "n_peaks", "hr_bpm", "peaks"], rows)
    io.write_manifest(Path(str(args.output) + ".manifest.json"), "detect",
                      {"detector": name, "weights": args.weights})
    print(f"wrote {args.output}")


def _eval_segment(fn, radii):
    def run(seg):
        if seg.truth_peaks is None:
            raise io.DataFormatError(f"{seg.subject_id}: evaluation needs '# peaks=' headers")
        pred = fn(seg)
        ref = seg.ref_hr if seg.ref_hr is not None else heart_rate_or_none(seg.truth_peaks, seg.fs)
        row = {"pred": pred, "hr": heart_rate_or_none(pred, seg.fs), "ref": ref}
        for r in radii:
            _, _, f1, m = f1_at(pred, seg.truth_peaks, r)
            row[r] = (f1, m)
        return row
    return run


def cmd_eval(args):
    name, fn = make_detector(args)
    radii = sorted(set(DEFAULT_RADII) | set(args.radius or ()))
    out = _outdir(args.output)
    seg_rows, summary = [], []
    all_pairs, all_hits = [], {r: [0, 0, 0] for r in radii}
    for group, segs in load_groups(args.inputs):
        segs = [prepare(s, args.raw) for s in segs]
        results = parallel_map(_eval_segment(fn, radii), segs)
        pairs, hits = [], {r: [0, 0, 0] for r in radii}
        for s, res in sorted(zip(segs, results), key=lambda sr: sr[0].subject_id):
            # a missing estimate (fewer than two peaks) counts as 0 BPM
            est = res["hr"] if res["hr"] is not None else 0.0
            if res["ref"] is not None:
                pairs.append((est, res["ref"]))
            row = [group, s.subject_id, len(s.truth_peaks), len(res["pred"])]
            for r in radii:
                f1, m = res[r]
                for acc in (hits[r], all_hits[r]):
                    acc[0] += m.tp
                    acc[1] += m.fp
                    acc[2] += m.fn
                row += [m.tp, m.fp, m.fn, f1]
            row += [res["hr"], res["ref"], abs(est - res["ref"]) if res["ref"] is not None else None]
            seg_rows.append(row)
        all_pairs += pairs
        summary.append(_summary_row(group, len(segs), hits, radii, pairs))
    if len(summary) > 1:
        summary.append(_summary_row("all", len(seg_rows), all_hits, radii, all_pairs))
    head = ["dataset", "segment", "n_truth", "n_pred"]
    for r in radii:
        head += [f"tp@{r}", f"fp@{r}", f"fn@{r}", f"F1@{r}"]
    io.write_csv(out / "segments.csv", head + ["hr_est", "hr_ref", "hr_abs_err"], seg_rows)
    io.write_csv(out / "summary.csv", ["dataset", "detector", "segments"]
                 + [f"F1@{r}" for r in radii] + ["HR_MAE"],
                 [[row[0], name] + row[1:] for row in summary])
    if args.plots and len(all_pairs) >= 1:
        a, b = np.array(all_pairs).T
        (out / "bland_altman.svg").write_text(io.bland_altman_svg(a, b))
    io.write_manifest(out / "manifest.json", "eval", {"detector": name, "weights": args.weights,
                                                      "radii": radii, "inputs": args.inputs})
    for row in summary:
        cols = "  ".join(f"F1@{r}={v:.3f}" for r, v in zip(radii, row[2:2 + len(radii)]))
        mae = row[-1]
        print(f"{row[0]}: n={row[1]}  {cols}  HR_MAE={'n/a' if mae is None else f'{mae:.2f}'}")


def _summary_row(group, n, hits, radii, pairs):
    f1s = []
    for r in radii:
        tp, fp, fn = hits[r]
        f1s.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
    return [group, n] + f1s + [hr_mae(pairs) if pairs else None]


def cmd_hrv(args):
    name, fn = make_detector(args)
    segs = [prepare(s, args.raw) for _, g in load_groups(args.inputs) for s in g]
    _ids_unique(segs)
    preds = parallel_map(fn, segs)
    rows, est, ref = [], {f: [] for f in HRV_FEATURES}, {f: [] for f in HRV_FEATURES}
    for s, p in sorted(zip(segs, preds), key=lambda sp: sp[0].subject_id):
        if s.truth_peaks is None or s.truth_peaks.size < 4 or p.size < 4:
            rows.append([s.subject_id] + [None] * (2 * len(HRV_FEATURES)))
            continue
        e = hrv_time(nn_intervals(p, s.fs))
        t = hrv_time(nn_intervals(s.truth_peaks, s.fs))
        for f, ve, vt in zip(HRV_FEATURES, e, t):
            est[f].append(ve)
            ref[f].append(vt)
        rows.append([s.subject_id, *e, *t])
    out = _outdir(args.output)
    io.write_csv(out / "hrv_segments.csv",
                 ["segment"] + [f"{f}_est" for f in HRV_FEATURES] + [f"{f}_ref" for f in HRV_FEATURES], rows)
    summary = []
    for f in HRV_FEATURES:
        a, b = np.array(est[f]), np.array(ref[f])
        mae = float(np.mean(np.abs(a - b))) if a.size else None
        try:
            r, pval = pearson(a, b)
        except ValueError:
            r = pval = None
        loa = bland_altman(a, b) if a.size else (None, None, None)
        summary.append([f, a.size, mae, r, pval, *loa])
        if args.plots and a.size:
            (out / f"bland_altman_{f}.svg").write_text(io.bland_altman_svg(a, b))
    io.write_csv(out / "hrv_summary.csv",
                 ["feature", "segments", "MAE_ms", "pearson_r", "p_value", "ba_mean", "ba_low", "ba_high"], summary)
    io.write_manifest(out / "manifest.json", "hrv", {"detector": name, "weights": args.weights})
    for row in summary:
        mae = "n/a" if row[2] is None else f"{row[2]:.2f}"
        r = "n/a" if row[3] is None else f"{row[3]:.3f}"
        print(f"{row[0]}: MAE={mae} ms  r={r}")


def cmd_snr(args):
    segs = [s for _, g in load_groups(args.inputs) for s in g]
    rows = []
    for s in segs:
        hr = s.ref_hr
        if hr is None and s.truth_peaks is not None:
            hr = heart_rate_or_none(s.truth_peaks, s.fs)
        if hr is None:
            raise io.DataFormatError(f"{s.subject_id}: SNR needs '# ref_hr=' or '# peaks=' headers")
        rows.append([s.subject_id, hr, snr(s, hr)])
    if args.output:
        io.write_csv(args.output, ["segment", "ref_hr", "snr_db"], rows)
    for row in rows:
        print(f"{row[0]}: {row[2]:.2f} dB")


def vars_clean(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


# -- parser ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="tau", description="PPG peak detection and heart-rate evaluation")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate synthetic segments")
    s.add_argument("--tier", choices=sorted(TIER_SNR_DB), required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--fs", type=float, default=100.0)
    s.add_argument("--jitter", type=float, default=20.0, help="beat-interval jitter (ms)")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="resample to 100 Hz, band-pass, z-score")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("label", help="write distance-transform (or hard) labels")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--hard", action="store_true")
    s.add_argument("--hard-radius", type=int, default=2)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--preset", choices=sorted(PRESETS), default="lite")
    s.add_argument("--variant", choices=["tau", "tau_b", "tau_b_att", "tau_b_att_dt"])
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--lr", type=float, default=0.002)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--raw", action="store_true", help="inputs are already preprocessed")
    s.add_argument("--quiet", action="store_true")
    s.add_argument("-o", "--output", required=True, help="weights file")
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("detect", cmd_detect, "detect peaks"),
                                 ("eval", cmd_eval, "F1 and HR MAE against truth peaks"),
                                 ("hrv", cmd_hrv, "HRV features against truth peaks")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("inputs", nargs="+")
        s.add_argument("--detector", choices=sorted(DETECTORS) + ["tau"], default="tau")
        s.add_argument("--weights")
        s.add_argument("--raw", action="store_true", help="inputs are already preprocessed")
        if name == "eval":
            s.add_argument("--radius", type=int, action="append", help="match radius in samples (repeatable)")
        if name in ("eval", "hrv"):
            s.add_argument("--plots", action="store_true", help="also write Bland-Altman SVGs")
            s.add_argument("-o", "--output", default="report")
        else:
            s.add_argument("-o", "--output", required=True, help="output CSV")
        s.set_defaults(func=func)

    s = sub.add_parser("snr", help="heart-rate-band SNR per segment")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_snr)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "count", 1) < 0 or getattr(args, "epochs", 1) < 1:
            raise UsageError("counts must be nonnegative and epochs positive")
        args.func(args)
    except UsageError as exc:
        print(f"tau: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"tau: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WeightsMismatch as exc:
        print(f"tau: weights error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (io.DataFormatError, ValueError, OSError) as exc:
        print(f"tau: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
