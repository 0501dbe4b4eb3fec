"""``nnopls`` command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .dataset import RawDataset, atomic_write_text, center, format_matrix, read_labels, read_matrix
from .exceptions import InputError, NnoplsError, NumericalError
from .filterbank import extract, interpretability, load_bank, nz_rate, save_bank
from .preprocess import (
    FrameSeries,
    image_to_spectrum,
    integrate_frames,
    load_frame_series,
    load_image,
    tile_image,
)
from .solvers import METHODS, SolverConfig, design

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

VERBS = ("preprocess-image", "integrate-audio", "design", "extract", "evaluate", "report",
         "bank-info")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors already; keep messages on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INPUT)


def _err(msg):
    sys.stderr.write(f"nnopls: {msg}\n")


def _json(obj):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)

    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


# ---------------------------------------------------------------------------
# preprocessing


def cmd_preprocess_image(args):
    cols, names = [], []
    for p in args.images:
        img = load_image(p)
        tiles = tile_image(img, *args.tiles) if args.tiles else [img]
        for t in tiles:
            cols.append(image_to_spectrum(t, args.rho).values)
            names.append(p if t.tile is None else f"{p}#{t.tile}")
    atomic_write_text(args.out, format_matrix(np.column_stack(cols)))
    if args.manifest:
        atomic_write_text(args.manifest, "".join(n + "\n" for n in names))
    print(f"wrote {len(cols)} spectra of length {args.rho ** 2} to {args.out}")
    return EXIT_OK


def cmd_integrate_audio(args):
    cols = []
    for p in args.series:
        s = load_frame_series(p)
        if args.frame_rate is not None:
            s = FrameSeries(s.coeffs, args.frame_rate, s.meta)
        cols.append(integrate_frames(s, args.window))
    atomic_write_text(args.out, format_matrix(np.column_stack(cols)))
    print(f"wrote {len(cols)} vectors of length {cols[0].size} to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# design / extract


def _load_design_data(args) -> RawDataset:
    if args.dataset == "synthetic":
        from .synthetic import bundled_dataset

        return bundled_dataset()
    if not args.inputs:
        raise InputError("--inputs is required unless --dataset synthetic is given")
    x = read_matrix(args.inputs)
    if bool(args.targets) == bool(args.labels):
        raise InputError("give exactly one of --targets or --labels")
    if args.targets:
        return RawDataset(x, read_matrix(args.targets))
    labels = read_labels(args.labels)
    if labels.size != x.shape[1]:
        raise InputError(f"{labels.size} labels for {x.shape[1]} samples")
    return RawDataset.from_labels(x, labels)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        n_f=args.nf,
        delta=args.delta,
        max_outer_iterations=args.max_iter,
        ridge_tau=args.ridge_tau,
        popls_restarts=args.restarts,
        seed=args.seed,
    )


def cmd_design(args):
    report_path = args.report or f"{args.out}.report.json"
    config = _solver_config(args)
    raw = _load_design_data(args)
    try:
        data = raw if args.method == "nmf_opls" else center(raw)
        res = design(args.method, data, config)
    except NumericalError as exc:
        atomic_write_text(report_path, _json({
            "method": args.method, "status": "failed", "error": type(exc).__name__,
            "message": str(exc), "config": config.to_dict(),
        }))
        raise
    save_bank(res.bank, args.out)
    payload = {"status": "ok", "config": config.to_dict(), **res.report.to_dict()}
    atomic_write_text(report_path, _json(payload))
    r = res.report
    print(f"{args.method}: n_f={res.bank.n_f} loss={r.final_loss:.6g} "
          f"iterations={r.outer_iterations} stop={r.stop_reason}")
    for w in r.warnings:
        _err(f"warning: {w}")
    return EXIT_OK


def cmd_extract(args):
    bank = load_bank(args.bank)
    x = read_matrix(args.inputs)
    mu = None
    if args.centered:
        if bank.mu_x is None:
            raise InputError(f"{args.bank} stores no input mean; drop --centered")
        mu = np.asarray(bank.mu_x, dtype=np.float64)
        if x.shape[0] == mu.size:
            x = x - mu[:, None]
    feats = extract(bank, x, mu)
    atomic_write_text(args.out, format_matrix(feats.x_prime))
    if args.centered and args.offset:
        atomic_write_text(args.offset, format_matrix(feats.offset[:, None]))
    print(f"wrote {feats.x_prime.shape[0]}x{feats.x_prime.shape[1]} features to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluation


def cmd_evaluate(args):
    from .evaluation import grouped_kfold, load_experiment_config, run_experiment, write_reports

    cfg = load_experiment_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    raw = cfg.load_dataset()
    if raw.groups is None:
        raise InputError("evaluation needs a groups file (samples of one origin share a fold)")
    split = grouped_kfold(raw.groups, cfg.folds, seed)
    reports = []
    for method in cfg.methods:
        for n_f in cfg.n_f_grid:
            config = SolverConfig(n_f=n_f, seed=seed, **cfg.solver)
            rep = run_experiment(raw, method, config, split, cfg.lambda_grid, n_ref=cfg.n_ref,
                                 seed=seed, threads=args.threads)
            reports.append(rep)
            print(f"{method:9s} n_f={rep.n_f:<3d} OA={rep.oa_percent:6.2f}%  NZ={rep.nz:.3f}"
                  + (f"  failed folds: {len(rep.fold_failures)}" if rep.fold_failures else ""))
    write_reports(reports, args.out)
    return EXIT_OK


def cmd_report(args):
    try:
        data = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {args.report}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.report}:{exc.lineno}: {exc.msg}") from None
    if isinstance(data, dict):
        data = [data]
    try:
        rows = [(r["method"], r["n_f"], r["oa_percent"], r["mean_fold_oa"], r.get("nz"),
                 r.get("im"), r.get("per_k_oa")) for r in data]
    except (KeyError, TypeError) as exc:
        raise InputError(f"{args.report}: not an evaluation report ({exc})") from None
    print(f"{'method':10s} {'n_f':>4s} {'OA %':>8s} {'fold OA %':>10s} {'NZ':>7s} {'IM':>7s}")
    for m, nf, oa, fo, nz, im, _ in rows:
        nz_s = "-" if nz is None else f"{nz:.3f}"
        im_s = "-" if im is None else f"{im:.2f}"
        print(f"{m:10s} {nf:4d} {oa:8.2f} {fo:10.2f} {nz_s:>7s} {im_s:>7s}")
    if args.curves:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "k", "oa_percent"])
        for m, nf, oa, _, _, _, per_k in rows:
            if per_k is None:
                w.writerow([m, nf, repr(oa)])
            else:
                for k, v in enumerate(per_k, start=1):
                    w.writerow([m, k, "" if v is None else repr(v)])
        atomic_write_text(args.curves, buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# bank inspection


def _heatmaps(bank, rho, out_dir):
    if bank.n != rho * rho:
        raise InputError(f"bank has {bank.n} rows, a {rho}x{rho} heatmap needs {rho * rho}")
    for j in range(bank.n_f):
        atomic_write_text(Path(out_dir) / f"filter_{j:03d}.csv",
                          format_matrix(bank.u[:, j].reshape(rho, rho)))


def _frequency_table(bank):
    pre = bank.preproc or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "coefficient", "bin", "hz"] + [f"filter_{j}" for j in range(bank.n_f)])
    d = pre.get("d")
    rate = pre.get("frame_rate_hz")
    for i in range(bank.n):
        if d:
            coef, k = divmod(i, int(d))
            hz = "" if rate is None else repr(k * float(rate) / (2.0 * (int(d) - 1)))
        else:
            coef, k, hz = 0, i, ""
        w.writerow([i, coef, k, hz] + [repr(float(v)) for v in bank.u[i]])
    return buf.getvalue()


def cmd_bank_info(args):
    bank = load_bank(args.bank)
    nz = nz_rate(bank)
    print(f"method: {bank.method}")
    print(f"n: {bank.n}")
    print(f"n_f: {bank.n_f}")
    print(f"ordered_by_relevance: {str(bank.ordered_by_relevance).lower()}")
    print(f"NZ: {nz:.6f}")
    if args.nref is None:
        print("IM: omitted (pass --nref to compute it)")
    elif nz == 0:
        print("IM: undefined for an all-zero bank")
    else:
        print(f"IM: {interpretability(nz, bank.n_f, args.nref):.6f}")
    thr = 1e-10 * float(np.max(np.abs(bank.u))) if bank.u.size else 0.0
    sizes = [int(np.count_nonzero(np.abs(bank.u[:, j]) > thr)) for j in range(bank.n_f)]
    print("support sizes: " + " ".join(str(s) for s in sizes))
    if args.heatmap_dir:
        rho = args.rho or (bank.preproc or {}).get("rho")
        if rho is None:
            raise InputError("bank carries no rho; pass --rho for the heatmap dump")
        _heatmaps(bank, int(rho), args.heatmap_dir)
        print(f"wrote {bank.n_f} heatmaps to {args.heatmap_dir}")
    if args.freq_table:
        atomic_write_text(args.freq_table, _frequency_table(bank))
        print(f"wrote frequency response table to {args.freq_table}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="nnopls", description="Non-negative OPLS filter-bank design.")
    p.add_argument("--seed", type=int, default=None,
                   help="random seed for every stochastic step (default 0)")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (may also precede the verb)")
    sub = p.add_subparsers(dest="verb", metavar="verb", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("preprocess-image", parents=[common], help="images to decimated energy spectra")
    s.add_argument("images", nargs="+")
    s.add_argument("--rho", type=int, default=12)
    s.add_argument("--tiles", type=int, nargs=2, metavar=("ROWS", "COLS"))
    s.add_argument("--out", required=True)
    s.add_argument("--manifest", help="write the source of each column here")
    s.set_defaults(func=cmd_preprocess_image)

    s = sub.add_parser("integrate-audio", parents=[common], help="frame coefficient series to periodograms")
    s.add_argument("series", nargs="+")
    s.add_argument("--window", type=int, default=256)
    s.add_argument("--frame-rate", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_integrate_audio)

    s = sub.add_parser("design", parents=[common], help="design a filter bank")
    s.add_argument("--inputs")
    s.add_argument("--targets")
    s.add_argument("--labels")
    s.add_argument("--dataset", choices=["synthetic"])
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--nf", type=int, default=2)
    s.add_argument("--delta", type=float)
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--ridge-tau", type=float)
    s.add_argument("--restarts", type=int, default=5)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("extract", parents=[common], help="project data onto a bank")
    s.add_argument("--bank", required=True)
    s.add_argument("--inputs", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--centered", action="store_true",
                   help="subtract the bank's stored input mean first")
    s.add_argument("--offset", help="with --centered, write U^T mu_x here")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("evaluate", parents=[common], help="grouped cross-validation from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", parents=[common], help="print an evaluation report")
    s.add_argument("report")
    s.add_argument("--curves", help="write OA-vs-k rows as CSV")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("bank-info", parents=[common], help="summarize a bank file")
    s.add_argument("bank")
    s.add_argument("--nref", type=int)
    s.add_argument("--rho", type=int)
    s.add_argument("--heatmap-dir")
    s.add_argument("--freq-table")
    s.set_defaults(func=cmd_bank_info)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    if args.verb != "evaluate" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except NumericalError as exc:
        _err(f"numerical failure: {type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL
    except (NnoplsError, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
