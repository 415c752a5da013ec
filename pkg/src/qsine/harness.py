"""Command-line front end: dataset generation, training, SNR-sweep evaluation.

Subcommands
-----------
* ``generate``   write a labeled dataset file pair
* ``train``      train detection / estimator / baseline models (or a bundle)
* ``eval``       SNR sweep of selected algorithms -> metrics CSV
* ``ood``        paired in-distribution / out-of-distribution estimator sweep
* ``thresholds`` print the analytic learning thresholds as CSV

Every command is a deterministic function of its flags and seed: test cells
draw from per-cell substreams, rows are sorted before writing, and floats are
serialized with repr, so reruns are byte-identical. Exit codes: 0 success,
1 usage error, 2 data/model error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classical import aic_mdl_detect, classical_estimate
from .losses import LossVector, detection_loss, normalized_chamfer
from .quantize import make_quantizer
from .signals import GenConfig, make_dataset, save_dataset
from .signalnet import (
    TrainConfig,
    SignalNetModel,
    build_baseline,
    detect_count_batch,
    estimator_forward_batch,
    load_estimator,
    load_signalnet,
    save_estimator,
    save_network,
    signalnet_infer_batch,
    train_baseline,
    train_detection,
    train_estimator,
)
from .thresholds import (
    amplitude_threshold,
    detection_threshold,
    frequency_threshold,
    mean_frequency_estimator,
    phase_threshold,
)

EVAL_HEADER = ["algorithm", "bits", "m", "snr_db", "metric", "value",
               "n_trials", "seed"]
OOD_HEADER = EVAL_HEADER + ["freq_mode"]
ALL_ALGORITHMS = ["nn_detect", "nn_est", "signalnet", "periodogram", "aic",
                  "mdl", "aic_periodogram"]
CLASSICAL_ALGORITHMS = ["periodogram", "aic", "mdl", "aic_periodogram"]

_TAG_EVAL = 3000
_TAG_OOD = 3100
_TAG_TRAIN_LOOP = 4242


# --------------------------------------------------------------------------
# plumbing
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_config_file(path: str) -> dict[str, str]:
    lines = Path(path).read_text().splitlines()
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        out[key.strip().replace("_", "-")] = val.strip()
    return out


def _inject_config(argv: list[str]) -> list[str]:
    """Appends config-file entries as flags (explicit flags win)."""
    path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif arg.startswith("--config="):
            path = arg.split("=", 1)[1]
    if path is None:
        return argv
    present = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    extra: list[str] = []
    for key, val in _parse_config_file(path).items():
        flag = "--" + key
        if flag not in present:
            extra.extend([flag, val])
    return argv + extra


def _cell_seed(*key: int) -> int:
    """Collapses a nonnegative integer key path into one 64-bit seed."""
    ss = np.random.SeedSequence([int(k) for k in key])
    return int(ss.generate_state(1, np.uint64)[0])


def _snr_key(snr: float) -> int:
    return int(round(snr * 1000)) + 10**6


def _snr_grid(args) -> list[float]:
    if args.snr_step <= 0:
        raise ValueError("--snr-step must be positive")
    if args.snr_max < args.snr_min:
        raise ValueError("--snr-max must be >= --snr-min")
    n = int(math.floor((args.snr_max - args.snr_min) / args.snr_step + 1e-9)) + 1
    return [round(args.snr_min + i * args.snr_step, 6) for i in range(n)]


def _bits_list(text: str) -> list[int]:
    try:
        vals = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"--bits expects comma-separated integers, got {text!r}")
    if not vals:
        raise ValueError("--bits list is empty")
    return vals


def _write_csv(path: str, header: list[str], rows: list[tuple]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell_str(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _cell_str(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _freq_mode(name: str) -> str:
    mapping = {"in_dist": "in_distribution", "in_distribution": "in_distribution",
               "ood": "ood_uniform", "ood_uniform": "ood_uniform"}
    if name not in mapping:
        raise ValueError(f"unknown freq mode {name!r}")
    return mapping[name]


def _db(value: float) -> float:
    return 10.0 * math.log10(max(value, 1e-300))


def _train_loop_seed(seed: int) -> int:
    # keep optimizer/shuffle streams disjoint from the data substreams
    return _cell_seed(seed, _TAG_TRAIN_LOOP)


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = GenConfig(
        N=args.frame_len, M=args.m_max, bits=args.bits_int, seed=args.seed,
        m_fixed=args.m, freq_mode=_freq_mode(args.freq_mode),
        snr_db=args.snr,
        snr_range=(args.snr_min, args.snr_max) if args.snr_spread else None,
    )
    examples = make_dataset(cfg, args.count)
    labels_path, samples_path = save_dataset(args.out, cfg, examples)
    counts = np.bincount([ex.label.m for ex in examples], minlength=cfg.M + 1)
    mean_snr = float(np.mean([ex.snr_db for ex in examples]))
    print(f"wrote {labels_path} and {samples_path}")
    for m in range(1, cfg.M + 1):
        print(f"  m={m}: {int(counts[m])} examples")
    print(f"  mean snr_db: {mean_snr:.3f}")
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

def _train_config(args, task: str) -> TrainConfig:
    cfg = TrainConfig(seed=_train_loop_seed(args.seed))
    if args.lr is not None:
        cfg.lr = args.lr
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.val_fraction is not None:
        cfg.val_fraction = args.val_fraction
    if args.patience is not None:
        cfg.patience = args.patience
    if args.epochs is not None:
        if task == "detection":
            cfg.detection_epochs = args.epochs
        else:
            cfg.estimator_epochs = args.epochs
    if args.samples is not None:
        cfg.detection_samples = args.samples
        cfg.estimator_samples = args.samples
    return cfg


def _training_data(args, count: int, m_fixed: int | None):
    gen = GenConfig(N=args.frame_len, M=args.m_max, bits=args.bits_int,
                    seed=args.seed, m_fixed=m_fixed,
                    snr_range=(args.snr_min, args.snr_max))
    return make_dataset(gen, count)


def _write_log(path: str, history: list[dict]):
    rows = [(h["epoch"], float(h["train_loss"]), float(h["val_loss"]),
             float(h["lr"])) for h in history]
    _write_csv(path, ["epoch", "train_loss", "val_loss", "lr"], rows)


def cmd_train(args) -> int:
    task = args.task
    cfg = _train_config(args, task)
    if task == "detection":
        examples = _train_examples(args, cfg.detection_samples, None)
        net, history = train_detection(examples, cfg, M=args.m_max)
        save_network(net, args.out,
                     meta={"task": "detection", "bits": args.bits_int,
                           "N": args.frame_len, "M": args.m_max})
        _write_log(args.out + ".log.csv", history)
    elif task == "estimator":
        if args.m is None:
            raise ValueError("--m is required for --task estimator")
        examples = _train_examples(args, cfg.estimator_samples, args.m)
        est, history = train_estimator(examples, cfg,
                                       residual_mode=args.residual_mode)
        save_estimator(est, args.out, bits=args.bits_int)
        _write_log(args.out + ".log.csv", history)
    elif task == "baseline":
        if args.m is None:
            raise ValueError("--m is required for --task baseline")
        examples = _train_examples(args, cfg.estimator_samples, args.m)
        net, history = train_baseline(examples, cfg, kind=args.baseline_kind)
        save_network(net, args.out,
                     meta={"task": "baseline", "kind": args.baseline_kind,
                           "bits": args.bits_int, "m": args.m,
                           "N": args.frame_len})
        _write_log(args.out + ".log.csv", history)
    elif task == "bundle":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        examples = _train_examples(args, cfg.detection_samples, None)
        det, history = train_detection(examples, cfg, M=args.m_max)
        _write_log(str(out / "train_detection.log.csv"), history)
        estimators = {}
        for m in range(1, args.m_max + 1):
            examples = _train_examples(args, cfg.estimator_samples, m)
            est, history = train_estimator(examples, cfg,
                                           residual_mode=args.residual_mode)
            estimators[m] = est
            _write_log(str(out / f"train_est_m{m}.log.csv"), history)
        model = SignalNetModel(detection=det, estimators=estimators,
                               N=args.frame_len, M=args.m_max,
                               bits=args.bits_int)
        manifest = save_signalnet_bundle(model, out)
        print(f"wrote {manifest}")
        return 0
    else:  # pragma: no cover - argparse choices guard this
        raise ValueError(f"unknown task {task!r}")
    print(f"wrote {args.out} ({len(history)} epochs trained)")
    return 0


def save_signalnet_bundle(model: SignalNetModel, out: Path):
    from .signalnet import save_signalnet

    return save_signalnet(model, out)


def _train_examples(args, count: int, m_fixed: int | None):
    if args.data is not None:
        from .signals import load_dataset

        meta, examples = load_dataset(args.data)
        if m_fixed is not None:
            examples = [ex for ex in examples if ex.label.m == m_fixed]
            if not examples:
                raise ValueError(
                    f"dataset {args.data} has no examples with m={m_fixed}")
        return examples
    return _training_data(args, count, m_fixed)


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------

def _cell_examples(args, bits: int, m_code: int, snr: float, tag: int,
                   freq_mode: str = "in_distribution"):
    mode_code = 0 if freq_mode == "in_distribution" else 1
    seed = _cell_seed(args.seed, tag, bits, m_code, _snr_key(snr), mode_code)
    gen = GenConfig(N=args.frame_len, M=args.m_max, bits=bits, seed=seed,
                    snr_db=snr, m_fixed=m_code if m_code else None,
                    freq_mode=freq_mode)
    return make_dataset(gen, args.n)


def _estimator_metrics(A, F, P, At, Ft, Pt, thr: LossVector):
    rows = {
        "freq_mse_db": _db(float(np.mean((F - Ft) ** 2))),
        "amp_mse_db": _db(float(np.mean((A - At) ** 2))),
        "phase_mse": float(np.mean((P - Pt) ** 2)),
    }
    cham = [
        normalized_chamfer_sets(At[i], Ft[i], Pt[i], A[i], F[i], P[i], thr)
        for i in range(len(A))
    ]
    rows["chamfer_norm"] = float(np.mean(cham))
    return rows


def normalized_chamfer_sets(at, ft, pt, a, f, p, thr: LossVector) -> float:
    from .signals import ParameterSet

    truth = ParameterSet(m=len(ft), amps=at, freqs=ft, phases=pt)
    est = ParameterSet(m=len(f), amps=a, freqs=f, phases=p)
    return normalized_chamfer(truth, est, thr)


def _threshold_rows(args, bits: int, snr: float) -> list[tuple]:
    rows = []
    amp_thr = amplitude_threshold()[1]
    phase_thr = phase_threshold()[1]
    for m in range(1, args.m_max + 1):
        f_thr = frequency_threshold(m, args.frame_len)
        rows.append(("threshold", bits, m, snr, "freq_mse_db", _db(f_thr), 1,
                     args.seed))
        rows.append(("threshold", bits, m, snr, "amp_mse_db", _db(amp_thr), 1,
                     args.seed))
        rows.append(("threshold", bits, m, snr, "phase_mse", phase_thr, 1,
                     args.seed))
    det_loss = detection_threshold(args.m_max)[1]
    rows.append(("threshold", bits, "joint", snr, "detection_loss", det_loss,
                 1, args.seed))
    return rows


def _chamfer_thresholds(m: int, N: int) -> LossVector:
    return LossVector(amp=amplitude_threshold()[1],
                      freq=frequency_threshold(m, N),
                      phase=phase_threshold()[1])


def cmd_eval(args) -> int:
    bits_list = args.bits
    grid = _snr_grid(args)
    bundle = load_signalnet(args.bundle) if args.bundle else None
    algorithms = _select_algorithms(args, bundle)
    rows: list[tuple] = []
    for bits in bits_list:
        qspec = make_quantizer(bits)
        nn_ok = bundle is not None and bundle.bits == bits
        if not nn_ok and any(a.startswith("nn") or a == "signalnet"
                             for a in algorithms):
            print(f"note: skipping model-based algorithms at bits={bits} "
                  f"(bundle is for bits={bundle.bits if bundle else '-'})",
                  file=sys.stderr)
        for snr in grid:
            rows.extend(_threshold_rows(args, bits, snr))
            for m in range(1, args.m_max + 1):
                rows.extend(_eval_estimator_cell(
                    args, bits, m, snr, qspec, bundle if nn_ok else None,
                    algorithms))
            rows.extend(_eval_joint_cell(
                args, bits, snr, qspec, bundle if nn_ok else None, algorithms))
    rows.sort(key=lambda r: (r[0], r[1], str(r[2]), r[3], r[4]))
    _write_csv(args.out, EVAL_HEADER, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _select_algorithms(args, bundle) -> list[str]:
    if args.algorithms == "all":
        names = list(ALL_ALGORITHMS) if bundle else list(CLASSICAL_ALGORITHMS)
    else:
        names = [a.strip() for a in args.algorithms.split(",") if a.strip()]
        unknown = set(names) - set(ALL_ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")
        if bundle is None and any(a.startswith("nn") or a == "signalnet"
                                  for a in names):
            raise ValueError(
                "model-based algorithms need --bundle <dir with signalnet.json>")
    return names


def _truth_arrays(examples):
    X = np.stack([ex.x for ex in examples]).astype(np.float32)
    At = np.stack([ex.label.amps for ex in examples])
    Ft = np.stack([ex.label.freqs for ex in examples])
    Pt = np.stack([ex.label.phases for ex in examples])
    return X, At, Ft, Pt


def _eval_estimator_cell(args, bits, m, snr, qspec, bundle, algorithms):
    rows = []
    wanted = [a for a in ("periodogram", "nn_est") if a in algorithms]
    if not wanted:
        return rows
    examples = _cell_examples(args, bits, m, snr, _TAG_EVAL)
    X, At, Ft, Pt = _truth_arrays(examples)
    thr = _chamfer_thresholds(m, args.frame_len)
    n = len(examples)
    if "periodogram" in wanted:
        est_a = np.empty_like(At)
        est_f = np.empty_like(Ft)
        est_p = np.empty_like(Pt)
        for i, ex in enumerate(examples):
            ps = classical_estimate(ex.x, m, qspec=qspec, nfft=args.nfft,
                                    peak_mode=args.peak_mode)
            est_a[i], est_f[i], est_p[i] = ps.amps, ps.freqs, ps.phases
        for metric, value in _estimator_metrics(est_a, est_f, est_p,
                                                At, Ft, Pt, thr).items():
            rows.append(("periodogram", bits, m, snr, metric, value, n,
                         args.seed))
    if "nn_est" in wanted and bundle is not None:
        if m not in bundle.estimators:
            print(f"note: bundle lacks an m={m} estimator; skipping nn_est",
                  file=sys.stderr)
        else:
            A, F, P = estimator_forward_batch(bundle.estimators[m], X)
            for metric, value in _estimator_metrics(
                    A.astype(np.float64), F.astype(np.float64),
                    P.astype(np.float64), At, Ft, Pt, thr).items():
                rows.append(("nn_est", bits, m, snr, metric, value, n,
                             args.seed))
    return rows


def _eval_joint_cell(args, bits, snr, qspec, bundle, algorithms):
    rows = []
    wanted = [a for a in ("aic", "mdl", "nn_detect", "signalnet",
                          "aic_periodogram") if a in algorithms]
    if not wanted:
        return rows
    examples = _cell_examples(args, bits, 0, snr, _TAG_EVAL)
    X = np.stack([ex.x for ex in examples]).astype(np.float32)
    counts = np.array([ex.label.m for ex in examples])
    n = len(examples)
    classical_counts = {}
    for crit in ("aic", "mdl"):
        if crit in wanted or (crit == "aic" and "aic_periodogram" in wanted):
            pred = np.array([
                aic_mdl_detect(ex.x, criterion=crit, qspec=qspec, L=args.L,
                               Mmax=args.m_max) for ex in examples])
            classical_counts[crit] = pred
            if crit in wanted:
                loss = float(np.mean(detection_loss(counts, pred)))
                rows.append((crit, bits, "joint", snr, "detection_loss", loss,
                             n, args.seed))
    if "nn_detect" in wanted and bundle is not None:
        pred = detect_count_batch(bundle.detection, X)
        loss = float(np.mean(detection_loss(counts, pred)))
        rows.append(("nn_detect", bits, "joint", snr, "detection_loss", loss,
                     n, args.seed))
    if "signalnet" in wanted and bundle is not None:
        pred, sets = signalnet_infer_batch(bundle, X)
        loss = float(np.mean(detection_loss(counts, pred)))
        rows.append(("signalnet", bits, "joint", snr, "detection_loss", loss,
                     n, args.seed))
        cham = [
            normalized_chamfer(ex.label, sets[i],
                               _chamfer_thresholds(ex.label.m, args.frame_len))
            for i, ex in enumerate(examples)
        ]
        rows.append(("signalnet", bits, "joint", snr, "chamfer_norm",
                     float(np.mean(cham)), n, args.seed))
    if "aic_periodogram" in wanted:
        pred = classical_counts["aic"]
        cham = []
        for i, ex in enumerate(examples):
            ps = classical_estimate(ex.x, int(pred[i]), qspec=qspec,
                                    nfft=args.nfft, peak_mode=args.peak_mode)
            cham.append(normalized_chamfer(
                ex.label, ps, _chamfer_thresholds(ex.label.m, args.frame_len)))
        rows.append(("aic_periodogram", bits, "joint", snr, "chamfer_norm",
                     float(np.mean(cham)), n, args.seed))
    return rows


# --------------------------------------------------------------------------
# ood
# --------------------------------------------------------------------------

def cmd_ood(args) -> int:
    est, meta = load_estimator(args.est_ckpt)
    if est.m != args.m:
        raise ValueError(
            f"--m {args.m} does not match checkpoint (m={est.m})")
    bits = args.bits_int
    grid = _snr_grid(args)
    rows = []
    for snr in grid:
        for mode, tag_name in (("in_distribution", "in_dist"),
                               ("ood_uniform", "ood")):
            examples = _cell_examples(args, bits, args.m, snr, _TAG_OOD,
                                      freq_mode=mode)
            X, At, Ft, Pt = _truth_arrays(examples)
            A, F, P = estimator_forward_batch(est, X)
            thr = _chamfer_thresholds(args.m, args.frame_len)
            metrics = _estimator_metrics(A.astype(np.float64),
                                         F.astype(np.float64),
                                         P.astype(np.float64),
                                         At, Ft, Pt, thr)
            for metric, value in metrics.items():
                rows.append(("nn_est", bits, args.m, snr, metric, value,
                             len(examples), args.seed, tag_name))
    rows.sort(key=lambda r: (r[0], r[1], str(r[2]), r[3], r[4], r[8]))
    _write_csv(args.out, OOD_HEADER, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


# --------------------------------------------------------------------------
# thresholds
# --------------------------------------------------------------------------

def cmd_thresholds(args) -> int:
    M, N = args.M, args.N
    mhat, det = detection_threshold(M)
    amp_mean, amp_thr = amplitude_threshold()
    phase_mean, phase_thr = phase_threshold()
    rows: list[tuple] = [("detection", "", det, "", float(mhat))]
    for m in range(1, M + 1):
        thr = frequency_threshold(m, N)
        mean_vec = mean_frequency_estimator(m, N)
        rows.append(("frequency", m, thr, _db(thr),
                     ";".join(repr(float(v)) for v in mean_vec)))
    rows.append(("amplitude", "", amp_thr, _db(amp_thr), amp_mean))
    rows.append(("phase", "", phase_thr, "", phase_mean))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "m", "threshold", "threshold_db",
                     "constant_estimate"])
    for row in rows:
        writer.writerow([_cell_str(v) for v in row])
    text = buf.getvalue()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _add_shared(p: _Parser, *, bits_default: str = "3"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bits", default=bits_default,
                   help="quantizer bits (eval: comma list, default 1,3)")
    p.add_argument("--m-max", type=int, default=5)
    p.add_argument("--frame-len", type=int, default=64)
    p.add_argument("--snr-min", type=float, default=-10.0)
    p.add_argument("--snr-max", type=float, default=10.0)
    p.add_argument("--snr-step", type=float, default=1.0)
    p.add_argument("--config", default=None,
                   help="line-oriented 'key = value' defaults file")


def build_parser() -> _Parser:
    parser = _Parser(prog="qsine",
                     description="quantized multi-sinusoid benchmark toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a labeled dataset")
    _add_shared(g)
    g.add_argument("--out", required=True, help="dataset base path")
    g.add_argument("--count", type=int, default=50_000)
    g.add_argument("--m", type=int, default=None,
                   help="fix the sinusoid count (default: uniform 1..m-max)")
    g.add_argument("--snr", type=float, default=10.0,
                   help="fixed SNR in dB (ignored with --snr-spread true)")
    g.add_argument("--snr-spread", default="false", choices=["true", "false"],
                   help="draw per-example SNR uniform in [snr-min, snr-max]")
    g.add_argument("--freq-mode", default="in_dist",
                   choices=["in_dist", "ood", "in_distribution", "ood_uniform"])
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train models")
    _add_shared(t)
    t.add_argument("--task", required=True,
                   choices=["detection", "estimator", "baseline", "bundle"])
    t.add_argument("--out", required=True,
                   help="checkpoint path (directory for --task bundle)")
    t.add_argument("--data", default=None,
                   help="dataset base path (default: generate from flags)")
    t.add_argument("--m", type=int, default=None)
    t.add_argument("--samples", type=int, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--val-fraction", type=float, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--residual-mode", default="stop_gradient",
                   choices=["stop_gradient", "differentiable"])
    t.add_argument("--baseline-kind", default="conv", choices=["mlp", "conv"])
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="SNR sweep -> metrics CSV")
    _add_shared(e, bits_default="1,3")
    e.add_argument("--out", required=True)
    e.add_argument("--n", type=int, default=8000,
                   help="test frames per (bits, m, snr) cell")
    e.add_argument("--algorithms", default="all",
                   help=f"comma list from {ALL_ALGORITHMS} (default: all "
                        "applicable)")
    e.add_argument("--bundle", default=None,
                   help="model bundle dir (signalnet.json) for nn algorithms")
    e.add_argument("--nfft", type=int, default=2**16)
    e.add_argument("--L", type=int, default=16,
                   help="covariance subvector length for aic/mdl")
    e.add_argument("--peak-mode", default="local_maxima",
                   choices=["local_maxima", "top_m"])
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("ood", help="in-dist vs OOD estimator sweep")
    _add_shared(o)
    o.add_argument("--out", required=True)
    o.add_argument("--n", type=int, default=8000)
    o.add_argument("--m", type=int, default=2)
    o.add_argument("--est-ckpt", required=True,
                   help="estimator chain checkpoint")
    o.set_defaults(func=cmd_ood)

    th = sub.add_parser("thresholds", help="print analytic thresholds CSV")
    th.add_argument("--M", type=int, default=5)
    th.add_argument("--N", type=int, default=64)
    th.add_argument("--out", default=None, help="also write the CSV here")
    th.add_argument("--config", default=None)
    th.set_defaults(func=cmd_thresholds)
    return parser


def _postprocess(args) -> None:
    if hasattr(args, "bits"):
        vals = _bits_list(args.bits)
        if args.command == "eval":
            args.bits = vals
        else:
            if len(vals) != 1:
                raise ValueError(
                    f"{args.command} takes a single --bits value, got {vals}")
            args.bits_int = vals[0]
    if hasattr(args, "snr_spread"):
        args.snr_spread = args.snr_spread == "true"


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _inject_config(argv)
        args = parser.parse_args(argv)
        _postprocess(args)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 1
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"qsine: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
