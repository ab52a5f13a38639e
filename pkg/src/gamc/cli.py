"""The ``gamc`` command line: generate, train, evaluate, classify, account.

Subcommands
    gen            synthesize a labeled frame file
    train          dictionaries -> features -> selection -> hierarchy -> model file
    eval           per-SNR accuracy table + confusion matrices for a model
    classify       per-frame predictions for a frames file
    flops          model size / FLOPs report (classifier-only vs pipeline)
    dump-features  feature matrix + block layout table
    select         rank features on a frames file and emit scores

Declarative config: ``--config file`` reads ``key = value`` lines (same
names as the long flags, hyphens or underscores); explicit flags win. Exit
codes: 2 for bad input or config, 3 for an internal invariant breach.
``GAMC_THREADS`` caps feature-extraction parallelism (default 1; results
are identical regardless).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io as gio
from .errors import GamcError, InvalidConfig
from .features import (
    FeatureExtractor,
    feature_blocks,
    feature_extraction_flops,
    feature_layout,
    layout_hash,
)
from .gbt import count_complexity
from .hier import HierarchicalClassifier, evaluate
from .select import DftSelector
from .siggen import MOD_CLASSES, FrameSet, iter_cells, mod_class
from .sparse import PyramidConfig

_CHUNK = 256


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def read_config_file(path) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """If argv names a subcommand and carries --config, install the file's
    values as defaults on that subcommand's parser (flags still win)."""
    sub_action = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    if not argv or argv[0] not in sub_action.choices:
        return
    subparser = sub_action.choices[argv[0]]
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv[1:])
    if not known.config:
        return
    values = read_config_file(known.config)
    actions = {a.dest: a for a in subparser._actions}
    for key, val in values.items():
        if key not in actions:
            raise InvalidConfig(f"unknown config key {key!r} for subcommand {argv[0]}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            parsed = val.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            parsed = action.type(val)
        else:
            parsed = val
        subparser.set_defaults(**{key: parsed})


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _parse_classes(spec: str) -> list:
    if spec.strip().lower() == "all":
        return list(MOD_CLASSES)
    return [mod_class(name.strip()) for name in spec.split(",") if name.strip()]


def _parse_snrs(spec: str) -> list[float]:
    spec = spec.strip()
    if ":" in spec:
        lo, hi, step = (float(p) for p in spec.split(":"))
        out = []
        v = lo
        while v <= hi + 1e-9:
            out.append(round(v, 6))
            v += step
        return out
    return [float(p) for p in spec.split(",") if p.strip()]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GAMC_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------

def extract_matrix(extractor: FeatureExtractor, frames: FrameSet,
                   threads: int | None = None) -> np.ndarray:
    """(n, 1730) float32 feature matrix, chunked, optionally thread-parallel.
    Output is independent of the thread count."""
    threads = threads or _threads()
    n = len(frames)
    width = sum(s for _, s in feature_blocks(extractor.cfg))
    out = np.empty((n, width), dtype=np.float32)
    starts = list(range(0, n, _CHUNK))

    def work(start):
        stop = min(start + _CHUNK, n)
        out[start:stop] = extractor.transform(frames.samples[start:stop]).astype(np.float32)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for start in starts:
            work(start)
    return out


def fit_pipeline(frames: FrameSet, *, top_k: int, n_bins: int, rounds: int,
                 lr: float, depth: int, l2: float, min_child_weight: float,
                 dict_frames: int, dict_iterations: int, seed: int,
                 config: dict, threads: int | None = None) -> gio.ModelBundle:
    """Dictionaries -> features -> selection -> hierarchy, returned as a
    self-describing bundle."""
    extractor = FeatureExtractor(iterations=dict_iterations, seed=seed,
                                 max_dict_frames=dict_frames)
    extractor.fit(frames.samples)
    X = extract_matrix(extractor, frames, threads)
    selector = DftSelector(top_k=top_k, n_bins=n_bins)
    selector.fit(X, frames.labels)
    Xs = selector.transform(X)
    model = HierarchicalClassifier(
        learning_rate=lr, max_depth=depth, n_rounds=rounds, l2_reg=l2,
        min_child_weight=min_child_weight, seed=seed,
    )
    model.fit(Xs, frames.labels.astype(np.int64))
    return gio.ModelBundle(
        pyramid=extractor.cfg,
        dictionaries=extractor.dictionaries_,
        selected_features=selector.selected_,
        model=model,
        layout_hash=extractor.layout_hash(),
        config=config,
        selector_losses=selector.losses_,
    )


def run_benchmark(classes, snr_grid_db, frames_per_cell: int, master_seed: int = 0,
                  *, train_fraction: float = 0.8, top_k: int = 256, n_bins: int = 16,
                  rounds: int = 100, lr: float = 0.3, depth: int = 2, l2: float = 1.0,
                  min_child_weight: float = 1.0, dict_frames: int = 1920,
                  dict_iterations: int = 12, sps: int = 8, fading: bool = False,
                  progress: bool = False) -> dict:
    """Desk-scale SNR benchmark: synthesize the (class x SNR) grid, train the
    full pipeline on a stratified split, and evaluate per SNR.

    Frames are generated cell by cell and reduced to features immediately,
    so memory stays bounded by the feature matrix. Dictionary training draws
    only from the training side of the split (the split indices depend only
    on the grid layout, so they are known before synthesis). Returns the
    evaluation report, the trained model parts, the complexity report, and
    per-stage wall-clock timings.
    """
    import time as _time

    from .gbt import count_complexity as _complexity
    from .siggen import class_id, synthesize_frame

    classes = [mod_class(c) for c in classes]
    snrs = [float(s) for s in snr_grid_db]
    fpc = int(frames_per_cell)
    cells = [(c, s) for c in classes for s in snrs]
    n_total = len(cells) * fpc
    # grid layout: cell-major (class, snr), frames contiguous within a cell
    labels = np.concatenate([np.full(fpc, class_id(c), dtype=np.int16) for c, _ in cells])
    snr_col = np.concatenate([np.full(fpc, s, dtype=np.float32) for _, s in cells])

    timings = {}
    t0 = _time.perf_counter()
    train_idx, test_idx = gio.split_indices(labels, snr_col, train_fraction, master_seed)
    train_mask = np.zeros(n_total, dtype=bool)
    train_mask[train_idx] = True

    # dictionary corpus: spread the budget evenly over the cells' train rows
    per_cell = max(1, int(np.ceil(dict_frames / len(cells))))
    dict_rows = []
    for ci in range(len(cells)):
        cell_rows = np.arange(ci * fpc, (ci + 1) * fpc)
        cell_train = cell_rows[train_mask[cell_rows]][:per_cell]
        dict_rows.extend(cell_train.tolist())
    dict_rows = np.array(dict_rows[:dict_frames])
    dict_samples = np.empty((len(dict_rows), 1024), dtype=np.complex128)
    for i, row in enumerate(dict_rows):
        ci, j = divmod(int(row), fpc)
        c, s = cells[ci]
        dict_samples[i] = synthesize_frame(c, s, master_seed, j, sps=sps,
                                           fading=fading).samples
    extractor = FeatureExtractor(iterations=dict_iterations, seed=master_seed,
                                 max_dict_frames=len(dict_rows))
    extractor.fit(dict_samples)
    timings["dictionaries_s"] = _time.perf_counter() - t0

    t0 = _time.perf_counter()
    width = sum(s for _, s in feature_blocks(extractor.cfg))
    X = np.empty((n_total, width), dtype=np.float32)
    pos = 0
    for cid, snr, block in iter_cells(classes, snrs, fpc, master_seed,
                                      sps=sps, fading=fading):
        X[pos : pos + fpc] = extractor.transform(block).astype(np.float32)
        pos += fpc
        if progress:
            print(f"  extracted {pos}/{n_total} frames", flush=True)
    timings["generate_extract_s"] = _time.perf_counter() - t0

    t0 = _time.perf_counter()
    selector = DftSelector(top_k=top_k, n_bins=n_bins)
    selector.fit(X[train_idx], labels[train_idx])
    timings["select_s"] = _time.perf_counter() - t0

    t0 = _time.perf_counter()
    model = HierarchicalClassifier(learning_rate=lr, max_depth=depth, n_rounds=rounds,
                                   l2_reg=l2, min_child_weight=min_child_weight,
                                   seed=master_seed)
    model.fit(selector.transform(X[train_idx]), labels[train_idx].astype(np.int64))
    timings["train_s"] = _time.perf_counter() - t0

    t0 = _time.perf_counter()
    report = evaluate(model, selector.transform(X[test_idx]),
                      labels[test_idx].astype(np.int64), snr_col[test_idx])
    timings["eval_s"] = _time.perf_counter() - t0

    complexity = _complexity(model, feature_flops=feature_extraction_flops(extractor.cfg))
    return {
        "report": report,
        "model": model,
        "selector": selector,
        "extractor": extractor,
        "complexity": complexity,
        "timings": timings,
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
    }


def features_for_model(bundle: gio.ModelBundle, frames: FrameSet,
                       threads: int | None = None) -> np.ndarray:
    """Extract + sub-select features exactly as the model was trained."""
    current = layout_hash(bundle.pyramid)
    if current != bundle.layout_hash:
        raise InvalidConfig(
            f"feature layout hash mismatch: model carries {bundle.layout_hash}, "
            f"this build computes {current}"
        )
    extractor = FeatureExtractor(config=bundle.pyramid)
    extractor.dictionaries_ = bundle.dictionaries
    X = extract_matrix(extractor, frames, threads)
    return X[:, bundle.selected_features].astype(np.float64)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    classes = _parse_classes(args.classes)
    snrs = _parse_snrs(args.snrs)
    with gio.FrameWriter(args.out) as writer:
        for cid, snr, block in iter_cells(classes, snrs, args.frames_per_cell,
                                          args.seed, sps=args.sps, fading=args.fading):
            writer.append(block, cid, snr)
    n = len(classes) * len(snrs) * args.frames_per_cell
    print(f"wrote {n} frames ({len(classes)} classes x {len(snrs)} SNRs x "
          f"{args.frames_per_cell}) to {args.out}")
    return 0


def _require(path) -> None:
    if not os.path.exists(path):
        raise InvalidConfig(f"input file not found: {path}")


def _run_config(args, keys) -> dict:
    cfg = {k: getattr(args, k) for k in keys}
    cfg["command"] = args.command
    return cfg


def cmd_train(args) -> int:
    _require(args.frames)
    frames = gio.read_frames(args.frames)
    cfg = _run_config(args, ["top_k", "n_bins", "rounds", "lr", "depth", "l2",
                             "min_child_weight", "dict_frames", "dict_iterations",
                             "seed"])
    cfg["frames"] = os.path.basename(args.frames)
    cfg["config_hash"] = ""
    cfg["config_hash"] = config_hash(cfg)
    bundle = fit_pipeline(
        frames,
        top_k=args.top_k, n_bins=args.n_bins, rounds=args.rounds, lr=args.lr,
        depth=args.depth, l2=args.l2, min_child_weight=args.min_child_weight,
        dict_frames=args.dict_frames, dict_iterations=args.dict_iterations,
        seed=args.seed, config=cfg,
    )
    gio.save_model(args.model_out, bundle)
    losses = bundle.model.coarse_.train_losses_
    print(f"trained on {len(frames)} frames; coarse mlogloss "
          f"{losses[0]:.4f} -> {losses[-1]:.4f}; model written to {args.model_out}")
    return 0


def cmd_eval(args) -> int:
    _require(args.model)
    _require(args.frames)
    bundle = gio.load_model(args.model)
    frames = gio.read_frames(args.frames)
    X = features_for_model(bundle, frames)
    report = evaluate(bundle.model, X, frames.labels.astype(np.int64), frames.snr_db)
    header = (f"# model_version={gio.MODEL_VERSION} "
              f"config_hash={bundle.config.get('config_hash', '')} "
              f"layout_hash={bundle.layout_hash}\n")
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "report.txt"), "w") as fh:
        fh.write(header + report.to_text())
    with open(os.path.join(args.out_dir, "report.csv"), "w") as fh:
        fh.write(header + report.to_csv())
    for snr, conf in report.confusion.items():
        path = os.path.join(args.out_dir, f"confusion_snr{snr:+g}.csv")
        np.savetxt(path, conf, fmt="%d", delimiter=",")
    sys.stdout.write(header + report.to_text())
    return 0


def cmd_classify(args) -> int:
    _require(args.model)
    _require(args.frames)
    bundle = gio.load_model(args.model)
    frames = gio.read_frames(args.frames)
    X = features_for_model(bundle, frames)
    pred = bundle.model.predict(X)
    lines = ["index,label_id,label"]
    for i, p in enumerate(pred):
        lines.append(f"{i},{int(p)},{MOD_CLASSES[int(p)].value}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_flops(args) -> int:
    _require(args.model)
    bundle = gio.load_model(args.model)
    rep = count_complexity(bundle.model,
                           feature_flops=feature_extraction_flops(bundle.pyramid))
    print(f"model parameters:            {rep.param_count}")
    print(f"classifier-only FLOPs:       {rep.flops_classifier}")
    print(f"pipeline-total FLOPs:        {rep.flops_pipeline} "
          f"(incl. feature extraction estimate "
          f"{rep.flops_pipeline - rep.flops_classifier})")
    for name, d in rep.detail["ensembles"].items():
        print(f"  {name:8s} params={d['params']:<8d} flops={d['flops']}")
    return 0


def cmd_dump_features(args) -> int:
    cfg = PyramidConfig()
    if args.layout_only:
        _print_layout(cfg)
        return 0
    if not args.frames:
        raise InvalidConfig("dump-features needs --frames (or --layout-only)")
    _require(args.frames)
    frames = gio.read_frames(args.frames)
    extractor = FeatureExtractor(iterations=args.dict_iterations, seed=args.seed,
                                 max_dict_frames=args.dict_frames)
    extractor.fit(frames.samples)
    X = extract_matrix(extractor, frames)
    np.savez(args.out, features=X, labels=frames.labels, snr_db=frames.snr_db,
             layout=json.dumps(feature_blocks(extractor.cfg)))
    print(f"wrote {X.shape[0]} x {X.shape[1]} feature matrix to {args.out}")
    if args.dump_layout:
        _print_layout(extractor.cfg)
    return 0


def _print_layout(cfg: PyramidConfig) -> None:
    print(f"{'block':22s} {'start':>6s} {'stop':>6s} {'size':>5s}")
    for name, (start, stop) in feature_layout(cfg).items():
        print(f"{name:22s} {start:6d} {stop:6d} {stop - start:5d}")
    print(f"{'total':22s} {'':6s} {'':6s} {sum(s for _, s in feature_blocks(cfg)):5d}")
    print(f"layout_hash: {layout_hash(cfg)}")


def cmd_select(args) -> int:
    _require(args.frames)
    frames = gio.read_frames(args.frames)
    extractor = FeatureExtractor(iterations=args.dict_iterations, seed=args.seed,
                                 max_dict_frames=args.dict_frames)
    extractor.fit(frames.samples)
    X = extract_matrix(extractor, frames).astype(np.float64)
    selector = DftSelector(top_k=args.top_k, n_bins=args.n_bins)
    selector.fit(X, frames.labels)
    layout = feature_layout(extractor.cfg)

    def block_of(j):
        for name, (start, stop) in layout.items():
            if start <= j < stop:
                return name
        return "?"

    lines = ["rank,feature_index,block,loss_bits"]
    for rank, j in enumerate(selector.selected_):
        lines.append(f"{rank},{j},{block_of(int(j))},{selector.losses_[j]:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gamc", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file; flags override")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen", help="synthesize a labeled frame file")
    common(p)
    p.add_argument("--classes", default="all",
                   help="comma-separated class names, or 'all'")
    p.add_argument("--snrs", default="-10:20:2",
                   help="lo:hi:step sweep or comma list, in dB")
    p.add_argument("--frames-per-cell", type=int, default=100)
    p.add_argument("--sps", type=int, default=8)
    p.add_argument("--fading", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    def train_like(p):
        common(p)
        p.add_argument("--top-k", type=int, default=1000)
        p.add_argument("--n-bins", type=int, default=16)
        p.add_argument("--dict-frames", type=int, default=2000)
        p.add_argument("--dict-iterations", type=int, default=12)

    p = sub.add_parser("train", help="train the full pipeline into a model file")
    train_like(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.3)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--min-child-weight", type=float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-SNR accuracy table for a model + test set")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="per-frame predictions")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("flops", help="model size and FLOPs accounting")
    common(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("dump-features", help="feature matrix + layout table")
    train_like(p)
    p.add_argument("--frames")
    p.add_argument("--out", default="features.npz")
    p.add_argument("--dump-layout", action="store_true",
                   help="also print the block -> index-range table")
    p.add_argument("--layout-only", action="store_true",
                   help="print the layout table and exit")
    p.set_defaults(func=cmd_dump_features)

    p = sub.add_parser("select", help="rank features by discriminability")
    train_like(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except GamcError as exc:
        print(f"gamc: error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"gamc: internal invariant breach: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:  # argparse reports usage errors via exit 2
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
