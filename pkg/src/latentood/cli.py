"""Command-line front end: fit, score, eval, sweep, gate, info.

Exit codes: 0 success (gate: accept), 1 usage error, 2 data error,
3 gate reject. Every report embeds a config echo so runs can be reproduced
from their outputs alone. LATENTOOD_SEED sets the default --seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError, LatentOodError, ShapeError
from .gatekeeper import (
    DEFAULT_MIN_PREFIX,
    DEFAULT_PERCENTILE,
    GateConfig,
    calibrate_threshold,
    gate_sequence,
)
from .latents import LTNT_MAGIC, LTNT_VERSION, TokenSequence, read_latents
from .mahalanobis import (
    DEFAULT_RIDGE,
    MAHA_MAGIC,
    MAHA_VERSION,
    fit_global,
    load_model,
    save_model,
    score_global_batch,
)
from .metrics import ScoredPair, bundle
from .observer import (
    EDMO_MAGIC,
    EDMO_VERSION,
    TrainConfig,
    load_observer,
    save_observer,
    train_observer,
)
from .sweep import default_grid, run_sweep, write_csv
from .typicality import (
    RSCP_MAGIC,
    RSCP_VERSION,
    TypicalityConfig,
    fit_scorer,
    load_scorer,
    rescoped_score_batch,
    save_scorer,
)
from ._binio import read_exact, read_json_blob, read_magic, read_u32, read_u64, read_f64

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REJECT = 3


def _default_seed() -> int:
    raw = os.environ.get("LATENTOOD_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ArgumentError(f"LATENTOOD_SEED must be an integer, got {raw!r}") from None


def _default_workers() -> int:
    return os.cpu_count() or 1


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _echo(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_detector(path: str):
    """Dispatch on the file magic: MAHA or RSCP."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAHA_MAGIC:
        return "mahalanobis", load_model(path)
    if magic == RSCP_MAGIC:
        return "rescoped", load_scorer(path)
    raise FormatError(f"{path}: not a detector file (magic {magic!r})")


def _detector_dim(kind: str, model) -> int:
    return model.dim if kind == "mahalanobis" else model.field.params.dim


def _score_dataset(kind: str, model, rows: np.ndarray, workers: int) -> np.ndarray:
    if kind == "mahalanobis":
        return score_global_batch(model, rows)
    return rescoped_score_batch(model, rows, workers=workers)


def _check_dim(kind: str, model, ds, label: str) -> None:
    want = _detector_dim(kind, model)
    if ds.dim != want:
        raise ShapeError(f"model dim {want} != {label} dim {ds.dim}")


# -- subcommands -----------------------------------------------------------------


def cmd_fit(args) -> int:
    train = read_latents(args.train)
    if args.kind == "maha":
        model = fit_global(train, ridge=args.ridge, standardize=args.standardize)
        save_model(model, args.out)
        print(
            f"fit maha: N={model.fit_count} dim={model.dim} ridge={model.ridge:g}"
            f" ridge_effective={model.ridge_effective:g} -> {args.out}"
        )
        return EXIT_OK

    cfg = TrainConfig(
        steps=args.steps,
        batch=args.batch,
        lr=args.lr,
        seed=args.seed,
        width=args.width,
        depth=args.depth,
        emb_dim=args.emb_dim,
        checkpoint_path=args.checkpoint,
    )
    observer = train_observer(train, cfg)
    observer_out = args.observer_out or str(Path(args.out).with_suffix(".edmo"))
    save_observer(observer, observer_out)
    tcfg = TypicalityConfig(
        sigma=args.sigma, probes=args.probes, epsilon=args.epsilon, seed=args.seed
    )
    scorer = fit_scorer(observer, train, tcfg, bandwidth=args.bandwidth, workers=args.workers)
    save_scorer(scorer, args.out, observer_out)
    loss = "nan" if math.isnan(observer.final_loss) else f"{observer.final_loss:.6g}"
    print(
        f"fit rescoped: N={train.count} dim={train.dim} steps={cfg.steps} final_loss={loss}"
        f" sigma={tcfg.sigma:g} probes={tcfg.probes} -> {args.out} (observer {observer_out})"
    )
    return EXIT_OK


def cmd_score(args) -> int:
    kind, model = _load_detector(args.model)
    ds = read_latents(args.data)
    _check_dim(kind, model, ds, "data")
    scores = _score_dataset(kind, model, ds.rows64(), args.workers)
    report = {
        "detector": kind,
        "model": args.model,
        "data": args.data,
        "count": ds.count,
        "scores": scores.tolist(),
        "config": _echo(args),
    }
    _emit(report, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    kind, model = _load_detector(args.model)
    id_ds = read_latents(args.id_test)
    ood_ds = read_latents(args.ood_test)
    _check_dim(kind, model, id_ds, "id-test")
    _check_dim(kind, model, ood_ds, "ood-test")
    id_scores = _score_dataset(kind, model, id_ds.rows64(), args.workers)
    ood_scores = _score_dataset(kind, model, ood_ds.rows64(), args.workers)
    metrics = bundle(ScoredPair(id_scores=id_scores, ood_scores=ood_scores))
    report = {
        "pair": f"{args.id_test} vs {args.ood_test}",
        "detector": kind,
        **metrics.to_dict(),
        "config": _echo(args),
    }
    if args.include_scores:
        report["scores"] = {"id": id_scores.tolist(), "ood": ood_scores.tolist()}
    _emit(report, args.out)
    return EXIT_OK


def _parse_pairs(specs: list) -> tuple:
    pairs, names = [], []
    for item in specs:
        left, sep, right = item.partition(":")
        if not sep or not left or not right:
            raise ArgumentError(f"pair {item!r} must look like id_test.ltnt:ood_test.ltnt")
        pairs.append((read_latents(left), read_latents(right)))
        names.append(f"{left} vs {right}")
    return pairs, names


def cmd_sweep(args) -> int:
    observer = load_observer(args.observer)
    train = read_latents(args.train)
    pairs, names = _parse_pairs(args.pairs)
    if args.sigmas:
        grid = np.array([float(tok) for tok in args.sigmas.split(",")])
    else:
        grid = default_grid()
    cfg = TypicalityConfig(probes=args.probes, epsilon=args.epsilon, seed=args.seed)
    result = run_sweep(
        observer,
        train,
        pairs,
        grid=grid,
        cfg=cfg,
        bandwidth=args.bandwidth,
        refit_kde=not args.no_refit_kde,
        pair_names=names,
        workers=args.workers,
        resamples=args.resamples,
        bootstrap_seed=args.bootstrap_seed,
    )
    report = result.to_report()
    report["config"] = _echo(args)
    _emit(report, args.out)
    if args.csv:
        write_csv(result, args.csv)
    return EXIT_OK


def _read_mask(path: str, length: int) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if len(tokens) != length:
        raise ShapeError(f"mask file has {len(tokens)} entries for {length} tokens")
    try:
        return np.array([int(tok) for tok in tokens], dtype=np.int64)
    except ValueError:
        raise FormatError(f"{path}: mask entries must be integers 0 or 1") from None


def cmd_gate(args) -> int:
    kind, model = _load_detector(args.model)
    tokens = read_latents(args.tokens)
    _check_dim(kind, model, tokens, "tokens")
    hidden = tokens.rows64()
    mask = _read_mask(args.mask, tokens.count) if args.mask else np.ones(tokens.count, np.int64)
    seq = TokenSequence(hidden=hidden, mask=mask)

    if args.threshold is not None:
        threshold = args.threshold
    else:
        if not args.calibration:
            raise ArgumentError("gate needs --calibration latents or an explicit --threshold")
        cal = read_latents(args.calibration)
        _check_dim(kind, model, cal, "calibration")
        cal_scores = _score_dataset(kind, model, cal.rows64(), args.workers)
        threshold = calibrate_threshold(cal_scores, args.percentile)

    cfg = GateConfig(threshold=threshold, percentile=args.percentile, min_prefix=args.min_prefix)
    trace = gate_sequence(seq, model, cfg)

    lines = []
    for k in range(trace.length):
        score = trace.scores[k]
        lines.append(
            json.dumps(
                {
                    "token_index": k + 1,
                    "score": None if math.isnan(score) else score,
                    "over_threshold": bool(trace.over_threshold[k]),
                    "advisory": bool(trace.advisory[k]),
                    "latency_ms": trace.latency_s[k] * 1e3,
                },
                sort_keys=True,
            )
        )
    lines.append(
        json.dumps(
            {
                "decision": trace.decision,
                "threshold": trace.threshold,
                "percentile": cfg.percentile,
                "min_prefix": cfg.min_prefix,
            },
            sort_keys=True,
        )
    )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_REJECT if trace.rejected else EXIT_OK


def cmd_info(args) -> int:
    path = args.path
    with open(path, "rb") as fh:
        magic = fh.read(4)
        fh.seek(0)
        if magic == LTNT_MAGIC:
            read_magic(fh, LTNT_MAGIC, LTNT_VERSION, path)
            count, dim = read_u32(fh, 2, path, "header")
            print(f"LTNT count={count} dim={dim}")
        elif magic == MAHA_MAGIC:
            read_magic(fh, MAHA_MAGIC, MAHA_VERSION, path)
            (dim,) = read_u32(fh, 1, path, "dim")
            n = read_u64(fh, path, "fit count")
            ridge, ridge_eff = read_f64(fh, 2, path, "ridges")
            print(f"MAHA dim={dim} N={n} ridge={ridge:g} ridge_effective={ridge_eff:g}")
        elif magic == EDMO_MAGIC:
            read_magic(fh, EDMO_MAGIC, EDMO_VERSION, path)
            dim, width, depth, emb_dim = read_u32(fh, 4, path, "architecture")
            sigma_data, final_loss = read_f64(fh, 2, path, "scalars")
            cfg = read_json_blob(fh, path, "config")
            print(
                f"EDMO dim={dim} width={width} depth={depth} emb_dim={emb_dim}"
                f" sigma_data={sigma_data:g} final_loss={final_loss:g}"
                f" steps={cfg.get('steps')} batch={cfg.get('batch')} seed={cfg.get('seed')}"
            )
        elif magic == RSCP_MAGIC:
            read_magic(fh, RSCP_MAGIC, RSCP_VERSION, path)
            meta = read_json_blob(fh, path, "scorer config")
            read_exact(fh, 32, path, "observer hash")
            count = read_u64(fh, path, "sample count")
            print(
                f"RSCP sigma={meta['sigma']:g} probes={meta['probes']} bandwidth={meta['bandwidth']:g}"
                f" seed={meta['seed']} fit_samples={count} observer={meta['observer']}"
            )
        else:
            raise FormatError(f"{path}: unrecognized magic {magic!r}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentood", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    seed = _default_seed()
    workers = _default_workers()

    p_fit = sub.add_parser("fit", help="fit a detector on ID train latents")
    p_fit.add_argument("kind", choices=("maha", "rescoped"))
    p_fit.add_argument("--train", required=True, help="LTNT file of ID train latents")
    p_fit.add_argument("--out", required=True, help="output model path")
    p_fit.add_argument("--ridge", type=float, default=DEFAULT_RIDGE, help="covariance ridge")
    p_fit.add_argument(
        "--standardize", action="store_true", help="standardize dims before the maha fit"
    )
    p_fit.add_argument("--steps", type=int, default=150_000, help="observer training steps")
    p_fit.add_argument("--batch", type=int, default=256)
    p_fit.add_argument("--lr", type=float, default=3e-4, help="base lr, cosine decay to 0")
    p_fit.add_argument("--width", type=int, default=1024)
    p_fit.add_argument("--depth", type=int, default=6)
    p_fit.add_argument("--emb-dim", type=int, default=256)
    p_fit.add_argument("--sigma", type=float, default=0.099, help="operating noise scale")
    p_fit.add_argument("--probes", type=int, default=8, help="Hutchinson probes per sample")
    p_fit.add_argument("--epsilon", type=float, default=1e-8)
    p_fit.add_argument("--bandwidth", type=float, default=0.2, help="KDE bandwidth")
    p_fit.add_argument("--seed", type=int, default=seed)
    p_fit.add_argument("--workers", type=int, default=workers)
    p_fit.add_argument("--observer-out", help="observer path (default: .edmo beside --out)")
    p_fit.add_argument("--checkpoint", help="periodic training checkpoint path")
    p_fit.set_defaults(func=cmd_fit)

    p_score = sub.add_parser("score", help="score a dataset with a fitted detector")
    p_score.add_argument("--model", required=True)
    p_score.add_argument("--data", required=True)
    p_score.add_argument("--out", help="write the JSON report here instead of stdout")
    p_score.add_argument("--workers", type=int, default=workers)
    p_score.set_defaults(func=cmd_score)

    p_eval = sub.add_parser("eval", help="evaluate a detector on an ID/OOD test pair")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--id-test", required=True)
    p_eval.add_argument("--ood-test", required=True)
    p_eval.add_argument("--include-scores", action="store_true", help="embed raw score arrays")
    p_eval.add_argument("--out")
    p_eval.add_argument("--workers", type=int, default=workers)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="AUROC vs sigma sweep with IQM aggregate")
    p_sweep.add_argument("--observer", required=True, help="EDMO observer file")
    p_sweep.add_argument("--train", required=True, help="ID train latents (KDE refits)")
    p_sweep.add_argument("--pairs", nargs="+", required=True, help="id_test.ltnt:ood_test.ltnt")
    p_sweep.add_argument("--sigmas", help="comma-separated grid (default 11 points, 0.01..10)")
    p_sweep.add_argument("--probes", type=int, default=8)
    p_sweep.add_argument("--epsilon", type=float, default=1e-8)
    p_sweep.add_argument("--bandwidth", type=float, default=0.2)
    p_sweep.add_argument("--no-refit-kde", action="store_true", help="reuse one KDE everywhere")
    p_sweep.add_argument("--resamples", type=int, default=2000, help="bootstrap resamples")
    p_sweep.add_argument("--bootstrap-seed", type=int, default=seed)
    p_sweep.add_argument("--seed", type=int, default=seed)
    p_sweep.add_argument("--workers", type=int, default=workers)
    p_sweep.add_argument("--out")
    p_sweep.add_argument("--csv", help="also write a plot-ready CSV here")
    p_sweep.set_defaults(func=cmd_sweep)

    p_gate = sub.add_parser("gate", help="accept/reject a token sequence (exit 3 = reject)")
    p_gate.add_argument("--model", required=True)
    p_gate.add_argument("--tokens", required=True, help="LTNT of per-token hidden states")
    p_gate.add_argument("--mask", help="text file of 0/1 flags, one per token")
    p_gate.add_argument("--calibration", help="LTNT of pooled ID latents for the threshold")
    p_gate.add_argument("--threshold", type=float, help="explicit threshold (skips calibration)")
    p_gate.add_argument("--percentile", type=float, default=DEFAULT_PERCENTILE)
    p_gate.add_argument("--min-prefix", type=int, default=DEFAULT_MIN_PREFIX)
    p_gate.add_argument("--out", help="write the JSONL trace here instead of stdout")
    p_gate.add_argument("--workers", type=int, default=workers)
    p_gate.set_defaults(func=cmd_gate)

    p_info = sub.add_parser("info", help="print file header metadata")
    p_info.add_argument("path")
    p_info.set_defaults(func=cmd_info)

    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except ArgumentError as exc:
        print(f"latentood: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LatentOodError as exc:
        print(f"latentood: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"latentood: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
