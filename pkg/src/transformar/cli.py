"""Command-line entry point: ``transformar <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericError, ShapeError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> tuple[str, tuple[float, ...]]:
    kind, levels = _key_value(text)
    return kind, _float_list(levels)


def _distortion(text: str) -> tuple[str, float]:
    kind, _, level = text.partition(":")
    try:
        return kind, float(level or 0.0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected kind:level, got {text!r}") from None


# subcommands ------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    from .data.distortions import DISTORTION_KINDS
    from .data.manifest import STANDARD_SIGMAS
    from .data.synthetic import DEFAULT_GRIDS, GeneratorConfig, generate_dataset

    grids = dict(DEFAULT_GRIDS)
    if args.grid:
        grids = {}
        for kind, levels in args.grid:
            if kind not in DISTORTION_KINDS or kind == "none":
                raise ConfigError(f"unknown distortion kind {kind!r} in --grid")
            grids[kind] = levels
    cfg = GeneratorConfig(
        num_scenes=args.scenes, image_size=args.size, sigmas=args.sigmas or STANDARD_SIGMAS, grids=grids,
        include_undistorted=not args.no_undistorted, samples_per_scene=args.samples_per_scene,
        write_superimposed=args.write_superimposed, seed=args.seed,
    )
    triplets = generate_dataset(args.out, cfg, args.source_dir)
    print(f"wrote {len(triplets)} triplets to {Path(args.out) / 'manifest.jsonl'}")
    return EXIT_OK


def _train_config(args):
    from .config import load_config

    overrides = dict(args.set or [])
    for key in ("manifest", "output_dir", "fold", "seed", "profile", "variant", "epochs"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val if isinstance(val, str) else str(val)
    return load_config(args.config, overrides)


def cmd_train(args) -> int:
    from .training.trainer import cross_validate, train_run

    cfg = _train_config(args)
    if not cfg.manifest:
        raise ConfigError("no manifest: pass --manifest or set manifest in the config file")
    if args.all_folds:
        reports = cross_validate(cfg)
        for r in reports:
            print(f"fold {r.fold}: {r.row()}")
        return EXIT_OK
    result = train_run(cfg, resume=args.resume)
    last = result.log[-1] if result.log else {}
    if last:
        print(f"epoch {last['epoch']}: loss {last['loss_total']:.6f}  val SRCC {last['val_srcc']:.4f}")
    if result.checkpoint is not None:
        print(f"checkpoint: {result.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data.manifest import load_arrays, read_manifest
    from .evaluation.report import evaluate_fold
    from .training.trainer import TrainConfig, load_checkpoint, resolve_fold

    model, _, meta = load_checkpoint(args.checkpoint)
    stored = meta.get("train_config") or {}
    cfg = TrainConfig.from_dict({**stored, **{k: v for k, v in (
        ("manifest", args.manifest), ("fold", args.fold), ("folds_file", args.folds_file),
    ) if v is not None}})
    if not cfg.manifest:
        raise ConfigError("no manifest: pass --manifest")
    manifest = Path(cfg.manifest)
    triplets = read_manifest(manifest, strict_sigma=cfg.strict_sigma)
    _, test_t = resolve_fold(cfg, triplets)
    if not test_t:
        test_t = triplets
    ecfg = model.config.encoder
    arrays = load_arrays(test_t, manifest.parent, ecfg.image_height, ecfg.image_width)
    report = evaluate_fold(model, arrays, cfg.fold if cfg.fold >= 0 else None, args.out, cfg.batch_size)
    print(report.to_json())
    return EXIT_OK


def _load_triplet(args, ecfg):
    from .data.distortions import superimpose
    from .data.images import read_ppm, resize_bilinear

    fit = lambda img: resize_bilinear(img, ecfg.image_height, ecfg.image_width)  # noqa: E731
    fg, bg = fit(read_ppm(args.fg)), fit(read_ppm(args.bg))
    if args.sup:
        sup = fit(read_ppm(args.sup))
    elif args.sigma is not None:
        sup = superimpose(fg, bg, args.sigma, args.distortion)
    else:
        raise ConfigError("give either --sup or --sigma")
    return fg, bg, sup


def cmd_score(args) -> int:
    from .training.trainer import load_checkpoint

    model, _, _ = load_checkpoint(args.checkpoint)
    fg, bg, sup = _load_triplet(args, model.config.encoder)
    pmos = model.predict(fg[None], bg[None], sup[None])[0]
    print(repr(float(pmos)))
    return EXIT_OK


def cmd_export_attention(args) -> int:
    from .training.attention_export import export_attention
    from .training.trainer import load_checkpoint

    model, _, _ = load_checkpoint(args.checkpoint)
    fg, bg, sup = _load_triplet(args, model.config.encoder)
    maps = export_attention(model, fg, bg, sup, args.out)
    print(f"wrote {sum(len(m) for m in maps.values())} maps to {args.out}")
    return EXIT_OK


def cmd_check_grad(args) -> int:
    from .gradsuite import run_suite

    results = run_suite(seed=args.seed, include_composite=not args.ops_only)
    failed = 0
    for r in results:
        ok = r.passed(args.tol)
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {r.name:<28} max rel err {r.max_error:.3e}  ({r.seconds:.2f}s)")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


# parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="transformar", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic dataset and manifest")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=20)
    g.add_argument("--size", type=int, default=96)
    g.add_argument("--sigmas", type=_float_list, help="comma-separated mixing values")
    g.add_argument("--grid", type=_grid, action="append", help="kind=level,level,... (repeatable)")
    g.add_argument("--no-undistorted", action="store_true")
    g.add_argument("--samples-per-scene", type=int)
    g.add_argument("--source-dir", help="directory with fg/<class>/*.ppm and bg/<class>/*.ppm")
    g.add_argument("--write-superimposed", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one fold (or all folds)")
    t.add_argument("--config", help="key = value file with TrainConfig fields")
    t.add_argument("--manifest")
    t.add_argument("--output-dir", dest="output_dir")
    t.add_argument("--fold", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=("base", "kd", "kd_plus"))
    t.add_argument("--epochs", type=int)
    t.add_argument("--profile", help="encoder size profile: desk, tiny or dino-s16")
    t.add_argument("--set", type=_key_value, action="append", metavar="KEY=VALUE", help="override a config field")
    t.add_argument("--resume", help="checkpoint directory to continue from")
    t.add_argument("--all-folds", action="store_true", help="cross-validate over num_folds folds")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a fold's test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest")
    e.add_argument("--fold", type=int)
    e.add_argument("--folds-file", dest="folds_file")
    e.add_argument("--out", help="directory for fold_<i>.json and fold_<i>_scores.csv")
    e.set_defaults(func=cmd_eval)

    for name, func, help_text in (("score", cmd_score, "pMOS of one triplet"),
                                  ("export-attention", cmd_export_attention, "class-token attention maps")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--fg", required=True)
        s.add_argument("--bg", required=True)
        s.add_argument("--sup", help="superimposed image; otherwise built from --sigma")
        s.add_argument("--sigma", type=float)
        s.add_argument("--distortion", type=_distortion, default=("none", 0.0), help="kind:level")
        if name == "export-attention":
            s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    c = sub.add_parser("check-grad", help="run the finite-difference gradient suite")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float, default=1e-3)
    c.add_argument("--ops-only", action="store_true", help="skip the whole-model checks")
    c.set_defaults(func=cmd_check_grad)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
