"""Command-line front end.

Subcommands: explain, calibrate, benchmark, evaluate, gen-corpus, serve-check.
Options may come from a JSON config file (--config); any flag given on the
command line overrides its config key (keys use the flag name with
underscores). Exit codes: 0 success, 2 configuration error, 3 classifier
failure, 4 benchmark grid with no surviving cell.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .baseline import RandomSamplerConfig
from .classifier import (ClassifierError, PatchClass, PatchClassifier,
                         RemoteClassifier, ThresholdTable,
                         classifier_from_config, load_classifier_config)
from .core import ContractViolation
from .corpus import CorpusSpec, build_corpus, write_corpus
from .dataio import load_annotations, load_png
from .harness import (ExperimentConfig, MethodVariant, run_benchmark,
                      run_calibrate, run_evaluate, run_explain_command,
                      write_benchmark_outputs)
from .sampler import MindfulConfig
from .segmentation import (FelzenszwalbParams, SegmenterConfig, SlicParams,
                           segment_image)
from .surrogate import SurrogateConfig

ENV_URL = "MINDFUL_CLASSIFIER_URL"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CLASSIFIER = 3
EXIT_BENCHMARK = 4


class _CliError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mindful",
        description="Deterministic graph-guided perturbation explanations for "
                    "black-box image classifiers, with a random baseline and "
                    "an evaluation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_segmenter_flags(p):
        p.add_argument("--segmenter", choices=["slic", "felzenszwalb", "precomputed"])
        p.add_argument("--segmap", help="precomputed segment map path")
        p.add_argument("--n-segments", type=int, dest="n_segments")
        p.add_argument("--compactness", type=float)
        p.add_argument("--slic-sigma", type=float, dest="slic_sigma")
        p.add_argument("--scale", type=float)
        p.add_argument("--min-size", type=int, dest="min_size")
        p.add_argument("--felz-sigma", type=float, dest="felz_sigma")

    def add_classifier_flags(p):
        p.add_argument("--classifier",
                       help="builtin:patch, builtin:linear, remote or remote:URL")
        p.add_argument("--classifier-config", dest="classifier_config",
                       help="JSON config for builtin classifiers")

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")

    p = sub.add_parser("explain", help="explain the top predicted classes of one image")
    add_common(p)
    p.add_argument("--image")
    p.add_argument("--out")
    add_segmenter_flags(p)
    add_classifier_flags(p)
    p.add_argument("--method", choices=["mindful", "random-baseline"])
    p.add_argument("--levels", type=int)
    p.add_argument("--num-samples", type=int, dest="num_samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--thresholds", help="JSON threshold table path")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--k-classes", type=int, dest="k_classes")
    p.add_argument("--kernel-width", type=float, dest="kernel_width")
    p.add_argument("--ridge-lambda", type=float, dest="ridge_lambda")
    p.add_argument("--overlay", action="store_true", default=None)
    p.add_argument("--annotations", help="bounding-box CSV drawn onto overlays")
    p.add_argument("--dump-samples", action="store_true", default=None,
                   dest="dump_samples")

    p = sub.add_parser("calibrate", help="calibrate per-class thresholds on a corpus")
    add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    add_classifier_flags(p)

    p = sub.add_parser("benchmark", help="run the benchmark grid over a corpus")
    add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    add_segmenter_flags(p)
    p.add_argument("--segmenters", help="comma list, e.g. slic,felzenszwalb")
    p.add_argument("--methods",
                   help="comma list, e.g. mindful:2,random-baseline:1000")
    p.add_argument("--top-k", dest="top_k", help="comma list, e.g. 1,4")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--thresholds")
    p.add_argument("--kernel-width", type=float, dest="kernel_width")
    p.add_argument("--ridge-lambda", type=float, dest="ridge_lambda")

    p = sub.add_parser("evaluate", help="score saved explanations against annotations")
    add_common(p)
    p.add_argument("--explanations")
    p.add_argument("--annotations")
    p.add_argument("--out")

    p = sub.add_parser("gen-corpus", help="generate a synthetic benchmark corpus")
    add_common(p)
    p.add_argument("--out")
    p.add_argument("--count", type=int)
    p.add_argument("--size", help="WIDTHxHEIGHT, default 64x64")
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", type=int)

    p = sub.add_parser("serve-check", help="ping a remote classifier's health endpoint")
    add_common(p)
    p.add_argument("--url")
    return parser


class _Options:
    """Flag values with config-file fallback."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._config = {}
        config_path = self._args.get("config")
        if config_path:
            try:
                with open(config_path, encoding="utf-8") as fh:
                    self._config = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise _CliError(f"cannot read config {config_path}: {exc}") from exc
            if not isinstance(self._config, dict):
                raise _CliError(f"config {config_path} must be a JSON object")

    def get(self, key: str, default=None):
        value = self._args.get(key)
        if value is None:
            value = self._config.get(key, default)
        return value

    def require(self, key: str, flag: str):
        value = self.get(key)
        if value is None:
            raise _CliError(f"missing required option {flag}")
        return value


def _segmenter_config(opt: _Options) -> tuple[str, SegmenterConfig]:
    algorithm = opt.get("segmenter", "slic")
    slic = SlicParams(
        n_segments=int(opt.get("n_segments", 50)),
        compactness=float(opt.get("compactness", 80.0)),
        sigma=float(opt.get("slic_sigma", 20.0)),
    )
    felz = FelzenszwalbParams(
        scale=float(opt.get("scale", 600.0)),
        min_size=int(opt.get("min_size", 200)),
        sigma=float(opt.get("felz_sigma", 0.2)),
    )
    return algorithm, SegmenterConfig(algorithm=algorithm, slic=slic, felzenszwalb=felz)


def _default_patch_classifier(width: int, height: int) -> PatchClassifier:
    region = (width // 4, height // 4, max(width // 4 + 1, 3 * width // 4),
              max(height // 4 + 1, 3 * height // 4))
    return PatchClassifier([PatchClass(name="bright-center", region=region,
                                       gain=10.0, bias=-5.0)])


def _load_classifier(opt: _Options, *, width: int | None = None,
                     height: int | None = None):
    spec = opt.get("classifier", "builtin:patch")
    config_path = opt.get("classifier_config")
    if spec.startswith("remote"):
        url = spec.partition(":")[2] if ":" in spec else os.environ.get(ENV_URL)
        if not url:
            raise _CliError(f"remote classifier needs remote:URL or ${ENV_URL}")
        return RemoteClassifier(url)
    if spec == "builtin:patch":
        if config_path:
            return classifier_from_config(load_classifier_config(config_path))
        if width is None or height is None:
            raise _CliError("builtin:patch without --classifier-config needs an image")
        return _default_patch_classifier(width, height)
    if spec == "builtin:linear":
        if not config_path:
            raise _CliError("builtin:linear requires --classifier-config")
        return classifier_from_config(load_classifier_config(config_path))
    raise _CliError(f"unknown classifier spec {spec!r}")


def _cmd_explain(opt: _Options) -> int:
    image_path = Path(opt.require("image", "--image"))
    out_dir = opt.require("out", "--out")
    if not image_path.exists():
        raise _CliError(f"image not found: {image_path}")
    image = load_png(image_path)
    seg_name, seg_cfg = _segmenter_config(opt)
    segmap = segment_image(image, seg_cfg, precomputed_path=opt.get("segmap"))
    h = _load_classifier(opt, width=image.width, height=image.height)
    method = opt.get("method", "mindful")
    thresholds = None
    thresholds_path = opt.get("thresholds")
    if thresholds_path:
        thresholds = ThresholdTable.load(thresholds_path)
    surrogate_cfg = SurrogateConfig(
        kernel_width=float(opt.get("kernel_width", 0.25)),
        ridge_lambda=float(opt.get("ridge_lambda", 1.0)),
    )
    mindful_cfg = MindfulConfig(
        threshold=float(opt.get("threshold", 0.5)),
        max_level=int(opt.get("levels", 2)),
    )
    random_cfg = RandomSamplerConfig(
        num_samples=int(opt.get("num_samples", 1000)),
        rng_seed=int(opt.get("seed", 0)),
    )
    annotations_path = opt.get("annotations")
    path = run_explain_command(
        image, image_path.stem, segmap, h, out_dir,
        method=method, segmenter_name=seg_name, mindful_cfg=mindful_cfg,
        thresholds=thresholds, random_cfg=random_cfg, surrogate_cfg=surrogate_cfg,
        k_classes=int(opt.get("k_classes", 3)), top_k=int(opt.get("top_k", 4)),
        overlay=bool(opt.get("overlay", False)),
        overlay_annotations=(load_annotations(annotations_path)
                             if annotations_path else None),
        dump_samples=bool(opt.get("dump_samples", False)),
    )
    print(path)
    return EXIT_OK


def _cmd_calibrate(opt: _Options) -> int:
    corpus_dir = opt.require("corpus", "--corpus")
    out_path = opt.require("out", "--out")
    classifier = None
    if opt.get("classifier") or opt.get("classifier_config"):
        classifier = _load_classifier(opt)
    table = run_calibrate(corpus_dir, out_path, classifier=classifier)
    print(f"{out_path}: {len(table.thresholds)} classes")
    return EXIT_OK


def _parse_methods(text: str) -> list[MethodVariant]:
    variants = []
    for part in text.split(","):
        name, _, param = part.strip().partition(":")
        if name == "mindful":
            variants.append(MethodVariant(method="mindful",
                                          levels=int(param) if param else 2))
        elif name == "random-baseline":
            variants.append(MethodVariant(method="random-baseline",
                                          num_samples=int(param) if param else 1000))
        else:
            raise _CliError(f"unknown method {name!r}")
    return variants


def _cmd_benchmark(opt: _Options) -> int:
    corpus_dir = opt.require("corpus", "--corpus")
    out_dir = opt.require("out", "--out")
    seg_names = [s.strip() for s in str(opt.get("segmenters", "slic")).split(",")]
    segmenters = []
    for name in seg_names:
        _, cfg = _segmenter_config(opt)
        if name not in ("slic", "felzenszwalb"):
            raise _CliError(f"benchmark segmenter must be slic or felzenszwalb, got {name!r}")
        segmenters.append((name, SegmenterConfig(algorithm=name, slic=cfg.slic,
                                                 felzenszwalb=cfg.felzenszwalb)))
    methods = _parse_methods(str(opt.get("methods", "mindful:2,random-baseline:1000")))
    top_ks = [int(v) for v in str(opt.get("top_k", "1,4")).split(",")]
    cfg = ExperimentConfig(
        corpus_dir=corpus_dir,
        out_dir=out_dir,
        segmenters=segmenters,
        methods=methods,
        top_ks=top_ks,
        runs=int(opt.get("runs", 10)),
        base_seed=int(opt.get("seed", 0)),
        threshold=float(opt.get("threshold", 0.5)),
        thresholds_path=opt.get("thresholds"),
        kernel_width=float(opt.get("kernel_width", 0.25)),
        ridge_lambda=float(opt.get("ridge_lambda", 1.0)),
    )
    rows, instance_rows, errors = run_benchmark(cfg)
    write_benchmark_outputs(out_dir, rows, instance_rows, errors)
    for cell, message in errors:
        print(f"cell failed: {cell}: {message}", file=sys.stderr)
    if not rows:
        return EXIT_BENCHMARK
    print(f"{len(rows)} cells -> {out_dir}")
    return EXIT_OK


def _cmd_evaluate(opt: _Options) -> int:
    explanations = opt.require("explanations", "--explanations")
    annotations_path = opt.require("annotations", "--annotations")
    out_path = opt.require("out", "--out")
    annotations = load_annotations(annotations_path)
    rows, _ = run_evaluate(explanations, annotations, out_path)
    print(f"{len(rows)} rows -> {out_path}")
    return EXIT_OK


def _cmd_gen_corpus(opt: _Options) -> int:
    out_dir = opt.require("out", "--out")
    size = str(opt.get("size", "64x64"))
    try:
        width, height = (int(v) for v in size.lower().split("x"))
    except ValueError as exc:
        raise _CliError(f"bad --size {size!r}, expected WIDTHxHEIGHT") from exc
    spec = CorpusSpec(count=int(opt.get("count", 50)), width=width, height=height,
                      seed=int(opt.get("seed", 7)),
                      class_count=int(opt.get("classes", 2)))
    corpus = build_corpus(spec)
    write_corpus(corpus, out_dir, spec)
    print(f"{spec.count} images -> {out_dir}")
    return EXIT_OK


def _cmd_serve_check(opt: _Options) -> int:
    url = opt.get("url") or os.environ.get(ENV_URL)
    if not url:
        raise _CliError(f"serve-check needs --url or ${ENV_URL}")
    client = RemoteClassifier(url)
    info = client.health()
    print(f"{url}: status={info.get('status')} classes={info.get('classes')}")
    return EXIT_OK


_COMMANDS = {
    "explain": _cmd_explain,
    "calibrate": _cmd_calibrate,
    "benchmark": _cmd_benchmark,
    "evaluate": _cmd_evaluate,
    "gen-corpus": _cmd_gen_corpus,
    "serve-check": _cmd_serve_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        opt = _Options(args)
        return _COMMANDS[args.command](opt)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContractViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClassifierError as exc:
        print(f"classifier error: {exc}", file=sys.stderr)
        return EXIT_CLASSIFIER


if __name__ == "__main__":
    sys.exit(main())
