"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .dictionary import save_dictionary
from .errors import DataError, NumericalError
from .sequence_io import read_manifest, synth_dataset

log = logging.getLogger("stllc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _progress(stage, done, total):
    log.info("%s %d/%d", stage, done, total)


def cmd_synth(args):
    entries = synth_dataset(args.out, args.per_class, args.seed)
    print(f"wrote {len(entries)} sequences and {Path(args.out) / 'manifest.csv'}")


def cmd_default_config(args):
    text = pipeline.PipelineConfig().to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_build_dict(args):
    cfg = pipeline.load_config(args.config)
    d = pipeline.build_dictionary(read_manifest(args.manifest), cfg, workers=args.workers,
                                  progress=_progress)
    save_dictionary(d, args.out)
    print(f"dictionary {d.source_dim}x{d.n_s} written to {args.out}")


def cmd_train(args):
    cfg = pipeline.load_config(args.config)
    overrides = {}
    if args.method is not None:
        overrides["method"] = args.method
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = cfg.replace(**overrides)
    model = pipeline.train(read_manifest(args.manifest), cfg, workers=args.workers,
                           progress=_progress)
    size = pipeline.save_model(model, args.model)
    print(f"model ({len(model.class_labels)} classes, {model.n_locations} locations, "
          f"{size} bytes) written to {args.model}")


def cmd_predict(args):
    model = pipeline.load_model(args.model)
    label, descriptor = pipeline.predict(model, args.input)
    if args.dump_descriptor:
        Path(args.dump_descriptor).write_text(
            "".join(f"{v!r}\n" for v in descriptor.tolist()), encoding="utf-8")
    print(label)


def cmd_evaluate(args):
    model = pipeline.load_model(args.model)
    report = pipeline.evaluate(model, read_manifest(args.manifest), workers=args.workers)
    sys.stdout.write(report.to_json() + "\n" if args.report == "json" else report.to_csv())
    if args.confusion:
        Path(args.confusion).write_text(report.confusion_csv(), encoding="utf-8")


def cmd_loso(args):
    cfg = pipeline.load_config(args.config)
    result = pipeline.run_loso(read_manifest(args.manifest), cfg, workers=args.workers,
                               progress=_progress)
    Path(args.report).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    print(f"{len(result['folds'])} folds, mean accuracy {result['mean_fold_accuracy']:.4f}")


def build_parser():
    parser = _Parser(prog="stllc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset and manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("default-config", help="print the default configuration")
    p.add_argument("--out")
    p.set_defaults(func=cmd_default_config)

    p = sub.add_parser("build-dict", help="fit the k-means dictionary only")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("sc", "llc"))
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify one sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--dump-descriptor")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model on a labelled manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", choices=("csv", "json"), default="json")
    p.add_argument("--confusion")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loso", help="leave-one-subject-out cross-validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_loso)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
