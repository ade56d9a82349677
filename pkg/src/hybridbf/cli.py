"""Command line entry point: ``hybridbf {gen-data,train,eval,embed-pca}``."""
import argparse
import logging
import sys

from . import harness
from .exceptions import FileFormatError, NumericalError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def _load_config(args):
    config = (harness.ExperimentConfig.from_file(args.config) if args.config
              else harness.ExperimentConfig())
    if args.seed is not None:
        config.seed = args.seed
        config.validate()
    return config


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hybridbf", description="Contrastive hybrid beamforming experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("gen-data", "generate channel and CSI datasets"),
                       ("train", "contrastive pre-training and fine-tuning"),
                       ("eval", "spectral-efficiency sweep"),
                       ("embed-pca", "PCA of embeddings before/after training")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key=value experiment configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", required=True, help="working/output directory")
        if name == "eval":
            p.add_argument("--n-jobs", type=int, default=1)
        if name == "embed-pca":
            p.add_argument("-k", type=int, default=2, help="number of components")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        if args.command == "gen-data":
            manifest = harness.gen_data(config, args.out)
            print(f"wrote {len(manifest['files'])} dataset files to {args.out}")
        elif args.command == "train":
            _, pre, ft = harness.train(config, args.out)
            print(f"pretrain loss {pre[0] if pre else float('nan'):.4f} -> "
                  f"{pre[-1] if pre else float('nan'):.4f}; finetune loss "
                  f"{ft[0] if ft else float('nan'):.4f} -> {ft[-1] if ft else float('nan'):.4f}")
        elif args.command == "eval":
            rows, summary = harness.evaluate(config, args.out, args.n_jobs)
            print(f"wrote {len(rows)} rows to {args.out}/{harness.RESULTS}")
            failed = [k for k, ok in summary["checks"].items() if not ok]
            if failed:
                print(f"sweep checks failed: {', '.join(failed)}", file=sys.stderr)
                return EXIT_NUMERICAL
        elif args.command == "embed-pca":
            rows, _ = harness.embed_pca(config, args.out, args.k)
            print(f"wrote {len(rows)} rows to {args.out}/{harness.PCA_TABLE}")
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (harness.HarnessError, FileFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
