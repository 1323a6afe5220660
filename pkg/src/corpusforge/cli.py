"""corpusforge command line.

Global flags may be given before or after the subcommand:

    corpusforge --seed 7 synth ape pairs.tsv --src-tag WestGermanic+eng_Latn \\
        --tgt-tag CentralIndic+hin_Deva -o ape.jsonl

Exit status: 0 on success, 1 on unreadable input or too many malformed
lines, 2 on configuration errors (reported before any input is read).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import List, Optional

from . import __version__
from .corpus import ConfigError
from .perturb import ALL_KINDS
from .pipeline import SYNTH_TASKS, DataError, RunConfig, build_config, load_config_file, run

log = logging.getLogger("corpusforge")

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2


def _csv(value: str):
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _global_flags(p: argparse.ArgumentParser) -> None:
    # SUPPRESS lets the flags appear on either side of the subcommand
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="INI config file; flags override it")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed (default 0)")
    g.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes (default 1)")
    g.add_argument("--chunk-size", type=int, default=argparse.SUPPRESS, help="records per chunk (default 10000)")
    g.add_argument("--error-budget", type=float, default=argparse.SUPPRESS,
                   help="tolerated fraction of malformed input lines (default 0.001)")
    g.add_argument("--manifest-out", default=argparse.SUPPRESS,
                   help="manifest path (default OUTPUT.manifest.json, or stderr)")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)


def _io(p: argparse.ArgumentParser, input_help: str = "input file ('-' for stdin)") -> None:
    p.add_argument("input", nargs="?", help=input_help)
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.add_argument("--format", choices=("tsv", "jsonl", "text"), help="input format (default tsv)")
    p.add_argument("--out-format", choices=("tsv", "jsonl"))
    p.add_argument("--domain")
    p.add_argument("--registry", help="alternative language registry table")


def _tags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--src-tag", help="e.g. WestGermanic+eng_Latn")
    p.add_argument("--tgt-tag", help="e.g. CentralIndic+hin_Deva")


def _batching(p: argparse.ArgumentParser) -> None:
    p.add_argument("--batch-size", type=int)
    p.add_argument("--in-flight", type=int, help="concurrent backend batches (default 4)")
    p.add_argument("--checkpoint", help="checkpoint path for resumable runs")


def _perturbation(p: argparse.ArgumentParser) -> None:
    kinds = ", ".join(k.value for k in ALL_KINDS)
    p.add_argument("--kinds", type=_csv, help=f"comma list of {kinds} (default: all with resources)")
    p.add_argument("--rate", type=float, help="edit budget as a fraction of tokens")
    p.add_argument("--lexicons", help="lexicon root, laid out as <root>/<code_Script>/<category>.txt")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common)
    parser = argparse.ArgumentParser(
        prog="corpusforge", description="Build, clean and score multilingual MT corpora.", parents=[common]
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("clean", parents=[common], help="filter a parallel corpus")
    _io(p)
    _tags(p)
    p.add_argument("--verdicts", help="write one JSON verdict per input pair here")
    p.add_argument("--stages", type=_csv, help="comma list from length,language_script,markup,qe_score")
    p.add_argument("--max-word-delta", type=int)
    p.add_argument("--max-char-delta", type=int)
    p.add_argument("--majority-fraction", type=float)
    p.add_argument("--qe-margin", type=float)
    p.add_argument("--scorer", help="'stub', 'attached' or a scorer URL")

    p = sub.add_parser("perturb", parents=[common], help="inject errors and write edit logs")
    _io(p)
    _tags(p)
    _perturbation(p)

    p = sub.add_parser("synth", parents=[common], help="emit task records")
    p.add_argument("task", choices=SYNTH_TASKS)
    _io(p)
    _tags(p)
    _perturbation(p)
    p.add_argument("--scorer", help="scorer for the base quality of da/qe (default stub)")
    p.add_argument("--literal-da", action="store_const", const=True,
                   help="use 100 - TER instead of TER in the degradation term")
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("score", parents=[common], help="BLEU, chrF3, TER, span F1 and Spearman")
    p.add_argument("input", nargs="?", help="JSONL with hyp/ref (optional pred_spans, gold_spans, pred_score, gold_score)")
    p.add_argument("-o", "--output")
    p.add_argument("--hyp", help="hypothesis file, one segment per line")
    p.add_argument("--ref", help="reference file, one segment per line")

    p = sub.add_parser("align", parents=[common], help="align two sentence lists with a scorer")
    p.add_argument("input", help="source sentences, one per line")
    p.add_argument("tgt_input", help="target sentences, one per line")
    p.add_argument("-o", "--output")
    p.add_argument("--out-format", choices=("tsv", "jsonl"))
    p.add_argument("--domain")
    _tags(p)
    p.add_argument("--band", type=int, help="diagonal band width (default 5)")
    p.add_argument("--threshold", type=float, help="minimum score to keep a match")
    p.add_argument("--scorer")
    _batching(p)

    p = sub.add_parser("pivot", parents=[common], help="build X-target pairs through a pivot language")
    _io(p)
    _tags(p)
    p.add_argument("--pivot-tag", required=False)
    p.add_argument("--target-tag", required=False)
    p.add_argument("--translator", help="'stub' or a translator URL")
    p.add_argument("--scorer")
    _batching(p)

    p = sub.add_parser("backtranslate", parents=[common], help="iterative back-translation of monolingual text")
    p.add_argument("input", nargs="?", help="one sentence per line; blank lines separate passages with --paragraphs")
    p.add_argument("-o", "--output")
    p.add_argument("--out-format", choices=("tsv", "jsonl"))
    p.add_argument("--domain")
    _tags(p)
    p.add_argument("--rounds", type=int, help="translation rounds (default 5)")
    p.add_argument("--paragraphs", action="store_const", const=True)
    p.add_argument("--translator")
    p.add_argument("--scorer")
    _batching(p)

    p = sub.add_parser("stats", parents=[common], help="per language pair corpus report")
    _io(p)
    _tags(p)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


_NOT_CONFIG = {"command", "config", "manifest_out", "verbose", "host", "port"}


def config_from_args(args: argparse.Namespace, env=None) -> RunConfig:
    values = vars(args)
    file_values = load_config_file(values["config"]) if values.get("config") else {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    overrides = {k: v for k, v in values.items() if k in names and k not in _NOT_CONFIG}
    return build_config(args.command, file_values, overrides, env)


def _serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(2, getattr(args, "verbose", 0) or 0)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve":
        return _serve(args)
    try:
        cfg = config_from_args(args)
        manifest = run(cfg)
    except ConfigError as e:
        print(f"corpusforge: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"corpusforge: {e}", file=sys.stderr)
        return EXIT_DATA
    target = getattr(args, "manifest_out", None)
    if target is None:
        target = f"{cfg.output}.manifest.json" if cfg.output and cfg.output != "-" else "-"
    manifest.write(target)
    if manifest.exit_code:
        err = manifest.errors
        print(
            f"corpusforge: {err['malformed_lines']} malformed lines ({err['rate']:.4%}) exceed the error budget {err['budget']:.4%}",
            file=sys.stderr,
        )
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
