"""Command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import yaml

from . import __version__
from .ccg.strategies import STRATEGIES as CCG_STRATEGIES
from .cfg_trees import CFG_STRATEGIES
from .config import PipelineConfig
from .design import read_covariate, read_events
from .errors import InputError, NumericalError, ParseEffortError
from .files import atomic_write_text, read_json, read_lines, write_json, write_npz
from .pipeline import (
    ablate_stage,
    delta_draws,
    design_sidecar,
    design_stage,
    design_text,
    fit_draws,
    fit_json,
    fit_stage,
    load_derivations,
    load_fits,
    load_trees,
    read_design,
    read_regions,
    read_steps_table,
    read_word_table,
    report_tables,
    reveal_config,
    run_pipeline,
    stage,
    step_rows,
    steps_text,
    surprisal_rows,
    surprisal_text,
)
from .surprisal import read_words
from .synth import make_bundle

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def demo_config_path() -> Path:
    return Path(str(resources.files("parse_effort") / "data" / "demo" / "config.yaml"))


def _config(args) -> PipelineConfig:
    if getattr(args, "demo", False):
        cfg = PipelineConfig.load(demo_config_path())
    elif args.config:
        cfg = PipelineConfig.load(args.config)
    else:
        cfg = PipelineConfig.from_dict({}, Path.cwd())
    # flags win over the file
    if args.seed is not None:
        cfg.override("seed", args.seed)
    if args.threads is not None:
        cfg.override("threads", args.threads)
    if args.strict_features is not None:
        cfg.override("steps.strict_features", args.strict_features)
    if args.count_rotation is not None:
        cfg.override("steps.count_rotation", args.count_rotation)
    if args.strip_punctuation is not None:
        cfg.override("steps.strip_punctuation", args.strip_punctuation)
    return cfg


def _out(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_steps(args) -> int:
    cfg = _config(args)
    st = cfg.data["steps"]
    valid = CFG_STRATEGIES if args.grammar == "cfg" else CCG_STRATEGIES
    if args.strategy == "all":
        strategies = list(valid)
    else:
        strategies = args.strategy.split(",")
        for s in strategies:
            if s not in valid:
                raise InputError(f"unknown {args.grammar.upper()} strategy {s!r}; valid: {', '.join(valid)}")
    with stage("steps"):
        if args.grammar == "cfg":
            sents = load_trees(args.file, strip=st["strip_punctuation"])
        else:
            sents = load_derivations(args.file, strict=st["strict_features"])
        rows = step_rows(sents, args.grammar, strategies, reveal_config(cfg), trace=args.trace)
    _out(args.out, steps_text(rows, args.trace))
    return EXIT_OK


def cmd_surprisal(args) -> int:
    with stage("surprisal"):
        words = [e.word for e in read_events(read_lines(args.words))] if args.events else None
        if words is None:
            words = read_words(read_lines(args.words))
        rows = surprisal_rows(words, read_lines(args.tokens))
    _out(args.out, surprisal_text(rows))
    return EXIT_OK


def cmd_design(args) -> int:
    cfg = _config(args)
    with stage("design"):
        events = read_events(read_lines(args.events))
        tables = []
        for p in args.steps or []:
            tables.append((p, *read_steps_table(read_lines(p))))
        for p in args.word_table or []:
            tables.append((p, *read_word_table(read_lines(p))))
        covs = {}
        for spec in args.covariate or []:
            name, sep, path = spec.partition("=")
            if not sep:
                raise InputError(f"--covariate expects NAME=PATH, got {spec!r}")
            covs[name] = read_covariate(read_lines(path), name)
        dm = design_stage(events, tables, covs, cfg)
    out = Path(args.out)
    atomic_write_text(out, design_text(dm))
    write_json(out.with_suffix(".json"), design_sidecar(dm, cfg))
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    with stage("fit"):
        dm = read_design(args.design)
        regions = read_regions(args.regions, dm.n_rows)
        fits = fit_stage(dm, regions, cfg)
    out = Path(args.out)
    write_json(out, fit_json(fits, dm, cfg))
    write_npz(out.with_name(out.stem + "_draws.npz"), fit_draws(fits))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    with stage("ablate"):
        dm = read_design(args.design)
        regions = read_regions(args.regions, dm.n_rows)
        fit_path = Path(args.fit)
        draws = Path(args.draws) if args.draws else fit_path.with_name(fit_path.stem + "_draws.npz")
        fits = load_fits(fit_path, draws)
        abl = ablate_stage(fits, dm, regions, cfg)
    out = Path(args.out)
    write_json(out, abl)
    write_npz(out.with_name(out.stem + "_draws.npz"), delta_draws(fits))
    return EXIT_OK


def cmd_report(args) -> int:
    with stage("report"):
        tables = report_tables(read_json(args.fit), read_json(args.ablation))
    out = Path(args.out_dir)
    for name, text in tables.items():
        atomic_write_text(out / name, text)
    return EXIT_OK


def cmd_synth(args) -> int:
    raw = {}
    if args.config:
        try:
            raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        except FileNotFoundError:
            raise InputError(f"{args.config}: no such file") from None
        except yaml.YAMLError as exc:
            raise InputError(f"{args.config}: invalid YAML ({exc})") from None
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.regions is not None:
        raw["regions"] = args.regions
    if args.noise is not None:
        raw["noise_sd"] = args.noise
    with stage("synth"):
        make_bundle(raw, args.out_dir)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    manifest = run_pipeline(cfg, args.out_dir)
    print(f"wrote {len(manifest['outputs'])} artifacts and manifest.json to {args.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="pipeline configuration file (YAML)")
    g.add_argument("--seed", type=int, help="top-level random seed")
    g.add_argument("--threads", type=int, help="worker threads for region fits")
    g.add_argument("--strict-features", dest="strict_features", action="store_true", default=None,
                   help="require CCG features to match exactly")
    g.add_argument("--count-rotation", dest="count_rotation", action="store_true", default=None,
                   help="count ROTATE as a step (default)")
    g.add_argument("--no-count-rotation", dest="count_rotation", action="store_false", default=None)
    g.add_argument("--strip-punctuation", dest="strip_punctuation", action="store_true", default=None,
                   help="drop punctuation preterminals from CFG trees")

    p = argparse.ArgumentParser(prog="parse-effort", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("steps", parents=[common], help="per-word step counts as TSV")
    s.add_argument("file", help="bracketed trees (cfg) or derivations (ccg)")
    s.add_argument("--grammar", choices=["cfg", "ccg"], required=True)
    s.add_argument("--strategy", default="all", help="strategy name, comma list, or 'all'")
    s.add_argument("--trace", action="store_true", help="add the operation sequence per word")
    s.add_argument("-o", "--out", help="output file (default: stdout)")
    s.set_defaults(func=cmd_steps)

    s = sub.add_parser("surprisal", parents=[common], help="word surprisal from token log-probabilities")
    s.add_argument("--tokens", required=True, help="'#base=' header then token<TAB>logprob lines")
    s.add_argument("--words", required=True, help="word list, or events TSV with --events")
    s.add_argument("--events", action="store_true", help="--words is a word-events TSV")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_surprisal)

    s = sub.add_parser("design", parents=[common], help="build the design matrix")
    s.add_argument("--events", required=True)
    s.add_argument("--steps", action="append", help="steps TSV (repeatable)")
    s.add_argument("--word-table", action="append", help="word TSV such as surprisal or freq (repeatable)")
    s.add_argument("--covariate", action="append", help="NAME=PATH continuous covariate (repeatable)")
    s.add_argument("-o", "--out", required=True, help="design CSV; the JSON sidecar goes next to it")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("fit", parents=[common], help="fit every region on the training split")
    s.add_argument("--design", required=True)
    s.add_argument("--regions", required=True)
    s.add_argument("-o", "--out", required=True, help="fit JSON; draws go to <stem>_draws.npz")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("ablate", parents=[common], help="circular-shift ablation on the test split")
    s.add_argument("--design", required=True)
    s.add_argument("--regions", required=True)
    s.add_argument("--fit", required=True)
    s.add_argument("--draws", help="fit draws (default: <fit stem>_draws.npz)")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("report", help="CSV tables from fit and ablation results")
    s.add_argument("--fit", required=True)
    s.add_argument("--ablation", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write a synthetic bundle with known coefficients")
    s.add_argument("--config", help="synth settings (YAML)")
    s.add_argument("--seed", type=int)
    s.add_argument("--regions", type=int)
    s.add_argument("--noise", type=float, help="noise sd")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pipeline", parents=[common], help="run all stages and write a manifest")
    s.add_argument("--demo", action="store_true", help="use the packaged demo configuration")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseEffortError as exc:
        where = getattr(exc, "stage", None)
        prefix = f"error [{where}]" if where else "error"
        print(f"{prefix}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc, NumericalError) else EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
