"""Pipeline stages: steps -> surprisal -> design -> fit -> ablate -> report.

Each stage reads the files written by the one before it, so the CLI can run
them one at a time or all together.
"""

from __future__ import annotations

import math
import platform
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy
import yaml

from . import __version__
from .ccg.derivation import Derivation, read_derivations, validate
from .ccg.strategies import RevealConfig, steps_ccg
from .cfg_trees import CFG_STRATEGIES, ConstTree, read_trees, strip_punctuation
from .config import PipelineConfig
from .design import DesignMatrix, build_design, read_covariate, read_events, zscore_per_run
from .errors import InputError, LengthMismatch, ParseEffortError, ZeroVariance
from .files import (
    csv_text,
    read_csv_table,
    read_json,
    read_lines,
    read_npz,
    sha256_file,
    tsv_text,
    write_json,
    write_npz,
    atomic_write_text,
)
from .regression import (
    INTERCEPT,
    FitResult,
    compare_terms,
    credible_interval,
    evaluate,
    fit,
    fit_regions,
    shrink_toward_pooled,
    substream,
    sum_delta_rmse,
    summarize,
)
from .surprisal import align, read_token_logprobs, word_surprisal

STEPS_HEADER = ["sentence_id", "word_index", "word", "strategy", "count"]
META_COLUMNS = ("run", "time_s", "split")
METHOD_NOTE = (
    "independent per-region Bayesian linear regression sampled exactly "
    "(grid inverse-CDF for the noise scale, Gaussian conditional for coefficients); "
    "no MCMC, so no R-hat diagnostics"
)


@contextmanager
def stage(name: str):
    """Tag package errors raised inside with the pipeline stage name."""
    try:
        yield
    except ParseEffortError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


# ---------------------------------------------------------------------------
# steps


def load_trees(path, *, strip: bool = False) -> list[ConstTree]:
    out = []
    for lineno, tree in read_trees(read_lines(path)):
        if strip:
            tree = strip_punctuation(tree)
            if tree is None:
                continue
        out.append(tree)
    return out


def load_derivations(path, *, strict: bool = False) -> list[Derivation]:
    out = []
    for lineno, d in read_derivations(read_lines(path)):
        try:
            validate(d, strict=strict)
        except InputError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        out.append(d)
    return out


def reveal_config(cfg: PipelineConfig) -> RevealConfig:
    st = cfg.data["steps"]
    return RevealConfig(count_rotation_as_step=bool(st["count_rotation"]), attach=st["reveal_attach"])


def step_rows(
    sentences: Sequence,
    grammar: str,
    strategies: Sequence[str],
    reveal: RevealConfig = RevealConfig(),
    *,
    trace: bool = False,
) -> list[list]:
    """Long-format rows: sentence_id, word_index, word, strategy, count[, ops]."""
    rows = []
    cache: dict[tuple[str, str], list] = {}
    for sid, sent in enumerate(sentences):
        for strategy in strategies:
            key = (str(sent), strategy)
            if key not in cache:
                if grammar == "cfg":
                    cache[key] = CFG_STRATEGIES[strategy](sent)
                else:
                    cache[key] = steps_ccg(sent, strategy, reveal)
            for t in cache[key]:
                row = [sid, t.word_index, t.word, f"{grammar}_{strategy}", t.count]
                if trace:
                    row.append(",".join(t.ops))
                rows.append(row)
    return rows


def steps_text(rows: Iterable[Sequence], trace: bool = False) -> str:
    header = STEPS_HEADER + (["ops"] if trace else [])
    return tsv_text(header, rows)


def read_steps_table(lines) -> tuple[list[str], dict[str, list[float]]]:
    """Pivot a steps TSV to per-word columns, one per strategy."""
    rows = [ln.rstrip("\n").split("\t") for ln in lines if ln.strip()]
    if not rows:
        return [], {}
    if rows[0][:5] != STEPS_HEADER:
        raise InputError(f"steps table must start with header {' '.join(STEPS_HEADER)}")
    order: list[tuple[int, int]] = []
    words: dict[tuple[int, int], str] = {}
    cols: dict[str, dict[tuple[int, int], float]] = {}
    for lineno, r in enumerate(rows[1:], 2):
        try:
            key = (int(r[0]), int(r[1]))
            word, strategy, count = r[2], r[3], float(r[4])
        except (IndexError, ValueError):
            raise InputError(f"steps table line {lineno}: malformed row") from None
        if key not in words:
            words[key] = word
            order.append(key)
        cols.setdefault(strategy, {})[key] = count
    out = {}
    for name, vals in cols.items():
        missing = [k for k in order if k not in vals]
        if missing:
            raise InputError(f"steps table: strategy {name} lacks word {missing[0]}")
        out[name] = [vals[k] for k in order]
    return [words[k] for k in order], out


# ---------------------------------------------------------------------------
# surprisal


def surprisal_rows(words: Sequence[str], token_lines) -> list[list]:
    tokens = read_token_logprobs(token_lines)
    alignment = align(words, [t.token for t in tokens])
    values = word_surprisal(tokens, alignment)
    return [[i, w, k, v] for i, (w, (_, k), v) in enumerate(zip(words, alignment.spans, values))]


def surprisal_text(rows) -> str:
    return tsv_text(["word_index", "word", "n_tokens", "surprisal"], rows)


def read_word_table(lines, skip: Sequence[str] = ("word_index", "n_tokens")) -> tuple[list[str], dict[str, list[float]]]:
    """Read a TSV with a ``word`` column and numeric per-word columns."""
    rows = [ln.rstrip("\n").split("\t") for ln in lines if ln.strip()]
    if not rows:
        return [], {}
    header = rows[0]
    if "word" not in header:
        raise InputError("word table needs a 'word' column")
    wi = header.index("word")
    keep = [(j, h) for j, h in enumerate(header) if h != "word" and h not in skip]
    words, cols = [], {h: [] for _, h in keep}
    for lineno, r in enumerate(rows[1:], 2):
        if len(r) != len(header):
            raise InputError(f"word table line {lineno}: expected {len(header)} fields")
        words.append(r[wi])
        for j, h in keep:
            try:
                cols[h].append(float(r[j]))
            except ValueError:
                raise InputError(f"word table line {lineno}: {h} value {r[j]!r} is not a number") from None
    return words, cols


# ---------------------------------------------------------------------------
# design


def default_targets(names: Iterable[str]) -> list[str]:
    return [n for n in names if n.startswith(("cfg_", "ccg_")) or n == "surprisal"]


def check_words(expected: Sequence[str], got: Sequence[str], what: str):
    if len(expected) != len(got):
        raise LengthMismatch(f"{what}: {len(got)} words, events have {len(expected)}")
    for i, (a, b) in enumerate(zip(expected, got)):
        if a != b:
            raise InputError(f"{what}: word {i} is {b!r}, events have {a!r}")


def infer_scans(events, tr: float) -> dict[int, int]:
    """Scans per run when not configured: cover the last word plus 10 s."""
    last: dict[int, float] = {}
    for e in events:
        last[e.run] = max(last.get(e.run, 0.0), e.offset)
    return {r: int(math.ceil((t + 10.0) / tr)) for r, t in sorted(last.items())}


def design_stage(
    events,
    tables: Sequence[tuple[str, list[str], dict[str, list[float]]]],
    covariates: dict,
    cfg: PipelineConfig,
) -> DesignMatrix:
    word_values: dict[str, list[float]] = {}
    ev_words = [e.word for e in events]
    for what, words, cols in tables:
        check_words(ev_words, words, what)
        for name, vals in cols.items():
            if name in word_values or name == "wordrate" or name in covariates:
                raise InputError(f"column {name!r} supplied twice")
            word_values[name] = vals
    dcfg = cfg.design_config(default_targets(word_values))
    scans = cfg.scans_per_run() or infer_scans(events, dcfg.tr)
    return build_design(events, word_values, covariates, scans, dcfg)


def design_text(dm: DesignMatrix) -> str:
    labels = dm.split_labels()
    rows = (
        [int(dm.runs[i]), float(dm.times[i]), labels[i], *map(float, dm.values[i])]
        for i in range(dm.n_rows)
    )
    return csv_text([*META_COLUMNS, *dm.names], rows)


def design_sidecar(dm: DesignMatrix, cfg: PipelineConfig) -> dict:
    return {
        "columns": dm.names,
        "rate_hz": dm.rate,
        "run_lengths": dm.run_lengths,
        "n_train": dm.n_train,
        "n_test": dm.n_test,
        "dropped": dm.dropped,
        "targets": list(cfg.design_config(default_targets(dm.names)).targets),
        "params": cfg.design_config(default_targets(dm.names)).to_json(),
        "screen": dm.screen.to_json() if dm.screen else None,
    }


def read_design(path) -> DesignMatrix:
    header, rows = read_csv_table(path)
    if tuple(header[:3]) != META_COLUMNS:
        raise InputError(f"{path}: design CSV must start with columns {', '.join(META_COLUMNS)}")
    names = header[3:]
    try:
        runs = np.array([int(r[0]) for r in rows])
        times = np.array([float(r[1]) for r in rows])
        values = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(len(rows), len(names))
    except (ValueError, IndexError):
        raise InputError(f"{path}: malformed design row") from None
    split = [r[2] for r in rows]
    n_train = split.count("train")
    n_test = split.count("test")
    if split[:n_train] != ["train"] * n_train or split[n_train : n_train + n_test] != ["test"] * n_test:
        raise InputError(f"{path}: train rows must precede test rows contiguously")
    run_lengths = []
    for i, r in enumerate(runs):
        if i == 0 or r != runs[i - 1]:
            run_lengths.append(0)
        run_lengths[-1] += 1
    rate = 1.0 / (times[1] - times[0]) if len(times) > 1 and times[1] > times[0] else 0.5
    return DesignMatrix(names, values, run_lengths, times, runs, rate, n_train, n_test)


def read_regions(path, n_rows: int | None = None) -> dict[str, np.ndarray]:
    header, rows = read_csv_table(path)
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate region ids")
    try:
        mat = np.array([[float(v) for v in r] for r in rows]).reshape(len(rows), len(header))
    except ValueError:
        raise InputError(f"{path}: non-numeric value") from None
    if n_rows is not None and mat.shape[0] != n_rows:
        raise LengthMismatch(f"{path}: {mat.shape[0]} rows, design has {n_rows}")
    if not header:
        raise InputError(f"{path}: no regions")
    return {h: mat[:, j] for j, h in enumerate(header)}


# ---------------------------------------------------------------------------
# fit / ablate


@dataclass
class Prepared:
    X_train: np.ndarray
    X_test: np.ndarray
    Y_train: dict[str, np.ndarray]
    Y_test: dict[str, np.ndarray]


def prepare(dm: DesignMatrix, regions: dict[str, np.ndarray], cfg: PipelineConfig) -> Prepared:
    tr, te = dm.split()
    if cfg.data["regression"]["zscore_regions"]:
        ddof = cfg.data["design"]["zscore_ddof"]
        scaled = {}
        for k, v in regions.items():
            try:
                scaled[k] = zscore_per_run(v, dm.run_lengths, ddof)
            except ZeroVariance as exc:
                raise ZeroVariance(f"region {k}, {exc.where}") from None
        regions = scaled
    return Prepared(
        dm.values[tr],
        dm.values[te],
        {k: v[tr] for k, v in regions.items()},
        {k: v[te] for k, v in regions.items()},
    )


def fit_stage(dm: DesignMatrix, regions: dict[str, np.ndarray], cfg: PipelineConfig) -> dict[str, FitResult]:
    prep = prepare(dm, regions, cfg)
    priors = cfg.prior_config()
    fits = fit_regions(prep.X_train, prep.Y_train, priors, dm.names, threads=cfg.threads)
    if cfg.data["regression"]["shrinkage"]:
        ids = sorted(fits)
        Xp = np.vstack([prep.X_train] * len(ids))
        yp = np.concatenate([prep.Y_train[r] for r in ids])
        pooled = fit(Xp, yp, priors, dm.names, rng=substream(cfg.seed, "pooled"), region="pooled")
        fits = dict(zip(ids, shrink_toward_pooled([fits[r] for r in ids], pooled, priors.noise_rate)))
    return fits


def fit_json(fits: dict[str, FitResult], dm: DesignMatrix, cfg: PipelineConfig) -> dict:
    level = float(cfg.data["regression"]["level"])
    return {
        "method": METHOD_NOTE,
        "terms": dm.names,
        "priors": {k: v for k, v in cfg.data["regression"].items() if k in ("intercept_sd", "coef_sd", "noise_rate", "draws")},
        "shrinkage": bool(cfg.data["regression"]["shrinkage"]),
        "seed": cfg.seed,
        "level": level,
        "regions": {r: summarize(f, level) for r, f in fits.items()},
    }


def fit_draws(fits: dict[str, FitResult]) -> dict[str, np.ndarray]:
    out = {}
    for r, f in fits.items():
        out[f"coef__{r}"] = f.coef_draws
        out[f"sigma__{r}"] = f.noise_draws
    return out


def load_fits(fit_json_path, draws_path) -> dict[str, FitResult]:
    meta = read_json(fit_json_path)
    arrays = read_npz(draws_path)
    fits = {}
    for r, summary in meta["regions"].items():
        try:
            coef, sig = arrays[f"coef__{r}"], arrays[f"sigma__{r}"]
        except KeyError:
            raise InputError(f"{draws_path}: no draws for region {r}") from None
        fits[r] = FitResult(list(meta["terms"]), coef, sig, summary["train_rmse"], region=r)
    return fits


def ablate_stage(fits: dict[str, FitResult], dm: DesignMatrix, regions: dict[str, np.ndarray], cfg: PipelineConfig) -> dict:
    prep = prepare(dm, regions, cfg)
    level = float(cfg.data["regression"]["level"])
    comparisons = [tuple(p) for p in cfg.data["regression"]["comparisons"]]
    for t in {x for p in comparisons for x in p}:
        if t not in dm.names:
            raise InputError(f"comparison term {t!r} is not a design column")
    out_regions = {}
    for r in sorted(fits):
        if r not in prep.Y_test:
            raise InputError(f"region {r} has no time series")
        f = evaluate(fits[r], prep.X_test, prep.Y_test[r])
        s = summarize(f, level)
        comps = []
        for a, b in comparisons:
            lo, hi = credible_interval(f.delta_rmse[a] - f.delta_rmse[b], level)
            comps.append({"target": a, "control": b, "lo": lo, "hi": hi, "result": compare_terms(f, a, b, level)})
        out_regions[r] = {"delta_rmse": s["delta_rmse"], "reliable": s["reliable"], "comparisons": comps}
    groups = {}
    for name, terms in sorted(cfg.data["regression"]["groups"].items()):
        missing = [t for t in terms if t not in dm.names]
        if missing:
            raise InputError(f"group {name}: unknown terms {missing}")
        total = sum_delta_rmse([fits[r] for r in sorted(fits)], terms)
        lo, hi = credible_interval(total, level)
        groups[name] = {"terms": list(terms), "mean": float(total.mean()), "lo": lo, "hi": hi}
    return {"level": level, "n_test": dm.n_test, "shift": dm.n_test // 2, "regions": out_regions, "groups": groups}


def delta_draws(fits: dict[str, FitResult]) -> dict[str, np.ndarray]:
    return {f"delta__{r}__{t}": v for r, f in fits.items() for t, v in f.delta_rmse.items()}


# ---------------------------------------------------------------------------
# report


def report_tables(fit_meta: dict, abl: dict) -> dict[str, str]:
    term_rows, comp_rows = [], []
    for r in sorted(fit_meta["regions"]):
        fs = fit_meta["regions"][r]
        ab = abl["regions"].get(r, {})
        for t in fit_meta["terms"]:
            c = fs["coef"][t]
            d = ab.get("delta_rmse", {}).get(t)
            term_rows.append([
                r, t, c["mean"], c["lo"], c["hi"],
                d["mean"] if d else "", d["lo"] if d else "", d["hi"] if d else "",
                str(ab.get("reliable", {}).get(t, "")).lower(),
            ])
        for cmp in ab.get("comparisons", []):
            comp_rows.append([r, cmp["target"], cmp["control"], cmp["lo"], cmp["hi"], str(cmp["result"]).lower()])
    group_rows = [[g, " ".join(v["terms"]), v["mean"], v["lo"], v["hi"]] for g, v in sorted(abl.get("groups", {}).items())]
    return {
        "report_terms.csv": csv_text(
            ["region", "term", "beta_mean", "beta_lo", "beta_hi", "delta_rmse_mean", "delta_rmse_lo", "delta_rmse_hi", "reliable"],
            term_rows,
        ),
        "report_comparisons.csv": csv_text(["region", "target", "control", "diff_lo", "diff_hi", "result"], comp_rows),
        "report_groups.csv": csv_text(["group", "terms", "sum_delta_rmse_mean", "lo", "hi"], group_rows),
    }


# ---------------------------------------------------------------------------
# full run


def word_inputs(cfg: PipelineConfig, events, *, trace: bool = False) -> tuple[list, dict[str, str]]:
    """Compute step and surprisal tables; returns (tables, texts by file name)."""
    tables, texts = [], {}
    st = cfg.data["steps"]
    rc = reveal_config(cfg)
    if cfg.path("cfg_trees") is not None and st["cfg"]:
        with stage("steps"):
            trees = load_trees(cfg.path("cfg_trees"), strip=st["strip_punctuation"])
            rows = step_rows(trees, "cfg", st["cfg"], rc, trace=trace)
            texts["steps_cfg.tsv"] = steps_text(rows, trace)
            tables.append(("CFG trees", *read_steps_table(texts["steps_cfg.tsv"].splitlines())))
    if cfg.path("ccg_derivations") is not None and st["ccg"]:
        with stage("steps"):
            ders = load_derivations(cfg.path("ccg_derivations"), strict=st["strict_features"])
            rows = step_rows(ders, "ccg", st["ccg"], rc, trace=trace)
            texts["steps_ccg.tsv"] = steps_text(rows, trace)
            tables.append(("CCG derivations", *read_steps_table(texts["steps_ccg.tsv"].splitlines())))
    if cfg.path("tokens") is not None:
        with stage("surprisal"):
            rows = surprisal_rows([e.word for e in events], read_lines(cfg.path("tokens")))
            texts["surprisal.tsv"] = surprisal_text(rows)
            tables.append(("surprisal", *read_word_table(texts["surprisal.tsv"].splitlines())))
    if cfg.path("word_values") is not None:
        with stage("design"):
            tables.append(("word values", *read_word_table(read_lines(cfg.path("word_values")))))
    return tables, texts


def load_covariates(cfg: PipelineConfig) -> dict:
    return {name: read_covariate(read_lines(p), name) for name, p in cfg.covariate_paths().items()}


def build_from_config(cfg: PipelineConfig) -> tuple[DesignMatrix, dict[str, str]]:
    with stage("design"):
        events = read_events(read_lines(cfg.path("events")))
    tables, texts = word_inputs(cfg, events)
    with stage("design"):
        dm = design_stage(events, tables, load_covariates(cfg), cfg)
    return dm, texts


def run_pipeline(cfg: PipelineConfig, out_dir: str | Path) -> dict:
    """Run every stage, write all artifacts and the manifest; return the manifest."""
    out = Path(out_dir)
    dm, texts = build_from_config(cfg)
    written: list[str] = []
    for name, text in texts.items():
        atomic_write_text(out / name, text)
        written.append(name)
    atomic_write_text(out / "design.csv", design_text(dm))
    write_json(out / "design.json", design_sidecar(dm, cfg))
    written += ["design.csv", "design.json"]

    with stage("fit"):
        regions = read_regions(cfg.path("regions"), dm.n_rows)
        fits = fit_stage(dm, regions, cfg)
        write_json(out / "fit.json", fit_json(fits, dm, cfg))
        written.append("fit.json")
        if cfg.data["regression"]["save_draws"]:
            write_npz(out / "fit_draws.npz", fit_draws(fits))
            written.append("fit_draws.npz")
    with stage("ablate"):
        abl = ablate_stage(fits, dm, regions, cfg)
        write_json(out / "ablation.json", abl)
        written.append("ablation.json")
        if cfg.data["regression"]["save_draws"]:
            write_npz(out / "ablation_draws.npz", delta_draws(fits))
            written.append("ablation_draws.npz")
    with stage("report"):
        for name, text in report_tables(fit_json(fits, dm, cfg), abl).items():
            atomic_write_text(out / name, text)
            written.append(name)

    manifest = make_manifest(cfg, out, written)
    write_json(out / "manifest.json", manifest)
    return manifest


def make_manifest(cfg: PipelineConfig, out: Path, written: Sequence[str]) -> dict:
    params = cfg.to_dict()
    params.pop("threads", None)  # does not change any output
    inputs = {}
    for key in ("cfg_trees", "ccg_derivations", "tokens", "events", "word_values", "regions"):
        p = cfg.path(key)
        if p is not None:
            inputs[key] = sha256_file(p)
    for name, p in cfg.covariate_paths().items():
        inputs[f"covariate:{name}"] = sha256_file(p)
    return {
        "versions": {
            "parse_effort": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pyyaml": yaml.__version__,
        },
        "seed": cfg.seed,
        "parameters": params,
        "inputs": inputs,
        "outputs": {name: sha256_file(out / name) for name in sorted(written)},
    }
