"""Synthetic bundles with known ground truth.

A bundle is a directory with word events, the inputs needed to compute the
word-level predictors, covariates, region time series built as
``y = X beta* + noise`` from the pipeline's own design matrix, a
``truth.json`` sidecar, and a ``config.yaml`` to run the pipeline on it.

Synth config keys (YAML)::

    seed: 0
    runs: 2
    scans_per_run: 400
    tr: 2.0
    regions: 3                      # number of regions, >= 1
    noise_sd: 0.1
    predictors: generic             # 'generic' or 'parse'
    generic: [x1, x2, x3]           # per-word N(0, 1) columns when generic
    beta: {x1: 2.0, x2: -1.0, x3: 0.0}
    region_beta: {}                 # region id -> {term: value} overrides
    covariates: []                  # any of rms, f0
    design: {}                      # extra design settings for the bundle config
    regression: {}                  # extra regression settings for the bundle config

With ``predictors: parse`` the story is drawn from the packaged sample
sentences and the bundle carries CFG trees, CCG derivations, token
log-probabilities and a word-frequency table.
"""

from __future__ import annotations

import copy
import math
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .config import PipelineConfig
from .design import WordEvent
from .errors import InputError, InvalidParams
from .files import atomic_write_text, csv_text, fmt, tsv_text, write_json
from .pipeline import build_from_config, load_derivations, load_trees
from .regression import substream

SYNTH_DEFAULTS = {
    "seed": 0,
    "runs": 2,
    "scans_per_run": 400,
    "tr": 2.0,
    "regions": 3,
    "noise_sd": 0.1,
    "predictors": "generic",
    "generic": ["x1", "x2", "x3"],
    "beta": {"x1": 2.0, "x2": -1.0, "x3": 0.0},
    "region_beta": {},
    "covariates": [],
    "design": {},
    "regression": {},
}

_COVARIATE_RATE = 10.0


def synth_config(raw: dict | None) -> dict:
    raw = raw or {}
    unknown = set(raw) - set(SYNTH_DEFAULTS)
    if unknown:
        raise InputError(f"unknown synth keys: {sorted(unknown)}; valid: {sorted(SYNTH_DEFAULTS)}")
    cfg = copy.deepcopy(SYNTH_DEFAULTS)
    cfg.update(copy.deepcopy(raw))
    if int(cfg["regions"]) < 1:
        raise InvalidParams("at least one region is required")
    if int(cfg["runs"]) < 1 or int(cfg["scans_per_run"]) < 2:
        raise InvalidParams("need at least one run of at least 2 scans")
    if float(cfg["noise_sd"]) < 0:
        raise InvalidParams("noise_sd must be >= 0")
    if cfg["predictors"] not in ("generic", "parse"):
        raise InvalidParams("predictors must be 'generic' or 'parse'")
    for c in cfg["covariates"]:
        if c not in ("rms", "f0"):
            raise InvalidParams(f"unknown covariate {c!r}; available: rms, f0")
    return cfg


def sample_sentences():
    """Packaged (trees, derivations) pairs with identical word sequences."""
    base = resources.files("parse_effort") / "data"
    with resources.as_file(base / "sample.trees") as t, resources.as_file(base / "sample.ccg") as c:
        trees = load_trees(t)
        ders = load_derivations(c)
    return trees, ders


def _story(rng, n_runs: int, run_duration: float):
    """Pick sentences at random and time their words; returns per-word rows."""
    trees, ders = sample_sentences()
    events, sent_ids = [], []
    for run in range(1, n_runs + 1):
        t = 1.0 + rng.uniform(0, 0.5)
        while True:
            k = int(rng.integers(len(trees)))
            words = trees[k].leaves()
            durs = rng.uniform(0.22, 0.45, len(words))
            if t + durs.sum() + 0.05 * len(words) > run_duration - 12.0:
                break
            for w, d in zip(words, durs):
                events.append(WordEvent(w, round(t, 3), round(t + d, 3), run))
                t += d + 0.05
            sent_ids.append((k, run))
            t += rng.uniform(0.3, 0.8)
    return events, sent_ids, trees, ders


def _tokens(rng, words) -> str:
    lines = ["#base=e"]
    for w in words:
        if len(w) >= 5 and rng.random() < 0.5:
            cut = int(rng.integers(2, len(w) - 1))
            pieces = ["▁" + w[:cut], w[cut:]]
        else:
            pieces = ["▁" + w]
        for p in pieces:
            lines.append(f"{p}\t{fmt(-rng.uniform(0.2, 9.0))}")
    return "\n".join(lines) + "\n"


def _covariate(rng, name: str, n: int, events) -> np.ndarray:
    x = np.zeros(n)
    e = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = 0.95 * x[i - 1] + 0.3 * e[i]
    if name == "rms":
        t = np.arange(n) / _COVARIATE_RATE
        speech = np.zeros(n)
        for ev in events:
            speech[(t >= ev.onset) & (t < ev.offset)] = 1.0
        x = speech + 0.2 * x
    else:
        x = 120.0 + 10.0 * x
    return x


def make_bundle(raw: dict | None, out_dir: str | Path) -> dict:
    """Write a synthetic bundle and return its ground truth."""
    cfg = synth_config(raw)
    out = Path(out_dir)
    seed = int(cfg["seed"])
    tr = float(cfg["tr"])
    n_runs, n_scans = int(cfg["runs"]), int(cfg["scans_per_run"])
    run_duration = n_scans * tr
    if run_duration < 40.0:
        raise InvalidParams("runs are too short to hold any sentence")

    events, sent_ids, trees, ders = _story(substream(seed, "synth", "story"), n_runs, run_duration)
    words = [e.word for e in events]
    inputs: dict = {"events": "events.tsv"}
    files: dict[str, str] = {}
    files["events.tsv"] = tsv_text(
        ["word", "onset_s", "offset_s", "run"], ([e.word, e.onset, e.offset, e.run] for e in events)
    )

    wrng = substream(seed, "synth", "word_values")
    if cfg["predictors"] == "generic":
        names = list(cfg["generic"])
        vals = wrng.standard_normal((len(words), len(names)))
        files["word_values.tsv"] = tsv_text(["word", *names], ([w, *map(float, v)] for w, v in zip(words, vals)))
        targets = names
    else:
        files["story.trees"] = "".join(f"{trees[k]}\n" for k, _ in sent_ids)
        files["story.ccg"] = "".join(f"{ders[k]}\n" for k, _ in sent_ids)
        files["tokens.tsv"] = _tokens(substream(seed, "synth", "tokens"), words)
        types = sorted(set(words))
        freq = dict(zip(types, -np.log(wrng.permutation(len(types)) + 1.0)))
        files["word_values.tsv"] = tsv_text(["word", "freq"], ([w, float(freq[w])] for w in words))
        inputs.update(cfg_trees="story.trees", ccg_derivations="story.ccg", tokens="tokens.tsv")
        targets = None
    inputs["word_values"] = "word_values.tsv"

    crng = substream(seed, "synth", "covariates")
    n_cov = int(math.ceil(n_runs * run_duration * _COVARIATE_RATE))
    story_events = [
        WordEvent(e.word, e.onset + (e.run - 1) * run_duration, e.offset + (e.run - 1) * run_duration, e.run)
        for e in events
    ]
    covs = {}
    for name in cfg["covariates"]:
        x = _covariate(crng, name, n_cov, story_events)
        files[f"{name}.txt"] = f"#rate_hz={_COVARIATE_RATE:g}\n" + "".join(f"{fmt(v)}\n" for v in x)
        covs[name] = f"{name}.txt"
    inputs["covariates"] = covs

    design = {"tr": tr, "scans_per_run": {r: n_scans for r in range(1, n_runs + 1)}}
    if targets is not None:
        design["targets"] = targets
    design.update(cfg["design"])
    regression = {"zscore_regions": False}
    regression.update(cfg["regression"])
    bundle_cfg = {"seed": seed, "inputs": inputs, "design": design, "regression": regression}

    for name, text in files.items():
        atomic_write_text(out / name, text)
    atomic_write_text(out / "config.yaml", yaml.safe_dump(bundle_cfg, sort_keys=True))

    # the outcome is built from the design the pipeline itself will compute
    pcfg = PipelineConfig.from_dict({**bundle_cfg, "inputs": {**inputs, "regions": None}}, out)
    dm, _ = build_from_config(pcfg)
    region_ids = [f"R{i + 1:02d}" for i in range(int(cfg["regions"]))]
    betas = {}
    for r in region_ids:
        b = dict(cfg["beta"])
        b.update(cfg["region_beta"].get(r, {}))
        unknown = set(b) - set(dm.names)
        if unknown:
            raise InvalidParams(f"beta refers to terms not in the design: {sorted(unknown)}; columns: {dm.names}")
        betas[r] = {t: float(b.get(t, 0.0)) for t in dm.names}
    nrng = substream(seed, "synth", "noise")
    Y = np.empty((dm.n_rows, len(region_ids)))
    for j, r in enumerate(region_ids):
        beta = np.array([betas[r][t] for t in dm.names])
        Y[:, j] = dm.values @ beta + float(cfg["noise_sd"]) * nrng.standard_normal(dm.n_rows)
    atomic_write_text(out / "regions.csv", csv_text(region_ids, Y.tolist()))
    truth = {
        "seed": seed,
        "noise_sd": float(cfg["noise_sd"]),
        "terms": dm.names,
        "beta": betas,
        "intercept": 0.0,
        "synth_config": cfg,
    }
    write_json(out / "truth.json", truth)
    return truth
