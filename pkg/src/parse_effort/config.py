"""Pipeline configuration (YAML).

Key schema, with defaults::

    seed: 0
    threads: 1
    inputs:                      # paths relative to the config file
      cfg_trees: null            # bracketed trees, one sentence per tree
      ccg_derivations: null      # s-expression derivations, one per line
      tokens: null               # '#base=' header + token<TAB>logprob
      events: events.tsv         # word, onset_s, offset_s, run
      word_values: null          # TSV: word + extra per-word columns (freq ...)
      covariates: {}             # name -> '#rate_hz=' file (rms, f0 ...)
      regions: regions.csv       # one column per region, rows = design rows
    steps:
      cfg: [bottomup, topdown, leftcorner]
      ccg: [left, revealing]
      strip_punctuation: false
      strict_features: false
      count_rotation: true
      reveal_attach: lowest
    design:
      tr: 2.0
      grid_rate: 50.0
      hrf: {peak_delay: 6, undershoot_delay: 16, peak_dispersion: 1,
            undershoot_dispersion: 1, peak_undershoot_ratio: 6, duration: 32}
      scans_per_run: {}          # run id -> number of scans
      skip_first_run: 0
      skip_later_runs: 0
      zscore_ddof: 1
      targets: null              # default: step columns + surprisal + generic x*
      correlation_threshold: 0.95
      drop_priority: []          # keep earlier names when a pair is flagged;
                                 # null keeps the earlier design column
      n_train: 400
      n_test: 400
    regression:
      intercept_sd: 1.0
      coef_sd: 2.5
      noise_rate: 1.0
      draws: 500
      level: 0.99
      zscore_regions: true
      shrinkage: false
      save_draws: true
      comparisons: []            # [[target, control], ...]
      groups: {}                 # name -> [terms] for summed ablation effects
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .ccg.strategies import STRATEGIES as CCG_STRATEGIES
from .cfg_trees import CFG_STRATEGIES
from .design import DesignConfig, HrfParams, hrf_kernel
from .errors import InputError, InvalidParams
from .regression import PriorConfig

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "inputs": {
        "cfg_trees": None,
        "ccg_derivations": None,
        "tokens": None,
        "events": "events.tsv",
        "word_values": None,
        "covariates": {},
        "regions": "regions.csv",
    },
    "steps": {
        "cfg": ["bottomup", "topdown", "leftcorner"],
        "ccg": ["left", "revealing"],
        "strip_punctuation": False,
        "strict_features": False,
        "count_rotation": True,
        "reveal_attach": "lowest",
    },
    "design": {
        "tr": 2.0,
        "grid_rate": 50.0,
        "hrf": {
            "peak_delay": 6.0,
            "undershoot_delay": 16.0,
            "peak_dispersion": 1.0,
            "undershoot_dispersion": 1.0,
            "peak_undershoot_ratio": 6.0,
            "duration": 32.0,
        },
        "scans_per_run": {},
        "skip_first_run": 0,
        "skip_later_runs": 0,
        "zscore_ddof": 1,
        "targets": None,
        "correlation_threshold": 0.95,
        "drop_priority": [],
        "n_train": 400,
        "n_test": 400,
    },
    "regression": {
        "intercept_sd": 1.0,
        "coef_sd": 2.5,
        "noise_rate": 1.0,
        "draws": 500,
        "level": 0.99,
        "zscore_regions": True,
        "shrinkage": False,
        "save_draws": True,
        "comparisons": [],
        "groups": {},
    },
}


def _merge(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise InputError(f"unknown config key {where}{k!r}; valid keys: {', '.join(sorted(base))}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class PipelineConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict | None, base_dir: str | Path = ".") -> "PipelineConfig":
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise InputError("config must be a mapping")
        cfg = cls(_merge(DEFAULTS, raw, ""), Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InputError(f"{path}: no such config file") from None
        except yaml.YAMLError as exc:
            raise InputError(f"{path}: invalid YAML ({exc})") from None
        return cls.from_dict(raw, path.resolve().parent)

    def override(self, dotted: str, value) -> None:
        """Set ``a.b.c`` (used for command-line flags, which win over the file)."""
        node = self.data
        *head, last = dotted.split(".")
        for k in head:
            node = node[k]
        node[last] = value
        self.validate()

    def validate(self) -> None:
        st = self.data["steps"]
        for s in st["cfg"] or []:
            if s not in CFG_STRATEGIES:
                raise InputError(f"unknown CFG strategy {s!r}; valid: {', '.join(CFG_STRATEGIES)}")
        for s in st["ccg"] or []:
            if s not in CCG_STRATEGIES:
                raise InputError(f"unknown CCG strategy {s!r}; valid: {', '.join(CCG_STRATEGIES)}")
        if st["reveal_attach"] not in ("lowest", "highest"):
            raise InputError("steps.reveal_attach must be 'lowest' or 'highest'")
        if not isinstance(self.data["seed"], int) or self.data["seed"] < 0:
            raise InvalidParams("seed must be a non-negative integer")
        if not isinstance(self.data["threads"], int) or self.data["threads"] < 1:
            raise InvalidParams("threads must be a positive integer")
        for pair in self.data["regression"]["comparisons"]:
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                raise InputError(f"comparison {pair!r} must be [target, control]")
        # build once to surface bad values early
        hrf_kernel(self.design_config([]).hrf)
        self.prior_config()

    # -- typed views -------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def threads(self) -> int:
        return self.data["threads"]

    def path(self, key: str) -> Path | None:
        v = self.data["inputs"][key]
        return None if v is None else self.base_dir / v

    def covariate_paths(self) -> dict[str, Path]:
        return {k: self.base_dir / v for k, v in sorted(self.data["inputs"]["covariates"].items())}

    def scans_per_run(self) -> dict[int, int]:
        return {int(k): int(v) for k, v in self.data["design"]["scans_per_run"].items()}

    def design_config(self, default_targets) -> DesignConfig:
        d = self.data["design"]
        try:
            hrf = HrfParams(**{k: float(v) for k, v in d["hrf"].items()})
        except TypeError as exc:
            raise InputError(f"design.hrf: {exc}") from None
        targets = d["targets"] if d["targets"] is not None else default_targets
        for key in ("n_train", "n_test", "skip_first_run", "skip_later_runs"):
            if int(d[key]) < 0:
                raise InvalidParams(f"design.{key} must be >= 0")
        if float(d["tr"]) <= 0 or float(d["grid_rate"]) <= 0:
            raise InvalidParams("design.tr and design.grid_rate must be positive")
        return DesignConfig(
            tr=float(d["tr"]),
            grid_rate=float(d["grid_rate"]),
            hrf=hrf,
            skip_first_run=int(d["skip_first_run"]),
            skip_later_runs=int(d["skip_later_runs"]),
            zscore_ddof=int(d["zscore_ddof"]),
            targets=tuple(targets),
            correlation_threshold=float(d["correlation_threshold"]),
            drop_priority=None if d["drop_priority"] is None else tuple(d["drop_priority"]),
            n_train=int(d["n_train"]),
            n_test=int(d["n_test"]),
        )

    def prior_config(self) -> PriorConfig:
        r = self.data["regression"]
        return PriorConfig(
            intercept_sd=float(r["intercept_sd"]),
            coef_sd=float(r["coef_sd"]),
            noise_rate=float(r["noise_rate"]),
            draws=int(r["draws"]),
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)
