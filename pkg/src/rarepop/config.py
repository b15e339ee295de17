"""Run configuration: one JSON document per command.

Example::

    {
      "seed": 3,
      "population": {"rows": 20, "cols": 20, "alpha": 0.15, "beta": 0.10, "cv": 0.95},
      "priors": {"a_alpha": 3, "b_alpha": 1, "a_beta": 15, "b_beta": 9},
      "mcmc": {"iterations": 20000, "burn_in": 2000, "thin": 18},
      "replications": 100,
      "initial_fraction": 0.05
    }

The ``population`` block takes ``rows``/``cols`` (or ``N`` with a conventional
shape), ``alpha``, ``beta`` and one rate specification: ``cv`` (one of the
named Gamma scenarios with mean 8.5), ``lam`` as ``{"shape", "rate"}``, an
explicit vector, or a single number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .dists import GammaParam
from .errors import ConfigError, DomainError
from .grid import PopulationSpec, default_shape
from .model import PriorConfig
from .sampler.config import FULL_SCALE, McmcConfig

MODES = ("generate", "sample", "fit-mixture", "fit-network", "diagnose",
         "replicate", "compare", "sensitivity")

# Gamma(d, nu) rate laws with mean 8.5 and the given coefficient of variation
CV_SCENARIOS = {0.95: GammaParam(1.1, 0.13), 0.50: GammaParam(4.0, 0.47), 0.25: GammaParam(16.0, 1.89)}

SENSITIVITY_TRUTHS = (
    (4.5, 4.8, 8.0, 11.3, 13.8),
    (3.9, 6.4, 6.9, 7.1, 10.5, 14.8),
    (4.8, 7.4, 9.5, 10.1, 11.4, 11.7, 14.5),
)
SENSITIVITY_TAUS = (1.0, 5.0, 10.0, 20.0)

DESK_REPLICATIONS = 100
FULL_REPLICATIONS = 500
SAMPLE_FRACTION = 0.10
SIMULATION_FRACTION = 0.05

_TOP_KEYS = {"mode", "seed", "population", "population_file", "rows", "cols", "sample_file",
             "chain_dir", "priors", "mcmc", "replications", "initial_fraction", "workers",
             "experiment", "truths", "taus", "prior_d_from_population"}


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs besides its input files."""

    mode: str
    seed: int = 0
    population: Optional[PopulationSpec] = None
    population_file: Optional[Path] = None
    rows: Optional[int] = None
    cols: Optional[int] = None
    sample_file: Optional[Path] = None
    chain_dir: Optional[Path] = None
    priors: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    replications: int = DESK_REPLICATIONS
    initial_fraction: Optional[float] = None
    workers: int = 1
    experiment: str = "model"
    truths: tuple = SENSITIVITY_TRUTHS
    taus: tuple = SENSITIVITY_TAUS
    full_scale: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not (isinstance(self.replications, int) and self.replications >= 1):
            raise ConfigError(f"replications must be a positive integer, got {self.replications!r}")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        if self.initial_fraction is not None and not (0.0 < self.initial_fraction <= 1.0):
            raise ConfigError(f"initial_fraction must lie in (0, 1], got {self.initial_fraction!r}")
        if self.experiment not in ("model", "design"):
            raise ConfigError(f"experiment must be 'model' or 'design', got {self.experiment!r}")
        self._check_required()

    def _check_required(self):
        need = {
            "generate": ["population"],
            "sample": ["population_file", "rows", "cols"],
            "fit-mixture": ["sample_file"],
            "fit-network": ["sample_file"],
            "diagnose": ["chain_dir"],
            "replicate": ["population"],
            "sensitivity": ["population"],
            "compare": (["population_file", "rows", "cols"] if self.experiment == "design"
                        else ["population"]),
        }[self.mode]
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"mode {self.mode!r} requires {', '.join(missing)}")

    @property
    def fraction(self) -> float:
        """Initial sampling fraction, defaulting by mode."""
        if self.initial_fraction is not None:
            return self.initial_fraction
        if self.mode == "sample" or (self.mode == "compare" and self.experiment == "design"):
            return SAMPLE_FRACTION
        return SIMULATION_FRACTION

    def scaled(self) -> "RunConfig":
        """Apply the full-scale sweep and replication counts."""
        if not self.full_scale:
            return self
        mcmc = replace(self.mcmc, **FULL_SCALE)
        reps = max(self.replications, FULL_REPLICATIONS)
        return replace(self, mcmc=mcmc, replications=reps)

    def scale_factors(self) -> dict:
        return {
            "iterations": self.mcmc.iterations / FULL_SCALE["iterations"],
            "replications": self.replications / FULL_REPLICATIONS,
            "full_scale": self.full_scale,
        }

    def to_dict(self) -> dict:
        pop = None
        if self.population is not None:
            p = self.population
            lam = p.lam
            if isinstance(lam, GammaParam):
                lam = {"shape": lam.shape, "rate": lam.rate}
            elif isinstance(lam, tuple):
                lam = list(lam)
            pop = {"rows": p.rows, "cols": p.cols, "alpha": p.alpha, "beta": p.beta, "lam": lam}
        return {
            "mode": self.mode, "seed": self.seed, "population": pop,
            "population_file": None if self.population_file is None else str(self.population_file),
            "rows": self.rows, "cols": self.cols,
            "sample_file": None if self.sample_file is None else str(self.sample_file),
            "chain_dir": None if self.chain_dir is None else str(self.chain_dir),
            "priors": self.priors.to_dict(), "mcmc": self.mcmc.to_dict(),
            "replications": self.replications, "initial_fraction": self.fraction,
            "experiment": self.experiment, "truths": [list(t) for t in self.truths],
            "taus": list(self.taus), "full_scale": self.full_scale,
        }


def _rate_law(block: dict):
    has = [k for k in ("cv", "lam") if k in block]
    if len(has) > 1:
        raise ConfigError("population: give either 'cv' or 'lam', not both")
    if "cv" in block:
        cv = float(block["cv"])
        match = [k for k in CV_SCENARIOS if abs(k - cv) < 1e-9]
        if not match:
            raise ConfigError(f"population.cv must be one of {sorted(CV_SCENARIOS)}, got {cv}")
        return CV_SCENARIOS[match[0]]
    lam = block.get("lam", {"shape": 1.1, "rate": 0.13})
    if isinstance(lam, dict):
        if set(lam) != {"shape", "rate"}:
            raise ConfigError("population.lam as an object needs exactly 'shape' and 'rate'")
        return GammaParam(float(lam["shape"]), float(lam["rate"]))
    if isinstance(lam, (list, tuple)):
        return tuple(float(x) for x in lam)
    if isinstance(lam, (int, float)) and not isinstance(lam, bool):
        return float(lam)
    raise ConfigError(f"population.lam has unsupported value {lam!r}")


def population_from_dict(block: dict) -> PopulationSpec:
    known = {"rows", "cols", "N", "alpha", "beta", "cv", "lam"}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"unknown population fields: {sorted(unknown)}")
    if "N" in block:
        if "rows" in block or "cols" in block:
            raise ConfigError("population: give either N or rows/cols")
        rows, cols = default_shape(int(block["N"]))
    else:
        try:
            rows, cols = int(block["rows"]), int(block["cols"])
        except KeyError as exc:
            raise ConfigError(f"population block lacks {exc.args[0]!r}") from None
    try:
        return PopulationSpec(rows, cols, float(block["alpha"]), float(block["beta"]), _rate_law(block))
    except KeyError as exc:
        raise ConfigError(f"population block lacks {exc.args[0]!r}") from None
    except DomainError as exc:
        raise ConfigError(f"population: {exc}") from None


def config_from_dict(doc: dict, mode: Optional[str] = None, base: Optional[Path] = None,
                     seed: Optional[int] = None, full_scale: bool = False) -> RunConfig:
    """Build a :class:`RunConfig`; relative file paths resolve against ``base``."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration fields: {sorted(unknown)}")
    mode = mode or doc.get("mode")
    if mode is None:
        raise ConfigError("no mode given")
    if "mode" in doc and doc["mode"] != mode:
        raise ConfigError(f"configuration is for mode {doc['mode']!r}, not {mode!r}")

    def path(key):
        v = doc.get(key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() or base is None else base / p

    pop = population_from_dict(doc["population"]) if doc.get("population") is not None else None
    pdoc = dict(doc.get("priors") or {})
    # simulated scenarios use the generating rate shape as the prior shape unless told otherwise
    if (pop is not None and isinstance(pop.lam, GammaParam) and "d" not in pdoc
            and doc.get("prior_d_from_population", True)):
        pdoc["d"] = pop.lam.shape
    try:
        priors = PriorConfig.from_dict(pdoc)
        mcmc = McmcConfig.from_dict(dict(doc.get("mcmc") or {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if seed is not None:
        top_seed = seed
    else:
        top_seed = doc.get("seed", 0)
    mcmc = replace(mcmc, seed=top_seed) if isinstance(top_seed, int) and top_seed >= 0 else mcmc
    truths = tuple(tuple(sorted(float(x) for x in t)) for t in doc.get("truths", SENSITIVITY_TRUTHS))
    taus = tuple(float(t) for t in doc.get("taus", SENSITIVITY_TAUS))
    if not truths or any(len(t) == 0 or min(t) <= 0 for t in truths):
        raise ConfigError("truths must be non-empty vectors of positive rates")
    if any(t <= 0 for t in taus):
        raise ConfigError("taus must be positive")
    cfg = RunConfig(
        mode=mode, seed=top_seed, population=pop,
        population_file=path("population_file"), rows=doc.get("rows"), cols=doc.get("cols"),
        sample_file=path("sample_file"), chain_dir=path("chain_dir"),
        priors=priors, mcmc=mcmc,
        replications=doc.get("replications", DESK_REPLICATIONS),
        initial_fraction=doc.get("initial_fraction"), workers=doc.get("workers", 1),
        experiment=doc.get("experiment", "model"), truths=truths, taus=taus,
        full_scale=full_scale,
    )
    return cfg.scaled()


def load_config(path, mode: Optional[str] = None, seed: Optional[int] = None,
                full_scale: bool = False) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: configuration file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc, mode, path.parent, seed, full_scale)
