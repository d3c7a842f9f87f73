"""TOML experiment configuration: parsing, validation, field-level errors.

A config has a [family] table (component catalog or exponential-family
spec), an [experiment] table (thetas, block lengths, rate, trials, seed,
mode), and optional [estimator], [quadrature], [unbounded], [output]
tables. All randomness in a run derives from the single experiment seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

import tomli

from .errors import ConfigError
from .sources import (
    Cos,
    ExpFamily,
    Family,
    MixtureFamily,
    Poly,
    Sin,
    Support,
    Triangular,
    TruncatedGaussian,
    Uniform,
    as_param,
)

MODES = ("two_stage", "nn_first_stage", "matched_oracle")


@dataclass(frozen=True)
class EstimatorSettings:
    pair_cap: int = 4096
    subsample_seed: int = 0
    min_axis_step: float = 1.0 / 64


@dataclass(frozen=True)
class UnboundedSettings:
    enabled: bool = False
    delta: float = 0.1
    threshold: float = 0.25  # distortion cap M before a letter is replaced
    ref_letter: float = 0.5


@dataclass(frozen=True)
class OutputSettings:
    directory: Path = Path("out")
    csv: str = "trials.csv"
    summary: str = "summary.txt"
    plotdata: str = "plotdata.csv"

    def csv_path(self) -> Path:
        return self.directory / self.csv

    def summary_path(self) -> Path:
        return self.directory / self.summary

    def plotdata_path(self) -> Path:
        return self.directory / self.plotdata


@dataclass(frozen=True)
class ExperimentConfig:
    family: Family
    thetas: Tuple[Tuple[float, ...], ...]
    n_values: Tuple[int, ...]
    rate: float
    p: float
    trials: int
    seed: int
    mode: str
    blocks_per_stream: int = 16
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    unbounded: UnboundedSettings = field(default_factory=UnboundedSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    quad_points: int = 2 ** 14
    bank_kind: str = "auto"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"experiment.mode must be one of {MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("experiment.trials must be >= 1")
        if self.blocks_per_stream < 1:
            raise ConfigError("experiment.blocks_per_stream must be >= 1")
        for n in self.n_values:
            if n < 4:
                raise ConfigError(f"experiment.n_values entries must be >= 4, got {n}")
        if len(self.n_values) != len(set(self.n_values)):
            raise ConfigError("experiment.n_values must be distinct")
        for theta in self.thetas:
            as_param(self.family, theta)  # raises DomainError with the offender


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing field '{key}' in [{where}]")
    return table[key]


def _parse_component(entry: dict, support: Support, where: str):
    kind = _require(entry, "kind", where)
    try:
        if kind == "uniform":
            return Uniform(a=float(entry["a"]), b=float(entry["b"]))
        if kind == "truncated_gaussian":
            return TruncatedGaussian(
                mu=float(entry["mu"]),
                sigma=float(entry["sigma"]),
                lo=float(entry.get("lo", support.lo)),
                hi=float(entry.get("hi", support.hi)),
            )
        if kind == "triangular":
            return Triangular(a=float(entry["a"]), c=float(entry["c"]), b=float(entry["b"]))
    except KeyError as exc:
        raise ConfigError(f"component {kind!r} in [{where}] is missing field {exc}") from None
    raise ConfigError(f"unknown component kind {kind!r} in [{where}]")


def _parse_stat(entry: dict, where: str):
    kind = _require(entry, "kind", where)
    try:
        if kind == "poly":
            return Poly(coeffs=tuple(float(c) for c in entry["coeffs"]))
        if kind == "cos":
            return Cos(freq=float(entry["freq"]), phase=float(entry.get("phase", 0.0)))
        if kind == "sin":
            return Sin(freq=float(entry["freq"]), phase=float(entry.get("phase", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"stat {kind!r} in [{where}] is missing field {exc}") from None
    raise ConfigError(f"unknown stat kind {kind!r} in [{where}]")


def parse_family(table: dict) -> Family:
    kind = _require(table, "kind", "family")
    sup = _require(table, "support", "family")
    if not (isinstance(sup, (list, tuple)) and len(sup) == 2):
        raise ConfigError("family.support must be a [lo, hi] pair")
    support = Support(lo=float(sup[0]), hi=float(sup[1]))
    name = str(table.get("name", kind))
    if kind == "mixture":
        comps = _require(table, "components", "family")
        components = tuple(_parse_component(c, support, "family.components") for c in comps)
        return MixtureFamily(components=components, support=support, name=name)
    if kind == "exponential":
        ref = _require(table, "reference", "family")
        box = _require(table, "theta_box", "family")
        stats = _require(table, "stats", "family")
        theta_box = tuple((float(lo), float(hi)) for lo, hi in box)
        return ExpFamily(
            reference=_parse_component(ref, support, "family.reference"),
            stats=tuple(_parse_stat(s, "family.stats") for s in stats),
            theta_box=theta_box,
            support=support,
            name=name,
        )
    raise ConfigError(f"unknown family kind {kind!r}")


def load_family(path) -> Family:
    with open(path, "rb") as fh:
        doc = tomli.load(fh)
    if "family" not in doc:
        raise ConfigError(f"{path} has no [family] table")
    return parse_family(doc["family"])


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        doc = tomli.load(fh)
    if "family" not in doc:
        raise ConfigError(f"{path} has no [family] table")
    if "experiment" not in doc:
        raise ConfigError(f"{path} has no [experiment] table")
    family = parse_family(doc["family"])
    exp = doc["experiment"]
    thetas = _require(exp, "thetas", "experiment")
    if "seed" not in exp:
        raise ConfigError("missing field 'seed' in [experiment] (no entropy from the environment)")
    est_tab = doc.get("estimator", {})
    estimator = EstimatorSettings(
        pair_cap=int(est_tab.get("pair_cap", 4096)),
        subsample_seed=int(est_tab.get("subsample_seed", 0)),
        min_axis_step=float(est_tab.get("min_axis_step", 1.0 / 64)),
    )
    unb_tab = doc.get("unbounded", {})
    unbounded = UnboundedSettings(
        enabled=bool(unb_tab.get("enabled", False)),
        delta=float(unb_tab.get("delta", 0.1)),
        threshold=float(unb_tab.get("M", unb_tab.get("threshold", 0.25))),
        ref_letter=float(unb_tab.get("ref_letter", 0.5)),
    )
    out_tab = doc.get("output", {})
    output = OutputSettings(
        directory=Path(out_tab.get("dir", "out")),
        csv=str(out_tab.get("csv", "trials.csv")),
        summary=str(out_tab.get("summary", "summary.txt")),
        plotdata=str(out_tab.get("plotdata", "plotdata.csv")),
    )
    quad_points = int(doc.get("quadrature", {}).get("points", 2 ** 14))
    return ExperimentConfig(
        family=family,
        thetas=tuple(tuple(float(t) for t in th) for th in thetas),
        n_values=tuple(int(n) for n in _require(exp, "n_values", "experiment")),
        rate=float(_require(exp, "rate", "experiment")),
        p=float(exp.get("p", 2.0)),
        trials=int(_require(exp, "trials", "experiment")),
        seed=int(exp["seed"]),
        mode=str(exp.get("mode", "two_stage")),
        blocks_per_stream=int(exp.get("blocks_per_stream", 16)),
        estimator=estimator,
        unbounded=unbounded,
        output=output,
        quad_points=quad_points,
        bank_kind=str(exp.get("bank_kind", "auto")),
    )
