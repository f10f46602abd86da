"""Experiment configuration: JSON files checked against the bundled schema."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .errors import ConfigError
from .flowfield import canonical_json, sha256_hex
from .synthdata import PRESETS, GridSpec, WomersleyParams, default_pressure_modes
from .training import LossWeights, TrainConfig

__all__ = ["ExperimentConfig", "load_config", "schema", "DEFAULT_LAMBDAS"]

DEFAULT_LAMBDAS = (1e-10, 1e-8, 1e-6, 1e-5, 1e-4, 1e-2, 1.0)


def schema() -> dict:
    text = resources.files("pulsefield").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


def _validate(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config key {where}: {err.message}")


@dataclass
class ExperimentConfig:
    """Validated configuration; ``raw`` keeps the JSON document as given."""

    raw: dict

    def __post_init__(self):
        if not isinstance(self.raw, dict):
            raise ConfigError("config must be a JSON object")
        _validate(self.raw)

    def _section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def with_overrides(self, seed: int | None = None, out: str | None = None
                       ) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["seed"] = int(seed)
        if out is not None:
            raw["out"] = str(out)
        return ExperimentConfig(raw)

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def out(self) -> str:
        return str(self.raw.get("out", "pulsefield-out"))

    @property
    def dataset(self) -> dict:
        return self._section("dataset")

    @property
    def model(self) -> dict:
        return self._section("model")

    def digest(self) -> str:
        return sha256_hex(canonical_json(self.raw))

    # dataset -------------------------------------------------------------
    def _preset(self):
        name = self.dataset.get("preset", "exp12")
        return PRESETS[name]

    def womersley(self) -> WomersleyParams:
        d = self.dataset
        pr = self._preset()
        R = d.get("R", 2.5e-3)
        rho = d.get("rho", 1060.0)
        mu = d.get("mu", 3e-3)
        alpha = d.get("alpha", pr.alpha)
        modes = default_pressure_modes(R, rho, mu, alpha, d.get("steady_centerline", 0.15),
                                       d.get("pulse_centerline", 0.15))
        try:
            return WomersleyParams(modes, R, rho, mu, alpha=alpha, Re=d.get("Re", 500.0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def grid(self) -> GridSpec:
        return GridSpec(**self.dataset.get("grid", {}))

    @property
    def noise_level(self) -> float:
        return float(self.dataset.get("noise_level", self._preset().noise_level))

    @property
    def dropout_fraction(self) -> float:
        return float(self.dataset.get("dropout_fraction", self._preset().dropout_fraction))

    @property
    def period_count(self) -> int:
        return int(self.dataset.get("period_count", 1))

    # training ------------------------------------------------------------
    def train_config(self) -> TrainConfig:
        t = self._section("train")
        return TrainConfig(seed=self.seed, **t)

    def weights(self) -> LossWeights:
        w = self._section("weights")
        return LossWeights(data=w.get("lambda_data", 1.0), cycle=w.get("lambda_cycle", 1.0),
                           phys=w.get("lambda_phys", 1e-6), tv=w.get("lambda_tv", 1.0),
                           occ=w.get("lambda_occ", 1.0))

    def lambdas(self) -> list[float]:
        lam = self._section("ablate").get("lambdas", list(DEFAULT_LAMBDAS))
        return sorted(float(v) for v in lam)


def load_config(source) -> ExperimentConfig:
    """Read and validate a config from a path or an already-parsed dict."""
    if isinstance(source, dict):
        return ExperimentConfig(copy.deepcopy(source))
    try:
        with open(source) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc.strerror}") from None
    return ExperimentConfig(raw)
