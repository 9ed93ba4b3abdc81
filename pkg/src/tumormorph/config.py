"""Run configuration: every tunable of the pipeline in one flat namespace.

Config files are TOML documents of top-level ``key = value`` pairs; unknown
keys are rejected. Command-line ``--set key=value`` overrides are applied on
top.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import tomli

from .attribution import DEFAULT_TOP_K
from .explain import ExplainConfig
from .features import ExtractionParams
from .gbt import BoostParams


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # boundary signal and IWBN
    n_points: int = 256
    iwbn_lambda: float = 0.5
    entropy_window: int = 15
    entropy_bins: int = 8
    # chaotic descriptors
    entropy_m: int = 2
    entropy_r: float = 0.2
    perm_order: int = 3
    perm_delay: int = 1
    entropy_signal: str = "std"
    lyap_dim: int = 3
    lyap_tau: int = 1
    lyap_theiler: int = 8
    lyap_steps: int = 12
    lyap_fit_start: int = 1
    lyap_fit_end: int = 8
    # clinical biomarkers
    rei_epsilon: float = 1e-6
    contact_px: float = 2.0
    # fusion and boosting
    pca_variance: float = 0.95
    n_estimators: int = 300
    max_depth: int = 8
    learning_rate: float = 0.05
    reg_lambda: float = 1.0
    gamma: float = 0.0
    cv_folds: int = 5
    cv_seed: int = 42
    # explanation
    top_k: int = DEFAULT_TOP_K
    explain_backend: str = "offline"
    llm_endpoint: str = ""
    llm_model: str = ""
    llm_key_env: str = "TUMORMORPH_LLM_KEY"
    llm_timeout: float = 30.0

    def extraction_params(self) -> ExtractionParams:
        return ExtractionParams(
            n_points=self.n_points,
            iwbn_lambda=self.iwbn_lambda,
            entropy_window=self.entropy_window,
            entropy_bins=self.entropy_bins,
            entropy_m=self.entropy_m,
            entropy_r=self.entropy_r,
            perm_order=self.perm_order,
            perm_delay=self.perm_delay,
            entropy_signal=self.entropy_signal,
            lyap_dim=self.lyap_dim,
            lyap_tau=self.lyap_tau,
            lyap_theiler=self.lyap_theiler,
            lyap_steps=self.lyap_steps,
            lyap_fit=(self.lyap_fit_start, self.lyap_fit_end),
            rei_epsilon=self.rei_epsilon,
            contact_px=self.contact_px,
        )

    def boost_params(self) -> BoostParams:
        return BoostParams(self.n_estimators, self.max_depth, self.learning_rate, self.reg_lambda, self.gamma)

    def explain_config(self) -> ExplainConfig:
        return ExplainConfig(
            backend=self.explain_backend,
            endpoint=self.llm_endpoint,
            model=self.llm_model,
            api_key_env=self.llm_key_env,
            timeout=self.llm_timeout,
            k=self.top_k,
        )

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    if kind == "float" and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    expected = {"int": int, "float": float, "str": str}[kind]
    if isinstance(value, bool) or not isinstance(value, expected):
        raise ConfigError(f"{key}: expected {kind}, got {type(value).__name__} {value!r}")
    return value


def apply_overrides(cfg: RunConfig, values: dict, source: str = "config") -> RunConfig:
    unknown = sorted(set(values) - set(_TYPES))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    for k, v in values.items():
        setattr(cfg, k, _coerce(k, v))
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then ``key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        with open(path, "rb") as fh:
            try:
                doc = tomli.load(fh)
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        apply_overrides(cfg, doc, str(path))
    parsed = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        key = key.strip()
        try:
            parsed[key] = tomli.loads(f"v = {raw.strip()}")["v"]
        except tomli.TOMLDecodeError:
            parsed[key] = raw.strip()
    return apply_overrides(cfg, parsed, "--set")
