"""Prompt construction and natural-language explanation of a classification.

``build_prompt`` turns an attribution into a fixed-format system/user prompt
pair. The prompt can be sent to a chat-completions HTTP endpoint with
``call_llm``, or rendered locally and deterministically with
``render_offline``.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from dataclasses import dataclass

import httpx

from .attribution import DEFAULT_TOP_K, Attribution, top_k_features

SYSTEM_PROMPT = (
    "You are an expert neuro-oncologist. Analyze the provided quantitative features to explain "
    "the tumor classification. Do NOT hallucinate clinical history not present in the data."
)
UNCERTAINTY_THRESHOLD = 0.85
UNCERTAINTY_SENTENCE = (
    "Confidence is below 85%, so this interpretation is tentative and should be checked "
    "against the full imaging study by a specialist."
)


@dataclass(frozen=True)
class Triplet:
    name: str
    value: float
    phi: float


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    predicted_class: str
    confidence: float
    triplets: tuple = ()

    def to_text(self) -> str:
        return f"[system]\n{self.system_text}\n\n[user]\n{self.user_text}\n"


@dataclass
class ExplainConfig:
    backend: str = "offline"  # "offline" or "http"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "TUMORMORPH_LLM_KEY"
    timeout: float = 30.0
    k: int = DEFAULT_TOP_K
    retries: int = 2
    backoff: float = 0.5  # seconds before the first retry; doubles each time

    def __post_init__(self):
        if self.backend not in ("offline", "http"):
            raise ValueError(f"backend must be 'offline' or 'http', got {self.backend!r}")


def format_user_text(predicted_class: str, confidence: float, triplets) -> str:
    parts = [f"Diagnosis: {predicted_class} ({confidence * 100:.1f}%). Key Features: "]
    for t in triplets:
        parts.append(f"{t.name}: {t.value:.4f} (Impact: {t.phi:+.4f}); ")
    return "".join(parts)


def build_prompt(attr: Attribution, k: int = DEFAULT_TOP_K) -> PromptBundle:
    """System/user prompt pair carrying the prediction and its top-``k`` features."""
    if len(attr.feature_names) == 0:
        raise ValueError("attribution has no features")
    vals = attr.values if attr.values is not None else [math.nan] * len(attr.feature_names)
    trips = tuple(
        Triplet(attr.feature_names[j], float(vals[j]), float(attr.phi[j, attr.predicted]))
        for j in top_k_features(attr, k)
    )
    user = format_user_text(attr.predicted_class, attr.confidence, trips)
    return PromptBundle(SYSTEM_PROMPT, user, attr.predicted_class, float(attr.confidence), trips)


# ---------------------------------------------------------------------------
# offline rendering

# (high-value phrase, low-value phrase); no phrase names any other feature
PHRASES = {
    "irregularity": (
        "large global fluctuations of the radial boundary profile, typical of a non-spherical mass",
        "a globally smooth, near-circular outline",
    ),
    "roughness": (
        "fine-scale jaggedness along the margin",
        "a margin with little point-to-point jaggedness",
    ),
    "area": (
        "a large lesion cross-section on this slice",
        "a small lesion cross-section on this slice",
    ),
    "mean_radius": (
        "a large overall lesion scale",
        "a compact overall lesion scale",
    ),
    "mean_local_entropy": (
        "high boundary entropy: irregular, information-dense boundary segments consistent with infiltrative growth",
        "low boundary entropy: locally predictable margin segments, as seen with expansile growth",
    ),
    "weight_range": (
        "strongly uneven complexity between different stretches of the margin",
        "evenly distributed complexity along the margin",
    ),
    "enhancement_factor": (
        "boundary variability that is amplified once complex segments are emphasized",
        "boundary variability that barely changes when complex segments are emphasized",
    ),
    "fractal_dimension": (
        "a space-filling, self-similar contour",
        "a contour close to a simple smooth curve",
    ),
    "approx_entropy": (
        "an irregular, hard-to-predict boundary sequence",
        "a repetitive, predictable boundary sequence",
    ),
    "sample_entropy": (
        "low template regularity in the boundary sequence",
        "high template regularity in the boundary sequence",
    ),
    "perm_entropy": (
        "diverse ordinal patterns along the outline",
        "a limited repertoire of ordinal patterns along the outline",
    ),
    "lyapunov": (
        "sensitive, chaotic-looking divergence of nearby boundary trajectories",
        "stable, non-divergent boundary dynamics",
    ),
    "rei": (
        "ring enhancement, with a bright rim around a darker core as seen with necrosis",
        "homogeneous intensity without ring enhancement",
    ),
    "d_skull": (
        "a lesion sitting deep, away from the brain surface",
        "a lesion sitting close to the brain surface",
    ),
    "contact_ratio": (
        "broad contact between the lesion margin and the brain surface, as in extra-axial growth",
        "little contact with the brain surface, suggesting an intra-axial location",
    ),
    "mls": (
        "displacement of midline structures (mass effect)",
        "absence of meaningful midline displacement",
    ),
    "iw_irregularity": (
        "global shape fluctuation concentrated in complex margin stretches",
        "little global fluctuation even after emphasizing complex margin stretches",
    ),
    "iw_roughness": (
        "jaggedness concentrated in complex margin stretches",
        "little jaggedness even after emphasizing complex margin stretches",
    ),
}
DEEP_PHRASES = (
    "a high score on a learned deep-feature component",
    "a low score on a learned deep-feature component",
)
GENERIC_PHRASES = ("a comparatively high value of this descriptor", "a comparatively low value of this descriptor")


class UnknownFeatureWarning(UserWarning):
    pass


def _table(name: str):
    table = PHRASES.get(name)
    if table is not None:
        return table, True
    if name.startswith("pca_"):
        return DEEP_PHRASES, True
    return GENERIC_PHRASES, False


def unknown_features(bundle: PromptBundle) -> list:
    return [t.name for t in bundle.triplets if not _table(t.name)[1]]


def render_offline(bundle: PromptBundle, feature_metadata: dict | None = None) -> str:
    """Deterministic template narrative for a prompt bundle.

    ``feature_metadata`` maps feature names to a reference value (typically
    the training median). A feature's wording describes a high or low value
    relative to that reference; without one, the sign of the impact decides.
    Each sentence states whether the feature supports or weighs against the
    predicted class. Names not in the phrase table get a generic phrase and
    raise an :class:`UnknownFeatureWarning`.
    """
    meta = feature_metadata or {}
    lines = [f"The model classifies this lesion as {bundle.predicted_class} ({bundle.confidence * 100:.1f}% confidence)."]
    for t in bundle.triplets:
        table, known = _table(t.name)
        if not known:
            warnings.warn(f"no phrase for feature {t.name!r}; using a generic description", UnknownFeatureWarning, stacklevel=2)
        ref = meta.get(t.name)
        if ref is None:
            high, where = t.phi >= 0, ""
        else:
            high = t.value >= ref
            where = f" ({'at or above' if high else 'below'} the reference {ref:.4f})"
        verb = "supports" if t.phi >= 0 else "weighs against"
        phrase = table[0] if high else table[1]
        lines.append(f"{t.name} = {t.value:.4f}{where} {verb} this class (impact {t.phi:+.4f}), reflecting {phrase}.")
    if bundle.confidence < UNCERTAINTY_THRESHOLD:
        lines.append(UNCERTAINTY_SENTENCE)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# HTTP backend


class LlmError(RuntimeError):
    pass


class LlmConfigError(LlmError):
    pass


class LlmNetworkError(LlmError):
    pass


class LlmTimeoutError(LlmError):
    pass


class LlmHttpError(LlmError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class LlmResponseError(LlmError):
    pass


def request_body(bundle: PromptBundle, model: str) -> dict:
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": bundle.user_text},
        ],
        "temperature": 0,
    }


def _retryable(exc: LlmError) -> bool:
    if isinstance(exc, (LlmNetworkError, LlmTimeoutError)):
        return True
    return isinstance(exc, LlmHttpError) and (exc.status == 429 or exc.status >= 500)


def call_llm(bundle: PromptBundle, config: ExplainConfig, sleep=time.sleep) -> str:
    """POST the prompt to a chat-completions endpoint and return the reply text.

    Retries ``config.retries`` times with exponential backoff on network
    errors, timeouts, 429 and 5xx responses. Never falls back to the offline
    renderer.
    """
    if config.backend != "http":
        raise LlmConfigError(f"backend is {config.backend!r}, not 'http'")
    if not config.endpoint:
        raise LlmConfigError("no endpoint configured")
    key = os.environ.get(config.api_key_env)
    if not key:
        raise LlmConfigError(f"environment variable {config.api_key_env} is not set")

    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    body = request_body(bundle, config.model)
    delay = config.backoff
    last = None
    with httpx.Client(timeout=config.timeout) as client:
        for attempt in range(config.retries + 1):
            if attempt:
                sleep(delay)
                delay *= 2
            try:
                resp = client.post(config.endpoint, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last = LlmTimeoutError(f"request timed out after {config.timeout}s: {exc}")
            except httpx.TransportError as exc:
                last = LlmNetworkError(str(exc))
            else:
                if 200 <= resp.status_code < 300:
                    return _reply_text(resp)
                last = LlmHttpError(resp.status_code, resp.text)
            if not _retryable(last):
                break
    raise last


def _reply_text(resp: httpx.Response) -> str:
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise LlmResponseError(f"unexpected response shape: {exc!r}") from None


def explain(bundle: PromptBundle, config: ExplainConfig | None = None, feature_metadata: dict | None = None) -> str:
    config = config or ExplainConfig()
    if config.backend == "http":
        return call_llm(bundle, config)
    return render_offline(bundle, feature_metadata)
