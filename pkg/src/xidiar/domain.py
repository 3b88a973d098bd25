"""Two-stage domain classifier (inference only) and the per-domain profile registry."""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, ModelError

DETECTION_THRESHOLD = 0.6
SINGLE_SPEAKER = "SINGLE_SPEAKER"
UNKNOWN = "UNKNOWN"

# stage-2 output order when the model file does not name its classes
DEV_DOMAINS = (
    "LibriVox",
    "SEEDLingS",
    "CIR",
    "ADOS",
    "SCOTUS",
    "DCIEM",
    "RT-04S",
    "SLX",
    "MIXER6",
    "VAST",
    "YouthPoint",
)

# reference topology of the classifiers the weights come from
CLASSIFIER_INPUT_DIM = 100
CLASSIFIER_HIDDEN = 2048


class Activation(str, enum.Enum):
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


def _softmax(z):
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


_ACTIVATIONS = {
    Activation.TANH: np.tanh,
    Activation.SIGMOID: _sigmoid,
    Activation.SOFTMAX: _softmax,
    Activation.IDENTITY: lambda z: z,
}


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: Activation

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weight, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.bias, dtype=np.float64))
        if b.shape != (w.shape[0],):
            raise DimensionError(f"bias of shape {b.shape} for weight {w.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelError("MLP layer has non-finite weights")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[Layer, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ModelError("MLP has no layers")
        for a, b in zip(layers[:-1], layers[1:]):
            if b.weight.shape[1] != a.weight.shape[0]:
                raise DimensionError(f"layer dims do not chain: {a.weight.shape} -> {b.weight.shape}")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "layers": [
                {"activation": l.activation.value, "weight": l.weight.tolist(), "bias": l.bias.tolist()}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MlpModel":
        try:
            layers = tuple(Layer(np.array(l["weight"]), np.array(l["bias"]), l["activation"]) for l in obj["layers"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed MLP description: {exc}") from exc
        return cls(layers, dict(obj.get("metadata", {})))


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != model.input_dim:
        raise DimensionError(f"input dim {h.shape[-1]} != model input dim {model.input_dim}")
    if not np.all(np.isfinite(h)):
        raise DimensionError("non-finite MLP input")
    for layer in model.layers:
        h = _ACTIVATIONS[layer.activation](h @ layer.weight.T + layer.bias)
    return h


@dataclass(frozen=True)
class DomainDecision:
    stage1_prob: float  # probability of the single-speaker class
    stage2_posteriors: dict[str, float] | None
    label: str

    def __post_init__(self):
        if self.stage2_posteriors is not None:
            total = sum(self.stage2_posteriors.values())
            if abs(total - 1.0) > 1e-6:
                raise ModelError(f"stage-2 posteriors sum to {total}")


def classify_domain(stage1: MlpModel, stage2: MlpModel, x, threshold: float = DETECTION_THRESHOLD) -> DomainDecision:
    """Single-speaker detector first; otherwise the 11-way domain posterior.

    ``stage1.metadata["positive_class"]`` says what the stage-1 neuron
    detects: ``"single"`` (default) or ``"multi"``.
    """
    out1 = mlp_forward(stage1, x).ravel()
    if out1.size != 1:
        raise DimensionError(f"stage-1 classifier must have one output, got {out1.size}")
    p = float(out1[0])
    orientation = stage1.metadata.get("positive_class", "single")
    if orientation not in ("single", "multi"):
        raise ModelError(f"unknown stage-1 positive_class {orientation!r}")
    p_single = p if orientation == "single" else 1.0 - p
    if p_single >= threshold:
        return DomainDecision(p_single, None, SINGLE_SPEAKER)

    post = mlp_forward(stage2, x).ravel()
    classes = tuple(stage2.metadata.get("classes", DEV_DOMAINS))
    if len(classes) != post.size:
        raise ModelError(f"stage-2 has {post.size} outputs but {len(classes)} class names")
    posteriors = {c: float(v) for c, v in zip(classes, post)}
    best = int(np.argmax(post))
    label = classes[best] if post[best] >= threshold else UNKNOWN
    return DomainDecision(p_single, posteriors, label)


class ClusteringMethod(str, enum.Enum):
    NONE = "NONE"
    AHC = "AHC"
    KMEDOIDS = "KMEDOIDS"


class Engine(str, enum.Enum):
    SD = "SD"
    KALDI = "KALDI"


@dataclass(frozen=True)
class DomainProfile:
    name: str
    clustering: ClusteringMethod
    k_min: int | None = None
    k_max: int | None = None
    k: int | None = None
    ahc_threshold: float | None = None
    pca_dim: int | None = None
    engine: Engine = Engine.SD
    change_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "clustering", ClusteringMethod(self.clustering))
        object.__setattr__(self, "engine", Engine(self.engine))
        m = self.clustering
        ahc_fields = (self.k_min, self.k_max, self.ahc_threshold)
        if m is ClusteringMethod.AHC:
            if any(v is None for v in ahc_fields) or self.k is not None:
                raise ConfigError(f"profile {self.name}: AHC needs k_min, k_max, ahc_threshold and no k")
            if not 1 <= self.k_min <= self.k_max:
                raise ConfigError(f"profile {self.name}: bad corridor [{self.k_min}, {self.k_max}]")
        elif m is ClusteringMethod.KMEDOIDS:
            if self.k is None or any(v is not None for v in ahc_fields):
                raise ConfigError(f"profile {self.name}: k-medoids needs k only")
            if self.pca_dim is not None:
                # PLDA is trained on dev data, which has no conversation PCA
                raise ConfigError(f"profile {self.name}: k-medoids over PLDA scores takes no pca_dim")
            if self.k < 1:
                raise ConfigError(f"profile {self.name}: k must be positive")
        else:
            if self.k is not None or any(v is not None for v in ahc_fields) or self.pca_dim is not None:
                raise ConfigError(f"profile {self.name}: NONE takes no clustering parameters")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ConfigError(f"profile {self.name}: pca_dim must be positive")
        if not 0 <= self.change_threshold <= 1:
            raise ConfigError(f"profile {self.name}: change_threshold must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clustering"] = self.clustering.value
        d["engine"] = self.engine.value
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "DomainProfile":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown profile fields: {sorted(unknown)}")
        return cls(**obj)


OTHER = "other"

DOMAIN_PROFILES = (
    DomainProfile("LibriVox", ClusteringMethod.NONE),
    DomainProfile("SEEDLingS", ClusteringMethod.AHC, 2, 3, None, 0.62, 6, Engine.KALDI),
    DomainProfile("CIR", ClusteringMethod.KMEDOIDS, k=4),
    DomainProfile("ADOS", ClusteringMethod.KMEDOIDS, k=2),
    DomainProfile("SCOTUS", ClusteringMethod.AHC, 5, 10, None, 0.46, 12),
    DomainProfile("DCIEM", ClusteringMethod.KMEDOIDS, k=2),
    DomainProfile("RT-04S", ClusteringMethod.AHC, 3, 10, None, 0.46, 6),
    DomainProfile("SLX", ClusteringMethod.AHC, 2, 6, None, 0.762, 6),
    DomainProfile("MIXER6", ClusteringMethod.KMEDOIDS, k=2),
    DomainProfile("VAST", ClusteringMethod.AHC, 1, 9, None, 0.58, 3, Engine.KALDI),
    DomainProfile("YouthPoint", ClusteringMethod.AHC, 3, 5, None, 0.54, 9),
    DomainProfile(OTHER, ClusteringMethod.AHC, 2, 6, None, 0.1, None, Engine.KALDI),
)


class ProfileRegistry:
    def __init__(self, profiles):
        self.profiles = {}
        for p in profiles:
            if p.name in self.profiles:
                raise ConfigError(f"duplicate profile {p.name}")
            self.profiles[p.name] = p
        if OTHER not in self.profiles:
            raise ConfigError(f"registry must define the {OTHER!r} profile")

    def __eq__(self, other):
        return isinstance(other, ProfileRegistry) and list(self.profiles.values()) == list(other.profiles.values())

    def __iter__(self):
        return iter(self.profiles.values())

    def names(self) -> list[str]:
        return list(self.profiles)

    def get(self, label: str) -> DomainProfile:
        return profile_for(label, self)

    def dumps(self) -> str:
        return json.dumps({"profiles": [p.to_dict() for p in self]}, indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ProfileRegistry":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"profile registry is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict) or set(obj) != {"profiles"} or not isinstance(obj["profiles"], list):
            raise ConfigError('profile registry must be {"profiles": [...]}')
        return cls(DomainProfile.from_dict(p) for p in obj["profiles"])

    @classmethod
    def load(cls, path) -> "ProfileRegistry":
        return cls.loads(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.dumps())


def default_registry() -> ProfileRegistry:
    text = resources.files("xidiar").joinpath("data/profiles.json").read_text()
    return ProfileRegistry.loads(text)


def profile_for(label: str, registry: ProfileRegistry | None = None) -> DomainProfile:
    registry = registry or default_registry()
    if label == UNKNOWN:
        return registry.profiles[OTHER]
    if label == SINGLE_SPEAKER:
        label = "LibriVox"
    if label in registry.profiles:
        return registry.profiles[label]
    folded = {k.lower(): v for k, v in registry.profiles.items()}
    if label.lower() in folded:
        return folded[label.lower()]
    raise ConfigError(f"no profile registered for domain {label!r}")
