import json
import math

import numpy as np
import pytest

from xidiar.domain import (
    DEV_DOMAINS,
    SINGLE_SPEAKER,
    DOMAIN_PROFILES,
    UNKNOWN,
    Activation,
    ClusteringMethod,
    DomainDecision,
    DomainProfile,
    Engine,
    Layer,
    MlpModel,
    ProfileRegistry,
    classify_domain,
    default_registry,
    mlp_forward,
    profile_for,
)
from xidiar.errors import ConfigError, DimensionError, ModelError

DIM = 5


def stage1_fixture(p_single, orientation="single"):
    p = p_single if orientation == "single" else 1 - p_single
    logit = math.log(p / (1 - p))
    return MlpModel((Layer(np.zeros((1, DIM)), [logit], Activation.SIGMOID),), {"positive_class": orientation})


def stage2_fixture(posteriors):
    post = np.array([posteriors.get(c, 0.0) for c in DEV_DOMAINS])
    rest = (1 - post.sum()) / np.sum(post == 0)
    post[post == 0] = rest
    return MlpModel((Layer(np.zeros((len(DEV_DOMAINS), DIM)), np.log(post), Activation.SOFTMAX),), {})


def hand_forward(layers, x):
    h = list(x)
    for w, b, act in layers:
        z = [sum(w[i][j] * h[j] for j in range(len(h))) + b[i] for i in range(len(b))]
        if act == "tanh":
            h = [math.tanh(v) for v in z]
        elif act == "sigmoid":
            h = [1 / (1 + math.exp(-v)) for v in z]
        elif act == "softmax":
            m = max(z)
            e = [math.exp(v - m) for v in z]
            h = [v / sum(e) for v in e]
        else:
            h = z
    return h


def test_identity_layer():
    model = MlpModel((Layer(np.eye(3), np.zeros(3), Activation.IDENTITY),))
    np.testing.assert_array_equal(mlp_forward(model, [1.0, -2, 3]), [1, -2, 3])


def test_zero_sigmoid_is_half():
    model = MlpModel((Layer(np.zeros((1, 4)), [0.0], "sigmoid"),))
    assert mlp_forward(model, np.arange(4.0))[0] == 0.5


def test_random_mlp_matches_hand_oracle(rng):
    shapes = [(7, 5, "tanh"), (6, 7, "sigmoid"), (4, 6, "softmax")]
    raw = [(rng.normal(size=(o, i)), rng.normal(size=o), a) for o, i, a in shapes]
    model = MlpModel(tuple(Layer(w, b, a) for w, b, a in raw))
    for _ in range(10):
        x = rng.normal(size=5) * 3
        expect = hand_forward([(w.tolist(), b.tolist(), a) for w, b, a in raw], x.tolist())
        assert np.max(np.abs(mlp_forward(model, x) - expect)) < 1e-9


def test_sigmoid_extremes_finite():
    model = MlpModel((Layer(np.ones((1, 1)), [0.0], "sigmoid"),))
    assert mlp_forward(model, [-1000.0])[0] == 0.0
    assert mlp_forward(model, [1000.0])[0] == 1.0


def test_mlp_dimension_errors():
    with pytest.raises(DimensionError):
        MlpModel((Layer(np.ones((3, 2)), np.zeros(3), "tanh"), Layer(np.ones((1, 4)), [0.0], "sigmoid")))
    model = MlpModel((Layer(np.ones((1, 2)), [0.0], "sigmoid"),))
    with pytest.raises(DimensionError):
        mlp_forward(model, [1.0, 2.0, 3.0])
    with pytest.raises(ModelError):
        Layer(np.array([[np.inf]]), [0.0], "tanh")


X = np.zeros(DIM)


def test_single_speaker_short_circuit():
    d = classify_domain(stage1_fixture(0.95), stage2_fixture({"SCOTUS": 0.9}), X)
    assert d.label == SINGLE_SPEAKER and d.stage2_posteriors is None
    assert d.stage1_prob == pytest.approx(0.95)


def test_low_posterior_is_unknown():
    d = classify_domain(stage1_fixture(0.1), stage2_fixture({"SCOTUS": 0.55}), X)
    assert d.label == UNKNOWN
    assert max(d.stage2_posteriors.values()) == pytest.approx(0.55)


def test_confident_domain():
    d = classify_domain(stage1_fixture(0.1), stage2_fixture({"SCOTUS": 0.9}), X)
    assert d.label == "SCOTUS"


@pytest.mark.parametrize(
    "p1, post, label",
    [
        (0.6, 0.9, SINGLE_SPEAKER),
        (0.59, 0.9, "SCOTUS"),
        (0.59, 0.6, "SCOTUS"),
        (0.59, 0.59, UNKNOWN),
        (0.0001, 0.3, UNKNOWN),
    ],
)
def test_threshold_edges(p1, post, label):
    assert classify_domain(stage1_fixture(p1), stage2_fixture({"SCOTUS": post}), X).label == label


def test_multi_orientation_flag():
    d = classify_domain(stage1_fixture(0.95, "multi"), stage2_fixture({"SCOTUS": 0.9}), X)
    assert d.label == SINGLE_SPEAKER
    assert d.stage1_prob == pytest.approx(0.95)


def test_bad_orientation():
    s1 = stage1_fixture(0.2)
    bad = MlpModel(s1.layers, {"positive_class": "both"})
    with pytest.raises(ModelError):
        classify_domain(bad, stage2_fixture({}), X)


def test_stage2_class_names_from_metadata():
    s2 = MlpModel((Layer(np.zeros((2, DIM)), [0.0, 3.0], "softmax"),), {"classes": ["a", "b"]})
    assert classify_domain(stage1_fixture(0.1), s2, X).label == "b"


def test_posteriors_must_sum_to_one():
    with pytest.raises(ModelError):
        DomainDecision(0.1, {"a": 0.5, "b": 0.4}, "a")


def test_profile_lookup():
    scotus = profile_for("SCOTUS")
    assert (scotus.clustering, scotus.k_min, scotus.k_max, scotus.ahc_threshold, scotus.pca_dim) == (
        ClusteringMethod.AHC, 5, 10, 0.46, 12)
    mixer = profile_for("MIXER6")
    assert (mixer.clustering, mixer.k) == (ClusteringMethod.KMEDOIDS, 2)
    other = profile_for(UNKNOWN)
    assert (other.clustering, other.k_min, other.k_max, other.ahc_threshold) == (ClusteringMethod.AHC, 2, 6, 0.1)
    assert profile_for(SINGLE_SPEAKER).clustering is ClusteringMethod.NONE
    assert profile_for("scotus") == scotus
    with pytest.raises(ConfigError):
        profile_for("Podcasts")


def test_kmedoids_rows():
    t = {p.name: p for p in DOMAIN_PROFILES}
    assert [t[n].k for n in ("ADOS", "DCIEM", "MIXER6", "CIR")] == [2, 2, 2, 4]


def test_engines():
    t = {p.name: p.engine for p in DOMAIN_PROFILES}
    assert {n for n, e in t.items() if e is Engine.KALDI} == {"SEEDLingS", "VAST", "other"}


def test_packaged_registry_is_table():
    assert default_registry() == ProfileRegistry(DOMAIN_PROFILES)


def test_registry_round_trip_bit_exact(tmp_path):
    reg = ProfileRegistry(DOMAIN_PROFILES)
    text = reg.dumps()
    again = ProfileRegistry.loads(text)
    assert again == reg and again.dumps() == text
    reg.save(tmp_path / "p.json")
    assert (tmp_path / "p.json").read_text() == text
    assert ProfileRegistry.load(tmp_path / "p.json") == reg


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(clustering="AHC", k_min=2, k_max=1, ahc_threshold=0.5),
        dict(clustering="AHC", k_min=1, k_max=3),
        dict(clustering="KMEDOIDS"),
        dict(clustering="KMEDOIDS", k=2, pca_dim=3),
        dict(clustering="KMEDOIDS", k=2, ahc_threshold=0.3),
        dict(clustering="NONE", k=2),
        dict(clustering="AHC", k_min=1, k_max=3, ahc_threshold=0.5, change_threshold=2),
    ],
)
def test_profile_validation(kwargs):
    with pytest.raises(ConfigError):
        DomainProfile("x", **kwargs)


def test_registry_rejects_unknown_keys_and_missing_other():
    obj = json.loads(ProfileRegistry(DOMAIN_PROFILES).dumps())
    obj["profiles"][0]["colour"] = "red"
    with pytest.raises(ConfigError):
        ProfileRegistry.loads(json.dumps(obj))
    with pytest.raises(ConfigError):
        ProfileRegistry([p for p in DOMAIN_PROFILES if p.name != "other"])
    with pytest.raises(ConfigError):
        ProfileRegistry.loads("{not json")
