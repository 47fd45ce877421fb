"""Config parsing, canonical serialization, and digest stability."""

import json

import pytest

from dprobust import UsageError, parse_experiment
from dprobust.config import canonical_json, config_digest, derive_seed


def base_doc():
    return {
        "mixture": {"theta": 1.0, "sigma": 0.2, "K": 4.0, "d": 2},
        "n_train": 100, "n_test": 100,
        "model": {"kind": "linear", "weights": "ones"},
        "loss": "logistic_binary",
        "dp": {"clip": {"kind": "standard", "R": 0.1}, "noise_multiplier": 1.0},
        "optimizer": {"kind": "sgd", "lr": 2.0},
        "epochs": 2, "batch_size": 50, "seed": 0,
        "attacks": [{"norm": "linf", "gamma": 0.075}],
    }


class TestCanonicalJson:
    def test_key_order_invariance(self):
        a = {"b": 1, "a": {"y": 2.0, "x": 3.0}}
        b = {"a": {"x": 3.0, "y": 2.0}, "b": 1}
        assert canonical_json(a) == canonical_json(b)
        assert config_digest(a) == config_digest(b)

    def test_float_formatting_17_digits(self):
        text = canonical_json({"v": 0.1})
        assert json.loads(text)["v"] == "0.10000000000000001"

    def test_distinct_values_distinct_digests(self):
        assert config_digest({"v": 0.1}) != config_digest({"v": 0.2})
        assert config_digest({"v": 1}) != config_digest({"v": "1"})

    def test_digest_shape(self):
        d = config_digest(base_doc())
        assert len(d) == 16
        int(d, 16)  # hex

    def test_unserializable_rejected(self):
        with pytest.raises(UsageError):
            canonical_json({"v": object()})


class TestDeriveSeed:
    def test_stable_and_distinct(self):
        a = derive_seed("abcd", 0)
        assert a == derive_seed("abcd", 0)
        assert a != derive_seed("abcd", 1)
        assert a != derive_seed("abce", 0)
        assert 0 <= a < 2**64


class TestParseExperiment:
    def test_round_trip_digest_stable(self):
        cfg = parse_experiment(base_doc())
        assert cfg.digest() == parse_experiment(base_doc()).digest()

    def test_overrides_change_digest(self):
        cfg = parse_experiment(base_doc())
        assert cfg.with_overrides(R=0.2).digest() != cfg.digest()
        assert cfg.with_overrides(lr=1.0).digest() != cfg.digest()
        assert cfg.with_overrides(seed=5).digest() != cfg.digest()

    def test_needs_exactly_one_data_source(self):
        doc = base_doc()
        doc["dataset_path"] = "data.csv"
        with pytest.raises(UsageError):
            parse_experiment(doc)
        doc.pop("mixture")
        parse_experiment(doc)  # path alone is fine
        doc.pop("dataset_path")
        with pytest.raises(UsageError):
            parse_experiment(doc)

    def test_unknown_keys_rejected(self):
        doc = base_doc()
        doc["observer"] = True
        with pytest.raises(UsageError):
            parse_experiment(doc)
        doc = base_doc()
        doc["optimizer"]["nesterov"] = True
        with pytest.raises(UsageError):
            parse_experiment(doc)
        doc = base_doc()
        doc["model"]["depth"] = 3
        with pytest.raises(UsageError):
            parse_experiment(doc)

    def test_dp_parsing(self):
        doc = base_doc()
        doc["dp"] = None
        assert parse_experiment(doc).dp is None
        doc["dp"] = {"clip": {"kind": "automatic"}, "noise_multiplier": 0.5}
        cfg = parse_experiment(doc)
        assert cfg.dp.clip.kind == "automatic"
        doc["dp"] = {"clip": {"kind": "fancy"}}
        with pytest.raises(UsageError):
            parse_experiment(doc)

    def test_optimizer_variants(self):
        doc = base_doc()
        doc["optimizer"] = {"kind": "adam", "lr": 0.1, "beta1": 0.8}
        assert parse_experiment(doc).optimizer.beta1 == 0.8
        doc["optimizer"] = {"kind": "rmsprop", "lr": 0.1, "alpha": 0.95, "eps": 0.0}
        opt = parse_experiment(doc).optimizer
        assert opt.alpha == 0.95 and opt.eps_rms == 0.0
        doc["optimizer"] = {"kind": "adagrad", "lr": 0.1}
        with pytest.raises(UsageError):
            parse_experiment(doc)

    def test_mlp_model(self):
        doc = base_doc()
        doc["model"] = {"kind": "mlp", "hidden": [8, 4], "outputs": 2,
                        "activation": "tanh"}
        doc["loss"] = "softmax_ce"
        cfg = parse_experiment(doc)
        assert cfg.model.hidden == (8, 4)

    def test_metadata_passthrough(self):
        doc = base_doc()
        doc["metadata"] = {"epsilon": 15, "delta": 1e-4}
        cfg = parse_experiment(doc)
        assert cfg.metadata["epsilon"] == 15
        # metadata participates in the digest
        assert cfg.digest() != parse_experiment(base_doc()).digest()
