"""Experiment configuration: JSON schema, validation, canonical digests.

A single JSON document describes one training/evaluation run.  Digests are
sha256 over a canonical serialization (sorted keys, floats rendered with 17
significant digits) so they are stable across runs, platforms, and dict
ordering; rows keyed by digest can therefore be resumed safely.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attacks import AttackConfig
from .dp import ClipMode, DPConfig, OptimizerConfig
from .errors import UsageError
from .mixture import MixtureSpec, NormFamily
from .models import LinearModel, LossKind, Mlp, MlpSpec


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, compact, 17-significant-digit floats."""
    return json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return format(float(obj), ".17g")
    raise UsageError(f"cannot canonicalize value of type {type(obj).__name__}")


def config_digest(obj) -> str:
    """16-hex-char stable identity of a config-shaped object."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def derive_seed(digest: str, seed: int) -> int:
    """Per-cell RNG root: a 64-bit hash of (config digest, seed index)."""
    raw = hashlib.sha256(f"{digest}:{seed}".encode("utf-8")).digest()
    return int.from_bytes(raw[:8], "big")


@dataclass(frozen=True)
class ModelConfig:
    """How to build the classifier: linear (ones or random init) or MLP."""

    kind: str = "linear"
    weights: str = "ones"  # linear: "ones" | "random"
    train_w: bool = False
    train_b: bool = True
    init_b: float = 0.0
    hidden: tuple = ()
    outputs: int = 1
    activation: str = "relu"

    def build(self, d: int, rng: np.random.Generator):
        if self.kind == "linear":
            if self.weights == "ones":
                return LinearModel.ones(d, train_w=self.train_w,
                                        train_b=self.train_b, b=self.init_b)
            model = LinearModel.init(d, rng, train_w=self.train_w,
                                     train_b=self.train_b, b=self.init_b)
            return model
        spec = MlpSpec(widths=(d, *self.hidden, self.outputs), activation=self.activation)
        return Mlp.init(spec, rng)

    def to_jsonable(self) -> dict:
        if self.kind == "linear":
            return {
                "kind": "linear", "weights": self.weights,
                "train_w": self.train_w, "train_b": self.train_b,
                "init_b": self.init_b,
            }
        return {
            "kind": "mlp", "hidden": list(self.hidden),
            "outputs": self.outputs, "activation": self.activation,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs: data, model, loss, DP, optimizer, attacks."""

    mixture: MixtureSpec | None
    dataset_path: str | None
    n_train: int
    n_test: int
    model: ModelConfig
    loss: LossKind
    dp: DPConfig | None
    optimizer: OptimizerConfig
    epochs: int
    batch_size: int
    seed: int
    attacks: tuple = ()
    metadata: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        doc = {
            "mixture": None if self.mixture is None else {
                "theta": self.mixture.theta, "sigma": self.mixture.sigma,
                "K": self.mixture.K, "d": self.mixture.d,
            },
            "dataset_path": self.dataset_path,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "model": self.model.to_jsonable(),
            "loss": self.loss.value,
            "dp": None if self.dp is None else {
                "clip": {"kind": self.dp.clip.kind, "R": self.dp.clip.R},
                "noise_multiplier": self.dp.noise_multiplier,
            },
            "optimizer": _optimizer_jsonable(self.optimizer),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "attacks": [_attack_jsonable(a) for a in self.attacks],
            "metadata": self.metadata,
        }
        return doc

    def digest(self) -> str:
        return config_digest(self.to_jsonable())

    def with_overrides(self, *, R=None, lr=None, seed=None,
                       noise_multiplier=None, dp_off=False) -> "ExperimentConfig":
        cfg = self
        if R is not None:
            if cfg.dp is None:
                raise UsageError("cannot set R on a non-DP config")
            cfg = replace(cfg, dp=DPConfig(clip=ClipMode.standard(R),
                                           noise_multiplier=cfg.dp.noise_multiplier))
        if noise_multiplier is not None:
            if cfg.dp is None:
                raise UsageError("cannot set noise on a non-DP config")
            cfg = replace(cfg, dp=DPConfig(clip=cfg.dp.clip,
                                           noise_multiplier=noise_multiplier))
        if dp_off:
            cfg = replace(cfg, dp=None)
        if lr is not None:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, lr=lr))
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        return cfg


def _optimizer_jsonable(opt: OptimizerConfig) -> dict:
    doc = {"kind": opt.kind, "lr": opt.lr}
    if opt.kind == "sgd":
        doc["momentum"] = opt.momentum
    elif opt.kind == "adam":
        doc.update(beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps_adam)
    else:
        doc.update(alpha=opt.alpha, eps=opt.eps_rms)
    return doc


def _attack_jsonable(a: AttackConfig) -> dict:
    return {
        "norm": a.norm.value, "gamma": a.gamma, "steps": a.steps,
        "step_size": a.step_size, "random_start": a.random_start,
    }


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise UsageError(f"{context}: missing required key {key!r}")
    return doc[key]


def parse_attack(doc: dict, context: str = "attack") -> AttackConfig:
    known = {"norm", "gamma", "steps", "step_size", "random_start", "name"}
    _reject_unknown(doc, known, context)
    return AttackConfig(
        norm=NormFamily.parse(_require(doc, "norm", context)),
        gamma=float(_require(doc, "gamma", context)),
        steps=int(doc.get("steps", 20)),
        step_size=None if doc.get("step_size") is None else float(doc["step_size"]),
        random_start=bool(doc.get("random_start", False)),
    )


def parse_mixture(doc: dict, context: str = "mixture") -> MixtureSpec:
    _reject_unknown(doc, {"theta", "sigma", "K", "d"}, context)
    return MixtureSpec(
        theta=float(_require(doc, "theta", context)),
        sigma=float(_require(doc, "sigma", context)),
        K=float(_require(doc, "K", context)),
        d=int(_require(doc, "d", context)),
    )


def _parse_model(doc: dict) -> ModelConfig:
    kind = doc.get("kind", "linear")
    if kind == "linear":
        _reject_unknown(doc, {"kind", "weights", "train_w", "train_b", "init_b"}, "model")
        weights = doc.get("weights", "ones")
        if weights not in ("ones", "random"):
            raise UsageError(f"model.weights must be 'ones' or 'random', got {weights!r}")
        return ModelConfig(
            kind="linear", weights=weights,
            train_w=bool(doc.get("train_w", False)),
            train_b=bool(doc.get("train_b", True)),
            init_b=float(doc.get("init_b", 0.0)),
        )
    if kind == "mlp":
        _reject_unknown(doc, {"kind", "hidden", "outputs", "activation"}, "model")
        return ModelConfig(
            kind="mlp", hidden=tuple(int(h) for h in _require(doc, "hidden", "model")),
            outputs=int(doc.get("outputs", 1)),
            activation=doc.get("activation", "relu"),
        )
    raise UsageError(f"model.kind must be 'linear' or 'mlp', got {kind!r}")


def _parse_dp(doc) -> DPConfig | None:
    if doc is None:
        return None
    _reject_unknown(doc, {"clip", "noise_multiplier"}, "dp")
    clip_doc = _require(doc, "clip", "dp")
    kind = clip_doc.get("kind")
    if kind == "standard":
        clip = ClipMode.standard(float(_require(clip_doc, "R", "dp.clip")))
    elif kind == "automatic":
        clip = ClipMode.automatic()
    else:
        raise UsageError(f"dp.clip.kind must be standard|automatic, got {kind!r}")
    return DPConfig(clip=clip, noise_multiplier=float(doc.get("noise_multiplier", 0.0)))


def _parse_optimizer(doc: dict) -> OptimizerConfig:
    kind = doc.get("kind", "sgd")
    lr = float(_require(doc, "lr", "optimizer"))
    if kind == "sgd":
        _reject_unknown(doc, {"kind", "lr", "momentum"}, "optimizer")
        return OptimizerConfig.sgd(lr, momentum=float(doc.get("momentum", 0.0)))
    if kind == "adam":
        _reject_unknown(doc, {"kind", "lr", "beta1", "beta2", "eps"}, "optimizer")
        return OptimizerConfig.adam(
            lr, beta1=float(doc.get("beta1", 0.9)),
            beta2=float(doc.get("beta2", 0.999)), eps=float(doc.get("eps", 1e-8)),
        )
    if kind == "rmsprop":
        _reject_unknown(doc, {"kind", "lr", "alpha", "eps"}, "optimizer")
        return OptimizerConfig.rmsprop(
            lr, alpha=float(doc.get("alpha", 0.99)), eps=float(doc.get("eps", 1e-8)),
        )
    raise UsageError(f"optimizer.kind must be sgd|adam|rmsprop, got {kind!r}")


def _reject_unknown(doc: dict, known: set, context: str) -> None:
    unknown = set(doc) - known
    if unknown:
        raise UsageError(f"{context}: unknown keys {sorted(unknown)}")


def parse_experiment(doc: dict) -> ExperimentConfig:
    known = {
        "mixture", "dataset_path", "n_train", "n_test", "model", "loss", "dp",
        "optimizer", "epochs", "batch_size", "seed", "attacks", "metadata",
    }
    _reject_unknown(doc, known, "config")
    mixture_doc = doc.get("mixture")
    dataset_path = doc.get("dataset_path")
    if (mixture_doc is None) == (dataset_path is None):
        raise UsageError("config needs exactly one of 'mixture' or 'dataset_path'")
    return ExperimentConfig(
        mixture=None if mixture_doc is None else parse_mixture(mixture_doc),
        dataset_path=dataset_path,
        n_train=int(doc.get("n_train", 10_000)),
        n_test=int(doc.get("n_test", 10_000)),
        model=_parse_model(doc.get("model", {})),
        loss=LossKind.parse(doc.get("loss", "logistic_binary")),
        dp=_parse_dp(doc.get("dp")),
        optimizer=_parse_optimizer(_require(doc, "optimizer", "config")),
        epochs=int(doc.get("epochs", 1)),
        batch_size=int(doc.get("batch_size", 100)),
        seed=int(doc.get("seed", 0)),
        attacks=tuple(parse_attack(a, f"attacks[{i}]")
                      for i, a in enumerate(doc.get("attacks", []))),
        metadata=dict(doc.get("metadata", {})),
    )


def load_experiment(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    return parse_experiment(doc)
