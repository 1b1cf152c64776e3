"""Seven-class expression CNN: conv+BN, conv+BN, 2x2 max-pool, FC-512, softmax head."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import tensor as T
from .expressions import N_CLASSES, ExpressionClass, ExpressionDistribution
from .landmarks import PROFILE_LENGTH
from .tensor import ActivationKind, BatchNormState, GradTape
from .training import Sgd, TrainConfig, TrainingError, epoch_rng, glorot_uniform, shuffle_batches

log = logging.getLogger(__name__)

PROFILES = {"full-64": 64, "reduced-32": 32}
CONV1_FILTERS = 32
CONV2_FILTERS = 64
KERNEL = 3


@dataclass(frozen=True)
class CnnConfig:
    input_size: int = 64
    padding: str = "valid"
    fc_units: int = 512
    fc_activation: ActivationKind = ActivationKind.SIGMOID_EQ1
    head_activation: ActivationKind = ActivationKind.SOFTMAX_STANDARD
    aux_landmarks: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.input_size not in PROFILES.values():
            supported = ", ".join(f"{k} ({v}x{v})" for k, v in PROFILES.items())
            raise ValueError(f"unsupported input size {self.input_size}; supported profiles: {supported}")
        if self.padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if not self.head_activation.is_softmax:
            raise ValueError("head activation must be a softmax kind")

    @classmethod
    def for_profile(cls, profile: str, **kw) -> "CnnConfig":
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        return cls(input_size=PROFILES[profile], **kw)

    def shape_trace(self) -> list[tuple[int, ...]]:
        """Activation shapes from conv1 output to the head output."""
        s = self.input_size
        shrink = 0 if self.padding == "same" else KERNEL - 1
        c1 = s - shrink
        c2 = c1 - shrink
        if c2 % 2:
            raise ValueError(f"conv2 output {c2}x{c2} cannot be 2x2 pooled")
        p = c2 // 2
        flat = p * p * CONV2_FILTERS + (PROFILE_LENGTH if self.aux_landmarks else 0)
        return [(c1, c1, CONV1_FILTERS), (c2, c2, CONV2_FILTERS), (p, p, CONV2_FILTERS),
                (flat,), (self.fc_units,), (N_CLASSES,)]

    def to_dict(self) -> dict:
        return {"input_size": self.input_size, "padding": self.padding, "fc_units": self.fc_units,
                "fc_activation": self.fc_activation.value, "head_activation": self.head_activation.value,
                "aux_landmarks": self.aux_landmarks, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "CnnConfig":
        d = dict(d)
        d["fc_activation"] = ActivationKind(d["fc_activation"])
        d["head_activation"] = ActivationKind(d["head_activation"])
        return cls(**d)


@dataclass
class CnnModel:
    config: CnnConfig
    params: dict[str, np.ndarray]
    bn: dict[str, BatchNormState] = field(default_factory=dict)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.params.items()}

    def copy(self) -> "CnnModel":
        return CnnModel(self.config, {k: v.copy() for k, v in self.params.items()},
                        {k: BatchNormState(s.mean.copy(), s.var.copy()) for k, s in self.bn.items()})


def expected_shapes(config: CnnConfig) -> dict[str, tuple[int, ...]]:
    flat = config.shape_trace()[3][0]
    return {
        "conv1.kernels": (KERNEL, KERNEL, 1, CONV1_FILTERS),
        "bn1.gamma": (CONV1_FILTERS,), "bn1.beta": (CONV1_FILTERS,),
        "conv2.kernels": (KERNEL, KERNEL, CONV1_FILTERS, CONV2_FILTERS),
        "bn2.gamma": (CONV2_FILTERS,), "bn2.beta": (CONV2_FILTERS,),
        "fc.weights": (flat, config.fc_units), "fc.bias": (config.fc_units,),
        "head.weights": (config.fc_units, N_CLASSES), "head.bias": (N_CLASSES,),
    }


def build_model(config: CnnConfig = CnnConfig()) -> CnnModel:
    """Glorot-uniform weights, unit BN scale, zero shifts and biases, all from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    shapes = expected_shapes(config)
    params = {}
    for name, shape in shapes.items():
        if name.endswith("kernels"):
            kh, kw, c, f = shape
            params[name] = glorot_uniform(rng, shape, kh * kw * c, kh * kw * f)
        elif name.endswith("weights"):
            params[name] = glorot_uniform(rng, shape, shape[0], shape[1])
        elif name.endswith("gamma"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    bn = {"bn1": BatchNormState.fresh(CONV1_FILTERS), "bn2": BatchNormState.fresh(CONV2_FILTERS)}
    return CnnModel(config, params, bn)


def forward_batch(model: CnnModel, images: np.ndarray, aux: np.ndarray | None = None,
                  mode: str = "infer", tape: GradTape | None = None,
                  params: dict[str, np.ndarray] | None = None):
    """Run N x H x W x 1 images through the network.

    Returns ``(logits, scores, bn_states)``; ``bn_states`` are the updated
    running statistics in train mode and the model's own in infer mode.
    ``params`` overrides ``model.params`` (used with tape-watched copies).
    """
    cfg = model.config
    p = model.params if params is None else params
    if images.ndim != 4 or images.shape[1:] != (cfg.input_size, cfg.input_size, 1):
        raise T.ShapeError(f"expected N x {cfg.input_size} x {cfg.input_size} x 1 images, got {images.shape}")
    if cfg.aux_landmarks != (aux is not None):
        want = "expects" if cfg.aux_landmarks else "does not accept"
        raise ValueError(f"model {want} auxiliary landmark features")

    h = T.conv2d(images, p["conv1.kernels"], padding=cfg.padding, tape=tape)
    h, bn1 = T.batch_norm(h, p["bn1.gamma"], p["bn1.beta"], model.bn["bn1"], mode=mode, tape=tape)
    h = T.conv2d(h, p["conv2.kernels"], padding=cfg.padding, tape=tape)
    h, bn2 = T.batch_norm(h, p["bn2.gamma"], p["bn2.beta"], model.bn["bn2"], mode=mode, tape=tape)
    h = T.max_pool2d(h, 2, tape=tape)
    h = T.flatten(h, batched=True, tape=tape)
    if aux is not None:
        aux = np.asarray(aux, dtype=np.float64).reshape(len(images), PROFILE_LENGTH)
        h = T.concat(h, aux, tape=tape)
    h = T.dense(h, p["fc.weights"], p["fc.bias"], tape=tape)
    h = T.activate(cfg.fc_activation, h, tape=tape)
    logits = T.dense(h, p["head.weights"], p["head.bias"], tape=tape)
    scores = T.activate(cfg.head_activation, logits, tape=tape)
    return logits, scores, {"bn1": bn1, "bn2": bn2}


def predict_scores(model: CnnModel, images: np.ndarray, aux: np.ndarray | None = None,
                   chunk: int = 64) -> np.ndarray:
    """Inference-mode head scores for a stack of images, N x 7."""
    out = []
    for i in range(0, len(images), chunk):
        a = None if aux is None else aux[i:i + chunk]
        out.append(forward_batch(model, images[i:i + chunk], a)[1])
    return np.concatenate(out, axis=0) if out else np.zeros((0, N_CLASSES))


def forward(model: CnnModel, image: np.ndarray, aux: np.ndarray | None = None) -> ExpressionDistribution:
    """Score one H x W x 1 image (values in [0, 1])."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    a = None if aux is None else np.asarray(aux, dtype=np.float64).reshape(1, -1)
    scores = forward_batch(model, image[None], a)[1][0]
    normalized = model.config.head_activation is ActivationKind.SOFTMAX_STANDARD
    return ExpressionDistribution(scores, normalized=normalized)


def classify(model: CnnModel, image: np.ndarray, aux: np.ndarray | None = None) -> ExpressionClass:
    """Most likely class; ties go to the lowest class index."""
    return forward(model, image, aux).dominant()


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: float


def batch_loss(model: CnnModel, scores_or_logits, labels, tape):
    # standard head trains on logits with the fused, stable loss
    if model.config.head_activation is ActivationKind.SOFTMAX_STANDARD:
        return T.softmax_cross_entropy(scores_or_logits[0], labels, tape=tape)
    return T.nll_from_probs(scores_or_logits[1], labels, tape=tape)


def train(model: CnnModel, images: np.ndarray, labels, config: TrainConfig = TrainConfig(),
          aux: np.ndarray | None = None,
          on_epoch: Callable[[CnnModel, EpochMetrics], None] | None = None,
          ) -> tuple[CnnModel, list[EpochMetrics]]:
    """Mini-batch cross-entropy training; the input model is left untouched.

    Epoch accuracy is the running training accuracy over the epoch's batches
    (predictions taken before each update). ``on_epoch`` sees the model after
    every epoch.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if len(labels) != len(images):
        raise TrainingError(f"{len(images)} images but {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= N_CLASSES:
        raise TrainingError(f"labels must be class indices 0..{N_CLASSES - 1}")

    model = model.copy()
    opt = Sgd(config)
    rng = epoch_rng(config.seed)
    history = []
    for epoch in range(config.effective_epochs):
        total_loss, correct = 0.0, 0
        for b, idx in enumerate(shuffle_batches(len(images), config.batch_size, rng)):
            tape = GradTape()
            watched = {k: tape.watch(k, v) for k, v in model.params.items()}
            a = None if aux is None else aux[idx]
            out = forward_batch(model, images[idx], a, mode="train", tape=tape, params=watched)
            loss = batch_loss(model, out, labels[idx], tape)
            lv = float(loss)
            if not np.isfinite(lv):
                raise TrainingError(f"non-finite loss {lv} at epoch {epoch + 1}, batch {b}; "
                                    f"max |logit| = {np.abs(out[0]).max():.3g}")
            grads = tape.backward(loss)
            # the SIGMOID_EQ1 zero branch swallows NaN, so a diverged network can still report a finite loss
            bad = [k for k in sorted(grads) if not np.all(np.isfinite(grads[k]))]
            if bad:
                raise TrainingError(f"non-finite gradient for {', '.join(bad)} at epoch {epoch + 1}, batch {b}")
            opt.step(model.params, grads)
            model.bn = out[2]
            total_loss += lv * len(idx)
            correct += int((np.argmax(out[1], axis=1) == labels[idx]).sum())
        m = EpochMetrics(epoch + 1, total_loss / len(images), correct / len(images))
        log.info("epoch %d loss %.6f acc %.6f", m.epoch, m.loss, m.accuracy)
        history.append(m)
        if on_epoch is not None:
            on_epoch(model, m)
    return model, history


def zeroed(model: CnnModel) -> CnnModel:
    """Copy with every parameter set to zero (uniform output for any input)."""
    m = model.copy()
    for v in m.params.values():
        v[...] = 0.0
    return m


def with_config(model: CnnModel, **kw) -> CnnModel:
    """Copy sharing parameters but with activation kinds swapped."""
    return CnnModel(replace(model.config, **kw), model.params, model.bn)
