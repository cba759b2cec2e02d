"""Enriched CNN+LSTM sequence classifiers.

Two variants:

* SE -- spatial enrichment: the five planes (p, q, m, s, g) feed one
  convolutional encoder as input channels.
* TE -- temporal enrichment: three encoders consume the flow image, the
  strain image replicated to three channels, and the gray frame replicated
  to three channels; their feature vectors are concatenated in (F, S, G)
  order before the recurrent stage.

Per-frame features run through a stacked LSTM; a single fully-connected
layer projects the final step's output to class logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.checkpoint import load_checkpoint, save_checkpoint, CheckpointError
from .nn.layers import Conv2D, Dense, Flatten, LayerStack, MaxPool2D, ReLU
from .nn.losses import cross_entropy_from_logits, softmax_predict
from .nn.recurrent import LSTMStack
from .pipeline import EnrichedFrame

VARIANTS = ("SE", "TE")

# channel plan of the stacked (C, H, W) input: flow (p, q, m), strain, gray
FLOW_PLANES = slice(0, 3)
STRAIN_PLANE = 3
GRAY_PLANE = 4
N_PLANES = 5

DESK_CONV_BLOCKS = ((8,), (16,), (32,))
PAPER_CONV_BLOCKS = ((64, 64), (128, 128), (256, 256, 256),
                     (512, 512, 512), (512, 512, 512))


class ModelError(Exception):
    pass


@dataclass
class ModelConfig:
    variant: str = "SE"
    side: int = 32
    conv_blocks: tuple[tuple[int, ...], ...] = DESK_CONV_BLOCKS
    feature_dim: int = 64
    lstm_sizes: tuple[int, ...] = (32,)
    n_classes: int = 3
    feature_tap: str = "fc"          # "fc": last FC features; "pre_fc": flattened conv features
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}")
        if self.feature_tap not in ("fc", "pre_fc"):
            raise ModelError(f"unknown feature_tap {self.feature_tap!r}")
        if self.side % (2 ** len(self.conv_blocks)) != 0:
            raise ModelError(f"side {self.side} not divisible by 2^{len(self.conv_blocks)} pooling")

    @property
    def input_channels(self) -> int:
        return 5 if self.variant == "SE" else 3

    @property
    def encoder_count(self) -> int:
        return 1 if self.variant == "SE" else 3

    @property
    def conv_output_side(self) -> int:
        return self.side // (2 ** len(self.conv_blocks))

    @property
    def flat_dim(self) -> int:
        return self.conv_output_side ** 2 * self.conv_blocks[-1][-1]

    @property
    def encoder_feature_dim(self) -> int:
        return self.feature_dim if self.feature_tap == "fc" else self.flat_dim

    @property
    def sequence_feature_length(self) -> int:
        """Length of the per-frame feature the LSTM consumes."""
        return self.encoder_count * self.encoder_feature_dim

    def shape_summary(self) -> dict:
        """Static shape ledger, computable without allocating parameters."""
        return {
            "variant": self.variant,
            "input_shape": (self.side, self.side, self.input_channels),
            "encoder_count": self.encoder_count,
            "encoder_feature_dim": self.encoder_feature_dim,
            "sequence_feature_length": self.sequence_feature_length,
            "n_classes": self.n_classes,
        }


def desk_config(variant: str = "SE", n_classes: int = 3, seed: int = 0, **kw) -> ModelConfig:
    return ModelConfig(variant=variant, n_classes=n_classes, seed=seed, **kw)


def paper_config(variant: str = "SE", n_classes: int = 5, seed: int = 0) -> ModelConfig:
    """Full-scale preset: 224x224 input, five conv blocks, 4096-d features,
    one 1024-unit LSTM layer.  Far beyond desk compute; provided for its
    shape contract."""
    return ModelConfig(variant=variant, side=224, conv_blocks=PAPER_CONV_BLOCKS,
                       feature_dim=4096, lstm_sizes=(1024,), n_classes=n_classes,
                       seed=seed)


def build_encoder(cfg: ModelConfig, in_channels: int, rng: np.random.Generator,
                  prefix: str) -> LayerStack:
    """Conv blocks (each ending in 2x2 max-pool), then flatten and, for the
    default feature tap, one FC layer with ReLU."""
    layers: list = []
    last_conv_index = -1
    ch_in = in_channels
    for b, block in enumerate(cfg.conv_blocks):
        for c, ch_out in enumerate(block):
            layers.append(Conv2D(ch_in, ch_out, ksize=3, pad=1, rng=rng,
                                 name=f"{prefix}.conv{b}_{c}"))
            last_conv_index = len(layers) - 1
            layers.append(ReLU())
            ch_in = ch_out
        layers.append(MaxPool2D(2))
    layers.append(Flatten())
    if cfg.feature_tap == "fc":
        layers.append(Dense(cfg.flat_dim, cfg.feature_dim, rng=rng, name=f"{prefix}.fc"))
        layers.append(ReLU())
    stack = LayerStack(layers)
    stack.last_conv_index = last_conv_index
    stack.in_channels = in_channels
    return stack


class ElrcnModel:
    """SE/TE sequence classifier over (B, T, 5, side, side) enriched stacks."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 0xE7])
        if cfg.variant == "SE":
            self.encoders = [build_encoder(cfg, 5, rng, "enc")]
        else:
            self.encoders = [build_encoder(cfg, 3, rng, f"enc_{tag}")
                             for tag in ("flow", "strain", "gray")]
        self.lstm = LSTMStack(cfg.sequence_feature_length, cfg.lstm_sizes, rng, name="lstm")
        self.head = Dense(self.lstm.output_size, cfg.n_classes, rng=rng, name="head")
        # construction-time shape ledger
        if cfg.variant == "SE":
            assert self.encoders[0].in_channels == 5
        else:
            assert len(self.encoders) == 3
            assert cfg.sequence_feature_length == 3 * cfg.encoder_feature_dim
        assert self.head.w.shape[1] == cfg.n_classes

    # -- parameter plumbing ------------------------------------------------

    def parameters(self):
        out = []
        for enc in self.encoders:
            out.extend(enc.params())
        out.extend(self.lstm.params())
        out.extend(self.head.params())
        return out

    def encoder_parameters(self):
        out = []
        for enc in self.encoders:
            out.extend(enc.params())
        return out

    def checkpoint_entries(self):
        return [(p.name, p.kind, p.data) for p in self.parameters()]

    # -- forward/backward --------------------------------------------------

    def _encoder_inputs(self, flat: np.ndarray) -> list[np.ndarray]:
        if self.cfg.variant == "SE":
            return [flat]
        return [
            flat[:, FLOW_PLANES],
            np.repeat(flat[:, STRAIN_PLANE:STRAIN_PLANE + 1], 3, axis=1),
            np.repeat(flat[:, GRAY_PLANE:GRAY_PLANE + 1], 3, axis=1),
        ]

    def _encode(self, x: np.ndarray) -> np.ndarray:
        b, t = x.shape[:2]
        flat = x.reshape((b * t,) + x.shape[2:])
        feats = [enc.forward(part)
                 for enc, part in zip(self.encoders, self._encoder_inputs(flat))]
        phi = feats[0] if len(feats) == 1 else np.concatenate(feats, axis=1)
        return phi.reshape(b, t, -1)

    def _encode_backward(self, dphi: np.ndarray) -> None:
        b, t, d = dphi.shape
        flat = dphi.reshape(b * t, d)
        fd = self.cfg.encoder_feature_dim
        for k, enc in enumerate(self.encoders):
            enc.backward(flat[:, k * fd:(k + 1) * fd])

    def forward_logits(self, x: np.ndarray) -> np.ndarray:
        """(B, T, C, H, W) -> final-step logits (B, n_classes)."""
        hs = self.lstm.forward(self._encode(x))
        return self.head.forward(hs[:, -1, :])

    def batch_loss(self, x: np.ndarray, y: np.ndarray, loss_on: str = "final") -> float:
        phi = self._encode(x)
        hs = self.lstm.forward(phi)
        if loss_on == "final":
            loss, _ = cross_entropy_from_logits(self.head.forward(hs[:, -1, :]), y)
        else:
            b, t, hd = hs.shape
            logits = self.head.forward(hs.reshape(b * t, hd))
            loss, _ = cross_entropy_from_logits(logits, np.repeat(y, t))
        return loss

    def training_step(self, x: np.ndarray, y: np.ndarray, loss_on: str = "final") -> float:
        phi = self._encode(x)
        hs = self.lstm.forward(phi)
        b, t, hd = hs.shape
        if loss_on == "final":
            logits = self.head.forward(hs[:, -1, :])
            loss, dlogits = cross_entropy_from_logits(logits, y)
            dhs = np.zeros_like(hs)
            dhs[:, -1, :] = self.head.backward(dlogits)
        else:
            logits = self.head.forward(hs.reshape(b * t, hd))
            loss, dlogits = cross_entropy_from_logits(logits, np.repeat(y, t))
            dhs = self.head.backward(dlogits).reshape(b, t, hd)
        dphi = self.lstm.backward(dhs)
        self._encode_backward(dphi)
        return loss

    def backprop_class_score(self, x: np.ndarray, target_class: int) -> np.ndarray:
        """Gradient of the final-step class score w.r.t. the per-frame
        features, leaving encoder caches intact for deeper inspection."""
        if not 0 <= target_class < self.cfg.n_classes:
            raise ModelError(f"class {target_class} out of range (|C|={self.cfg.n_classes})")
        phi = self._encode(x)
        hs = self.lstm.forward(phi)
        logits = self.head.forward(hs[:, -1, :])
        dlogits = np.zeros_like(logits)
        dlogits[:, target_class] = 1.0
        dhs = np.zeros_like(hs)
        dhs[:, -1, :] = self.head.backward(dlogits)
        return self.lstm.backward(dhs)

    # -- prediction ---------------------------------------------------------

    def predict_distributions(self, x: np.ndarray) -> np.ndarray:
        return softmax_predict(self.forward_logits(x))

    def predict_classes(self, x: np.ndarray) -> np.ndarray:
        return self.forward_logits(x).argmax(axis=1)


def predict_sequence(model: ElrcnModel, sequence: np.ndarray) -> tuple[np.ndarray, int]:
    """Distribution and predicted class for one (T, 5, H, W) enriched stack.

    Argmax ties break toward the lower class index.
    """
    dist = model.predict_distributions(sequence[None])[0]
    return dist, int(dist.argmax())


def encode_frame_se(model: ElrcnModel, ef: EnrichedFrame) -> np.ndarray:
    """Feature vector of one enriched frame under the 5-channel encoder."""
    if model.cfg.variant != "SE":
        raise ModelError("encode_frame_se requires an SE model")
    return model.encoders[0].forward(ef.stacked()[None])[0]


def encode_frame_te(model: ElrcnModel, ef: EnrichedFrame) -> np.ndarray:
    """Concatenated (F, S, G) encoder features of one enriched frame."""
    if model.cfg.variant != "TE":
        raise ModelError("encode_frame_te requires a TE model")
    stacked = ef.stacked()[None]
    parts = [enc.forward(part)[0]
             for enc, part in zip(model.encoders, model._encoder_inputs(stacked))]
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_model(model: ElrcnModel, path) -> None:
    save_checkpoint(model.checkpoint_entries(), path)


def load_model_weights(model: ElrcnModel, path) -> ElrcnModel:
    """Restore every parameter from a checkpoint written by ``save_model``."""
    entries = {name: arr for name, _, arr in load_checkpoint(path)}
    for p in model.parameters():
        if p.name not in entries:
            raise CheckpointError(f"checkpoint missing parameter {p.name!r}")
        if entries[p.name].shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {p.name!r}: checkpoint {entries[p.name].shape}, "
                f"model {p.data.shape}")
        p.data[...] = entries[p.name]
    return model


def load_encoder_weights(model: ElrcnModel, path) -> ElrcnModel:
    """Replace encoder parameters only; LSTM and head stay untouched.

    Errors name the first mismatched layer.
    """
    entries = {name: arr for name, _, arr in load_checkpoint(path)}
    staged = []
    for p in model.encoder_parameters():
        if p.name not in entries:
            raise CheckpointError(f"checkpoint missing encoder parameter {p.name!r}")
        if entries[p.name].shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {p.name!r}: checkpoint {entries[p.name].shape}, "
                f"model {p.data.shape}")
        staged.append((p, entries[p.name]))
    for p, arr in staged:
        p.data[...] = arr
    return model


# ---------------------------------------------------------------------------
# ablation models
# ---------------------------------------------------------------------------

class SpatialOnlyModel:
    """Encoder + softmax head on individual enriched frames (no recurrence)."""

    def __init__(self, cfg: ModelConfig):
        if cfg.variant != "SE":
            raise ModelError("spatial-only ablation uses the 5-channel encoder")
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 0x5A])
        self.encoder = build_encoder(cfg, 5, rng, "enc")
        self.head = Dense(cfg.encoder_feature_dim, cfg.n_classes, rng=rng, name="head")

    def parameters(self):
        return self.encoder.params() + self.head.params()

    def forward_logits(self, x: np.ndarray) -> np.ndarray:
        return self.head.forward(self.encoder.forward(x))

    def batch_loss(self, x, y, loss_on="final"):
        loss, _ = cross_entropy_from_logits(self.forward_logits(x), y)
        return loss

    def training_step(self, x, y, loss_on="final"):
        loss, dlogits = cross_entropy_from_logits(self.forward_logits(x), y)
        self.encoder.backward(self.head.backward(dlogits))
        return loss

    def predict_classes(self, x):
        return self.forward_logits(x).argmax(axis=1)


class TemporalOnlyModel:
    """LSTM stack fed raw flattened pixel intensities, no spatial encoder."""

    def __init__(self, side: int, lstm_sizes: tuple[int, ...], n_classes: int, seed: int = 0):
        rng = np.random.default_rng([seed, 0x70])
        self.side = side
        self.input_length = side * side
        self.lstm = LSTMStack(self.input_length, lstm_sizes, rng, name="lstm")
        self.head = Dense(self.lstm.output_size, n_classes, rng=rng, name="head")

    def parameters(self):
        return self.lstm.params() + self.head.params()

    def forward_logits(self, x: np.ndarray) -> np.ndarray:
        b, t = x.shape[:2]
        hs = self.lstm.forward(x.reshape(b, t, -1))
        return self.head.forward(hs[:, -1, :])

    def batch_loss(self, x, y, loss_on="final"):
        loss, _ = cross_entropy_from_logits(self.forward_logits(x), y)
        return loss

    def training_step(self, x, y, loss_on="final"):
        b, t = x.shape[:2]
        hs = self.lstm.forward(x.reshape(b, t, -1))
        loss, dlogits = cross_entropy_from_logits(self.head.forward(hs[:, -1, :]), y)
        dhs = np.zeros_like(hs)
        dhs[:, -1, :] = self.head.backward(dlogits)
        self.lstm.backward(dhs)
        return loss

    def predict_classes(self, x):
        return self.forward_logits(x).argmax(axis=1)
