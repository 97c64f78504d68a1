"""Backbone + two-logit head classifier, and its checkpoint format.

Logit index 1 is FAKE. Any feature extractor that maps ``(N, 3, 224, 224)``
to ``(N, d)`` can be registered as a backbone; two ship by default:

* ``reference-small``: a <1M-parameter CNN used for tests and desk-scale runs,
* ``efficientnet-b4``: torchvision's EfficientNet-B4 trunk (ImageNet weights
  when ``pretrained=True``).
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import torch
from torch import nn

from .errors import (
    BackboneMismatch,
    CorruptCheckpoint,
    MissingFile,
    ShapeMismatch,
    UnknownBackbone,
    WeightsUnavailable,
)

INPUT_SPEC = (3, 224, 224)
CHECKPOINT_MAGIC = b"DFDETECT-CKPT\n"
CHECKPOINT_VERSION = 1


class ReferenceBackbone(nn.Module):
    """Small strided CNN with global average pooling (64 features)."""

    feature_dim = 64

    def __init__(self):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(3, 16, kernel_size=8, stride=4, padding=2),  # 224 -> 56
            nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1),  # 56 -> 28
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, kernel_size=3, stride=2, padding=1),  # 28 -> 14
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
        )

    def forward(self, x):
        return self.body(x)


def _reference_small(pretrained: bool):
    if pretrained:
        raise WeightsUnavailable("reference-small has no pretrained weights; use pretrained=False")
    return ReferenceBackbone(), ReferenceBackbone.feature_dim


def _efficientnet_b4(pretrained: bool):
    from torchvision.models import EfficientNet_B4_Weights, efficientnet_b4

    weights = EfficientNet_B4_Weights.IMAGENET1K_V1 if pretrained else None
    try:
        net = efficientnet_b4(weights=weights)
    except Exception as exc:  # download or cache failure
        raise WeightsUnavailable(f"cannot load EfficientNet-B4 ImageNet weights: {exc}") from exc
    trunk = nn.Sequential(net.features, net.avgpool, nn.Flatten())
    return trunk, net.classifier[1].in_features


BACKBONES: dict[str, Callable[[bool], tuple[nn.Module, int]]] = {
    "reference-small": _reference_small,
    "efficientnet-b4": _efficientnet_b4,
}


def register_backbone(backbone_id: str, factory: Callable[[bool], tuple[nn.Module, int]]):
    BACKBONES[backbone_id] = factory


class BinaryClassifier(nn.Module):
    def __init__(self, backbone_id: str, backbone: nn.Module, feature_dim: int):
        super().__init__()
        self._backbone_id = backbone_id
        self.backbone = backbone
        self.head = nn.Linear(feature_dim, 2)

    @property
    def backbone_id(self) -> str:
        return self._backbone_id

    @property
    def input_spec(self) -> tuple[int, int, int]:
        return INPUT_SPEC

    @property
    def feature_dim(self) -> int:
        return self.head.in_features

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or tuple(x.shape[1:]) != INPUT_SPEC:
            raise ShapeMismatch(f"expected (N, {', '.join(map(str, INPUT_SPEC))}), got {tuple(x.shape)}")
        if x.shape[0] == 0:
            raise ShapeMismatch("empty batch")

    def features(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        return self.backbone(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))


def init_head(head: nn.Linear, seed: int) -> None:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) for weights and bias, from a private generator."""
    gen = torch.Generator().manual_seed(seed)
    bound = 1.0 / math.sqrt(head.in_features)
    with torch.no_grad():
        head.weight.copy_(torch.rand(head.weight.shape, generator=gen) * 2 * bound - bound)
        head.bias.copy_(torch.rand(head.bias.shape, generator=gen) * 2 * bound - bound)


def build_model(backbone_id: str, pretrained: bool = False, seed: int = 0) -> BinaryClassifier:
    try:
        factory = BACKBONES[backbone_id]
    except KeyError:
        raise UnknownBackbone(
            f"unknown backbone {backbone_id!r}; registered: {', '.join(sorted(BACKBONES))}"
        ) from None
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        backbone, dim = factory(pretrained)
        model = BinaryClassifier(backbone_id, backbone, dim)
    init_head(model.head, seed)
    return model


def set_trainable(model: BinaryClassifier, scope: str = "all") -> None:
    if scope not in ("all", "head"):
        raise ValueError(f"scope must be 'all' or 'head', got {scope!r}")
    for p in model.backbone.parameters():
        p.requires_grad_(scope == "all")
    for p in model.head.parameters():
        p.requires_grad_(True)


@torch.no_grad()
def predict_proba(model: BinaryClassifier, batch: torch.Tensor) -> torch.Tensor:
    """Softmax over the two logits; column 1 is P(FAKE)."""
    batch = torch.as_tensor(batch)
    model.check_input(batch)
    was_training = model.training
    model.eval()
    try:
        logits = model(batch.to(next(model.parameters()).dtype))
    finally:
        model.train(was_training)
    return torch.softmax(logits, dim=1)


def head_gradient(features: torch.Tensor, labels: torch.Tensor, weight: torch.Tensor,
                  bias: torch.Tensor):
    """Closed-form gradient of mean cross-entropy w.r.t. the head's weight and bias."""
    logits = features @ weight.T + bias
    residual = torch.softmax(logits, dim=1)
    residual[torch.arange(len(labels)), labels] -= 1.0
    residual /= len(labels)
    return residual.T @ features, residual.sum(dim=0)


@dataclass
class Checkpoint:
    backbone_id: str
    state_dict: dict
    config_digest: str = ""
    training_state: dict | None = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: BinaryClassifier, config_digest: str = "", training_state=None,
                   **metadata) -> "Checkpoint":
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        return cls(model.backbone_id, state, config_digest, training_state, dict(metadata))

    def restore(self) -> BinaryClassifier:
        model = build_model(self.backbone_id, pretrained=False)
        try:
            model.load_state_dict(self.state_dict)
        except RuntimeError as exc:
            raise CorruptCheckpoint(f"weights do not fit {self.backbone_id}: {exc}") from exc
        model.eval()
        return model

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        torch.save(
            {"state_dict": self.state_dict, "training_state": self.training_state,
             "metadata": self.metadata},
            buf,
        )
        payload = buf.getvalue()
        header = {
            "format_version": CHECKPOINT_VERSION,
            "backbone_id": self.backbone_id,
            "config_digest": self.config_digest,
            "payload_sha256": hashlib.sha256(payload).hexdigest(),
            "payload_size": len(payload),
            "weights_sha256": weights_digest(self.state_dict),
        }
        return CHECKPOINT_MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + payload

    def save(self, path) -> str:
        """Write the checkpoint and return its weights digest."""
        Path(path).write_bytes(self.to_bytes())
        return self.digest

    @property
    def digest(self) -> str:
        return weights_digest(self.state_dict)


def weights_digest(state_dict: dict) -> str:
    """Content hash of the weights, independent of serialization details."""
    h = hashlib.sha256()
    for key in sorted(state_dict):
        t = state_dict[key].detach().cpu().contiguous()
        h.update(f"{key}|{t.dtype}|{tuple(t.shape)}|".encode())
        h.update(t.numpy().tobytes() if t.dtype != torch.bfloat16 else t.float().numpy().tobytes())
    return h.hexdigest()


def read_header(data: bytes) -> dict:
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CorruptCheckpoint("not a dfdetect checkpoint (bad magic)")
    end = data.find(b"\n", len(CHECKPOINT_MAGIC))
    if end < 0:
        raise CorruptCheckpoint("truncated checkpoint header")
    try:
        header = json.loads(data[len(CHECKPOINT_MAGIC):end])
        header["payload_offset"] = end + 1
        int(header["format_version"]), header["backbone_id"], header["payload_sha256"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint header: {exc}") from None
    return header


def save_checkpoint(model: BinaryClassifier, path, config_digest: str = "",
                    training_state=None, **metadata) -> Checkpoint:
    ckpt = Checkpoint.from_model(model, config_digest, training_state, **metadata)
    ckpt.save(path)
    return ckpt


def load_checkpoint_file(path, backbone_id: str | None = None) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"checkpoint not found: {path}")
    data = path.read_bytes()
    header = read_header(data)
    if header["format_version"] > CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"checkpoint format {header['format_version']} is newer than supported")
    payload = data[header["payload_offset"]:]
    if len(payload) != header.get("payload_size") or \
            hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CorruptCheckpoint(f"{path}: payload is truncated or fails its integrity digest")
    if backbone_id is not None and header["backbone_id"] != backbone_id:
        raise BackboneMismatch(
            f"{path} holds a {header['backbone_id']!r} model, expected {backbone_id!r}"
        )
    try:
        body = torch.load(io.BytesIO(payload), map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CorruptCheckpoint(f"{path}: cannot deserialize weights: {exc}") from exc
    return Checkpoint(
        backbone_id=header["backbone_id"],
        state_dict=body["state_dict"],
        config_digest=header.get("config_digest", ""),
        training_state=body.get("training_state"),
        metadata=body.get("metadata") or {},
    )


def load_checkpoint(path, backbone_id: str | None = None) -> BinaryClassifier:
    return load_checkpoint_file(path, backbone_id).restore()


def checkpoint_digest(path) -> str:
    """Weights digest recorded in a checkpoint file (stable across re-saves)."""
    return load_checkpoint_file(path).digest
