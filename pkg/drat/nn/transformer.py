"""
The L-layer deformable transformer over RGB tokens Z, pose tokens P and the
cross-modal tokens M = [M_CLS, M_RGB, M_pose].
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from drat.core import ops
from drat.core.tensor import Tensor, no_grad
from drat.data.backbone import BackboneStub
from drat.models.config import ModelConfig, check_clip_shape
from drat.nn.deformable import DeformableAttention
from drat.nn.module import Linear, Module, init_tensor
from drat.nn.pose import JointHeatmap, PoseTokenizer, gaussian_heatmap
from drat.nn.stride import JointStrideAttention, TemporalStrideAttention


@dataclass
class ClipFeatures:
    f_a: Tensor
    f_b: Tensor
    heatmap: JointHeatmap


@dataclass
class TokenState:
    z: Tensor
    p: Tensor
    modal: List[Tensor]  # cross: [CLS, RGB, pose]; single: [shared]; none: []


class TransformerLayer(Module):
    """One pass of deformable, joint-stride, CLS fusion and temporal-stride attention."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator, index: int):
        width, heads = config.width4, config.heads
        self.index = index
        self.mode = config.modal_tokens
        self.deformable = DeformableAttention(config.attention(), rng) if config.enabled("deformable") else None
        self.joint = (
            JointStrideAttention(width, heads, config.wnd_joint, rng, stride=config.joint_stride)
            if config.enabled("joint")
            else None
        )
        self.fuse = Linear(2 * width, width, rng) if self.mode == "cross" and self.joint is not None else None
        self.temporal = (
            TemporalStrideAttention(width, heads, config.wnd_temp, rng, stride=config.temporal_stride)
            if config.enabled("temporal")
            else None
        )

    def _tag(self, block: str) -> str:
        return f"layer{self.index}.{block}"

    def _fuse_cls(self, first: Tensor, second: Tensor) -> Tensor:
        stacked = ops.concat([first, second], axis=0)  # (8C, T, 1)
        fused = self.fuse(ops.transpose(stacked, (1, 2, 0)))
        return ops.transpose(fused, (2, 0, 1))

    def __call__(self, state: TokenState) -> TokenState:
        z, p, modal = state.z, state.p, list(state.modal)

        if self.mode == "cross":
            m_cls, m_rgb, m_pose = modal
            if self.deformable is not None:
                z, (m_rgb, m_cls) = self.deformable(z, [m_rgb, m_cls], tag=self._tag("deformable"))
            if self.joint is not None:
                p, (m_pose, m_cls_joint) = self.joint(p, [m_pose, m_cls], tag=self._tag("joint"))
                m_cls = self._fuse_cls(m_cls, m_cls_joint)
            modal = [m_cls, m_rgb, m_pose]
            if self.temporal is not None:
                z, p, (m_rgb, m_pose, m_cls) = self.temporal(z, p, [m_rgb, m_pose, m_cls], tag=self._tag("temporal"))
                modal = [m_cls, m_rgb, m_pose]
            return TokenState(z, p, modal)

        if self.deformable is not None:
            z, modal = self.deformable(z, modal, tag=self._tag("deformable"))
        if self.joint is not None:
            p, modal = self.joint(p, modal, tag=self._tag("joint"))
        if self.temporal is not None:
            z, p, modal = self.temporal(z, p, modal, tag=self._tag("temporal"))
        return TokenState(z, p, modal)


class DeformableTransformer(Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        width = config.width4
        self.backbone = BackboneStub(config.channels, config.seed, trainable=config.train_backbone)
        self.pose = PoseTokenizer(config.channels, rng)
        self.position = init_tensor(
            rng, (width, config.frames, config.feature_height, config.feature_width), 0.02
        )
        modal_slots = {"cross": 3, "single": 1, "none": 0}[config.modal_tokens]
        self.modal = init_tensor(rng, (width, config.frames, modal_slots), 0.02) if modal_slots else None
        self.layers = [TransformerLayer(config, rng, index) for index in range(config.layers)]
        head_in = 3 * width if config.modal_tokens == "cross" else width
        self.head = Linear(head_in, config.num_classes, rng)

    def encode(self, video: np.ndarray, skeleton: np.ndarray) -> ClipFeatures:
        """Backbone features and joint heatmaps; constant when the backbone is frozen."""
        check_clip_shape(self.config, video.shape, skeleton.shape)
        video_tensor = Tensor(video)
        if self.config.train_backbone:
            f_a, f_b = self.backbone(video_tensor)
        else:
            with no_grad():
                f_a, f_b = self.backbone(video_tensor)
        heatmap = gaussian_heatmap(skeleton, self.config.sigma, self.config.pose_grid)
        return ClipFeatures(f_a, f_b, heatmap)

    def initial_state(self, features: ClipFeatures) -> TokenState:
        z = ops.add(features.f_b, self.position)
        p = self.pose(features.f_a, features.heatmap)
        if self.modal is None:
            modal: List[Tensor] = []
        else:
            modal = [ops.slice_axis(self.modal, 2, i, i + 1) for i in range(self.modal.shape[2])]
        return TokenState(z, p, modal)

    def run_layers(self, features: ClipFeatures) -> TokenState:
        state = self.initial_state(features)
        for layer in self.layers:
            state = layer(state)
        return state

    def classify(self, state: TokenState) -> Tensor:
        width = self.config.width4
        if self.config.modal_tokens == "none":
            tokens = ops.concat(
                [ops.reshape(state.z, (width, -1)), ops.reshape(state.p, (width, -1))], axis=1
            )
            pooled = ops.mean(tokens, axis=1)
        else:
            stacked = ops.concat(state.modal, axis=0)  # (k·4C, T, 1)
            pooled = ops.mean(ops.reshape(stacked, stacked.shape[:2]), axis=1)
        return self.head(ops.reshape(pooled, (1, -1)))

    def forward_features(self, features: ClipFeatures) -> Tensor:
        logits = self.classify(self.run_layers(features))
        return ops.reshape(logits, (self.config.num_classes,))

    def __call__(self, video: np.ndarray, skeleton: np.ndarray) -> Tensor:
        return self.forward_features(self.encode(video, skeleton))

    def predict(self, features: ClipFeatures) -> Tuple[int, np.ndarray]:
        with no_grad():
            logits = self.forward_features(features).numpy()
        return int(np.argmax(logits)), logits
