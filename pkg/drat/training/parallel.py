"""
Per-sample loss gradients for one mini-batch, computed in-process or spread over
worker processes.

Each sample's gradient is returned separately and in batch order; the caller
sums them in that order, so the reduced gradient is the same for any worker count.
"""
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from drat.core import ops
from drat.models.config import ModelConfig
from drat.nn.transformer import ClipFeatures, DeformableTransformer

logger = logging.getLogger(__name__)

SampleGradient = Tuple[float, List[Optional[np.ndarray]]]
Clip = Tuple[np.ndarray, np.ndarray, int]  # video, skeleton, label


def sample_gradient(model: DeformableTransformer, features: ClipFeatures, label: int, scale: float) -> SampleGradient:
    """Scaled cross-entropy of one clip and the gradient of every trainable parameter."""
    params = model.parameters()
    for p in params:
        p.zero_grad()
    loss = ops.scale(ops.cross_entropy(model.forward_features(features), label), scale)
    loss.backward()
    return loss.item(), [None if p.grad is None else p.grad.copy() for p in params]


def reduce_gradients(results: Sequence[SampleGradient], count: int) -> Tuple[float, List[Optional[np.ndarray]]]:
    """Sum losses and gradients in the given order."""
    total = 0.0
    summed: List[Optional[np.ndarray]] = [None] * count
    for loss, grads in results:
        total += loss
        for index, grad in enumerate(grads):
            if grad is None:
                continue
            summed[index] = grad.copy() if summed[index] is None else summed[index] + grad
    return total, summed


# worker process state, set once by _init_worker
_model: Optional[DeformableTransformer] = None
_inputs: List = []
_labels: List[int] = []


def _init_worker(config_json: str, clips: List[Clip], cache: bool) -> None:
    global _model, _inputs, _labels
    _model = DeformableTransformer(ModelConfig.model_validate_json(config_json))
    _labels = [label for _, _, label in clips]
    if cache:
        _inputs = [_model.encode(video, skeleton) for video, skeleton, _ in clips]
    else:
        _inputs = [(video, skeleton) for video, skeleton, _ in clips]


def _features(index: int) -> ClipFeatures:
    item = _inputs[index]
    return item if isinstance(item, ClipFeatures) else _model.encode(*item)


def _chunk_gradients(values: List[np.ndarray], indices: List[int], scale: float) -> List[SampleGradient]:
    for p, value in zip(_model.parameters(), values):
        p.data = value
    return [sample_gradient(_model, _features(i), _labels[i], scale) for i in indices]


class GradientPool:
    """
    Worker processes that each hold a replica of the model and the training clips.

    With a frozen backbone every worker encodes the clips once at start-up; the
    backbone is seeded from the config, so the features match the parent's.
    """

    def __init__(self, config: ModelConfig, clips: List[Clip], cache: bool, workers: int):
        self.workers = workers
        self._executor = ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(config.model_dump_json(), clips, cache),
        )
        logger.info(f"Started {workers} gradient workers", extra={"workers": workers})

    def gradients(self, model: DeformableTransformer, batch: Sequence[int], scale: float) -> List[SampleGradient]:
        values = [p.data for p in model.parameters()]
        chunks = [chunk.tolist() for chunk in np.array_split(np.asarray(batch), self.workers) if len(chunk)]
        futures = [self._executor.submit(_chunk_gradients, values, chunk, scale) for chunk in chunks]
        return [result for future in futures for result in future.result()]

    def close(self) -> None:
        self._executor.shutdown()
