"""Mini-batch training and evaluation of the deformable transformer on a generated dataset."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging
import math

import numpy as np

from drat.core.errors import ContractViolation, DataIOError, NumericError, TrainingError
from drat.data.synth import Sample, load_samples
from drat.models.config import ModelConfig
from drat.nn.transformer import ClipFeatures, DeformableTransformer
from drat.training.checkpoint import METRICS_LOG, save_checkpoint
from drat.training.optimizer import AdamW, WarmupCosineSchedule
from drat.training.parallel import GradientPool, reduce_gradients, sample_gradient

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class TrainingResult:
    model: DeformableTransformer
    metrics: Dict[str, Any]
    history: List[Dict[str, Any]] = field(default_factory=list)


def resample_frames(video: np.ndarray, skeleton: np.ndarray, test_frames: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Keep ``test_frames`` uniformly spaced frames of a T-frame clip, then stretch
    them back to T frames by nearest-index repetition. ``test_frames == T`` is the identity.
    """
    frames = video.shape[1]
    if test_frames < 1:
        raise ContractViolation(f"test frame count must be positive, got {test_frames}")
    kept = (np.arange(test_frames) * frames) // test_frames
    back = (np.arange(frames) * test_frames) // frames
    index = kept[back]
    return video[:, index], skeleton[index]


def encode_samples(
    model: DeformableTransformer, samples: Sequence[Sample], test_frames: Optional[int] = None
) -> List[ClipFeatures]:
    features = []
    for sample in samples:
        video, skeleton = sample.video, sample.skeleton
        if test_frames is not None:
            video, skeleton = resample_frames(video, skeleton, test_frames)
        features.append(model.encode(video, skeleton))
    return features


def accuracy(model: DeformableTransformer, features: Sequence[ClipFeatures], labels: Sequence[int]) -> float:
    if not features:
        logger.warning("Accuracy requested on an empty split, reporting 0.0")
        return 0.0
    correct = sum(int(model.predict(f)[0] == label) for f, label in zip(features, labels))
    return correct / len(features)


class Trainer:
    def __init__(
        self, config: ModelConfig, data_dir: PathLike, out_dir: Optional[PathLike] = None, workers: int = 1
    ):
        self.config = config
        self.workers = max(1, min(workers, config.batch_size))
        self.data_dir = Path(data_dir)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.model = DeformableTransformer(config)
        self.optimizer = AdamW(
            self.model.parameters(),
            weight_decay=config.weight_decay,
            betas=config.betas,
            eps=config.eps,
        )
        self.schedule = WarmupCosineSchedule(config.learning_rate, config.warmup_steps, config.total_steps)
        self.history: List[Dict[str, Any]] = []
        self._log_handle = None
        self._pool: Optional[GradientPool] = None

    def _record(self, entry: Dict[str, Any]) -> None:
        self.history.append(entry)
        if self._log_handle is not None:
            self._log_handle.write(json.dumps(entry) + "\n")

    def _sample_features(self, samples: Sequence[Sample], cached: Optional[List[ClipFeatures]], index: int) -> ClipFeatures:
        if cached is not None:
            return cached[index]
        sample = samples[index]
        return self.model.encode(sample.video, sample.skeleton)

    def _step(self, batch: Sequence[int], samples, cached, lr: float, step: int) -> float:
        scale = 1.0 / len(batch)
        try:
            if self._pool is not None:
                results = self._pool.gradients(self.model, batch, scale)
            else:
                results = [
                    sample_gradient(self.model, self._sample_features(samples, cached, index), samples[index].label, scale)
                    for index in batch
                ]
        except NumericError as exc:
            raise TrainingError(f"Training diverged: {exc.detail}", step=step) from exc
        total, grads = reduce_gradients(results, len(self.optimizer.params))
        for p, grad in zip(self.optimizer.params, grads):
            p.grad = grad
            if grad is not None and not np.all(np.isfinite(grad)):
                raise TrainingError("Training diverged: non-finite gradient", step=step)
        self.optimizer.step(lr)
        return total

    def train(self) -> TrainingResult:
        config = self.config
        train_samples = load_samples(self.data_dir, split="train")
        test_samples = load_samples(self.data_dir, split="test")
        if not train_samples:
            raise DataIOError(f"No training samples in {self.data_dir}")

        cached = None if config.train_backbone else encode_samples(self.model, train_samples)
        test_features = encode_samples(self.model, test_samples) if not config.train_backbone else None
        test_labels = [s.label for s in test_samples]

        def test_accuracy() -> float:
            features = test_features if test_features is not None else encode_samples(self.model, test_samples)
            return accuracy(self.model, features, test_labels)

        if self.out_dir is not None:
            try:
                self.out_dir.mkdir(parents=True, exist_ok=True)
                self._log_handle = open(self.out_dir / METRICS_LOG, "w")
            except OSError as exc:
                raise DataIOError(f"Cannot write metrics log under {self.out_dir}: {exc}") from exc

        rng = np.random.default_rng(config.seed)
        order: np.ndarray = np.arange(0)
        position, epoch, loss = 0, 0, float("nan")
        epoch_closed = False
        logger.info(
            f"Training {self.model.num_parameters()} values for {config.total_steps} steps "
            f"on {len(train_samples)} clips"
        )
        try:
            if self.workers > 1:
                clips = [(s.video, s.skeleton, s.label) for s in train_samples]
                self._pool = GradientPool(config, clips, cache=cached is not None, workers=self.workers)
            for step in range(config.total_steps):
                if position == 0:
                    order = rng.permutation(len(train_samples))
                batch = order[position : position + config.batch_size].tolist()
                position += len(batch)
                lr = self.schedule(step)
                loss = self._step(batch, train_samples, cached, lr, step)
                self._record({"step": step, "loss": loss, "lr": lr})
                logger.debug("step", extra={"step": step, "loss": loss, "lr": lr})

                epoch_closed = position >= len(train_samples)
                if epoch_closed:
                    position = 0
                    epoch += 1
                    acc = test_accuracy()
                    self._record({"epoch": epoch, "test_acc": acc})
                    logger.info(f"Epoch {epoch}: loss {loss:.4f}, test accuracy {acc:.3f}", extra={"epoch": epoch})

            if not epoch_closed:
                epoch += 1
                acc = test_accuracy()
                self._record({"epoch": epoch, "test_acc": acc})
        finally:
            if self._log_handle is not None:
                self._log_handle.close()
                self._log_handle = None
            if self._pool is not None:
                self._pool.close()
                self._pool = None

        metrics = {
            "final_test_acc": self.history[-1]["test_acc"],
            "final_loss": None if math.isnan(loss) else loss,
            "steps": config.total_steps,
            "epochs": epoch,
            "train_samples": len(train_samples),
            "test_samples": len(test_samples),
            "seed": config.seed,
        }
        if self.out_dir is not None:
            save_checkpoint(self.out_dir, self.model, metrics)
        return TrainingResult(self.model, metrics, self.history)


def train(
    config: ModelConfig, data_dir: PathLike, out_dir: Optional[PathLike] = None, workers: int = 1
) -> TrainingResult:
    """Train from scratch; ``workers`` > 1 spreads each batch over that many processes."""
    return Trainer(config, data_dir, out_dir, workers=workers).train()


def evaluate(
    model: DeformableTransformer, data_dir: PathLike, test_frames: Optional[int] = None
) -> Tuple[float, int]:
    """Test-split accuracy, optionally after resampling each clip to ``test_frames`` frames."""
    samples = load_samples(data_dir, split="test")
    features = encode_samples(model, samples, test_frames)
    return accuracy(model, features, [s.label for s in samples]), len(samples)
