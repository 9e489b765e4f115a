"""Central-difference validation of analytic gradients."""
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple
import logging

import numpy as np

from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
MIN_STEP = 1e-6
MAX_STEP = 1e-3
RELATIVE_FLOOR = 1e-8


@dataclass
class GradcheckResult:
    max_relative_error: float
    max_absolute_error: float
    checked: int
    worst: Optional[Tuple[str, Tuple[int, ...]]] = None

    def passed(self, tolerance: float) -> bool:
        return self.max_relative_error < tolerance


def _validate_step(step: float) -> None:
    if not (MIN_STEP <= step <= MAX_STEP):
        raise ContractViolation(f"gradcheck step must lie in [{MIN_STEP}, {MAX_STEP}], got {step}")


def _scalar(out: Tensor) -> float:
    if out.size != 1:
        raise ContractViolation(f"gradcheck needs a scalar-valued function, got shape {out.shape}")
    return out.item()


def _pick_indices(shape: Tuple[int, ...], components: Optional[int], rng: np.random.Generator) -> List[Tuple[int, ...]]:
    every = list(np.ndindex(*shape))
    if components is None or components >= len(every):
        return every
    chosen = rng.choice(len(every), size=components, replace=False)
    return [every[i] for i in sorted(chosen)]


def numerical_gradient(
    evaluate: Callable[[], Tensor],
    target: Tensor,
    step: float = DEFAULT_STEP,
    indices: Optional[Sequence[Tuple[int, ...]]] = None,
) -> np.ndarray:
    """Central differences of ``evaluate()`` with respect to ``target``, perturbed in place."""
    _validate_step(step)
    grad = np.zeros(target.shape)
    for idx in indices if indices is not None else np.ndindex(*target.shape):
        original = target.data[idx]
        with no_grad():
            target.data[idx] = original + step
            plus = _scalar(evaluate())
            target.data[idx] = original - step
            minus = _scalar(evaluate())
        target.data[idx] = original
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def check_gradients(
    evaluate: Callable[[], Tensor],
    targets: Sequence[Tuple[str, Tensor]],
    step: float = DEFAULT_STEP,
    components: Optional[int] = None,
    seed: int = 0,
    floor: float = RELATIVE_FLOOR,
) -> GradcheckResult:
    """
    Compare the analytic gradient of a scalar ``evaluate()`` with central differences
    for every named leaf in ``targets``.

    ``components`` caps how many entries per target are perturbed (seeded sample).
    The relative error of one entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    _validate_step(step)
    for _, target in targets:
        target.requires_grad = True
        target.zero_grad()
    out = evaluate()
    _scalar(out)
    out.backward()

    rng = np.random.default_rng(seed)
    worst_rel, worst_abs, checked = 0.0, 0.0, 0
    worst: Optional[Tuple[str, Tuple[int, ...]]] = None
    for name, target in targets:
        analytic = target.grad if target.grad is not None else np.zeros(target.shape)
        indices = _pick_indices(target.shape, components, rng)
        numeric = numerical_gradient(evaluate, target, step, indices)
        for idx in indices:
            a, n = analytic[idx], numeric[idx]
            diff = abs(a - n)
            rel = diff / max(abs(a), abs(n), floor)
            worst_abs = max(worst_abs, diff)
            if rel > worst_rel:
                worst_rel, worst = rel, (name, tuple(int(i) for i in idx))
            checked += 1
    logger.debug(f"gradcheck over {checked} components: max relative error {worst_rel:.3e}")
    return GradcheckResult(worst_rel, worst_abs, checked, worst)


def gradcheck(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = DEFAULT_STEP,
    components: Optional[int] = None,
) -> float:
    """Max relative error between the analytic and central-difference gradient of ``f`` at ``x``."""
    leaf = Tensor(x.data, requires_grad=True)
    return check_gradients(lambda: f(leaf), [("x", leaf)], step=step, components=components).max_relative_error
