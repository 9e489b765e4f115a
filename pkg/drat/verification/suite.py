"""
Equivalence suite: identity sampling, single-window stride attention against the
full-attention oracle, a gradient battery and a complexity sweep.

Faults can be injected to confirm the checks are sensitive:
``skip_scaling`` drops the 1/√d_h factor in the stride and deformable blocks,
``perturb_offsets`` feeds non-zero offsets to the identity gather.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging
import time

import numpy as np

from drat.core import ops
from drat.core.conv import conv3d
from drat.core.config import get_settings
from drat.core.errors import UsageError
from drat.core.gradcheck import check_gradients
from drat.core.tensor import Tensor
from drat.models.config import AttentionConfig, ModelConfig
from drat.models.reports import CheckResult, SuiteReport
from drat.nn.deformable import DeformableAttention, reference_grid, three_d_token_search
from drat.nn.stride import JointStrideAttention, TemporalStrideAttention
from drat.nn.transformer import DeformableTransformer
from drat.verification.complexity import growth, measure_joint_stride, measure_temporal_stride
from drat.verification.oracle import reference_block, token_rows

logger = logging.getLogger(__name__)

FAULTS = ("skip_scaling", "perturb_offsets")

IDENTITY_TOLERANCE = 1e-12
EQUIVALENCE_TOLERANCE = 1e-9
PRIMITIVE_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4
# composite graphs compare gradients below this magnitude absolutely
COMPOSITE_FLOOR = 1e-5
STRIDE_GROWTH = (1.8, 2.2)
ORACLE_GROWTH = (3.8, 4.2)

TOY_WIDTH = 8
TOY_HEADS = 2
TOY_FRAMES = 3
TOY_JOINTS = 5
TOY_SPATIAL = (2, 2)


def _result(name, max_error, tolerance, config, seed, inputs=None) -> CheckResult:
    passed = bool(np.isfinite(max_error)) and max_error <= tolerance
    return CheckResult(
        check_name=name,
        status="pass" if passed else "fail",
        max_error=float(max_error),
        config=config,
        seed=seed,
        tolerance=tolerance,
        failing_inputs=None if passed else inputs,
    )


def _as_lists(arrays: Dict[str, np.ndarray]) -> Dict[str, Any]:
    return {name: np.asarray(value).tolist() for name, value in arrays.items()}


def _worst_over_trials(
    seed: int, trials: int, trial: Callable[[np.random.Generator], Tuple[float, Dict[str, np.ndarray]]]
) -> Tuple[float, Dict[str, Any]]:
    worst, worst_inputs = -1.0, {}
    for index in range(trials):
        error, inputs = trial(np.random.default_rng([seed, index]))
        if not np.isfinite(error) or error > worst:
            worst, worst_inputs = error, {"trial": index, **_as_lists(inputs)}
            if not np.isfinite(error):
                break
    return worst, worst_inputs


# --------------------------------------------------------------------------- #
# (a) identity gather
# --------------------------------------------------------------------------- #


def check_identity_sampling(seed: int, trials: int, faults: Sequence[str]) -> CheckResult:
    extents = (TOY_FRAMES,) + TOY_SPATIAL
    grid = reference_grid(extents, 1, 1)

    def trial(rng):
        z = rng.uniform(-2.0, 2.0, size=(TOY_WIDTH,) + extents)
        offsets = rng.uniform(-0.3, 0.3, size=grid.shape) if "perturb_offsets" in faults else np.zeros(grid.shape)
        sampled = three_d_token_search(Tensor(z), grid, Tensor(offsets))
        return float(np.max(np.abs(sampled.data - z))), {"z": z, "offsets": offsets}

    error, inputs = _worst_over_trials(seed, trials, trial)
    config = {"extents": list(extents), "width": TOY_WIDTH, "trials": trials}
    return _result("identity_sampling", error, IDENTITY_TOLERANCE, config, seed, inputs)


def check_deformable_zero_offset(seed: int, trials: int, faults: Sequence[str]) -> CheckResult:
    extents = (TOY_FRAMES,) + TOY_SPATIAL
    config = AttentionConfig(width=TOY_WIDTH, heads=TOY_HEADS, kernel=1, offset_stride=1)

    def trial(rng):
        layer = DeformableAttention(config, rng)
        if "skip_scaling" in faults:
            layer.block.scaled = False
        z = rng.uniform(-2.0, 2.0, size=(TOY_WIDTH,) + extents)
        modal = [rng.uniform(-2.0, 2.0, size=(TOY_WIDTH, TOY_FRAMES, 1)) for _ in range(2)]
        z_out, modal_out = layer(Tensor(z), [Tensor(m) for m in modal])
        got = np.concatenate([z_out.data.reshape(TOY_WIDTH, -1)] + [m.data.reshape(TOY_WIDTH, -1) for m in modal_out], axis=1).T
        rows = np.concatenate([z.reshape(TOY_WIDTH, -1)] + [m.reshape(TOY_WIDTH, -1) for m in modal], axis=1).T
        expected = reference_block(layer.block, rows, rows)
        return float(np.max(np.abs(got - expected))), {"z": z, "m_rgb": modal[0], "m_cls": modal[1]}

    error, inputs = _worst_over_trials(seed, trials, trial)
    return _result(
        "deformable_zero_offset_vs_oracle", error, EQUIVALENCE_TOLERANCE, config.model_dump(), seed, inputs
    )


# --------------------------------------------------------------------------- #
# (b) single-window stride attention against the oracle
# --------------------------------------------------------------------------- #


def check_joint_single_window(seed: int, trials: int, faults: Sequence[str]) -> CheckResult:
    def trial(rng):
        layer = JointStrideAttention(TOY_WIDTH, TOY_HEADS, TOY_JOINTS, rng)
        if "skip_scaling" in faults:
            layer.block.scaled = False
        p = rng.uniform(-2.0, 2.0, size=(TOY_WIDTH, TOY_FRAMES, TOY_JOINTS))
        modal = [rng.uniform(-2.0, 2.0, size=(TOY_WIDTH, TOY_FRAMES, 1)) for _ in range(2)]
        p_out, modal_out = layer(Tensor(p), [Tensor(m) for m in modal])
        got = token_rows([p_out.data] + [m.data for m in modal_out], axis=2)
        rows = token_rows([p] + modal, axis=2)
        expected = reference_block(layer.block, rows, rows)
        return float(np.max(np.abs(got - expected))), {"p": p, "m_pose": modal[0], "m_cls": modal[1]}

    error, inputs = _worst_over_trials(seed, trials, trial)
    config = {"width": TOY_WIDTH, "heads": TOY_HEADS, "frames": TOY_FRAMES, "joints": TOY_JOINTS, "wnd": TOY_JOINTS, "trials": trials}
    return _result("joint_stride_single_window", error, EQUIVALENCE_TOLERANCE, config, seed, inputs)


def check_temporal_single_window(seed: int, trials: int, faults: Sequence[str]) -> CheckResult:
    cells = TOY_SPATIAL[0] * TOY_SPATIAL[1]

    def trial(rng):
        layer = TemporalStrideAttention(TOY_WIDTH, TOY_HEADS, TOY_FRAMES, rng)
        if "skip_scaling" in faults:
            layer.block.scaled = False
        z = rng.uniform(-2.0, 2.0, size=(TOY_WIDTH, TOY_FRAMES) + TOY_SPATIAL)
        p = rng.uniform(-2.0, 2.0, size=(TOY_WIDTH, TOY_FRAMES, TOY_JOINTS))
        modal = [rng.uniform(-2.0, 2.0, size=(TOY_WIDTH, TOY_FRAMES, 1)) for _ in range(3)]
        z_out, p_out, modal_out = layer(Tensor(z), Tensor(p), [Tensor(m) for m in modal])
        got = token_rows(
            [z_out.data.reshape(TOY_WIDTH, TOY_FRAMES, cells), p_out.data] + [m.data for m in modal_out], axis=2
        )
        rows = token_rows([z.reshape(TOY_WIDTH, TOY_FRAMES, cells), p] + modal, axis=2)
        expected = reference_block(layer.block, rows, rows)
        return float(np.max(np.abs(got - expected))), {"z": z, "p": p}

    error, inputs = _worst_over_trials(seed, trials, trial)
    config = {
        "width": TOY_WIDTH,
        "heads": TOY_HEADS,
        "frames": TOY_FRAMES,
        "tokens_per_step": cells + TOY_JOINTS + 3,
        "wnd": TOY_FRAMES,
        "trials": trials,
    }
    return _result("temporal_stride_single_window", error, EQUIVALENCE_TOLERANCE, config, seed, inputs)


# --------------------------------------------------------------------------- #
# (c) gradient battery
# --------------------------------------------------------------------------- #


def _leaf(rng, *shape) -> Tensor:
    return Tensor(rng.uniform(-2.0, 2.0, size=shape), requires_grad=True)


def primitive_cases() -> Dict[str, Callable[[np.random.Generator], Tuple[Callable[[], Tensor], List[Tuple[str, Tensor]]]]]:
    def case(build, *shapes):
        def make(rng):
            leaves = [_leaf(rng, *shape) for shape in shapes]
            weights = {}

            def evaluate():
                out = build(*leaves)
                if "w" not in weights:
                    weights["w"] = Tensor(rng.uniform(-1.0, 1.0, size=out.shape))
                return ops.sum(ops.mul(out, weights["w"])) if out.size > 1 else out

            return evaluate, [(f"x{i}", leaf) for i, leaf in enumerate(leaves)]

        return make

    def token_search(rng):
        z = _leaf(rng, 3, 3, 4, 4)
        grid = reference_grid((3, 4, 4), 2, 1)
        offsets = Tensor(rng.uniform(-0.2, 0.2, size=grid.shape), requires_grad=True)
        w = Tensor(rng.uniform(-1.0, 1.0, size=(3,) + grid.shape[1:]))
        return (lambda: ops.sum(ops.mul(three_d_token_search(z, grid, offsets), w))), [("z", z), ("offsets", offsets)]

    def cross_entropy(rng):
        logits = _leaf(rng, 3, 4)
        labels = rng.integers(0, 4, size=3)
        return (lambda: ops.cross_entropy(logits, labels)), [("logits", logits)]

    return {
        "matmul": case(ops.matmul, (4, 5), (5, 3)),
        "matmul_batched": case(ops.matmul, (2, 3, 4), (2, 4, 3)),
        "add": case(ops.add, (3, 4), (3, 4)),
        "add_bias": case(ops.add, (2, 3, 4), (4,)),
        "sub": case(ops.sub, (3, 4), (3, 4)),
        "mul": case(ops.mul, (3, 4), (3, 4)),
        "mul_gain": case(ops.mul, (3, 4), (4,)),
        "concat": case(lambda a, b: ops.concat([a, b], axis=1), (2, 3), (2, 2)),
        "slice": case(lambda a: ops.slice_axis(a, 1, 1, 3), (2, 4)),
        "reshape_transpose": case(lambda a: ops.transpose(ops.reshape(a, (3, 2, 2)), (2, 0, 1)), (2, 6)),
        "linear": case(ops.linear, (3, 4), (4, 5), (5,)),
        "tanh": case(ops.tanh, (3, 4)),
        "gelu": case(ops.gelu, (3, 4)),
        "layer_norm": case(ops.layer_norm, (3, 5), (5,), (5,)),
        "softmax": case(ops.softmax, (3, 5)),
        "mean": case(lambda a: ops.mean(a, axis=1), (3, 4)),
        "cross_entropy": cross_entropy,
        "conv3d": case(lambda x, k, b: conv3d(x, k, (1, 2, 2), b), (2, 3, 4, 4), (3, 2, 2, 2, 2), (3,)),
        "overlap_mean": case(
            lambda a, b, c: ops.overlap_mean([a, b, c], [0, 2, 3], 7, axis=1), (2, 4, 3), (2, 4, 3), (2, 4, 3)
        ),
        "three_d_token_search": token_search,
    }


def check_primitive_gradients(seed: int) -> CheckResult:
    worst, worst_name = 0.0, None
    per_case = {}
    for index, (name, make) in enumerate(primitive_cases().items()):
        rng = np.random.default_rng([seed, index])
        evaluate, targets = make(rng)
        result = check_gradients(evaluate, targets)
        per_case[name] = result.max_relative_error
        if result.max_relative_error > worst:
            worst, worst_name = result.max_relative_error, name
    inputs = {"worst_case": worst_name}
    return _result("gradcheck_primitives", worst, PRIMITIVE_TOLERANCE, {"cases": per_case}, seed, inputs)


def check_deformable_gradients(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    config = AttentionConfig(width=TOY_WIDTH, heads=TOY_HEADS, kernel=2, offset_stride=1)
    layer = DeformableAttention(config, rng)
    # non-zero offsets keep sample points off the trilinear kinks
    layer.offsets.project.weight.data = rng.normal(0.0, 0.3, size=layer.offsets.project.weight.shape)
    z = _leaf(rng, TOY_WIDTH, TOY_FRAMES, *TOY_SPATIAL)
    modal = [_leaf(rng, TOY_WIDTH, TOY_FRAMES, 1) for _ in range(2)]
    weights = [Tensor(rng.uniform(-1.0, 1.0, size=z.shape))] + [
        Tensor(rng.uniform(-1.0, 1.0, size=m.shape)) for m in modal
    ]

    def evaluate():
        z_out, modal_out = layer(z, modal)
        terms = [ops.sum(ops.mul(out, w)) for out, w in zip([z_out] + modal_out, weights)]
        return ops.add(ops.add(terms[0], terms[1]), terms[2])

    targets = [("z", z), ("m_rgb", modal[0]), ("m_cls", modal[1])] + list(layer.named_parameters())
    result = check_gradients(evaluate, targets, components=6, seed=seed, floor=COMPOSITE_FLOOR)
    config_out = {**config.model_dump(), "extents": [TOY_FRAMES, *TOY_SPATIAL], "floor": COMPOSITE_FLOOR}
    return _result(
        "gradcheck_deformable_block", result.max_relative_error, PRIMITIVE_TOLERANCE, config_out, seed,
        {"worst": list(result.worst) if result.worst else None},
    )


def micro_config(seed: int) -> ModelConfig:
    return ModelConfig(
        channels=2, frames=3, height=8, width=8, joints=2, layers=1, heads=2, kernel=1, num_classes=3, seed=seed
    )


def check_model_gradients(seed: int) -> CheckResult:
    config = micro_config(seed)
    rng = np.random.default_rng(seed)
    model = DeformableTransformer(config)
    for layer in model.layers:
        project = layer.deformable.offsets.project
        project.weight.data = rng.normal(0.0, 0.3, size=project.weight.shape)
    video = rng.uniform(0.0, 1.0, size=(3, config.frames, config.height, config.width))
    grid_h, grid_w = config.pose_grid
    skeleton = np.stack(
        [rng.uniform(0.0, grid_w - 1, size=(config.frames, config.joints)), rng.uniform(0.0, grid_h - 1, size=(config.frames, config.joints))],
        axis=-1,
    )
    features = model.encode(video, skeleton)
    label = int(rng.integers(0, config.num_classes))

    def evaluate():
        return ops.cross_entropy(model.forward_features(features), label)

    trainable = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
    result = check_gradients(evaluate, trainable, components=3, seed=seed, floor=COMPOSITE_FLOOR)
    config_out = {**config.model_dump(mode="json"), "floor": COMPOSITE_FLOOR}
    return _result(
        "gradcheck_end_to_end", result.max_relative_error, MODEL_TOLERANCE, config_out, seed,
        {"worst": list(result.worst) if result.worst else None},
    )


# --------------------------------------------------------------------------- #
# (d) complexity sweep
# --------------------------------------------------------------------------- #


def _growth_error(stride_growth: float, oracle_growth: float) -> float:
    def outside(value, bounds):
        low, high = bounds
        return max(0.0, low - value, value - high)

    return outside(stride_growth, STRIDE_GROWTH) + outside(oracle_growth, ORACLE_GROWTH)


def check_joint_complexity(seed: int) -> CheckResult:
    small = measure_joint_stride(64, 2, 4, seed=seed)
    large = measure_joint_stride(128, 2, 4, seed=seed)
    stride_growth, oracle_growth = growth(small, large)
    config = {
        "joints": [64, 128],
        "frames": 2,
        "wnd": 4,
        "stride_growth": stride_growth,
        "oracle_growth": oracle_growth,
        "rows": [small.model_dump(), large.model_dump()],
    }
    return _result("complexity_joint_axis", _growth_error(stride_growth, oracle_growth), 0.0, config, seed)


def check_temporal_complexity(seed: int) -> CheckResult:
    small = measure_temporal_stride(32, 4, seed=seed)
    large = measure_temporal_stride(64, 4, seed=seed)
    stride_growth, oracle_growth = growth(small, large)
    config = {
        "frames": [32, 64],
        "tokens_per_step": small.tokens_per_step,
        "wnd": 4,
        "stride_growth": stride_growth,
        "oracle_growth": oracle_growth,
        "rows": [small.model_dump(), large.model_dump()],
    }
    return _result("complexity_time_axis", _growth_error(stride_growth, oracle_growth), 0.0, config, seed)


def run_equivalence_suite(
    seed: int = 0,
    faults: Sequence[str] = (),
    trials: int = 100,
    threads: Optional[int] = None,
) -> SuiteReport:
    unknown = sorted(set(faults) - set(FAULTS))
    if unknown:
        raise UsageError(f"Unknown fault(s) {unknown}; choose from {list(FAULTS)}")
    faults = sorted(set(faults))
    checks: List[Callable[[], CheckResult]] = [
        lambda: check_identity_sampling(seed, trials, faults),
        lambda: check_deformable_zero_offset(seed, trials, faults),
        lambda: check_joint_single_window(seed, trials, faults),
        lambda: check_temporal_single_window(seed, trials, faults),
        lambda: check_primitive_gradients(seed),
        lambda: check_deformable_gradients(seed),
        lambda: check_model_gradients(seed),
        lambda: check_joint_complexity(seed),
        lambda: check_temporal_complexity(seed),
    ]
    started = time.perf_counter()
    workers = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda check: check(), checks))
    for result in results:
        log = logger.info if result.status == "pass" else logger.error
        log(
            f"{result.check_name}: {result.status} (max error {result.max_error:.3e})",
            extra={"check_name": result.check_name, "status": result.status},
        )
    return SuiteReport(
        seed=seed,
        passed=all(r.status == "pass" for r in results),
        faults=list(faults),
        runtime_seconds=time.perf_counter() - started,
        checks=results,
    )
