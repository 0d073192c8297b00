"""Differentiable layer operations.

Tensors are plain numpy arrays in NHWC layout (row-major, float32 in
production paths). Every trainable op returns ``(output, GradTape)``; the
tape holds exactly what the backward pass needs and may be consumed once.

Conventions baked in here:
  - convolutions are valid (no padding), stride 1, cross-correlation
  - maxpool gradient ties go to the first maximum in row-major window order
  - relu gradient at exactly 0 is 0
  - cross-entropy clamps probabilities at 1e-12 before the log
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


class GradTape:
    """One-shot backward closure for a single forward call."""

    def __init__(self, fn):
        self._fn = fn
        self._consumed = False

    def backward(self, *grads):
        if self._consumed:
            raise RuntimeError("backward already invoked for this tape")
        self._consumed = True
        return self._fn(*grads)


@dataclass
class ConvParams:
    """Kernel of shape (Kh, Kw, Cin, Cout) plus a per-output-channel bias."""

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        kh, kw = self.kernel.shape[:2]
        if kh != kw or kh not in (3, 5, 7, 9):
            raise ShapeError(f"kernel must be square with size in (3,5,7,9), got {kh}x{kw}")
        if self.bias.shape != (self.kernel.shape[3],):
            raise ShapeError(
                f"bias extent {self.bias.shape} does not match output channels "
                f"{self.kernel.shape[3]}"
            )


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    epsilon: float = 1e-5

    def __post_init__(self):
        c = self.gamma.shape
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape != c:
                raise ShapeError(f"{name} extent {getattr(self, name).shape} != gamma extent {c}")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be non-negative")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")


def conv2d(x: np.ndarray, params: ConvParams) -> tuple[np.ndarray, GradTape]:
    """Valid, stride-1 cross-correlation over an NHWC batch.

    Output shape is (N, H-Kh+1, W-Kw+1, Cout). The tape's backward maps an
    output gradient to ``(d_input, d_kernel, d_bias)``.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4 (NHWC), got rank {x.ndim}")
    n, h, w, cin = x.shape
    kh, kw, kcin, cout = params.kernel.shape
    if cin != kcin:
        raise ShapeError(f"input channels {cin} != kernel input channels {kcin}")
    if h < kh or w < kw:
        raise ShapeError(f"spatial extent {h}x{w} smaller than kernel {kh}x{kw}")
    ho, wo = h - kh + 1, w - kw + 1

    kernel = params.kernel
    y = np.zeros((n, ho, wo, cout), dtype=x.dtype)
    # Accumulate one kernel position at a time; avoids materializing the
    # full im2col buffer (2 GB for the first 224x224 block at batch 8).
    for p in range(kh):
        for q in range(kw):
            y += x[:, p : p + ho, q : q + wo, :] @ kernel[p, q]
    y += params.bias.astype(x.dtype)

    def backward(dy):
        if dy.shape != y.shape:
            raise ShapeError(f"output gradient shape {dy.shape} != {y.shape}")
        d_kernel = np.empty_like(kernel)
        d_input = np.zeros_like(x)
        for p in range(kh):
            for q in range(kw):
                patch = x[:, p : p + ho, q : q + wo, :]
                d_kernel[p, q] = np.tensordot(patch, dy, axes=([0, 1, 2], [0, 1, 2]))
                d_input[:, p : p + ho, q : q + wo, :] += dy @ kernel[p, q].T
        d_bias = dy.sum(axis=(0, 1, 2))
        return d_input, d_kernel, d_bias

    return y, GradTape(backward)


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, GradTape]:
    """Disjoint 2x2 max pooling, stride 2; trailing odd row/column dropped."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2 input must be rank 4 (NHWC), got rank {x.ndim}")
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2 needs H,W >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2

    windows = (
        x[:, : 2 * ho, : 2 * wo, :]
        .reshape(n, ho, 2, wo, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, ho, wo, 4, c)
    )
    # argmax returns the first maximum, which is row-major window order.
    idx = windows.argmax(axis=3)
    y = np.take_along_axis(windows, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward(dy):
        if dy.shape != y.shape:
            raise ShapeError(f"output gradient shape {dy.shape} != {y.shape}")
        d_windows = np.zeros((n, ho, wo, 4, c), dtype=dy.dtype)
        np.put_along_axis(d_windows, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        d_input = np.zeros_like(x)
        d_input[:, : 2 * ho, : 2 * wo, :] = (
            d_windows.reshape(n, ho, wo, 2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, 2 * ho, 2 * wo, c)
        )
        return d_input

    return y, GradTape(backward)


def batch_norm(
    x: np.ndarray, params: BatchNormParams, mode: str = "infer"
) -> tuple[np.ndarray, GradTape]:
    """Per-channel batch normalization over the N, H, W axes.

    Train mode normalizes with batch statistics and updates the running
    statistics in place via exponential moving average; infer mode uses the
    running statistics and mutates nothing. Backward returns
    ``(d_input, d_gamma, d_beta)``.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm input must be rank 4 (NHWC), got rank {x.ndim}")
    c = x.shape[3]
    if params.gamma.shape != (c,):
        raise ShapeError(f"input channels {c} != batch-norm channels {params.gamma.shape[0]}")
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")

    gamma = params.gamma.astype(x.dtype)
    beta = params.beta.astype(x.dtype)
    eps = x.dtype.type(params.epsilon)

    if mode == "train":
        m = x.shape[0] * x.shape[1] * x.shape[2]
        if m < 2:
            raise ShapeError("train-mode batch_norm needs at least 2 values per channel")
        mean = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x - mean) * inv_std
        y = gamma * x_hat + beta
        mom = params.momentum
        params.running_mean[...] = mom * params.running_mean + (1 - mom) * mean
        params.running_var[...] = mom * params.running_var + (1 - mom) * var

        def backward(dy):
            d_gamma = (dy * x_hat).sum(axis=(0, 1, 2))
            d_beta = dy.sum(axis=(0, 1, 2))
            d_hat = dy * gamma
            d_input = (
                inv_std
                / m
                * (m * d_hat - d_hat.sum(axis=(0, 1, 2)) - x_hat * (d_hat * x_hat).sum(axis=(0, 1, 2)))
            )
            return d_input.astype(x.dtype, copy=False), d_gamma, d_beta

        return y.astype(x.dtype, copy=False), GradTape(backward)

    inv_std = 1.0 / np.sqrt(params.running_var.astype(x.dtype) + eps)
    x_hat = (x - params.running_mean.astype(x.dtype)) * inv_std
    y = gamma * x_hat + beta

    def backward_infer(dy):
        d_gamma = (dy * x_hat).sum(axis=(0, 1, 2))
        d_beta = dy.sum(axis=(0, 1, 2))
        return dy * gamma * inv_std, d_gamma, d_beta

    return y.astype(x.dtype, copy=False), GradTape(backward_infer)


def dense(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, GradTape]:
    """Affine map ``x @ weight + bias`` over a (N, Din) batch."""
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError(f"dense expects rank-2 input and weight, got {x.ndim} and {weight.ndim}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"input width {x.shape[1]} != weight input extent {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"bias extent {bias.shape} != weight output extent {weight.shape[1]}")
    y = x @ weight + bias

    def backward(dy):
        if dy.shape != y.shape:
            raise ShapeError(f"output gradient shape {dy.shape} != {y.shape}")
        return dy @ weight.T, x.T @ dy, dy.sum(axis=0)

    return y, GradTape(backward)


def relu(x: np.ndarray) -> tuple[np.ndarray, GradTape]:
    """Elementwise max(x, 0); gradient at exactly 0 is 0."""
    mask = x > 0

    def backward(dy):
        return dy * mask

    return np.where(mask, x, x.dtype.type(0)), GradTape(backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax over a (N, K) batch of logits."""
    if logits.ndim != 2 or logits.shape[1] < 1:
        raise ShapeError(f"softmax expects a rank-2 (N, K) input, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax rejects non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


PROB_FLOOR = 1e-12


def weighted_cross_entropy(
    probs: np.ndarray, labels: np.ndarray, class_weights: np.ndarray
) -> tuple[float, GradTape]:
    """Class-weighted negative log likelihood over softmax probabilities.

    loss = (1/N) sum_i w[y_i] * -ln(probs[i, y_i]), probabilities clamped
    at 1e-12. The tape's backward yields the gradient with respect to the
    logits that produced ``probs`` (the usual (p - onehot) form, scaled by
    w[y_i] / N), so no separate softmax backward is needed.
    """
    labels = np.asarray(labels)
    n, k = probs.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    row_sums = probs.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-4):
        raise ValueError("probs rows must sum to 1 within 1e-4")
    class_weights = np.asarray(class_weights)
    if class_weights.shape != (k,):
        raise ShapeError(f"class_weights shape {class_weights.shape} != ({k},)")

    w = class_weights[labels]
    picked = np.clip(probs[np.arange(n), labels], PROB_FLOOR, None)
    loss = float(np.mean(w * -np.log(picked)))

    def backward():
        d_logits = probs.copy()
        d_logits[np.arange(n), labels] -= 1.0
        d_logits *= (w / n)[:, None]
        return d_logits.astype(probs.dtype, copy=False)

    return loss, GradTape(backward)


@dataclass
class GradCheckReport:
    """Per-parameter max relative error of analytic vs numeric gradients."""

    errors: dict[str, float]
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def grad_check(fn, inputs: dict[str, np.ndarray], tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``fn`` maps the named float64 arrays to ``(scalar_loss, grads)`` where
    ``grads`` names a gradient for each input. Finite differencing runs in
    64-bit with step 1e-4; intended for small instances (<= 1e4 scalars).
    """
    inputs = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}
    total = sum(v.size for v in inputs.values())
    if total > 10_000:
        raise ValueError(f"grad_check limited to 1e4 scalars, got {total}")

    _, analytic = fn(inputs)
    step = 1e-4
    errors: dict[str, float] = {}
    failures: list[str] = []
    for name, base in inputs.items():
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _ = fn(inputs)
            flat[i] = orig - step
            down, _ = fn(inputs)
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * step)
        a = np.asarray(analytic[name], dtype=np.float64)
        scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
        err = float(np.abs(a - numeric).max(initial=0.0) / scale)
        errors[name] = err
        if err > tolerance:
            failures.append(name)
    return GradCheckReport(errors=errors, tolerance=tolerance, failures=failures)
