"""ISTA proximal-gradient solver over pluggable degradation operators.

The data term is 1/2 ||A x - y||^2 (Frobenius), so its gradient is
A^T (A x - y) and the classical step-size bound is 1/||A||^2. Degradation
operators expose exact apply/adjoint pairs; blur-downsample keeps the
upper-left pixel of each s x s block and its adjoint zero-stuffs before
the transposed blur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .grids import PlanarImage
from .layers import correlate_stack
from .prox import NeuralProx, SoftThreshold, TVProx, tv_value_aniso

POWER_ITERATIONS = 50


@dataclass(frozen=True)
class Identity:
    """A = I; its own adjoint."""

    def apply(self, x: PlanarImage) -> PlanarImage:
        return x

    def adjoint(self, y: PlanarImage) -> PlanarImage:
        return y

    def domain_shape(self, y: PlanarImage) -> tuple[int, int, int]:
        return y.data.shape


@dataclass(frozen=True)
class BlurDownsample:
    """A = downsample_s o correlate_K with zero padding (SAME size blur).

    Downsampling keeps the upper-left pixel of each s x s block, so the
    adjoint zero-stuffs y back onto the fine grid and correlates with the
    flipped kernel.
    """

    kernel: np.ndarray
    scale: int

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be square and odd-sized, got {k.shape}")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        object.__setattr__(self, "kernel", k)

    def _blur(self, data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        weights = kernel[None, :, :, None]
        out = np.empty_like(data)
        for c in range(data.shape[2]):
            out[:, :, c] = correlate_stack(data[:, :, c : c + 1], weights)[:, :, 0]
        return out

    def apply(self, x: PlanarImage) -> PlanarImage:
        h, w = x.data.shape[:2]
        if h % self.scale or w % self.scale:
            raise ValueError(
                f"scale {self.scale} must divide image size {h}x{w}"
            )
        blurred = self._blur(x.data, self.kernel)
        return PlanarImage(
            np.ascontiguousarray(blurred[:: self.scale, :: self.scale, :]),
            mesh=x.mesh * self.scale,
        )

    def adjoint(self, y: PlanarImage) -> PlanarImage:
        h, w, c = y.data.shape
        stuffed = np.zeros((h * self.scale, w * self.scale, c))
        stuffed[:: self.scale, :: self.scale, :] = y.data
        out = self._blur(stuffed, self.kernel[::-1, ::-1])
        return PlanarImage(out, mesh=y.mesh / self.scale)

    def domain_shape(self, y: PlanarImage) -> tuple[int, int, int]:
        h, w, c = y.data.shape
        return (h * self.scale, w * self.scale, c)


DegradationOp = Union[Identity, BlurDownsample]


def degrade(op: DegradationOp, x: PlanarImage, noise_sigma: float, seed: int) -> PlanarImage:
    """apply(x) plus seeded Gaussian noise N(0, sigma^2)."""
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    y = op.apply(x)
    if noise_sigma == 0:
        return y
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=y.data.shape)
    return PlanarImage(y.data + noise, mesh=y.mesh)


def estimate_lipschitz(op: DegradationOp, y: PlanarImage, seed: int = 0) -> float:
    """Largest eigenvalue of A^T A (= ||A||^2) by 50 power-iteration steps."""
    rng = np.random.default_rng(seed)
    shape = op.domain_shape(y)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    mesh = y.mesh * getattr(op, "scale", 1)
    lam = 0.0
    for _ in range(POWER_ITERATIONS):
        img = PlanarImage(v, mesh=mesh)
        av = op.adjoint(op.apply(img)).data
        lam = float(np.linalg.norm(av))
        if lam == 0.0:
            return 0.0
        v = av / lam
    return lam


@dataclass(frozen=True)
class UnfoldingConfig:
    """T proximal-gradient steps at step size eta; eta=None means auto 1/L_A."""

    steps: int
    step_size: float | None
    prox: Callable[[PlanarImage], PlanarImage]
    record_objective: bool = False

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")


class SolverDivergence(RuntimeError):
    """Raised when an iterate goes non-finite; .step is the offending step."""

    def __init__(self, step: int):
        super().__init__(f"non-finite iterate at step {step}")
        self.step = step


def _gradient(x: PlanarImage, y: PlanarImage, op: DegradationOp) -> PlanarImage:
    residual = PlanarImage(op.apply(x).data - y.data, mesh=y.mesh)
    return op.adjoint(residual)


def ista_step(x_t: PlanarImage, y: PlanarImage, op: DegradationOp, cfg: UnfoldingConfig) -> PlanarImage:
    """prox(x - eta * A^T(Ax - y)): one proximal-gradient step."""
    eta = cfg.step_size
    if eta is None:
        raise ValueError("step_size must be resolved before stepping")
    grad = _gradient(x_t, y, op)
    shifted = PlanarImage(x_t.data - eta * grad.data, mesh=x_t.mesh)
    return cfg.prox(shifted)


def _regularizer_term(prox, eta: float) -> Callable[[PlanarImage], float] | None:
    """Closed-form lambda*R(x) when the prox's objective is known, else None.

    Prox weights fold the trade-off as w = lambda * eta, so lambda = w / eta.
    """
    if isinstance(prox, SoftThreshold):
        lam = prox.weight / eta
        return lambda x: lam * float(np.sum(np.abs(x.data)))
    if isinstance(prox, TVProx):
        lam = prox.weight / eta
        return lambda x: lam * sum(
            tv_value_aniso(x.data[:, :, c]) for c in range(x.channels)
        )
    return None


def ista_solve(y: PlanarImage, op: DegradationOp, cfg: UnfoldingConfig) -> tuple[PlanarImage, list[float]]:
    """Run T steps from x0 = adjoint(y).

    The trace (when recorded) has T+1 entries: objective at x0, then after
    every step. The objective is 1/2 ||Ax - y||^2 plus lambda*R(x) when R has
    a closed form (L1, anisotropic TV), else the fidelity alone.
    """
    lip = estimate_lipschitz(op, y)
    if cfg.step_size is None:
        eta = 1.0 / lip if lip > 0 else 1.0
        cfg = UnfoldingConfig(cfg.steps, eta, cfg.prox, cfg.record_objective)
    elif lip > 0 and cfg.step_size > 1.0 / lip:
        raise ValueError(
            f"step_size {cfg.step_size} exceeds 1/L_A = {1.0 / lip:.6g}"
        )
    reg = _regularizer_term(cfg.prox, cfg.step_size)

    def objective(x: PlanarImage) -> float:
        fit = 0.5 * float(np.sum((op.apply(x).data - y.data) ** 2))
        return fit + (reg(x) if reg is not None else 0.0)

    x = op.adjoint(y)
    trace: list[float] = []
    if cfg.record_objective:
        trace.append(objective(x))
    for step in range(1, cfg.steps + 1):
        x = ista_step(x, y, op, cfg)
        if not np.all(np.isfinite(x.data)):
            raise SolverDivergence(step)
        if cfg.record_objective:
            trace.append(objective(x))
    return x, trace


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Isotropic Gaussian taps on a size x size grid, normalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if not sigma > 0:
        raise ValueError(f"kernel sigma must be > 0, got {sigma}")
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (r / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def psnr(x: PlanarImage, reference: PlanarImage, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; inf when the images are identical."""
    if x.data.shape != reference.data.shape:
        raise ValueError(
            f"shape mismatch {x.data.shape} vs {reference.data.shape}"
        )
    mse = float(np.mean((x.data - reference.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
