"""Reverse-mode differentiation over the layer op set, plus a small full-batch trainer.

A forward pass records a Tape of primitives with exactly the arrays the reverse
pass needs (conv inputs and materialized weights, ReLU masks, bias values).
Convolution weight gradients chain through the fixed basis-sampling matrix, so
parameter gradients land on Fourier coefficients; equivariance is a property of
the parametrization and survives any number of updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .filters import basis_stack
from .grids import GroupFeatureMap, PlanarImage
from .layers import (
    CONV_KINDS,
    Bias,
    GroupConv,
    Lift,
    NetworkSpec,
    OrientationPool,
    PlainConv,
    ReLU,
    ResidualAdd,
    apply_layer,
    forward,
    parameters,
)


class TapeConsumed(RuntimeError):
    """A tape's saved buffers back exactly one reverse pass."""


@dataclass
class Tape:
    """Ordered record of one forward pass: per-layer saved arrays plus the output."""

    x0: PlanarImage
    entries: list[tuple]
    output: object
    consumed: bool = False


def _flat(value) -> np.ndarray:
    """Channel-flattened view: group maps (H,W,t,C) -> (H,W,t*C)."""
    if isinstance(value, GroupFeatureMap):
        h, w = value.height, value.width
        return value.data.reshape(h, w, -1)
    return value.data


def forward_with_tape(net: NetworkSpec, x: PlanarImage):
    """forward(net, x) while recording what the reverse pass needs."""
    value = x
    activations = []
    entries: list[tuple] = []
    for layer in net.layers:
        if isinstance(layer, CONV_KINDS):
            saved = (_flat(value), layer.weights(), value.data.shape)
        elif isinstance(layer, Bias):
            saved = (layer.values.copy(),)
        elif isinstance(layer, ReLU):
            saved = (value.data > 0.0,)
        else:
            saved = ()
        value = apply_layer(layer, value, activations, x)
        activations.append(value)
        entries.append((layer, saved))
    return value, Tape(x0=x, entries=entries, output=value)


def replay(tape: Tape) -> np.ndarray:
    """Recompute the recorded forward pass from the tape's saved arrays.

    Uses the weights and biases as recorded, so the result matches the taped
    output bit-exactly even after the network's parameters have been updated.
    """
    arr = tape.x0.data
    acts: list[np.ndarray] = []
    for layer, saved in tape.entries:
        if isinstance(layer, CONV_KINDS):
            _, w, _ = saved
            flat = arr.reshape(arr.shape[0], arr.shape[1], -1)
            out = _correlate_flat(flat, w)
            if isinstance(layer, PlainConv):
                arr = out
            else:
                t = layer.group_order
                arr = out.reshape(arr.shape[0], arr.shape[1], t, -1)
        elif isinstance(layer, Bias):
            (values,) = saved
            arr = arr + (values if arr.ndim == 3 else values[None, None, None, :])
        elif isinstance(layer, ReLU):
            arr = np.maximum(arr, 0.0)
        elif isinstance(layer, ResidualAdd):
            arr = arr + (tape.x0.data if layer.skip == -1 else acts[layer.skip])
        elif isinstance(layer, OrientationPool):
            arr = arr.mean(axis=2)
        else:
            raise ValueError(f"unknown layer {layer!r}")
        acts.append(arr)
    return arr


def _correlate_flat(arr: np.ndarray, weights: np.ndarray) -> np.ndarray:
    p = weights.shape[1]
    pad = p // 2
    padded = np.pad(arr, ((pad, pad), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, (p, p), axis=(0, 1))
    return np.tensordot(windows, weights, axes=([2, 3, 4], [0, 1, 2]))


def _conv_backward_input(g_flat: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the conv input: scatter the taps back over the padding."""
    p = w.shape[1]
    pad = p // 2
    h, wd = g_flat.shape[:2]
    slices = w.shape[0]
    taps = np.tensordot(g_flat, w, axes=([2], [3]))  # (H, W, Si, p, p)
    dxp = np.zeros((h + 2 * pad, wd + 2 * pad, slices))
    for u in range(p):
        for v in range(p):
            dxp[u : u + h, v : v + wd, :] += taps[:, :, :, u, v]
    return dxp[pad : pad + h, pad : pad + wd, :]


def _conv_backward_weights(x_flat: np.ndarray, g_flat: np.ndarray, p: int) -> np.ndarray:
    pad = p // 2
    h, wd = x_flat.shape[:2]
    slices = x_flat.shape[2]
    xp = np.pad(x_flat, ((pad, pad), (pad, pad), (0, 0)))
    gm = g_flat.reshape(-1, g_flat.shape[2])
    dw = np.empty((slices, p, p, g_flat.shape[2]))
    for u in range(p):
        for v in range(p):
            dw[:, u, v, :] = xp[u : u + h, v : v + wd, :].reshape(-1, slices).T @ gm
    return dw


def _layer_angle(o: int, t: int) -> float:
    # matches the weights() builders bit-for-bit (0.0 at o=0, not -0.0 etc.)
    return 2.0 * np.pi * o / t if o else 0.0


def _coeff_grad(layer, dw: np.ndarray) -> np.ndarray:
    """Chain tap gradients through the sampled basis onto Fourier coefficients."""
    if isinstance(layer, PlainConv):
        stack = basis_stack(layer.basis, 0.0)
        dtaps = dw.transpose(3, 0, 1, 2)  # (Co, Ci, p, p)
        return np.tensordot(dtaps, stack, axes=([2, 3], [1, 2]))
    if isinstance(layer, Lift):
        t, co = layer.group_order, layer.out_channels
        grad = np.zeros_like(layer.coeffs)
        for o in range(t):
            stack = basis_stack(layer.basis, _layer_angle(o, t))
            dtaps = dw[:, :, :, o * co : (o + 1) * co].transpose(3, 0, 1, 2)
            grad += np.tensordot(dtaps, stack, axes=([2, 3], [1, 2]))
        return grad
    t, co, ci = layer.group_order, layer.out_channels, layer.in_channels
    p = layer.basis.filter_size
    offsets = np.arange(t)
    grad = np.zeros_like(layer.coeffs)
    for o_out in range(t):
        stack = basis_stack(layer.basis, _layer_angle(o_out, t))
        dblock = dw[:, :, :, o_out * co : (o_out + 1) * co]
        dtaps = dblock.reshape(t, ci, p, p, co).transpose(4, 1, 0, 2, 3)
        dsel = np.tensordot(dtaps, stack, axes=([3, 4], [1, 2]))  # (Co, Ci, t_in, nb)
        grad[:, :, (offsets - o_out) % t, :] += dsel
    return grad


def backward(tape: Tape, loss_grad) -> tuple[dict[tuple[int, str], np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients from a seed gradient on the taped output.

    Returns ({(layer index, param name): gradient}, gradient w.r.t. the input).
    A tape backs exactly one reverse pass.
    """
    if tape.consumed:
        raise TapeConsumed("tape already consumed by a previous backward pass")
    tape.consumed = True
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != tape.output.data.shape:
        raise ValueError(f"seed gradient shape {g.shape} != output shape {tape.output.data.shape}")
    grads: dict[tuple[int, str], np.ndarray] = {}
    pending: dict[int, np.ndarray] = {}
    dx0 = np.zeros_like(tape.x0.data)
    for i in range(len(tape.entries) - 1, -1, -1):
        if i in pending:
            g = g + pending.pop(i)
        layer, saved = tape.entries[i]
        if isinstance(layer, CONV_KINDS):
            x_flat, w, in_shape = saved
            g_flat = g.reshape(g.shape[0], g.shape[1], -1)
            dw = _conv_backward_weights(x_flat, g_flat, layer.basis.filter_size)
            grads[(i, "coeffs")] = _coeff_grad(layer, dw)
            g = _conv_backward_input(g_flat, w).reshape(in_shape)
        elif isinstance(layer, Bias):
            axes = (0, 1, 2) if g.ndim == 4 else (0, 1)
            grads[(i, "values")] = g.sum(axis=axes)
        elif isinstance(layer, ReLU):
            (mask,) = saved
            g = g * mask
        elif isinstance(layer, ResidualAdd):
            if layer.skip == -1:
                dx0 = dx0 + g
            else:
                pending[layer.skip] = pending.get(layer.skip, 0.0) + g
        elif isinstance(layer, OrientationPool):
            t = _pool_order(tape, i)
            g = np.repeat((g / t)[:, :, None, :], t, axis=2)
        else:
            raise ValueError(f"unknown layer {layer!r}")
    return grads, dx0 + g


def _pool_order(tape: Tape, i: int) -> int:
    """Orientation count entering the pool at entry i (from the previous activation)."""
    for j in range(i - 1, -1, -1):
        layer, saved = tape.entries[j]
        if isinstance(layer, (Lift, GroupConv)):
            return layer.group_order
    raise ValueError("orientation pool without a preceding group layer")


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """(mean squared error, gradient w.r.t. pred)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff**2))
    return loss, (2.0 / diff.size) * diff


def soft_threshold_vjp(x: np.ndarray, w: float, g: np.ndarray) -> tuple[np.ndarray, float]:
    """VJP of soft_threshold: (gradient w.r.t. x, gradient w.r.t. w).

    The map is piecewise linear; on the active set d/dx = 1 and d/dw = -sign(x).
    """
    active = np.abs(x) > w
    dx = g * active
    dw = -float(np.sum(np.sign(x)[active] * g[active]))
    return dx, dw


def gradient_step_vjp(g: PlanarImage, op, eta: float) -> PlanarImage:
    """VJP of x -> x - eta * A^T(Ax - y): the Jacobian I - eta*A^T A is constant
    and self-adjoint, so the VJP is the same linear map applied to g."""
    ag = op.adjoint(op.apply(g))
    return PlanarImage(g.data - eta * ag.data, mesh=g.mesh)


@dataclass
class SGD:
    """Plain gradient descent: param -= lr * grad."""

    lr: float

    def apply(self, net: NetworkSpec, grads: dict[tuple[int, str], np.ndarray]) -> None:
        for idx, name, arr in parameters(net):
            g = grads.get((idx, name))
            if g is not None:
                arr -= self.lr * g


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: dict = field(default_factory=dict)

    def apply(self, net: NetworkSpec, grads: dict[tuple[int, str], np.ndarray]) -> None:
        for idx, name, arr in parameters(net):
            g = grads.get((idx, name))
            if g is None:
                continue
            m, v, step = self.state.get((idx, name), (np.zeros_like(arr), np.zeros_like(arr), 0))
            step += 1
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g**2
            self.state[(idx, name)] = (m, v, step)
            m_hat = m / (1.0 - self.beta1**step)
            v_hat = v / (1.0 - self.beta2**step)
            arr -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class TrainingDivergence(RuntimeError):
    """Raised when the epoch loss passes 1e6; .trace holds losses up to the abort."""

    def __init__(self, trace: list[float]):
        super().__init__(f"loss diverged to {trace[-1]:.3e} at epoch {len(trace) - 1}")
        self.trace = trace


DIVERGENCE_LIMIT = 1e6


def train_denoiser(
    net: NetworkSpec,
    pairs: Sequence[tuple[PlanarImage, PlanarImage]],
    opt,
    epochs: int,
    seed: int = 0,
) -> tuple[NetworkSpec, list[float]]:
    """Full-batch MSE training of a residual denoiser: prediction = noisy + net(noisy).

    `pairs` holds (clean, noisy) images. Returns the trained net and the loss
    trace [initial, after epoch 1, ..., after epoch `epochs`]. The run is fully
    deterministic: full batch, fixed accumulation order; `seed` is accepted for
    interface stability and does not currently feed any randomness.
    """
    del seed
    if not pairs:
        raise ValueError("empty training set")
    kind, channels = net.output_state()
    if kind != "planar":
        raise ValueError("denoiser must produce a planar image")
    for clean, noisy in pairs:
        if clean.data.shape != noisy.data.shape:
            raise ValueError("clean/noisy shape mismatch")
        if channels is not None and noisy.channels != channels:
            raise ValueError("image channels do not match the network output")

    def batch_loss_only() -> float:
        total = 0.0
        for clean, noisy in pairs:
            out = forward(net, noisy)
            total += mse_loss(noisy.data + out.data, clean.data)[0]
        return total / len(pairs)

    def batch_pass() -> tuple[float, dict[tuple[int, str], np.ndarray]]:
        total = 0.0
        acc: dict[tuple[int, str], np.ndarray] = {}
        for clean, noisy in pairs:
            out, tape = forward_with_tape(net, noisy)
            loss, dpred = mse_loss(noisy.data + out.data, clean.data)
            pg, _ = backward(tape, dpred)
            total += loss
            for key, val in pg.items():
                acc[key] = acc.get(key, 0.0) + val
        n = len(pairs)
        return total / n, {k: v / n for k, v in acc.items()}

    trace: list[float] = []
    for _ in range(epochs):
        loss, grads = batch_pass()
        trace.append(loss)
        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise TrainingDivergence(trace)
        opt.apply(net, grads)
    trace.append(batch_loss_only())
    if not np.isfinite(trace[-1]) or trace[-1] > DIVERGENCE_LIMIT:
        raise TrainingDivergence(trace)
    return net, trace
