"""Shared test oracles.

Everything here recomputes expected values through a route independent of the
library's own path (dense QP solvers, exhaustive search, finite differences),
so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.optimize

from rotprox import (
    Bias,
    FourierBasis,
    GroupSpec,
    Lift,
    NetworkSpec,
    PlainConv,
    PlanarImage,
    ReLU,
    forward,
    forward_with_tape,
    init_network,
    make_audit_net,
    make_denoiser_net,
    mse_loss,
    parameters,
)
from rotprox.layers import GroupConv
from rotprox.training import backward

GRAD_CHECK_FAMILIES = ("plain_conv", "lift", "group_conv", "pooled", "residual")


def difference_matrix(h: int, w: int) -> np.ndarray:
    """Dense D with one row per horizontal/vertical neighbor pair: (Du)_e = u_b - u_a."""
    edges = []
    for i in range(h):
        for j in range(w - 1):
            edges.append((i * w + j, i * w + j + 1))
    for i in range(h - 1):
        for j in range(w):
            edges.append((i * w + j, (i + 1) * w + j))
    d = np.zeros((len(edges), h * w))
    for e, (a, b) in enumerate(edges):
        d[e, a] = -1.0
        d[e, b] = 1.0
    return d


def tv_prox_dual_qp(f: np.ndarray, weight: float, method: str = "trf") -> np.ndarray:
    """Anisotropic TV prox of one (H, W) plane via its box-constrained dual QP.

    min_u 1/2||u - f||^2 + weight * ||Du||_1 dualizes to
    min_{|q| <= weight} 1/2||f - D^T q||^2 with u* = f - D^T q*; u* is unique
    even though q* is not. BVLS is exact on a path graph (1-row images); trf
    handles the rank-deficient 2D incidence to high accuracy.
    """
    h, w = f.shape
    dt = difference_matrix(h, w).T
    res = scipy.optimize.lsq_linear(
        dt, f.ravel(), bounds=(-weight, weight), method=method, tol=1e-14
    )
    return (f.ravel() - dt @ res.x).reshape(h, w)


def tv_objective(u: np.ndarray, f: np.ndarray, weight: float) -> float:
    d = difference_matrix(*f.shape)
    return 0.5 * float(np.sum((u - f) ** 2)) + weight * float(np.sum(np.abs(d @ u.ravel())))


def bound_reference(layers, F0, G0, H0, p, h, t, height, width) -> float:
    """Layer-cascade bound restated with explicit per-layer loops.

    `layers` is a list of (slices, F, G, H) tuples. The inner prefix sum is
    recomputed from scratch for every layer, so the arithmetic path shares
    nothing with the library's accumulator version.
    """
    import math

    n_layers = len(layers)
    f_script = 1.0
    for slices, f_sup, _, _ in layers:
        f_script = f_script * (slices * p * p * f_sup)
    total = 0.0
    for i in range(n_layers):
        _, f_i, g_i, h_i = layers[i]
        earlier = 0.0
        for m in range(i):
            _, f_m, g_m, _ = layers[m]
            earlier += g_m * F0 / f_m
        total += h_i * F0 / f_i + 2.0 * (g_i / f_i) * earlier + 2.0 * g_i * G0 / f_i + H0
    c1 = 2.0 * n_layers * f_script * total
    c2 = 2.0 * math.pi * G0 * f_script * (2.0 * max(height, width) / p + 2.0 * n_layers)
    return c1 * h * h + c2 * p * h / t


def best_subset_support(y: np.ndarray, k: int) -> frozenset[int]:
    """Exhaustive best k-sparse least-squares support for the identity operator.

    For A = I the residual of fitting on support S is sum of y^2 off S, so the
    full combinations loop is cheap enough to stay exhaustive.
    """
    flat = y.ravel()
    sq = flat**2
    total = float(sq.sum())
    best, best_cost = frozenset(), np.inf
    for combo in itertools.combinations(range(flat.size), k):
        cost = total - float(sq[list(combo)].sum())
        if cost < best_cost:
            best, best_cost = frozenset(combo), cost
    return best


def net_loss(net, x: PlanarImage, target: np.ndarray) -> float:
    return mse_loss(forward(net, x).data, target)[0]


def directional_grad_check(net, x: PlanarImage, target: np.ndarray, rng, step: float = 1e-5):
    """Relative error between backward() and a central finite difference along
    one random parameter direction. Returns (relative_error, analytic, numeric)."""
    out, tape = forward_with_tape(net, x)
    _, dpred = mse_loss(out.data, target)
    grads, _ = backward(tape, dpred)

    params = parameters(net)
    direction = {}
    norm_sq = 0.0
    for idx, name, arr in params:
        d = rng.standard_normal(arr.shape)
        direction[(idx, name)] = d
        norm_sq += float(np.sum(d * d))
    scale = 1.0 / np.sqrt(norm_sq)

    analytic = 0.0
    for key, d in direction.items():
        if key in grads:
            analytic += float(np.sum(grads[key] * d)) * scale

    def shifted_loss(sign: float) -> float:
        for idx, name, arr in params:
            arr += sign * step * scale * direction[(idx, name)]
        try:
            return net_loss(net, x, target)
        finally:
            for idx, name, arr in params:
                arr -= sign * step * scale * direction[(idx, name)]

    numeric = (shifted_loss(+1.0) - shifted_loss(-1.0)) / (2.0 * step)
    denom = max(abs(analytic), abs(numeric), 1e-12)
    return abs(analytic - numeric) / denom, analytic, numeric


def sample_grad_config(family: str, rng):
    """One random (net, input, target) triple for a gradient check of `family`.

    Inputs are resampled while any ReLU pre-activation sits within 1e-3 of its
    kink, where a central difference would straddle the nondifferentiable point.
    """
    size = int(rng.integers(7, 11))
    if family == "plain_conv":
        c = int(rng.integers(1, 4))
        basis = FourierBasis(3, 1)
        net = NetworkSpec(
            [
                PlainConv(1, c, basis, 0.5 * rng.standard_normal((c, 1, basis.size))),
                Bias(0.1 * rng.standard_normal(c)),
                ReLU(),
                PlainConv(c, 1, basis, 0.5 * rng.standard_normal((1, c, basis.size))),
            ]
        )
        out_shape = (size, size, 1)
    elif family == "lift":
        t = int(rng.choice([1, 2, 3, 4, 6]))
        c = int(rng.integers(1, 4))
        p, cutoff = (3, 1) if rng.random() < 0.5 else (5, 2)
        basis = FourierBasis(p, cutoff)
        net = NetworkSpec(
            [Lift(1, c, t, basis, 0.5 * rng.standard_normal((c, 1, basis.size)))],
            GroupSpec(t),
        )
        out_shape = (size, size, t, c)
    elif family == "group_conv":
        t = int(rng.choice([1, 2, 3, 4]))
        c = int(rng.integers(1, 3))
        basis = FourierBasis(3, 1)
        net = NetworkSpec(
            [
                Lift(1, c, t, basis, 0.5 * rng.standard_normal((c, 1, basis.size))),
                Bias(0.1 * rng.standard_normal(c)),
                ReLU(),
                GroupConv(c, c, basis, 0.5 * rng.standard_normal((c, c, t, basis.size))),
            ],
            GroupSpec(t),
        )
        out_shape = (size, size, t, c)
    elif family == "pooled":
        t = int(rng.choice([1, 2, 4]))
        c = int(rng.integers(2, 4))
        net = make_audit_net(t, channels=c, n_conv=2, p=3, cutoff=1, seed=int(rng.integers(2**31)))
        out_shape = (size, size, c)
    elif family == "residual":
        t = int(rng.choice([1, 2, 4]))
        net = init_network(
            make_denoiser_net(t, channels=2, p=3, cutoff=1), seed=int(rng.integers(2**31))
        )
        out_shape = (size, size, 1)
    else:
        raise ValueError(f"unknown family {family}")

    for layer in net.layers:
        # factory nets come with zero biases; a nonzero shift keeps border
        # pre-activations (exact zeros from dead-ReLU patches) off the kink
        if isinstance(layer, Bias):
            layer.values[:] = 0.05 * rng.standard_normal(layer.values.shape)

    best_x, best_gap = None, -np.inf
    for _ in range(50):
        x = PlanarImage(rng.standard_normal((size, size, 1)))
        gap = min_relu_gap(net, x)
        if gap > best_gap:
            best_x, best_gap = x, gap
        if gap >= 1e-3:
            break
    return net, best_x, rng.standard_normal(out_shape)


def min_relu_gap(net, x: PlanarImage) -> float:
    """Smallest |pre-activation| any ReLU in the net sees on input x."""
    from rotprox import ReLU
    from rotprox.layers import apply_layer

    value = x
    activations = []
    gap = np.inf
    for layer in net.layers:
        if isinstance(layer, ReLU):
            gap = min(gap, float(np.min(np.abs(value.data))))
        value = apply_layer(layer, value, activations, x)
        activations.append(value)
    return gap
