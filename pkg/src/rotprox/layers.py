"""Rotation-equivariant network layers over a cyclic group of order t.

A lifting convolution correlates a planar image with t rotated copies of each
continuous filter, producing an orientation fiber. Group convolutions mix
orientations with filters sampled at relative angles, storing 1/t of the
parameters of the equivalent plain convolution. Orientation pooling (mean)
returns to the planar domain. All convolutions are stride-1 correlations with
zero padding (SAME size); equivariance metrics crop the receptive ring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .filters import FourierBasis, basis_stack, init_coefficients
from .grids import GroupFeatureMap, GroupSpec, PlanarImage


def correlate_stack(arr: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Correlate (H, W, Cin) with a (Cin, p, p, Cout) weight bank, zero padding, SAME size."""
    p = weights.shape[1]
    m = (p - 1) // 2
    padded = np.pad(arr, ((m, m), (m, m), (0, 0)))
    win = sliding_window_view(padded, (p, p), axis=(0, 1))
    return np.tensordot(win, weights, axes=([2, 3, 4], [0, 1, 2]))


@dataclass
class Lift:
    """Planar -> group feature map; orientation slice o uses filters rotated by 2*pi*o/t."""

    in_channels: int
    out_channels: int
    group_order: int
    basis: FourierBasis
    coeffs: np.ndarray  # (out, in, basis size)

    kind = "lift"

    def __post_init__(self):
        expected = (self.out_channels, self.in_channels, self.basis.size)
        self.coeffs = np.ascontiguousarray(np.asarray(self.coeffs, dtype=np.float64))
        if self.coeffs.shape != expected:
            raise ValueError(f"lift coeffs shape {self.coeffs.shape} != {expected}")
        if self.group_order < 1:
            raise ValueError(f"group order must be >= 1, got {self.group_order}")

    def weights(self) -> np.ndarray:
        """(Cin, p, p, t*Cout) with the output axis flattened orientation-major."""
        t, co, ci = self.group_order, self.out_channels, self.in_channels
        p = self.basis.filter_size
        out = np.empty((ci, p, p, t * co))
        for o in range(t):
            stack = basis_stack(self.basis, 2.0 * np.pi * o / t if o else 0.0)
            taps = np.tensordot(self.coeffs, stack, axes=([2], [0]))  # (Co, Ci, p, p)
            out[:, :, :, o * co : (o + 1) * co] = taps.transpose(1, 2, 3, 0)
        return out


@dataclass
class GroupConv:
    """Group -> group feature map via cyclic group correlation.

    coeffs[c_out, c_in, d, :] parametrizes the filter applied to input orientation
    o_in = (o_out + d) mod t when producing output orientation o_out, sampled at
    the output orientation's angle.
    """

    in_channels: int
    out_channels: int
    basis: FourierBasis
    coeffs: np.ndarray  # (out, in, t, basis size)

    kind = "group_conv"

    def __post_init__(self):
        self.coeffs = np.ascontiguousarray(np.asarray(self.coeffs, dtype=np.float64))
        if self.coeffs.ndim != 4 or self.coeffs.shape[:2] != (self.out_channels, self.in_channels):
            raise ValueError(
                f"group conv coeffs shape {self.coeffs.shape} inconsistent with "
                f"({self.out_channels}, {self.in_channels}, t, {self.basis.size})"
            )
        if self.coeffs.shape[3] != self.basis.size:
            raise ValueError(f"coeff basis dim {self.coeffs.shape[3]} != basis size {self.basis.size}")

    @property
    def group_order(self) -> int:
        return self.coeffs.shape[2]

    def weights(self) -> np.ndarray:
        """(t*Cin, p, p, t*Cout), both channel axes flattened orientation-major."""
        t, co, ci = self.group_order, self.out_channels, self.in_channels
        p = self.basis.filter_size
        out = np.empty((t * ci, p, p, t * co))
        offsets = np.arange(t)
        for o_out in range(t):
            stack = basis_stack(self.basis, 2.0 * np.pi * o_out / t if o_out else 0.0)
            sel = self.coeffs[:, :, (offsets - o_out) % t, :]  # (Co, Ci, t_in, nb)
            taps = np.tensordot(sel, stack, axes=([3], [0]))  # (Co, Ci, t_in, p, p)
            block = taps.transpose(2, 1, 3, 4, 0).reshape(t * ci, p, p, co)
            out[:, :, :, o_out * co : (o_out + 1) * co] = block
        return out


@dataclass
class PlainConv:
    """Ordinary (non-equivariant) convolution baseline on planar images."""

    in_channels: int
    out_channels: int
    basis: FourierBasis
    coeffs: np.ndarray  # (out, in, basis size)

    kind = "plain_conv"

    def __post_init__(self):
        expected = (self.out_channels, self.in_channels, self.basis.size)
        self.coeffs = np.ascontiguousarray(np.asarray(self.coeffs, dtype=np.float64))
        if self.coeffs.shape != expected:
            raise ValueError(f"plain conv coeffs shape {self.coeffs.shape} != {expected}")

    def weights(self) -> np.ndarray:
        stack = basis_stack(self.basis, 0.0)
        taps = np.tensordot(self.coeffs, stack, axes=([2], [0]))  # (Co, Ci, p, p)
        return taps.transpose(1, 2, 3, 0)


@dataclass
class Bias:
    """One scalar per base channel, shared across the orientation fiber."""

    values: np.ndarray

    kind = "bias"

    def __post_init__(self):
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError(f"bias values must be 1D, got shape {self.values.shape}")

    @property
    def channels(self) -> int:
        return self.values.shape[0]


@dataclass
class ReLU:
    kind = "relu"


@dataclass
class ResidualAdd:
    """Adds the recorded output of layer `skip` (-1 = network input)."""

    skip: int

    kind = "residual_add"


@dataclass
class OrientationPool:
    """Mean over the orientation axis; group feature map -> planar image."""

    kind = "orientation_pool"


CONV_KINDS = (Lift, GroupConv, PlainConv)


@dataclass
class NetworkSpec:
    """Validated layer chain; shapes are checked here, not at forward time."""

    layers: list
    group: GroupSpec = field(default_factory=lambda: GroupSpec(1))

    def __post_init__(self):
        self._states = _validate_chain(self.layers, self.group)

    @property
    def receptive_radius(self) -> int:
        return sum((l.basis.filter_size - 1) // 2 for l in self.layers if isinstance(l, CONV_KINDS))

    @property
    def conv_layers(self) -> list:
        return [l for l in self.layers if isinstance(l, CONV_KINDS)]

    @property
    def input_channels(self) -> int:
        for l in self.layers:
            if isinstance(l, CONV_KINDS):
                return l.in_channels
        return 0

    def output_state(self) -> tuple[str, int]:
        """("planar"|"group", channels) of the network output."""
        return self._states[-1]

    def revalidate(self) -> None:
        self._states = _validate_chain(self.layers, self.group)


def _validate_chain(layers, group: GroupSpec) -> list[tuple[str, int]]:
    t = group.order
    state = ("planar", None)  # channel count fixed by the first conv layer
    states: list[tuple[str, int]] = []
    lift_seen = False
    for idx, layer in enumerate(layers):
        kind, c = state
        if isinstance(layer, Lift):
            if lift_seen:
                raise ValueError(f"layer {idx}: second Lift in one network")
            if kind != "planar":
                raise ValueError(f"layer {idx}: Lift needs a planar input")
            if c is not None and c != layer.in_channels:
                raise ValueError(f"layer {idx}: Lift expects {layer.in_channels} channels, chain has {c}")
            if layer.group_order != t:
                raise ValueError(f"layer {idx}: Lift group order {layer.group_order} != network order {t}")
            lift_seen = True
            state = ("group", layer.out_channels)
        elif isinstance(layer, GroupConv):
            if kind != "group":
                raise ValueError(f"layer {idx}: GroupConv needs a group feature map (add a Lift first)")
            if c != layer.in_channels:
                raise ValueError(f"layer {idx}: GroupConv expects {layer.in_channels} channels, chain has {c}")
            if layer.group_order != t:
                raise ValueError(f"layer {idx}: GroupConv group order {layer.group_order} != network order {t}")
            state = ("group", layer.out_channels)
        elif isinstance(layer, PlainConv):
            if kind != "planar":
                raise ValueError(f"layer {idx}: PlainConv needs a planar input")
            if c is not None and c != layer.in_channels:
                raise ValueError(f"layer {idx}: PlainConv expects {layer.in_channels} channels, chain has {c}")
            state = ("planar", layer.out_channels)
        elif isinstance(layer, Bias):
            if c is None:
                raise ValueError(f"layer {idx}: Bias before any convolution")
            if layer.channels != c:
                raise ValueError(f"layer {idx}: Bias has {layer.channels} values, chain has {c} channels")
        elif isinstance(layer, ReLU):
            if c is None:
                raise ValueError(f"layer {idx}: ReLU before any convolution")
        elif isinstance(layer, ResidualAdd):
            if not -1 <= layer.skip < idx:
                raise ValueError(f"layer {idx}: residual skip {layer.skip} out of range")
            ref = ("planar", None) if layer.skip == -1 else states[layer.skip]
            if layer.skip == -1:
                if kind != "planar":
                    raise ValueError(f"layer {idx}: residual to network input needs a planar activation")
            elif ref != state:
                raise ValueError(f"layer {idx}: residual shapes differ, {ref} vs {state}")
        elif isinstance(layer, OrientationPool):
            if kind != "group":
                raise ValueError(f"layer {idx}: OrientationPool needs a group feature map")
            if idx != len(layers) - 1:
                raise ValueError(f"layer {idx}: OrientationPool must be the last layer")
            state = ("planar", c)
        else:
            raise ValueError(f"layer {idx}: unknown layer {layer!r}")
        states.append(state)
    states.insert(0, ("planar", None))
    return states


def lift_conv(x: PlanarImage, layer: Lift) -> GroupFeatureMap:
    """Apply a lifting convolution to a planar image."""
    if x.channels != layer.in_channels:
        raise ValueError(f"image has {x.channels} channels, lift expects {layer.in_channels}")
    h, w = x.height, x.width
    out = correlate_stack(x.data, layer.weights())
    return GroupFeatureMap(out.reshape(h, w, layer.group_order, layer.out_channels), mesh=x.mesh)


def group_conv(f: GroupFeatureMap, layer: GroupConv) -> GroupFeatureMap:
    """Apply a group convolution to a group feature map."""
    t = layer.group_order
    if f.group_order != t:
        raise ValueError(f"feature map group order {f.group_order} != layer order {t}")
    if f.base_channels != layer.in_channels:
        raise ValueError(f"feature map has {f.base_channels} channels, layer expects {layer.in_channels}")
    h, w = f.height, f.width
    out = correlate_stack(f.data.reshape(h, w, t * layer.in_channels), layer.weights())
    return GroupFeatureMap(out.reshape(h, w, t, layer.out_channels), mesh=f.mesh)


def plain_conv(x: PlanarImage, layer: PlainConv) -> PlanarImage:
    if x.channels != layer.in_channels:
        raise ValueError(f"image has {x.channels} channels, conv expects {layer.in_channels}")
    return PlanarImage(correlate_stack(x.data, layer.weights()), mesh=x.mesh)


def apply_layer(layer, value, activations, x0):
    """One layer step; `value` and entries of `activations` are PlanarImage/GroupFeatureMap."""
    if isinstance(layer, Lift):
        return lift_conv(value, layer)
    if isinstance(layer, GroupConv):
        return group_conv(value, layer)
    if isinstance(layer, PlainConv):
        return plain_conv(value, layer)
    if isinstance(layer, Bias):
        if isinstance(value, GroupFeatureMap):
            return GroupFeatureMap(value.data + layer.values[None, None, None, :], mesh=value.mesh)
        return PlanarImage(value.data + layer.values[None, None, :], mesh=value.mesh)
    if isinstance(layer, ReLU):
        cls = type(value)
        return cls(np.maximum(value.data, 0.0), mesh=value.mesh)
    if isinstance(layer, ResidualAdd):
        other = x0 if layer.skip == -1 else activations[layer.skip]
        cls = type(value)
        return cls(value.data + other.data, mesh=value.mesh)
    if isinstance(layer, OrientationPool):
        return PlanarImage(value.data.mean(axis=2), mesh=value.mesh)
    raise ValueError(f"unknown layer {layer!r}")


def forward(net: NetworkSpec, x: PlanarImage):
    """Run the network; returns a PlanarImage or GroupFeatureMap per the layer chain."""
    value = x
    activations = []
    for layer in net.layers:
        value = apply_layer(layer, value, activations, x)
        activations.append(value)
    return value


def parameters(net: NetworkSpec) -> list[tuple[int, str, np.ndarray]]:
    """Trainable arrays as (layer index, name, array) in a fixed order."""
    out = []
    for idx, layer in enumerate(net.layers):
        if isinstance(layer, CONV_KINDS):
            out.append((idx, "coeffs", layer.coeffs))
        elif isinstance(layer, Bias):
            out.append((idx, "values", layer.values))
    return out


def param_count(net: NetworkSpec) -> int:
    return sum(arr.size for _, _, arr in parameters(net))


def _conv_fan_in(layer, t: int) -> int:
    if isinstance(layer, GroupConv):
        return t * layer.in_channels
    return layer.in_channels


def init_network(net: NetworkSpec, seed: int) -> NetworkSpec:
    """He-style coefficient init (variance 2/(fan-in slices * p^2)); biases start at 0."""
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        if isinstance(layer, CONV_KINDS):
            p = layer.basis.filter_size
            fan = _conv_fan_in(layer, net.group.order)
            layer.coeffs = init_coefficients(rng, layer.coeffs.shape, fan, p)
        elif isinstance(layer, Bias):
            layer.values = np.zeros_like(layer.values)
    return net


def make_audit_net(
    t: int,
    channels: int = 4,
    n_conv: int = 3,
    p: int = 5,
    cutoff: int = 2,
    seed: int = 0,
    in_channels: int = 1,
) -> NetworkSpec:
    """Lift -> (Bias, ReLU, GroupConv) x (n_conv - 1) -> OrientationPool, random weights."""
    if n_conv < 1:
        raise ValueError("need at least one convolution layer")
    basis = FourierBasis(p, cutoff)
    group = GroupSpec(t)
    nb = basis.size
    layers: list = [Lift(in_channels, channels, t, basis, np.zeros((channels, in_channels, nb)))]
    for _ in range(n_conv - 1):
        layers.append(Bias(np.zeros(channels)))
        layers.append(ReLU())
        layers.append(GroupConv(channels, channels, basis, np.zeros((channels, channels, t, nb))))
    layers.append(OrientationPool())
    return init_network(NetworkSpec(layers, group), seed)


def make_plain_net(
    channels: int = 4,
    n_conv: int = 3,
    p: int = 5,
    cutoff: int = 2,
    seed: int = 0,
    in_channels: int = 1,
) -> NetworkSpec:
    """PlainConv chain with the same wiring as make_audit_net, no orientation fiber."""
    if n_conv < 1:
        raise ValueError("need at least one convolution layer")
    basis = FourierBasis(p, cutoff)
    nb = basis.size
    layers: list = [PlainConv(in_channels, channels, basis, np.zeros((channels, in_channels, nb)))]
    for _ in range(n_conv - 1):
        layers.append(Bias(np.zeros(channels)))
        layers.append(ReLU())
        layers.append(PlainConv(channels, channels, basis, np.zeros((channels, channels, nb))))
    return init_network(NetworkSpec(layers, GroupSpec(1)), seed)


def make_sweep_net(
    t: int,
    channels: int = 3,
    seed: int = 0,
    in_channels: int = 1,
    master_order: int = 24,
) -> NetworkSpec:
    """Audit net for group-order sweeps: the filter bandwidth widens with depth
    (cutoff 2 lift, then two cutoff-4 group convs) so the cascade's compounded
    angular selectivity reaches past the finest audited group order. Narrow-band
    nets are blind to the gap between large t values; this family is not.

    For a fixed seed, nets at different t share their coefficient draws: group
    conv coefficients are drawn once at `master_order` orientation offsets and
    each t keeps the offsets on its own angle grid. Sweeps across t then compare
    structurally nested nets instead of independent random draws, which removes
    most net-to-net jitter from the comparison. Requires t to divide
    master_order; any other t falls back to independent draws.
    """
    b_lift = FourierBasis(5, 2)
    b_deep = FourierBasis(9, 4)
    group = GroupSpec(t)
    c = channels
    rng = np.random.default_rng(seed)
    lift_coeffs = init_coefficients(rng, (c, in_channels, b_lift.size), in_channels, 5)
    if master_order % t == 0:
        gc_shape = (c, c, master_order, b_deep.size)
        gc1 = init_coefficients(rng, gc_shape, t * c, 9)[:, :, :: master_order // t, :]
        gc2 = init_coefficients(rng, gc_shape, t * c, 9)[:, :, :: master_order // t, :]
    else:
        gc1 = init_coefficients(rng, (c, c, t, b_deep.size), t * c, 9)
        gc2 = init_coefficients(rng, (c, c, t, b_deep.size), t * c, 9)
    layers: list = [
        Lift(in_channels, c, t, b_lift, lift_coeffs),
        Bias(np.zeros(c)),
        ReLU(),
        GroupConv(c, c, b_deep, gc1),
        Bias(np.zeros(c)),
        ReLU(),
        GroupConv(c, c, b_deep, gc2),
        OrientationPool(),
    ]
    return NetworkSpec(layers, group)


def make_denoiser_net(
    t: int = 4,
    channels: int = 4,
    p: int = 5,
    cutoff: int = 2,
    seed: int = 0,
    in_channels: int = 1,
) -> NetworkSpec:
    """Residual-block equivariant denoiser body; final conv zero-init so the
    NeuralProx wrapper (identity + correction) starts as the identity map."""
    basis = FourierBasis(p, cutoff)
    group = GroupSpec(t)
    nb = basis.size
    c = channels
    layers: list = [
        Lift(in_channels, c, t, basis, np.zeros((c, in_channels, nb))),
        Bias(np.zeros(c)),
        ReLU(),
        GroupConv(c, c, basis, np.zeros((c, c, t, nb))),
        Bias(np.zeros(c)),
        ReLU(),
        GroupConv(c, c, basis, np.zeros((c, c, t, nb))),
        ResidualAdd(skip=2),
        Bias(np.zeros(c)),
        ReLU(),
        GroupConv(c, in_channels, basis, np.zeros((in_channels, c, t, nb))),
        OrientationPool(),
    ]
    net = init_network(NetworkSpec(layers, group), seed)
    net.layers[10].coeffs = np.zeros_like(net.layers[10].coeffs)
    return net


def make_plain_denoiser_net(
    channels: int = 8,
    p: int = 5,
    cutoff: int = 2,
    seed: int = 0,
    in_channels: int = 1,
) -> NetworkSpec:
    """PlainConv twin of make_denoiser_net; channels ~ C*sqrt(t) matches parameters."""
    basis = FourierBasis(p, cutoff)
    nb = basis.size
    c = channels
    layers: list = [
        PlainConv(in_channels, c, basis, np.zeros((c, in_channels, nb))),
        Bias(np.zeros(c)),
        ReLU(),
        PlainConv(c, c, basis, np.zeros((c, c, nb))),
        Bias(np.zeros(c)),
        ReLU(),
        PlainConv(c, c, basis, np.zeros((c, c, nb))),
        ResidualAdd(skip=2),
        Bias(np.zeros(c)),
        ReLU(),
        PlainConv(c, in_channels, basis, np.zeros((in_channels, c, nb))),
    ]
    net = init_network(NetworkSpec(layers, GroupSpec(1)), seed)
    net.layers[10].coeffs = np.zeros_like(net.layers[10].coeffs)
    return net
