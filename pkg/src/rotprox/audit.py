"""Equivariance audits: measured rotation errors against the analytic layer-cascade
bound, group-order sweeps, mesh-refinement scaling, and the rotation-invariance
suite for classical regularizers.

The central quantity is the relative equivariance error
``||f(rot_theta x) - rot_theta f(x)|| / ||rot_theta f(x)||`` on the interior
(receptive ring cropped). The bound combines per-layer filter smoothness sups
with image smoothness sups into ``C1 h^2 + C2 p h / t``: a quadratic mesh term
plus an orientation-quantization term that decays with the group order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .filters import FourierBasis, SmoothnessBounds, bounds_from_coefficients, image_bounds, init_coefficients
from .grids import GroupSpec, PlanarImage, act_on_feature_map, relative_difference, rotate_image
from .layers import Lift, NetworkSpec, OrientationPool, _conv_fan_in, forward, make_sweep_net
from .synthetic import ring_stack, sample_field, synthetic_field

SWEEP_GROUP_ORDERS = (1, 2, 4, 8, 12, 24)
# Azimuthal harmonic orders of the sweep test images. The top orders sit past
# the coarser group orders' quantization cliffs, so every step of the sweep has
# angular content it visibly fails to transport; low orders keep small-t nets
# responsive. All are chosen off the audited group orders' common divisors.
SWEEP_RING_ORDERS = (3, 6, 9, 13, 16, 19, 22, 25, 28)

SWEEP_CSV_HEADER = "t,p,N,mean_error,max_error,bound,bound_satisfied"
REGULARIZER_CSV_HEADER = "regularizer,angle_rad,value"


@dataclass(frozen=True)
class LayerBounds:
    """One conv layer's input slice count and filter-bank smoothness sups."""

    slices: int
    F: float
    G: float
    H: float

    def __post_init__(self):
        if self.slices < 1:
            raise ValueError(f"slice count must be >= 1, got {self.slices}")
        for name in ("F", "G", "H"):
            if getattr(self, name) < 0:
                raise ValueError(f"bound {name} must be >= 0")


@dataclass(frozen=True)
class BoundInputs:
    """Everything the layer-cascade bound needs: per-layer (n, F, G, H), image
    sups (F0, G0, H0), filter size p, mesh h, group order t, image dims."""

    layers: tuple[LayerBounds, ...]
    F0: float
    G0: float
    H0: float
    p: int
    h: float
    t: int
    height: int
    width: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) < 1:
            raise ValueError("need at least one conv layer")
        if min(self.F0, self.G0, self.H0) < 0:
            raise ValueError("image bounds must be >= 0")
        if self.p < 1 or self.p % 2 == 0:
            raise ValueError(f"filter size must be odd and positive, got {self.p}")
        if self.h <= 0:
            raise ValueError(f"mesh must be > 0, got {self.h}")
        if self.t < 1:
            raise ValueError(f"group order must be >= 1, got {self.t}")
        if self.height < 1 or self.width < 1:
            raise ValueError("image dims must be >= 1")

    @property
    def N(self) -> int:
        return len(self.layers)


def theorem1_bound(b: BoundInputs) -> tuple[float, float, float, float]:
    """(bound, C1, C2, F_script) of the layer-cascade equivariance bound.

    F_script = prod_i n_{i-1} p^2 F_i
    C1 = 2 N F_script * sum_i (H_i F0/F_i + 2 (G_i/F_i) sum_{m<i} G_m F0/F_m
                               + 2 G_i G0/F_i + H0)
    C2 = 2 pi G0 F_script (2 max(H, W)/p + 2 N)
    bound = C1 h^2 + C2 p h / t
    """
    for lb in b.layers:
        if lb.F == 0.0:
            raise ZeroDivisionError("degenerate filter bank: F bound is 0")
    f_script = 1.0
    for lb in b.layers:
        f_script *= lb.slices * b.p**2 * lb.F
    inner = 0.0
    prefix = 0.0  # sum over earlier layers of G_m F0 / F_m
    for lb in b.layers:
        inner += lb.H * b.F0 / lb.F + 2.0 * (lb.G / lb.F) * prefix + 2.0 * lb.G * b.G0 / lb.F + b.H0
        prefix += lb.G * b.F0 / lb.F
    n = b.N
    c1 = 2.0 * n * f_script * inner
    c2 = 2.0 * math.pi * b.G0 * f_script * (2.0 * max(b.height, b.width) / b.p + 2.0 * n)
    bound = c1 * b.h**2 + c2 * b.p * b.h / b.t
    return bound, c1, c2, f_script


def bound_inputs_for(net: NetworkSpec, images: Sequence[PlanarImage]) -> BoundInputs:
    """Assemble BoundInputs from a network's coefficient banks and an image set.

    Filter sups take the worst filter of each bank; image sups take the worst
    image. Mixed filter sizes report the largest p (conservative in both terms).
    """
    convs = net.conv_layers
    if not convs:
        raise ValueError("network has no convolution layers")
    if not images:
        raise ValueError("empty image set")
    mesh = images[0].mesh
    for img in images:
        if img.mesh != mesh:
            raise ValueError("images must share one mesh")
    t = net.group.order
    layer_bounds = []
    for layer in convs:
        sb = bounds_from_coefficients(layer.basis, layer.coeffs)
        layer_bounds.append(LayerBounds(_conv_fan_in(layer, t), sb.F, sb.G, sb.H))
    img_sups = SmoothnessBounds(0.0, 0.0, 0.0)
    for img in images:
        sb = image_bounds(img)
        img_sups = SmoothnessBounds(
            max(img_sups.F, sb.F), max(img_sups.G, sb.G), max(img_sups.H, sb.H)
        )
    return BoundInputs(
        layers=tuple(layer_bounds),
        F0=img_sups.F,
        G0=img_sups.G,
        H0=img_sups.H,
        p=max(layer.basis.filter_size for layer in convs),
        h=mesh,
        t=t,
        height=max(img.height for img in images),
        width=max(img.width for img in images),
    )


@dataclass(frozen=True)
class EquivarianceReport:
    """Per-angle errors plus the bound they are checked against (when computed)."""

    errors: tuple[tuple[float, float], ...]  # (theta, relative error)
    mean_error: float
    bound: float | None
    bound_satisfied: bool | None
    crop: int
    t: int
    p: int
    N: int
    seed: int

    @property
    def max_error(self) -> float:
        return max(e for _, e in self.errors)


def _uniform_angles(rng: np.random.Generator, count: int) -> np.ndarray:
    # theta = pi*(1 - 2u) maps u in [0,1) onto (-pi, pi]
    return np.pi * (1.0 - 2.0 * rng.random(count))


def _group_step(theta: float, t: int) -> int:
    k = round(theta * t / (2.0 * math.pi))
    if not math.isclose(theta, 2.0 * math.pi * k / t, rel_tol=0.0, abs_tol=1e-9):
        raise ValueError(
            f"angle {theta} is not a group angle; group-valued outputs compare "
            f"only at multiples of 2*pi/{t}"
        )
    return k % t


def measure_equivariance(
    net: NetworkSpec,
    images: Sequence[PlanarImage],
    angles: int | Sequence[float] = 10,
    seed: int = 0,
    bound_inputs: BoundInputs | None = None,
    crop: int | None = None,
) -> EquivarianceReport:
    """Relative equivariance error of `net` over (image, angle) pairs.

    `angles` is either an explicit angle list (shared by all images) or a count
    of uniform draws from (-pi, pi] per image, from the seeded generator. Errors
    crop the receptive ring by default. With `bound_inputs` supplied the report
    carries the analytic bound and whether every error sits below it.
    """
    if len(images) == 0:
        raise ValueError("empty image set")
    out_kind, _ = net.output_state()
    if crop is None:
        crop = net.receptive_radius
    rng = np.random.default_rng(seed)
    errors: list[tuple[float, float]] = []
    for img in images:
        thetas = (
            _uniform_angles(rng, angles)
            if isinstance(angles, int)
            else np.asarray(angles, dtype=np.float64)
        )
        base = forward(net, img)
        for theta in thetas:
            theta = float(theta)
            lhs = forward(net, rotate_image(img, theta))
            if out_kind == "planar":
                rhs = rotate_image(base, theta)
            else:
                rhs = act_on_feature_map(base, theta, _group_step(theta, net.group.order))
            errors.append((theta, relative_difference(lhs, rhs, crop=crop)))
    mean_error = float(np.mean([e for _, e in errors]))
    bound = None
    satisfied = None
    if bound_inputs is not None:
        bound = theorem1_bound(bound_inputs)[0]
        satisfied = all(e <= bound for _, e in errors)
    convs = net.conv_layers
    return EquivarianceReport(
        errors=tuple(errors),
        mean_error=mean_error,
        bound=bound,
        bound_satisfied=satisfied,
        crop=crop,
        t=net.group.order,
        p=max((l.basis.filter_size for l in convs), default=0),
        N=len(convs),
        seed=seed,
    )


def order_sweep(
    t_list: Sequence[int] = SWEEP_GROUP_ORDERS,
    image_count: int = 2,
    image_size: int = 128,
    mesh: float = 1.0 / 6.0,
    angles: int | Sequence[float] = 10,
    net_seed: int = 5,
    image_seed: int = 5,
    angle_seed: int = 0,
    channels: int = 3,
    compute_bound: bool = True,
) -> list[EquivarianceReport]:
    """Equivariance error vs group order on a shared image/angle set.

    All orders audit the same images at the same angles with coefficient draws
    shared across t (see make_sweep_net), so the comparison is paired: differences
    reflect orientation quantization, not sampling jitter.
    """
    images = ring_stack(image_count, image_size, image_seed, mesh, orders=SWEEP_RING_ORDERS)
    reports = []
    for t in t_list:
        net = make_sweep_net(t, channels=channels, seed=net_seed)
        bi = bound_inputs_for(net, images) if compute_bound else None
        reports.append(
            measure_equivariance(net, images, angles=angles, seed=angle_seed, bound_inputs=bi)
        )
    return reports


def refinement_errors(
    p_list: Sequence[int] = (5, 9, 17),
    t: int = 8,
    theta: float = 2.0 * math.pi / 8.0,
    channels: int = 4,
    cutoff: int = 1,
    seed: int = 0,
    image_count: int = 3,
    base_size: int = 32,
    base_mesh: float = 0.25,
    n_patches: int = 4,
) -> list[float]:
    """Single-layer equivariance error under mesh refinement at fixed physical support.

    One continuous filter bank (coefficients shared across p) and one continuous
    image field are sampled at meshes scaled so the p-tap footprint (p-1)*h stays
    fixed; each doubling of taps halves the mesh. At a group angle the orientation
    term drops out and the remaining error is the quadratic sampling term.
    """
    base_p = p_list[0]
    nb = FourierBasis(base_p, cutoff).size
    rng = np.random.default_rng(seed)
    coeffs = init_coefficients(rng, (channels, 1, nb), 1, base_p)
    radius = base_size * base_mesh / 2.0
    fields = [
        synthetic_field(s, radius, n_patches=n_patches)
        for s in np.random.SeedSequence(seed).spawn(image_count)
    ]
    means = []
    for p in p_list:
        if (p - 1) % (base_p - 1):
            raise ValueError(f"{p - 1} taps must be a multiple of the base {base_p - 1}")
        scale = (p - 1) // (base_p - 1)
        h = base_mesh / scale
        size = base_size * scale
        images = [sample_field(f, size, size, h) for f in fields]
        net = NetworkSpec(
            [Lift(1, channels, t, FourierBasis(p, cutoff), coeffs), OrientationPool()],
            GroupSpec(t),
        )
        report = measure_equivariance(net, images, angles=[theta])
        means.append(report.mean_error)
    return means


REGULARIZER_KINDS = ("L1", "LapL0", "TV_iso", "TV2")


@dataclass(frozen=True)
class RegularizerSpec:
    """kind in {L1, LapL0, TV_iso, TV2}; epsilon smooths LapL0; crop trims the border."""

    kind: str
    epsilon: float = 0.01
    crop: int = 1

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer {self.kind!r}; pick from {REGULARIZER_KINDS}")
        if self.epsilon <= 0:
            raise ValueError(f"smoothing epsilon must be > 0, got {self.epsilon}")
        if self.crop < 1:
            raise ValueError(f"crop must be >= 1, got {self.crop}")


def regularizer_value(r: RegularizerSpec, x: PlanarImage) -> float:
    """Mean regularizer density over the cropped interior, in grid units.

    All stencils are centered (symmetric), so the value is exactly invariant
    under quarter turns and axis flips of the pixel grid.
    """
    c = r.crop
    u = x.data
    if min(x.height, x.width) <= 2 * c:
        raise ValueError(f"crop {c} leaves no pixels on {x.height}x{x.width}")
    if r.kind == "L1":
        return float(np.mean(np.abs(u[c:-c, c:-c, :])))
    # derivative stencils live on the 1-pixel interior; trim the rest of the crop
    uxx = u[1:-1, 2:, :] - 2.0 * u[1:-1, 1:-1, :] + u[1:-1, :-2, :]
    uyy = u[2:, 1:-1, :] - 2.0 * u[1:-1, 1:-1, :] + u[:-2, 1:-1, :]
    s = c - 1
    trim = (lambda a: a[s:-s, s:-s, :]) if s else (lambda a: a)
    if r.kind == "TV_iso":
        dx = 0.5 * (u[1:-1, 2:, :] - u[1:-1, :-2, :])
        dy = 0.5 * (u[2:, 1:-1, :] - u[:-2, 1:-1, :])
        return float(np.mean(np.sqrt(trim(dx) ** 2 + trim(dy) ** 2)))
    if r.kind == "TV2":
        uxy = 0.25 * (u[2:, 2:, :] - u[2:, :-2, :] - u[:-2, 2:, :] + u[:-2, :-2, :])
        frob = np.sqrt(trim(uxx) ** 2 + 2.0 * trim(uxy) ** 2 + trim(uyy) ** 2)
        return float(np.mean(frob))
    lap = trim(uxx + uyy)
    return float(np.mean(lap**2 / (lap**2 + r.epsilon**2)))


def regularizer_rotation_table(
    x: PlanarImage,
    kinds: Sequence[str] = REGULARIZER_KINDS,
    n_angles: int = 8,
    epsilon: float = 0.01,
    crop: int = 1,
) -> list[tuple[str, float, float]]:
    """(kind, angle, value) rows over uniform angles in [0, 2*pi), kind-major."""
    if n_angles < 1:
        raise ValueError("need at least one angle")
    angles = [2.0 * math.pi * k / n_angles for k in range(n_angles)]
    rows = []
    for kind in kinds:
        spec = RegularizerSpec(kind, epsilon=epsilon, crop=crop)
        for theta in angles:
            rows.append((kind, theta, regularizer_value(spec, rotate_image(x, theta))))
    return rows


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _summary_path(csv_path: Path) -> Path:
    stem = csv_path.stem if csv_path.suffix == ".csv" else csv_path.name
    return csv_path.with_name(f"{stem}_summary.txt")


def emit_report(reports: Sequence[EquivarianceReport], path) -> tuple[Path, Path]:
    """Write sweep reports as CSV plus a plain-text summary; returns both paths."""
    if not reports:
        raise ValueError("no reports to emit")
    for rep in reports:
        if not rep.errors:
            raise ValueError("report with an empty angle list")
    csv_path = Path(path)
    lines = [SWEEP_CSV_HEADER]
    for rep in reports:
        bound = "" if rep.bound is None else _fmt(rep.bound)
        sat = "" if rep.bound_satisfied is None else ("true" if rep.bound_satisfied else "false")
        lines.append(
            f"{rep.t},{rep.p},{rep.N},{_fmt(rep.mean_error)},{_fmt(rep.max_error)},{bound},{sat}"
        )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary = []
    for rep in reports:
        line = (
            f"t={rep.t} p={rep.p} N={rep.N} pairs={len(rep.errors)} "
            f"mean_error={rep.mean_error:.6g} max_error={rep.max_error:.6g}"
        )
        if rep.bound is not None:
            line += f" bound={rep.bound:.6g}"
        summary.append(line)
    checked = [rep.bound_satisfied for rep in reports if rep.bound_satisfied is not None]
    if checked:
        summary.append(f"bound_satisfied: {'true' if all(checked) else 'false'}")
    summary_path = _summary_path(csv_path)
    summary_path.write_text("\n".join(summary) + "\n", encoding="utf-8")
    return csv_path, summary_path


def relative_spread(values: Sequence[float]) -> float:
    """(max - min) / mean over a value table; 0 for an all-zero table."""
    mean = float(np.mean(values))
    return (max(values) - min(values)) / mean if mean else 0.0


def emit_regularizer_report(rows: Sequence[tuple[str, float, float]], path) -> tuple[Path, Path]:
    """Write (kind, angle, value) rows as CSV plus a per-kind spread summary."""
    if not rows:
        raise ValueError("no rows to emit")
    csv_path = Path(path)
    lines = [REGULARIZER_CSV_HEADER]
    for kind, theta, value in rows:
        lines.append(f"{kind},{_fmt(theta)},{_fmt(value)}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    by_kind: dict[str, list[float]] = {}
    for kind, _, value in rows:
        by_kind.setdefault(kind, []).append(value)
    summary = []
    for kind, values in by_kind.items():
        mean = float(np.mean(values))
        summary.append(f"{kind}: mean={mean:.6g} relative_spread={relative_spread(values):.6g}")
    summary_path = _summary_path(csv_path)
    summary_path.write_text("\n".join(summary) + "\n", encoding="utf-8")
    return csv_path, summary_path
