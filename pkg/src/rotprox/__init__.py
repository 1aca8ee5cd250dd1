"""rotprox: rotation-equivariant convolutional networks as proximal operators,
with an audit harness that checks measured equivariance against an analytic bound."""

from .audit import (
    REGULARIZER_KINDS,
    SWEEP_GROUP_ORDERS,
    BoundInputs,
    EquivarianceReport,
    LayerBounds,
    RegularizerSpec,
    bound_inputs_for,
    emit_regularizer_report,
    emit_report,
    measure_equivariance,
    order_sweep,
    refinement_errors,
    regularizer_rotation_table,
    regularizer_value,
    relative_spread,
    theorem1_bound,
)
from .checkpoint import ChecksumError
from .checkpoint import load as load_checkpoint
from .checkpoint import save as save_checkpoint
from .filters import (
    FourierBasis,
    SmoothnessBounds,
    basis_stack,
    bounds_from_coefficients,
    filter_bounds,
    image_bounds,
    sample_filter,
)
from .grids import (
    DegenerateReferenceError,
    GroupFeatureMap,
    GroupSpec,
    PlanarImage,
    act_on_feature_map,
    relative_difference,
    rotate_image,
)
from .layers import (
    Bias,
    GroupConv,
    Lift,
    NetworkSpec,
    OrientationPool,
    PlainConv,
    ReLU,
    ResidualAdd,
    forward,
    init_network,
    make_audit_net,
    make_denoiser_net,
    make_plain_denoiser_net,
    make_plain_net,
    make_sweep_net,
    param_count,
    parameters,
)
from .prox import (
    NeuralProx,
    SoftThreshold,
    TVProx,
    TVResult,
    check_prox_equivariance,
    neural_prox,
    soft_threshold,
    soft_threshold_array,
    tv_prox,
    tv_value_aniso,
)
from .solver import (
    BlurDownsample,
    Identity,
    SolverDivergence,
    UnfoldingConfig,
    degrade,
    estimate_lipschitz,
    gaussian_kernel,
    ista_solve,
    ista_step,
    psnr,
)
from .synthetic import (
    ring_image,
    ring_stack,
    sample_field,
    synthetic_field,
    synthetic_image,
    synthetic_stack,
)
from .tensorio import read_eqt1, read_pgm, write_eqt1, write_pgm
from .training import (
    SGD,
    Adam,
    Tape,
    TapeConsumed,
    TrainingDivergence,
    backward,
    forward_with_tape,
    gradient_step_vjp,
    mse_loss,
    replay,
    soft_threshold_vjp,
    train_denoiser,
)

__version__ = "0.1.0"

__all__ = [
    "REGULARIZER_KINDS",
    "SWEEP_GROUP_ORDERS",
    "Adam",
    "Bias",
    "BlurDownsample",
    "BoundInputs",
    "ChecksumError",
    "DegenerateReferenceError",
    "EquivarianceReport",
    "FourierBasis",
    "GroupConv",
    "GroupFeatureMap",
    "GroupSpec",
    "Identity",
    "LayerBounds",
    "Lift",
    "NetworkSpec",
    "NeuralProx",
    "OrientationPool",
    "PlainConv",
    "PlanarImage",
    "ReLU",
    "RegularizerSpec",
    "ResidualAdd",
    "SGD",
    "SmoothnessBounds",
    "SoftThreshold",
    "SolverDivergence",
    "TVProx",
    "TVResult",
    "Tape",
    "TapeConsumed",
    "TrainingDivergence",
    "UnfoldingConfig",
    "act_on_feature_map",
    "backward",
    "basis_stack",
    "bound_inputs_for",
    "bounds_from_coefficients",
    "check_prox_equivariance",
    "degrade",
    "emit_regularizer_report",
    "emit_report",
    "estimate_lipschitz",
    "filter_bounds",
    "forward",
    "forward_with_tape",
    "gaussian_kernel",
    "gradient_step_vjp",
    "image_bounds",
    "init_network",
    "ista_solve",
    "ista_step",
    "load_checkpoint",
    "make_audit_net",
    "make_denoiser_net",
    "make_plain_denoiser_net",
    "make_plain_net",
    "make_sweep_net",
    "measure_equivariance",
    "mse_loss",
    "neural_prox",
    "order_sweep",
    "param_count",
    "parameters",
    "psnr",
    "read_eqt1",
    "read_pgm",
    "refinement_errors",
    "regularizer_rotation_table",
    "regularizer_value",
    "relative_difference",
    "relative_spread",
    "replay",
    "ring_image",
    "ring_stack",
    "rotate_image",
    "sample_field",
    "sample_filter",
    "save_checkpoint",
    "soft_threshold",
    "soft_threshold_array",
    "soft_threshold_vjp",
    "synthetic_field",
    "synthetic_image",
    "synthetic_stack",
    "theorem1_bound",
    "train_denoiser",
    "tv_prox",
    "tv_value_aniso",
    "write_eqt1",
    "write_pgm",
]
