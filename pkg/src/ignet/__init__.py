"""A from-scratch convolutional network engine.

Feature maps, filter banks, and explicit per-layer backpropagation, with
amplitude-controlled initialization diagnostics, freezeconnect/dropconnect/
dropout regularization, a stratified cross-validation harness, and a
deterministic worker pool for the convolution kernels.
"""

from ._kernels import backend_name
from .backprop import (
    Gradients,
    backward,
    finite_diff_gradient,
    gradient_check,
)
from .data import (
    AugmentConfig,
    EncoderSpec,
    LabelRecord,
    Sample,
    augment,
    contract_image,
    encode_onehot,
    parse_filename,
    regression_target,
    render_filename,
    synth_dataset,
)
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    GeometryError,
    IgnetError,
    ModelFormatError,
    ShapeChainError,
    StageError,
)
from .initdiag import (
    DiagnosticReport,
    InitAmplitudes,
    diagnose,
    init_weights,
    input_map_bound,
    render_report,
    weight_derivative_bound,
)
from .net import (
    Activation,
    ConvSpec,
    DenseSpec,
    ForwardTrace,
    Loss,
    Network,
    PoolSpec,
    SoftmaxSpec,
    activation_eval,
    build_network,
    forward,
    loss_eval,
    loss_output_gradient,
)
from .optimize import OptimizerConfig, OptimizerState, minibatch_iter, step
from .parallel import StagePlan, WorkerPool, execute_stage, set_worker_count
from .regularize import (
    RegularizerSpec,
    apply_dropconnect,
    apply_dropout,
    apply_freezeconnect,
    sample_mask,
)
from .tensor import (
    ConvGeometry,
    FeatureMap,
    FilterBank,
    convolve,
    max_pool,
    output_shape,
)
from .train import (
    CvConfig,
    Metrics,
    TrainHistory,
    early_stop_check,
    evaluate,
    stratified_kfold,
    train,
)

__version__ = "0.1.0"
