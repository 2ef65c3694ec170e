"""Binarized feedforward networks: training engine and bit-packed inference.

Train real-valued baselines, fine-tune them with binary weights and/or
binary activations, and run the result through exact XNOR-popcount packed
kernels that are verified against the dense reference path.
"""

from .binarize import (
    BinaryAlphabet,
    PackedMatrix,
    clip_weights,
    grad_mask,
    pack_bits,
    semi_stochastic_round,
    sign_binarize,
    unpack_bits,
)
from .data import Dataset, Minibatch, load_frames, load_idx, shuffle_batches, splice
from .errors import BitnnError, ConfigError, DataError, FormatError, TrainingDiverged
from .model_io import load_model, save_model
from .network import (
    ActivationKind,
    LayerSpec,
    Network,
    NetworkConfig,
    UpdatePolicy,
    WeightMode,
    binary_finetune,
    derive_binary_config,
    forward,
    forward_batch,
    init_random,
    parse_layer_string,
    parse_network_config,
)
from .packed import (
    PackedLayer,
    PackedModel,
    PackedVector,
    RealLayer,
    and_dot,
    as_reference_network,
    infer,
    pack_vector,
    packed_gemv_binary,
    packed_gemv_real,
    xnor_dot,
)
from .tensor import cross_entropy, finite_diff_grad, gemv, sigmoid, softmax
from .trainer import (
    EpochReport,
    TrainOptions,
    backward,
    clip_grad_norm,
    evaluate,
    gradient_check,
    lr_schedule_step,
    sgd_step,
    train,
)

__version__ = "0.1.0"
