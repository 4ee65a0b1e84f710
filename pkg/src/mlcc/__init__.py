"""MLCC / MC-MLCC feature-interaction models on a small numpy autograd core."""

from .cost import CostReport, flop_count, param_count, sweep
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv, split
from .embedding import FeatureSchema, encode
from .errors import ConfigError, DimensionError, DivergenceError, GraphError, MlccError, NumericError
from .interaction import MlccParams, PlcConfig, global_compress, local_compress, mlcc_forward, plc_forward
from .models import Model, ModelConfig, build_model, model_forward
from .multichannel import ChannelSpec, compression_ratio, mc_forward
from .tensor import Tensor, backward, grad_check
from .training import TrainConfig, auc, train

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec", "ConfigError", "CostReport", "Dataset", "DimensionError", "DivergenceError",
    "FeatureSchema", "GraphError", "MlccError", "MlccParams", "Model", "ModelConfig", "NumericError",
    "PlcConfig", "SyntheticSpec", "Tensor", "TrainConfig", "auc", "backward", "build_model",
    "compression_ratio", "encode", "flop_count", "generate_synthetic", "global_compress", "grad_check",
    "load_csv", "local_compress", "mc_forward", "mlcc_forward", "model_forward", "param_count",
    "plc_forward", "split", "sweep", "train",
]
