"""edpc: online-learning neural lossless byte compressor.

The probability model is trained from scratch while (de)compressing, so no
weights are stored: the compressed container carries only hyperparameters,
a seed, and the arithmetic-coded payload, and the decoder replays the
identical training trajectory to stay in lockstep with the encoder.
"""

import os as _os

# Single-threaded BLAS: the model's GEMMs are too small to gain from BLAS
# threads (they contend with the coding stage instead), and one fixed thread
# count keeps results reproducible between compressing and decompressing
# processes. Must be set before numpy loads its BLAS.
_os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

try:  # best effort when numpy was already imported with other settings
    import threadpoolctl as _threadpoolctl

    _threadpoolctl.threadpool_limits(1, "blas")
except Exception:  # pragma: no cover
    pass

from .coder import (ArithmeticDecoder, ArithmeticEncoder, QuantizedDistribution,
                    quantize, quantize_rows, uniform_distribution)
from .container import (ContainerError, EdpcContainer, Header, read_container,
                        write_container)
from .ifr import MIEstimate, branch_mi, digamma, ifr_ratio, ksg_mi, run_ifr_study
from .model import EdpcModel, ModelConfig, model_param_count
from .pipeline import LaneSplit, compress, decompress, join_lanes, split_lanes

__version__ = "0.1.0"

__all__ = [
    "ArithmeticDecoder", "ArithmeticEncoder", "QuantizedDistribution",
    "quantize", "quantize_rows", "uniform_distribution",
    "ContainerError", "EdpcContainer", "Header", "read_container", "write_container",
    "MIEstimate", "branch_mi", "digamma", "ifr_ratio", "ksg_mi", "run_ifr_study",
    "EdpcModel", "ModelConfig", "model_param_count",
    "LaneSplit", "compress", "decompress", "join_lanes", "split_lanes",
]
