"""Generative modelling with a learnable particle latent under the debiased Sinkhorn divergence."""

import os as _os

# SINKGAN_THREADS caps BLAS/numba threads; 0 or 1 means deterministic single-threaded runs.
# Must run before numpy is first imported to take effect.
_threads = _os.environ.get("SINKGAN_THREADS")
if _threads is not None and _threads.strip():
    _n = str(max(1, int(_threads)))
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        _os.environ[_var] = _n

from .measure import DiscreteMeasure, Sampler, make_measure, read_csv, write_csv  # noqa: E402
from .sinkhorn import sinkhorn_divergence, sinkhorn_knopp  # noqa: E402
from .generator import GeneratorNetwork, mlp_new  # noqa: E402
from .latent import ParticleLatent, init_latent, sample_model  # noqa: E402
from .training import FittedModel, TrainConfig, fit, train_step  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "Sampler",
    "make_measure",
    "read_csv",
    "write_csv",
    "sinkhorn_divergence",
    "sinkhorn_knopp",
    "GeneratorNetwork",
    "mlp_new",
    "ParticleLatent",
    "init_latent",
    "sample_model",
    "FittedModel",
    "TrainConfig",
    "fit",
    "train_step",
]
