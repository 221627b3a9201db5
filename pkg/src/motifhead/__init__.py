"""Multi-label visual-motif classification heads over frozen image embeddings.

Subpackages and modules:

- kernels: dense float64 kernels (compiled core with NumPy fallback)
- manifest / store / synthetic: dataset model, binary embedding store,
  synthetic data generator
- heads: MLP and conv classification heads with analytic gradients
- losses: tiered-annotation weighted BCE
- adam: Adam optimizer
- metrics: example-based multi-label evaluation and slice reports
- training: the end-to-end training loop
- clustering: k-means over normalized embeddings
- sweeps: ablation grid runner
- cli: the ``motifhead`` command-line tool
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, MotifHeadError, NumericError, ShapeError

__all__ = [
    "ConfigError",
    "DataError",
    "MotifHeadError",
    "NumericError",
    "ShapeError",
    "__version__",
]
