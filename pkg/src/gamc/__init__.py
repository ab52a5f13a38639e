"""gamc: transparent low-footprint automatic modulation classification.

Pipeline stages, each exposed as an sklearn-style estimator:

- :mod:`gamc.siggen`   -- synthetic labeled I/Q frame generation
- :mod:`gamc.sparse`   -- multi-resolution sparse-coding representation
- :mod:`gamc.features` -- 1730-dim engineered feature vector
- :mod:`gamc.select`   -- discriminant feature test (entropy-split ranking)
- :mod:`gamc.gbt`      -- from-scratch multiclass gradient-boosted trees
- :mod:`gamc.hier`     -- coarse-to-fine hierarchical classifier + evaluation
- :mod:`gamc.io`       -- frame / model file formats, train-test splitting
- :mod:`gamc.cli`      -- the ``gamc`` command-line harness
"""

from .siggen import (
    ChannelParams,
    FrameSet,
    IQFrame,
    MOD_CLASSES,
    ModClass,
    apply_channel,
    generate_dataset,
    modulate,
)
from .sparse import Dictionary, PyramidConfig, SparsePyramid, learn_dictionary, omp_encode
from .features import FEATURE_LAYOUT, FeatureExtractor, extract_all
from .select import DftSelector, dft_score, select_features
from .gbt import BoostParams, GradientBoostedClassifier, count_complexity
from .hier import GROUP_MAP, EvalReport, HierarchicalClassifier, evaluate

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "FrameSet",
    "IQFrame",
    "MOD_CLASSES",
    "ModClass",
    "apply_channel",
    "generate_dataset",
    "modulate",
    "Dictionary",
    "PyramidConfig",
    "SparsePyramid",
    "learn_dictionary",
    "omp_encode",
    "FEATURE_LAYOUT",
    "FeatureExtractor",
    "extract_all",
    "DftSelector",
    "dft_score",
    "select_features",
    "BoostParams",
    "GradientBoostedClassifier",
    "count_complexity",
    "GROUP_MAP",
    "EvalReport",
    "HierarchicalClassifier",
    "evaluate",
    "__version__",
]
