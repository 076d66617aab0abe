"""Grid-layout visualization of large datasets via many small bi-objective QAPs."""
import os

# TBB in this image is too old for numba; pick a layer that does not probe it.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .exceptions import LoadError, ParameterError, FormatVersionError  # noqa: E402
from .io import Dataset, LabelSet, Layout  # noqa: E402
from .knn_graph import KnnGraph, build_knng, exact_knng, recall  # noqa: E402
from .mqap import GridSpec, MqapInstance, CostVector, ParetoArchive  # noqa: E402

__version__ = "0.1.0"


def __getattr__(name):
    # scikit-learn is only imported on demand, which keeps solver worker processes lean
    if name == "MQAPViz":
        from .estimator import MQAPViz
        return MQAPViz
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

__all__ = [
    "CostVector",
    "Dataset",
    "FormatVersionError",
    "GridSpec",
    "KnnGraph",
    "LabelSet",
    "Layout",
    "LoadError",
    "MQAPViz",
    "MqapInstance",
    "ParameterError",
    "ParetoArchive",
    "build_knng",
    "exact_knng",
    "recall",
]
