"""Gene-expression clustering: preprocessing, K-Means with random or CCIA
seeding, silhouette evaluation and a comparison harness."""

from .cluster import (
    CentroidSet,
    ClusteringResult,
    ccia_init,
    euclidean,
    kmeans,
    random_init,
)
from .errors import DataError, GeneClusterError
from .evaluation import SilhouetteReport, silhouette, silhouette_bruteforce
from .matrix import (
    DatasetSummary,
    ExpressionMatrix,
    drop_incomplete_genes,
    load_matrix,
    synthesize_blobs,
    write_matrix,
)
from .preprocess import DiscretizedMatrix, NormalizedMatrix, discretize, pattern_string

__version__ = "0.1.0"

__all__ = [
    "CentroidSet",
    "ClusteringResult",
    "DataError",
    "DatasetSummary",
    "DiscretizedMatrix",
    "ExpressionMatrix",
    "GeneClusterError",
    "NormalizedMatrix",
    "SilhouetteReport",
    "ccia_init",
    "discretize",
    "drop_incomplete_genes",
    "euclidean",
    "kmeans",
    "load_matrix",
    "pattern_string",
    "random_init",
    "silhouette",
    "silhouette_bruteforce",
    "synthesize_blobs",
    "write_matrix",
]
