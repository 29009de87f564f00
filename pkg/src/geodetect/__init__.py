"""Detecting latent anisotropic geometry in random graphs.

Modules: ``spectrum`` (variance spectra and effective dimensions),
``ensembles`` (seeded sampling of points, Gram and GOE matrices),
``threshold`` (edge thresholds), ``graphs`` (adjacency and signed
triangles), ``charfun`` (triangle probabilities by characteristic-function
inversion), ``entropy`` (relative-entropy and total-variation bounds),
``detect`` (tests, empirical TV, sweeps) and ``cli``.
"""

from .charfun import (
    ProbabilityEstimate,
    QuadratureParams,
    phi,
    psi,
    triangle_prob,
    triangle_prob_general,
    triangle_prob_half,
    triangle_prob_mc,
)
from .detect import DetectionReport, SweepRow, empirical_tv, phase_sweep, tau_test, tv_lower_bound_chebyshev
from .ensembles import GramSample, PointCloud, SeededStream, gram_ensemble, goe_ensemble, sample_points
from .entropy import gram_entropy_bound, logdet_gram_mc, tv_upper_bound
from .errors import (
    GeodetectError,
    InvalidParameterError,
    InvalidSpectrumError,
    NumericError,
    ShapeError,
    ToleranceError,
    UsageError,
    ValidityError,
)
from .graphs import AdjacencyMatrix, er_graph, geometric_graph, signed_triangles, tau_moments_mc, triangle_count
from .parallel import Parallel
from .spectrum import AlphaSpectrum, effective_dim_3, effective_dim_4, normalize, q_norm, spectrum_family
from .threshold import ThresholdEstimate, estimate_threshold, threshold_charfun

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix",
    "AlphaSpectrum",
    "DetectionReport",
    "GeodetectError",
    "GramSample",
    "InvalidParameterError",
    "InvalidSpectrumError",
    "NumericError",
    "Parallel",
    "PointCloud",
    "ProbabilityEstimate",
    "QuadratureParams",
    "SeededStream",
    "ShapeError",
    "SweepRow",
    "ThresholdEstimate",
    "ToleranceError",
    "UsageError",
    "ValidityError",
    "effective_dim_3",
    "effective_dim_4",
    "empirical_tv",
    "er_graph",
    "estimate_threshold",
    "geometric_graph",
    "goe_ensemble",
    "gram_ensemble",
    "gram_entropy_bound",
    "logdet_gram_mc",
    "normalize",
    "phase_sweep",
    "phi",
    "psi",
    "q_norm",
    "sample_points",
    "signed_triangles",
    "spectrum_family",
    "tau_moments_mc",
    "tau_test",
    "threshold_charfun",
    "triangle_count",
    "triangle_prob",
    "triangle_prob_general",
    "triangle_prob_half",
    "triangle_prob_mc",
    "tv_lower_bound_chebyshev",
    "tv_upper_bound",
]
