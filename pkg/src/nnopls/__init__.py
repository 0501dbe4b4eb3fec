"""Non-negative OPLS filter-bank design for spectral features."""

from .dataset import (
    CenteredDataset,
    CovarianceSet,
    RawDataset,
    center,
    covariances,
    encode_targets,
    read_matrix,
    write_matrix,
)
from .exceptions import InputError, NnoplsError, NumericalError
from .filterbank import (
    FeatureMatrix,
    FilterBank,
    extract,
    gabor_bank,
    interpretability,
    load_bank,
    nz_rate,
    philips_bank,
    reconstruction_loss,
    save_bank,
)
from .nnls import nnls_gram, nnls_solve
from .solvers import (
    METHODS,
    SolverConfig,
    SolverReport,
    SolverResult,
    defnopls,
    design,
    nmf_opls,
    nopls,
    opls_baseline,
    pnopls,
    popls,
)

__version__ = "0.1.0"

__all__ = [
    "CenteredDataset", "CovarianceSet", "RawDataset", "center", "covariances",
    "encode_targets", "read_matrix", "write_matrix", "InputError", "NnoplsError",
    "NumericalError", "FeatureMatrix", "FilterBank", "extract", "gabor_bank",
    "interpretability", "load_bank", "nz_rate", "philips_bank", "reconstruction_loss",
    "save_bank", "nnls_gram", "nnls_solve", "METHODS", "SolverConfig", "SolverReport",
    "SolverResult", "defnopls", "design", "nmf_opls", "nopls", "opls_baseline", "pnopls",
    "popls",
]
