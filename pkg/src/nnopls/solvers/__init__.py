"""Filter-bank design algorithms."""

from ._common import METHODS, RELEVANCE_ORDERED, EigenPair, SolverConfig, SolverReport, SolverResult
from .nmf import mu_update, nmf_opls, nndsvd_init
from .nopls import defnopls, nopls, pnopls, procrustes_w, schur_deflate, u_step, unidim_w, w_step
from .popls import maximize_quotient, opls_baseline, popls, popls_quotient

SOLVERS = {
    "nopls": nopls,
    "pnopls": pnopls,
    "defnopls": defnopls,
    "nmf_opls": nmf_opls,
    "popls": popls,
    "opls": opls_baseline,
}


def design(method, data, config=None):
    """Run the named solver. ``nmf_opls`` needs the uncentered RawDataset."""
    from ..exceptions import ConfigurationError

    try:
        solver = SOLVERS[method]
    except KeyError:
        raise ConfigurationError(
            f"unknown method {method!r}; choose one of {', '.join(METHODS)}"
        ) from None
    return solver(data, config)


__all__ = [
    "METHODS", "RELEVANCE_ORDERED", "SOLVERS", "EigenPair", "SolverConfig", "SolverReport",
    "SolverResult", "design", "nopls", "pnopls", "defnopls", "nmf_opls", "popls",
    "opls_baseline", "w_step", "u_step", "procrustes_w", "unidim_w", "schur_deflate",
    "nndsvd_init", "mu_update", "popls_quotient", "maximize_quotient",
]
