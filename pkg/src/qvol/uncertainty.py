"""First-order propagation of fit errors into the population estimators.

Given standard errors (delta_c, delta_beta) on the fitted law, the errors
on the threshold estimators follow from their closed-form partials:

    dN/dc    =  N_v / (beta * c)
    dN/dbeta = -(N_v / beta**2) * ln(c / v)
    dV/dc    =  V_v / c + N_v * T(beta + 1, N_v + 1)
    dV/dbeta =  c * ( dH/dbeta(beta, N_v)
                      - N_v * ln(c / v) * T(beta + 1, N_v + 1) / beta )

where T is the convergent tail sum and dH/dbeta the fused derivative from
:mod:`qvol.numerics`.  The default combination is the conservative
absolute-value sum |dF/dc|*delta_c + |dF/dbeta|*delta_beta; the optimistic
root-sum-square variant sits behind the ``quadrature`` flag.

The derivative kernels reject exponent 1, so these routines require
beta != 1 even though :class:`~qvol.model.ZipfParams` itself allows it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError
from .model import ZipfParams, estimate_Nv, estimate_Vv
from .numerics import hurwitz_tail, zipf_mass_dbeta

__all__ = [
    "ParamErrors",
    "partials_N",
    "delta_N",
    "partials_V",
    "delta_V",
]


@dataclass(frozen=True)
class ParamErrors:
    """Standard errors of the fitted intercept and exponent."""

    delta_c: float
    delta_beta: float

    def __post_init__(self):
        if self.delta_c < 0.0 or self.delta_beta < 0.0:
            raise InvalidInputError("standard errors must be non-negative")


def _check_threshold(params: ZipfParams, v: float) -> None:
    if not (0.0 < v <= params.c):
        raise InvalidInputError(
            f"threshold must lie in (0, c]; got {v} with c = {params.c}"
        )


def partials_N(params: ZipfParams, v: float):
    """Partial derivatives of the count estimator w.r.t. (c, beta)."""
    _check_threshold(params, v)
    n_v = estimate_Nv(params, v)
    d_c = n_v / (params.beta * params.c)
    d_beta = -(n_v / params.beta**2) * math.log(params.c / v)
    return (d_c, d_beta)


def partials_V(params: ZipfParams, v: float):
    """Partial derivatives of the volume estimator w.r.t. (c, beta).

    The beta-partial threads through the (real-valued) count estimate:
    both the explicit exponent dependence of H and the shift of its upper
    limit contribute.
    """
    _check_threshold(params, v)
    n_v = estimate_Nv(params, v)
    v_v = estimate_Vv(params, v)
    tail = hurwitz_tail(params.beta + 1.0, n_v + 1.0)
    d_c = v_v / params.c + n_v * tail
    d_beta = params.c * (
        zipf_mass_dbeta(params.beta, n_v)
        - n_v * math.log(params.c / v) * tail / params.beta
    )
    return (d_c, d_beta)


def delta_N(
    params: ZipfParams,
    errs: ParamErrors,
    v: float,
    *,
    quadrature: bool = False,
) -> float:
    """Propagated error on the count estimator at threshold ``v``."""
    d_c, d_beta = partials_N(params, v)
    if quadrature:
        return math.hypot(d_c * errs.delta_c, d_beta * errs.delta_beta)
    return abs(d_c) * errs.delta_c + abs(d_beta) * errs.delta_beta


def delta_V(
    params: ZipfParams,
    errs: ParamErrors,
    v: float,
    *,
    quadrature: bool = False,
) -> float:
    """Propagated error on the volume estimator at threshold ``v``."""
    d_c, d_beta = partials_V(params, v)
    if quadrature:
        return math.hypot(d_c * errs.delta_c, d_beta * errs.delta_beta)
    return abs(d_c) * errs.delta_c + abs(d_beta) * errs.delta_beta
