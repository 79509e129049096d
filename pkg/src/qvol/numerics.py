"""Scalar kernels and small generic solvers used by every estimator.

The central quantity everywhere is the partial sum of the generalized
harmonic series,

    H(beta, x) = sum_{i=1..x} i**(-beta),

extended to real x, because estimated population sizes are not integers.
For beta < 1 (the empirically relevant regime) the infinite series
diverges, so the two zeta terms that H formally splits into must never be
evaluated separately.  ``zipf_mass`` therefore computes the difference as
one fused quantity: exact heads of the series at both ends plus an
Euler-Maclaurin continuation evaluated only at arguments >= 10^4, where
the truncated expansion is accurate to far below double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidInputError,
    NonConvergenceError,
    NumericalError,
    SingularMatrixError,
)

__all__ = [
    "SolverOptions",
    "zipf_mass",
    "zipf_mass_dbeta",
    "hurwitz_tail",
    "nls_solve",
    "simplex_minimize",
    "ks_statistic",
    "linearized_stderr",
]

# Length of the exactly-summed head on each side of the fused difference.
# With both continuation anchors at >= _EM_HEAD + 1 the two Bernoulli
# correction terms leave a truncation error below 1e-20 relative for any
# exponent of interest (verified against 50-digit reference values).
_EM_HEAD = 10_000

# Integer arguments up to this size are summed directly; beyond it (or for
# non-integer arguments) the fused continuation takes over.
_DIRECT_LIMIT = 100_000

_BETA_POLE_TOL = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    """Iteration budget and tolerances shared by the generic solvers."""

    max_iterations: int = 500
    relative_tolerance: float = 1e-10
    step_scale: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if not (0.0 < self.relative_tolerance < 1.0):
            raise InvalidInputError("relative_tolerance must lie in (0, 1)")
        if not (self.step_scale > 0.0):
            raise InvalidInputError("step_scale must be > 0")


# Number of deterministic jittered restarts attempted after the initial
# solve before declaring non-convergence.
_SOLVER_RESTARTS = 3


def _check_beta(beta: float) -> None:
    if not (beta > 0.0):
        raise InvalidInputError(f"exponent must be > 0, got {beta}")
    if abs(beta - 1.0) <= _BETA_POLE_TOL:
        raise InvalidInputError(
            "harmonic pole: exponent 1 is a pole of the continuation; "
            "use a dedicated harmonic-number path instead"
        )


def _zeta_tail_asymptotic(s: float, a: float) -> float:
    """Euler-Maclaurin continuation of sum_{j>=0} (a+j)**(-s).

    Equals the Hurwitz tail for s > 1 and its analytic continuation for
    0 < s < 1.  Two Bernoulli terms; only call with a >> 1.
    """
    p = a**-s
    inv = 1.0 / a
    return (
        a * p / (s - 1.0)
        + 0.5 * p
        + s * p * inv / 12.0
        - s * (s + 1.0) * (s + 2.0) * p * inv**3 / 720.0
    )


def _zeta_tail_asymptotic_ds(s: float, a: float) -> float:
    """d/ds of :func:`_zeta_tail_asymptotic` at fixed a."""
    ln_a = math.log(a)
    p = a**-s
    inv = 1.0 / a
    d_integral = -a * p * (ln_a * (s - 1.0) + 1.0) / (s - 1.0) ** 2
    d_half = -0.5 * ln_a * p
    d_b2 = p * inv * (1.0 - s * ln_a) / 12.0
    d_b4 = (
        -p
        * inv**3
        * ((3.0 * s * s + 6.0 * s + 2.0) - s * (s + 1.0) * (s + 2.0) * ln_a)
        / 720.0
    )
    return d_integral + d_half + d_b2 + d_b4


def _fused_mass(beta: float, x: float) -> float:
    """H(beta, x) for real x > 0 with beta > 0, beta != 1 (unchecked)."""
    if x <= _DIRECT_LIMIT and float(x).is_integer():
        i = np.arange(1.0, x + 0.5)
        return float(np.sum(i**-beta))
    head = np.arange(1.0, _EM_HEAD + 1.0)
    lead = float(np.sum(head**-beta))
    t = x + 1.0 + np.arange(float(_EM_HEAD))
    trail = float(np.sum(t**-beta))
    return (
        lead
        - trail
        + _zeta_tail_asymptotic(beta, _EM_HEAD + 1.0)
        - _zeta_tail_asymptotic(beta, x + 1.0 + _EM_HEAD)
    )


def zipf_mass(beta: float, x: float) -> float:
    """Partial sum sum_{i=1..x} i**(-beta), extended to real x >= 1.

    ``x = math.inf`` is accepted for beta > 1 and returns the full series.
    Exponent 1 is rejected (pole of the continuation); so is x < 1.
    """
    _check_beta(beta)
    if math.isinf(x):
        if beta <= 1.0:
            raise InvalidInputError(
                "series diverges: infinite sum requires exponent > 1"
            )
        return hurwitz_tail(beta, 1.0)
    if not (x >= 1.0):
        raise InvalidInputError(f"upper limit must be >= 1, got {x}")
    return _fused_mass(beta, x)


def zipf_mass_dbeta(beta: float, x: float) -> float:
    """Derivative of :func:`zipf_mass` with respect to the exponent.

    Equals -sum_{i=1..x} ln(i) * i**(-beta), continued to real x the same
    fused way as the mass itself.
    """
    _check_beta(beta)
    if not (x >= 1.0):
        raise InvalidInputError(f"upper limit must be >= 1, got {x}")
    if x <= _DIRECT_LIMIT and float(x).is_integer():
        i = np.arange(1.0, x + 0.5)
        return float(-np.sum(np.log(i) * i**-beta))
    head = np.arange(1.0, _EM_HEAD + 1.0)
    lead = float(-np.sum(np.log(head) * head**-beta))
    t = x + 1.0 + np.arange(float(_EM_HEAD))
    trail = float(-np.sum(np.log(t) * t**-beta))
    return (
        lead
        - trail
        + _zeta_tail_asymptotic_ds(beta, _EM_HEAD + 1.0)
        - _zeta_tail_asymptotic_ds(beta, x + 1.0 + _EM_HEAD)
    )


def hurwitz_tail(s: float, a: float) -> float:
    """Convergent tail sum_{j>=0} (a+j)**(-s) for s > 1, a >= 1."""
    if not (s > 1.0):
        raise InvalidInputError(f"tail requires exponent > 1, got {s}")
    if not (a >= 1.0):
        raise InvalidInputError(f"tail start must be >= 1, got {a}")
    t = a + np.arange(float(_EM_HEAD))
    return float(np.sum(t**-s)) + _zeta_tail_asymptotic(s, a + float(_EM_HEAD))


# ---------------------------------------------------------------------------
# Generic two-parameter solvers
# ---------------------------------------------------------------------------


def _fd_jacobian(residual_fn, params, step_scale):
    """Central finite-difference Jacobian of a residual function."""
    p = np.asarray(params, dtype=float)
    cols = []
    for k in range(p.size):
        h = 1e-6 * max(abs(p[k]), 1e-12) * step_scale
        up = p.copy()
        dn = p.copy()
        up[k] += h
        dn[k] -= h
        r_up = np.asarray(residual_fn(tuple(up)), dtype=float)
        r_dn = np.asarray(residual_fn(tuple(dn)), dtype=float)
        cols.append((r_up - r_dn) / (2.0 * h))
    return np.stack(cols, axis=1)


def _jittered_inits(init, attempts):
    """Deterministic sequence of starting points: the init itself, then
    multiplicatively jittered copies."""
    rng = np.random.default_rng(0x5EED)
    yield tuple(float(v) for v in init)
    p = np.asarray(init, dtype=float)
    for _ in range(attempts):
        factors = np.exp(rng.uniform(-0.5, 0.5, size=p.size))
        yield tuple(p * factors)


def _gauss_newton_once(residual_fn, init, opts):
    """One damped Gauss-Newton run.  Returns (params, jacobian) or raises."""
    p = np.asarray(init, dtype=float)
    r = np.asarray(residual_fn(tuple(p)), dtype=float)
    if r.ndim != 1 or r.size < 3:
        raise InvalidInputError("residual function must return >= 3 residuals")
    if not np.all(np.isfinite(r)):
        raise NumericalError(f"residuals not finite at start {tuple(p)}")
    ssr = float(r @ r)
    J = _fd_jacobian(residual_fn, p, opts.step_scale)
    if ssr == 0.0:
        return tuple(p), J

    lam = 1e-3
    for _ in range(opts.max_iterations):
        g = J.T @ r
        scale = max(1.0, ssr)
        if float(np.max(np.abs(g))) <= opts.relative_tolerance * scale:
            return tuple(p), J
        A = J.T @ J
        accepted = False
        for _ in range(40):
            damped = A + lam * np.diag(np.maximum(np.diag(A), 1e-30))
            try:
                step = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError as exc:
                raise SingularMatrixError(
                    "normal equations singular during Gauss-Newton"
                ) from exc
            cand = p + step
            r_cand = np.asarray(residual_fn(tuple(cand)), dtype=float)
            cand_ok = np.all(np.isfinite(r_cand))
            ssr_cand = float(r_cand @ r_cand) if cand_ok else math.inf
            if cand_ok and ssr_cand <= ssr:
                rel_step = float(
                    np.max(np.abs(step) / np.maximum(np.abs(p), 1e-12))
                )
                p, r, ssr = cand, r_cand, ssr_cand
                J = _fd_jacobian(residual_fn, p, opts.step_scale)
                lam = max(lam * 0.3, 1e-14)
                accepted = True
                if rel_step <= opts.relative_tolerance:
                    return tuple(p), J
                break
            lam *= 10.0
        if not accepted:
            # Fully damped and still no descent: treat the point as converged
            # if the gradient is small relative to the data scale.
            if float(np.max(np.abs(g))) <= math.sqrt(
                opts.relative_tolerance
            ) * scale:
                return tuple(p), J
            raise NonConvergenceError(
                "Gauss-Newton stalled: no descent direction found",
                best_params=tuple(p),
                best_value=ssr,
            )
    raise NonConvergenceError(
        f"Gauss-Newton did not converge in {opts.max_iterations} iterations",
        best_params=tuple(p),
        best_value=ssr,
    )


def nls_solve(residual_fn, init, opts: SolverOptions | None = None):
    """Damped Gauss-Newton least squares on a two-parameter residual map.

    Returns ``((param_0, param_1), jacobian_at_solution)``; the Jacobian is
    what :func:`linearized_stderr` needs.  After the initial attempt, up to
    three deterministically jittered restarts run before a
    :class:`NonConvergenceError` (carrying the best point seen) is raised.
    """
    opts = opts or SolverOptions()
    best_exc = None
    for start in _jittered_inits(init, _SOLVER_RESTARTS):
        try:
            return _gauss_newton_once(residual_fn, start, opts)
        except NonConvergenceError as exc:
            if best_exc is None or (
                exc.best_value is not None
                and best_exc.best_value is not None
                and exc.best_value < best_exc.best_value
            ):
                best_exc = exc
    raise NonConvergenceError(
        "nonlinear least squares failed after jittered restarts: "
        + str(best_exc),
        best_params=best_exc.best_params,
        best_value=best_exc.best_value,
    )


def simplex_minimize(objective, init, opts: SolverOptions | None = None):
    """Derivative-free minimization (Nelder-Mead) of a scalar objective.

    The objective must be finite at ``init``; a NaN or infinite value met
    anywhere during the search raises :class:`NumericalError` naming the
    offending parameters.  Convergence is by simplex diameter relative to
    the scale of the starting point.
    """
    from scipy.optimize import minimize

    opts = opts or SolverOptions()
    p0 = np.asarray(init, dtype=float)

    def guarded(p):
        value = float(objective(tuple(p)))
        if math.isnan(value) or math.isinf(value):
            raise NumericalError(
                f"objective not finite at params {tuple(float(v) for v in p)}"
            )
        return value

    f0 = guarded(p0)
    scale = max(1.0, float(np.max(np.abs(p0))))
    xatol = opts.relative_tolerance * scale * opts.step_scale
    fatol = opts.relative_tolerance * max(1.0, abs(f0))

    best_x, best_f = p0, f0
    for start in _jittered_inits(p0, _SOLVER_RESTARTS):
        result = minimize(
            guarded,
            np.asarray(start, dtype=float),
            method="Nelder-Mead",
            options={
                "maxiter": opts.max_iterations,
                "maxfev": 4 * opts.max_iterations,
                "xatol": xatol,
                "fatol": fatol,
            },
        )
        if result.fun < best_f:
            best_x, best_f = result.x, float(result.fun)
        if result.success:
            return tuple(float(v) for v in result.x)
    # All restarts hit the iteration cap; report the best point found.
    raise NonConvergenceError(
        "simplex search did not meet the diameter tolerance",
        best_params=tuple(float(v) for v in best_x),
        best_value=best_f,
    )


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def ks_statistic(sorted_values, model_cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and a model CDF.

    ``sorted_values`` must be ascending.  Both sides of every empirical-CDF
    step are compared, since the supremum can sit on either side of a jump.
    """
    v = np.asarray(sorted_values, dtype=float)
    if v.size == 0:
        raise InvalidInputError("cannot compute a KS distance of no data")
    if np.any(np.diff(v) < 0):
        raise InvalidInputError("values must be sorted ascending")
    n = v.size
    cdf = np.asarray([float(model_cdf(x)) for x in v])
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - cdf)), np.max(np.abs(cdf - lower))))


def ks_statistic_precomputed(model_cdf_values) -> float:
    """KS distance when the model CDF has already been evaluated at the
    (ascending) sample points.  Vector analogue of :func:`ks_statistic`."""
    cdf = np.asarray(model_cdf_values, dtype=float)
    n = cdf.size
    if n == 0:
        raise InvalidInputError("cannot compute a KS distance of no data")
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - cdf)), np.max(np.abs(cdf - lower))))


def linearized_stderr(jacobian, residuals):
    """Standard errors of a two-parameter least-squares fit.

    Classic linearization: ``s^2 = SSR / (n - 2)`` and the parameter
    covariance is ``s^2 * (J^T J)^-1``; the square roots of its diagonal
    are returned as ``(delta_first, delta_second)``.
    """
    J = np.asarray(jacobian, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if r.size < 3:
        raise InvalidInputError("standard errors need at least 3 residuals")
    if J.ndim != 2 or J.shape != (r.size, 2):
        raise InvalidInputError("jacobian must have shape (n_residuals, 2)")
    jtj = J.T @ J
    if not np.all(np.isfinite(jtj)) or np.linalg.cond(jtj) > 1e14:
        raise SingularMatrixError("J^T J is singular or near-singular")
    s2 = float(r @ r) / (r.size - 2)
    cov = s2 * np.linalg.inv(jtj)
    return (float(math.sqrt(max(cov[0, 0], 0.0))), float(math.sqrt(max(cov[1, 1], 0.0))))
