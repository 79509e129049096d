"""Kernel and solver tests.

Reference values tagged "40-digit" below were computed independently with
mpmath at 40 decimal digits (zeta/Hurwitz-zeta continuations and direct
series summation) and frozen here; everything else is checked against
direct summation or closed forms evaluated in the test itself.
"""

import math

import numpy as np
import pytest

from qvol.errors import (
    InvalidInputError,
    NonConvergenceError,
    NumericalError,
    SingularMatrixError,
)
from qvol.numerics import (
    SolverOptions,
    hurwitz_tail,
    ks_statistic,
    ks_statistic_precomputed,
    linearized_stderr,
    nls_solve,
    simplex_minimize,
    zipf_mass,
    zipf_mass_dbeta,
)

# --- zipf_mass --------------------------------------------------------------

# 40-digit reference values for H(beta, x) = sum_{i=1..x} i^-beta.
ZIPF_MASS_REFERENCE = {
    (0.5545, 1_000.0): 47.023861598891257,
    (0.5545, 100_000.0): 377.31144038378346,
    (0.5545, 1_000_000.0): 1055.4875778615887,
    (0.7745, 1_000.0): 17.183250450890552,
    (0.7745, 100_000.0): 55.603633209987356,
    (0.7745, 1_000_000.0): 96.092237142979456,
    (2.5, 1_000.0): 1.3414661912046496,
    (2.5, 100_000.0): 1.3414872361692242,
    (2.5, 1_000_000.0): 1.341487256584251,
    (0.7745, 231.0): 11.263659094634693,
    (0.7745, 12_345.678): 33.236227379296733,
    (1.5, 777.25): 2.5406603551939685,
    (3.25, 10.5): 1.1571401393143285,
}

# Continuation accuracy right next to the exponent-1 pole degrades
# gracefully; these two get a looser band.
ZIPF_MASS_NEAR_POLE = {
    (0.9999999, 1_000_000.0): 14.392736259005819,
    (1.0000001, 1_000_000.0): 14.392717186734408,
}


def test_zipf_mass_single_term():
    for beta in (0.3, 0.7745, 2.0, 5.0):
        assert zipf_mass(beta, 1.0) == pytest.approx(1.0, abs=1e-14)


def test_zipf_mass_infinite_sum_sentinel():
    assert zipf_mass(2.0, math.inf) == pytest.approx(math.pi**2 / 6, rel=1e-12)
    # zeta(1.7745), 40-digit value
    assert zipf_mass(1.7745, math.inf) == pytest.approx(
        1.9217346738786871, rel=1e-12
    )
    with pytest.raises(InvalidInputError):
        zipf_mass(0.9, math.inf)


def test_zipf_mass_headline_population_mass():
    # 1e5 * H(0.7745, 1e6) is the total volume of the simulation population.
    mass = zipf_mass(0.7745, 1e6)
    assert mass == pytest.approx(96.09224, abs=1e-4)
    assert 1e5 * mass == pytest.approx(9_609_224.0, abs=1.0)


@pytest.mark.parametrize(("args", "expected"), sorted(ZIPF_MASS_REFERENCE.items()))
def test_zipf_mass_frozen_reference(args, expected):
    beta, x = args
    assert zipf_mass(beta, x) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize(("args", "expected"), sorted(ZIPF_MASS_NEAR_POLE.items()))
def test_zipf_mass_near_pole_reference(args, expected):
    beta, x = args
    assert zipf_mass(beta, x) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("beta", [0.3, 0.5545, 0.7745, 1.5, 2.5])
@pytest.mark.parametrize("n", [1_000, 1_000_000])
def test_zipf_mass_matches_direct_sum(beta, n):
    i = np.arange(1.0, n + 1.0)
    direct = float(np.sum(i**-beta))
    assert zipf_mass(beta, float(n)) == pytest.approx(direct, rel=1e-10)


def test_zipf_mass_monotone_in_x_and_beta():
    xs = [1.0, 2.0, 10.0, 100.5, 1e4, 1e6]
    masses = [zipf_mass(0.7745, x) for x in xs]
    assert all(a < b for a, b in zip(masses, masses[1:]))
    betas = [0.3, 0.5545, 0.7745, 1.5, 2.5]
    at_fixed_x = [zipf_mass(b, 5000.0) for b in betas]
    assert all(a > b for a, b in zip(at_fixed_x, at_fixed_x[1:]))


def test_zipf_mass_domain_errors():
    with pytest.raises(InvalidInputError):
        zipf_mass(1.0, 100.0)  # pole of the continuation
    with pytest.raises(InvalidInputError):
        zipf_mass(0.7745, 0.5)
    with pytest.raises(InvalidInputError):
        zipf_mass(-0.2, 10.0)


# --- zipf_mass_dbeta --------------------------------------------------------

# 40-digit reference values for -sum ln(i) i^-beta.
ZIPF_MASS_DBETA_REFERENCE = {
    (0.7745, 231.0): -34.879570970296971,
    (0.7745, 1_000_000.0): -957.36638207379664,
    (0.5545, 100_000.0): -3517.7464074713493,
    (2.5, 1_000.0): -0.38718237666915462,
    (1.5, 777.25): -3.3114456895790346,
}


def test_zipf_mass_dbeta_single_term_is_zero():
    assert zipf_mass_dbeta(0.7745, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_zipf_mass_dbeta_direct_sum_oracle():
    i = np.arange(2.0, 10_001.0)
    direct = -float(np.sum(np.log(i) * i**-2.0))
    assert zipf_mass_dbeta(2.0, 1e4) == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize(
    ("args", "expected"), sorted(ZIPF_MASS_DBETA_REFERENCE.items())
)
def test_zipf_mass_dbeta_frozen_reference(args, expected):
    beta, x = args
    assert zipf_mass_dbeta(beta, x) == pytest.approx(expected, rel=1e-12)
    # loose cross-check band quoted alongside the reference fit reproduction
    if args == (0.7745, 231.0):
        assert expected == pytest.approx(-34.9, rel=0.02)


@pytest.mark.parametrize("beta", [0.3, 0.5545, 0.7745, 1.5, 2.5])
@pytest.mark.parametrize("x", [777.25, 1e6])
def test_zipf_mass_dbeta_matches_finite_differences(beta, x):
    h = 1e-6 * beta
    fd = (zipf_mass(beta + h, x) - zipf_mass(beta - h, x)) / (2 * h)
    assert zipf_mass_dbeta(beta, x) == pytest.approx(fd, rel=1e-5)


# --- hurwitz_tail -----------------------------------------------------------


def test_hurwitz_tail_basel():
    assert hurwitz_tail(2.0, 1.0) == pytest.approx(math.pi**2 / 6, rel=1e-12)


def test_hurwitz_tail_direct_sum_oracle():
    # sum_{i>=101} i^-2: direct head plus an integral bracket for the rest.
    head = float(np.sum(np.arange(101.0, 1_000_001.0) ** -2.0))
    lo, hi = 1.0 / 1_000_001.0, 1.0 / 1_000_000.0
    mid = head + 0.5 * (lo + hi)
    assert hurwitz_tail(2.0, 101.0) == pytest.approx(mid, rel=1e-10)


HURWITZ_REFERENCE = {
    (1.7745, 232.0): 0.019038528039843253,
    (1.7745, 1.0): 1.9217346738786871,
    (1.5545, 1_000_000.0): 0.00084937323169603339,
    (3.5, 2.0): 0.12673386731705665,
    (2.0, 1.0): 1.6449340668482264,
}


@pytest.mark.parametrize(("args", "expected"), sorted(HURWITZ_REFERENCE.items()))
def test_hurwitz_tail_frozen_reference(args, expected):
    s, a = args
    assert hurwitz_tail(s, a) == pytest.approx(expected, rel=1e-12)
    if args == (1.7745, 232.0):
        assert expected == pytest.approx(0.0190, rel=0.01)


def test_hurwitz_tail_domain_error():
    with pytest.raises(InvalidInputError):
        hurwitz_tail(1.0, 10.0)
    with pytest.raises(InvalidInputError):
        hurwitz_tail(0.8, 10.0)


# --- SolverOptions ----------------------------------------------------------


def test_solver_options_validation():
    with pytest.raises(InvalidInputError):
        SolverOptions(max_iterations=0)
    with pytest.raises(InvalidInputError):
        SolverOptions(relative_tolerance=1.0)
    with pytest.raises(InvalidInputError):
        SolverOptions(relative_tolerance=0.0)
    with pytest.raises(InvalidInputError):
        SolverOptions(step_scale=0.0)


# --- nls_solve --------------------------------------------------------------


def _zipf_residuals(data, ranks):
    def residual(params):
        c, beta = params
        return data - c / ranks**beta

    return residual


def test_nls_solve_exact_data():
    ranks = np.arange(1.0, 51.0)
    data = 100.0 / ranks**0.5
    params, jac = nls_solve(_zipf_residuals(data, ranks), (50.0, 1.0))
    assert params[0] == pytest.approx(100.0, rel=1e-6)
    assert params[1] == pytest.approx(0.5, rel=1e-6)
    assert jac.shape == (50, 2)


@pytest.mark.parametrize(
    ("c", "beta"),
    [(10.0, 0.3), (10.0, 2.0), (1e6, 0.3), (1e6, 2.0), (1_000.0, 0.7745)],
)
def test_nls_solve_exact_recovery_across_scales(c, beta):
    ranks = np.arange(1.0, 51.0)
    data = c / ranks**beta
    params, _ = nls_solve(_zipf_residuals(data, ranks), (0.5 * c, 1.0))
    assert params[0] == pytest.approx(c, rel=1e-6)
    assert params[1] == pytest.approx(beta, rel=1e-6)


def test_nls_solve_zero_residuals_returns_init():
    def residual(params):
        return np.zeros(5)

    params, _ = nls_solve(residual, (3.0, 4.0))
    assert params == (3.0, 4.0)


def test_nls_solve_against_grid_search_oracle():
    rng = np.random.default_rng(2)
    ranks = np.arange(1.0, 201.0)
    eps = rng.normal(1.0, 0.03, size=200)
    data = (1e5 / ranks**0.7745) * eps

    params, jac = nls_solve(_zipf_residuals(data, ranks), (5e4, 1.0))
    resid = data - params[0] / ranks ** params[1]
    _, delta_beta = linearized_stderr(jac, resid)

    # Brute-force grid over (c, beta); the solver must land within one grid
    # step of the grid optimum and within 3 standard errors of truth.
    cs = np.geomspace(0.80e5, 1.25e5, 141)
    bs = np.linspace(0.70, 0.85, 151)
    pow_table = ranks[None, :] ** -bs[:, None]  # (beta, rank)
    model = cs[:, None, None] * pow_table[None, :, :]  # (c, beta, rank)
    ssr = np.sum((data[None, None, :] - model) ** 2, axis=2)
    ic, ib = np.unravel_index(np.argmin(ssr), ssr.shape)
    assert abs(params[1] - bs[ib]) <= bs[1] - bs[0]
    assert abs(params[0] - cs[ic]) <= cs[ic + 1] - cs[ic]
    assert abs(params[1] - 0.7745) <= 3.0 * delta_beta


def test_nls_solve_nonconvergence_carries_best_point():
    # Rosenbrock residuals starved of iterations cannot meet the tolerance.
    def residual(params):
        x, y = params
        return np.array([10.0 * (y - x * x), 1.0 - x, 0.0])

    with pytest.raises(NonConvergenceError) as excinfo:
        nls_solve(residual, (-1.2, 1.0), SolverOptions(max_iterations=2))
    err = excinfo.value
    assert len(err.best_params) == 2
    assert err.best_value >= 0.0 and math.isfinite(err.best_value)


# --- simplex_minimize -------------------------------------------------------


def test_simplex_quadratic_bowl():
    point = simplex_minimize(
        lambda p: (p[0] - 1.0) ** 2 + (p[1] + 2.0) ** 2, (0.0, 0.0)
    )
    assert point[0] == pytest.approx(1.0, abs=1e-6)
    assert point[1] == pytest.approx(-2.0, abs=1e-6)


def test_simplex_constant_objective_returns_init():
    point = simplex_minimize(lambda p: 7.0, (2.5, -1.5))
    assert point == pytest.approx((2.5, -1.5))


def test_simplex_recovers_params_from_exact_bin_counts():
    # Pearson objective built from closed-form expected counts; zero at the
    # generating parameters, so the minimizer must land there.
    c_true, beta_true = 2e4, 0.9
    edges = 2.0 * 2.0 ** np.arange(15)  # geometric ladder, ratio 2

    def expected(c, beta):
        n_at = (c / edges) ** (1.0 / beta)
        return n_at[:-1] - n_at[1:]

    observed = expected(c_true, beta_true)

    def objective(logp):
        model = expected(math.exp(logp[0]), math.exp(logp[1]))
        if np.any(~np.isfinite(model)) or np.any(model <= 0):
            return 1e12
        return float(np.sum((observed - model) ** 2 / model))

    point = simplex_minimize(
        objective,
        (math.log(1e4), math.log(1.2)),
        SolverOptions(max_iterations=2000),
    )
    assert math.exp(point[0]) == pytest.approx(c_true, rel=1e-3)
    assert math.exp(point[1]) == pytest.approx(beta_true, rel=1e-3)


def test_simplex_nan_objective_raises_naming_params():
    def objective(p):
        return math.nan if p[0] > 0.5 else 0.0

    with pytest.raises(NumericalError) as excinfo:
        simplex_minimize(objective, (1.0, 1.0))
    assert "1.0" in str(excinfo.value)


# --- ks_statistic -----------------------------------------------------------


def test_ks_exact_quantiles_within_half_step():
    n = 40
    data = (np.arange(1, n + 1) - 0.5) / n  # exact uniform quantiles
    assert ks_statistic(data, lambda x: x) <= 0.5 / n + 1e-12


def test_ks_single_point_at_median():
    assert ks_statistic([0.0], lambda x: 0.5) == pytest.approx(0.5)


def test_ks_uniform_example_brute_force():
    data = [1.0, 2.0, 3.0, 4.0]
    cdf = lambda x: x / 5.0  # noqa: E731

    # Enumerate both sides of every empirical-CDF jump by hand.
    gaps = []
    n = len(data)
    for i, x in enumerate(data):
        gaps.append(abs((i + 1) / n - cdf(x)))
        gaps.append(abs(i / n - cdf(x)))
    assert len(gaps) == 8
    assert max(gaps) == pytest.approx(0.2)
    assert ks_statistic(data, cdf) == pytest.approx(max(gaps))


def test_ks_monotone_transform_invariance():
    rng = np.random.default_rng(11)
    data = np.sort(rng.uniform(0.1, 3.0, size=25))
    base = ks_statistic(data, lambda x: x / 4.0)
    transformed = ks_statistic(np.exp(data), lambda y: math.log(y) / 4.0)
    assert transformed == pytest.approx(base, abs=1e-12)


def test_ks_rejects_empty_and_unsorted():
    with pytest.raises(InvalidInputError):
        ks_statistic([], lambda x: x)
    with pytest.raises(InvalidInputError):
        ks_statistic([2.0, 1.0], lambda x: x)


def test_ks_precomputed_agrees_with_callable():
    data = np.array([0.5, 1.0, 2.5, 4.0])
    cdf = lambda x: x / 5.0  # noqa: E731
    assert ks_statistic_precomputed([cdf(x) for x in data]) == pytest.approx(
        ks_statistic(data, cdf)
    )


# --- linearized_stderr ------------------------------------------------------


def test_stderr_zero_residuals():
    jac = np.column_stack([np.ones(5), np.arange(5.0)])
    assert linearized_stderr(jac, np.zeros(5)) == (0.0, 0.0)


def test_stderr_orthonormal_jacobian_unit_covariance():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(6, 2)))
    residuals = np.array([2.0, 0.0, 0.0, 0.0, 0.0, 0.0])  # SSR = 4 = n - 2
    dc, db = linearized_stderr(q, residuals)
    assert dc == pytest.approx(1.0, rel=1e-12)
    assert db == pytest.approx(1.0, rel=1e-12)


def test_stderr_singular_jacobian_raises():
    jac = np.column_stack([np.ones(5), np.ones(5)])
    with pytest.raises(SingularMatrixError):
        linearized_stderr(jac, np.ones(5))


def test_stderr_needs_three_residuals():
    with pytest.raises(InvalidInputError):
        linearized_stderr(np.ones((2, 2)), np.ones(2))


def test_stderr_tracks_monte_carlo_spread():
    # The linearized delta_beta should sit near the actual replicate-to-
    # replicate spread of the fitted exponent.  Constant-variance noise is
    # the regime where the s^2 (J^T J)^-1 linearization is exact; with
    # volume-proportional noise it is only an approximation.
    rng = np.random.default_rng(23)
    ranks = np.arange(1.0, 61.0)
    model = 500.0 / ranks**0.8

    betas, deltas = [], []
    for _ in range(200):
        data = model + rng.normal(0.0, 2.0, size=60)
        params, jac = nls_solve(_zipf_residuals(data, ranks), (400.0, 1.0))
        resid = data - params[0] / ranks ** params[1]
        _, db = linearized_stderr(jac, resid)
        betas.append(params[1])
        deltas.append(db)

    spread = float(np.std(betas, ddof=1))
    assert float(np.median(deltas)) == pytest.approx(spread, rel=0.30)
