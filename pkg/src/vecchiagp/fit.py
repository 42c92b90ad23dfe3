"""Maximum-likelihood fitting, trend removal, and kriging prediction.

The optimizer is a self-contained Nelder-Mead maximizer with box
constraints enforced by clamping every candidate vertex into the bounds.
Likelihood evaluations that fail (non-positive-definite blocks, degenerate
conditional variances) count as -inf, so the simplex simply backs away
from infeasible parameter regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import batchla, exact, geo, kernels, parallel, vecchia
from .errors import EstimationError, LikelihoodEvaluationError, NonPositiveDefiniteError

DEFAULT_BOUNDS = {
    "sigma_sq": (1e-4, 1e4),
    "beta": (1e-4, 1e4),
    "nu": (0.05, 5.0),
}


@dataclass
class FitConfig:
    """Objective selection and optimizer settings for one fit."""

    objective: str = "vecchia"  # "vecchia" or "exact"
    m: int = 60
    ordering: str = "random"
    seed: int = 0
    init: kernels.KernelParams = field(
        default_factory=lambda: kernels.KernelParams(1.0, 0.1, 0.5)
    )
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    tol: float = 1e-5
    max_evals: int = 500
    free_nu: bool = False
    max_dense_n: int = exact.DENSE_GUARD_DEFAULT

    def __post_init__(self):
        if self.objective not in ("vecchia", "exact"):
            raise ValueError(f"objective must be 'vecchia' or 'exact', got {self.objective!r}")
        for name, (lo, hi) in self.bounds.items():
            if not (0.0 < lo < hi):
                raise ValueError(f"bounds for {name} must satisfy 0 < lo < hi, got ({lo}, {hi})")


@dataclass
class FitResult:
    theta_hat: kernels.KernelParams
    loglik: float
    evaluations: int
    converged: bool


def nelder_mead_max(f, x0, bounds, tol: float = 1e-5, max_evals: int = 500):
    """Maximize f over a box with a clamped Nelder-Mead simplex.

    Every candidate vertex is clipped into the bounds before evaluation,
    and the best point ever evaluated is what gets returned, so the result
    never leaves the box and never undercuts the starting value.  Stops
    when the relative objective spread of the simplex drops below ``tol``
    or the evaluation budget runs out.

    Returns (x_best, f_best, evaluations, converged).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    lo = np.array([b[0] for b in bounds], dtype=np.float64)
    hi = np.array([b[1] for b in bounds], dtype=np.float64)
    ndim = x0.shape[0]
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise EstimationError(f"starting point {x0} outside bounds")

    state = {"evals": 0, "best_x": None, "best_f": -math.inf}

    def neg(x):
        state["evals"] += 1
        val = f(x)
        if val > state["best_f"]:
            state["best_f"] = val
            state["best_x"] = x.copy()
        return -val

    def clamp(x):
        return np.minimum(np.maximum(x, lo), hi)

    # initial simplex: step 10% of each box width, flipped if it would leave
    simplex = [x0.copy()]
    for i in range(ndim):
        step = 0.1 * (hi[i] - lo[i])
        vertex = x0.copy()
        vertex[i] = x0[i] + step if x0[i] + step <= hi[i] else x0[i] - step
        simplex.append(vertex)
    values = [neg(v) for v in simplex]
    if not np.any(np.isfinite(values)):
        raise EstimationError("no feasible point in the initial simplex")

    alpha, gamma, rho, shrink = 1.0, 2.0, 0.5, 0.5
    converged = False
    while state["evals"] < max_evals:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        f_best, f_worst = values[0], values[-1]
        if math.isfinite(f_worst):
            spread = f_worst - f_best
            if spread <= tol * max(1.0, abs(f_best)):
                converged = True
                break
        centroid = np.mean(simplex[:-1], axis=0)
        reflected = clamp(centroid + alpha * (centroid - simplex[-1]))
        f_r = neg(reflected)
        if values[0] <= f_r < values[-2]:
            simplex[-1], values[-1] = reflected, f_r
        elif f_r < values[0]:
            expanded = clamp(centroid + gamma * (reflected - centroid))
            f_e = neg(expanded)
            if f_e < f_r:
                simplex[-1], values[-1] = expanded, f_e
            else:
                simplex[-1], values[-1] = reflected, f_r
        else:
            contracted = clamp(centroid + rho * (simplex[-1] - centroid))
            f_c = neg(contracted)
            if f_c < values[-1]:
                simplex[-1], values[-1] = contracted, f_c
            else:
                for i in range(1, len(simplex)):
                    simplex[i] = clamp(simplex[0] + shrink * (simplex[i] - simplex[0]))
                    values[i] = neg(simplex[i])

    return state["best_x"], state["best_f"], state["evals"], converged


def mle_estimate(train: geo.Dataset, config: FitConfig, family: str = "matern") -> FitResult:
    """Maximize the selected log-likelihood over (sigma^2, beta[, nu]).

    The smoothness stays fixed at its initial value unless
    ``config.free_nu`` is set.  Infeasible parameter points score -inf.
    """
    if config.objective == "vecchia":
        if train.n <= config.m:
            raise EstimationError(f"need n > m for the Vecchia objective, got n={train.n}, m={config.m}")
        plan = vecchia.make_plan(train, config.m, config.ordering, config.seed)
    else:
        plan = None

    names = ["sigma_sq", "beta"] + (["nu"] if config.free_nu else [])
    nu_fixed = config.init.nu

    def objective(x):
        nu = x[2] if config.free_nu else nu_fixed
        try:
            params = kernels.KernelParams(float(x[0]), float(x[1]), float(nu))
        except ValueError:
            return -math.inf
        spec = kernels.KernelSpec(family, params)
        try:
            if plan is not None:
                return vecchia.vecchia_loglik(train, plan, spec).total
            return exact.exact_loglik(train, spec, max_n=config.max_dense_n)
        except (NonPositiveDefiniteError, LikelihoodEvaluationError):
            return -math.inf

    x0 = np.array([getattr(config.init, name) for name in names])
    bounds = [config.bounds[name] for name in names]
    x_best, f_best, evals, converged = nelder_mead_max(
        objective, x0, bounds, tol=config.tol, max_evals=config.max_evals
    )
    theta = kernels.KernelParams(
        float(x_best[0]), float(x_best[1]), float(x_best[2]) if config.free_nu else nu_fixed
    )
    return FitResult(theta_hat=theta, loglik=f_best, evaluations=evals, converged=converged)


def ols_detrend(raw: geo.Dataset) -> geo.Dataset:
    """Remove the least-squares plane value ~ a + b*x + c*y, keeping residuals."""
    if raw.n < 3:
        raise ValueError(f"detrending needs at least 3 locations, got {raw.n}")
    design = np.column_stack(
        [np.ones(raw.n), raw.locations[:, 0], raw.locations[:, 1]]
    )
    coef, _, rank, _ = np.linalg.lstsq(design, raw.observations, rcond=None)
    if rank < 3:
        raise ValueError("rank-deficient trend design (collinear locations)")
    residuals = raw.observations - design @ coef
    return geo.Dataset(raw.locations, residuals, raw.metric)


def sqrt_transform(raw: geo.Dataset) -> geo.Dataset:
    """Replace each observation by its square root (wind-speed style data)."""
    if np.any(raw.observations < 0.0):
        bad = float(raw.observations.min())
        raise ValueError(f"square-root transform needs nonnegative values, got {bad}")
    return geo.Dataset(raw.locations, np.sqrt(raw.observations), raw.metric)


@dataclass
class PredictionReport:
    predictions: np.ndarray
    mse: float | None
    variances: np.ndarray | None = None


def _krige_dense(train, cov_spec, test_locs):
    sigma = kernels.cov_matrix(train.locations, train.locations, cov_spec, train.metric)
    lower = exact._dense_cholesky(sigma)
    alpha = cho_solve((lower, True), train.observations, check_finite=False)
    cross = kernels.cov_matrix(test_locs, train.locations, cov_spec, train.metric)
    preds = cross @ alpha
    half = solve_triangular(lower, cross.T, lower=True, check_finite=False)
    variances = cov_spec.params.sigma_sq - np.einsum("ij,ij->j", half, half)
    return preds, variances


def krige_predict(
    train: geo.Dataset,
    theta: kernels.KernelParams,
    family: str,
    test_locations,
    m: int,
    test_values=None,
) -> PredictionReport:
    """Conditional-mean prediction at test locations from m nearest neighbors.

    Neighbor search runs over the whole training set (prediction has no
    ordering constraint); with m equal to the training size this is full
    GP kriging through a single dense factorization.  ``mse`` is filled
    when held-out truth is supplied.
    """
    spec = kernels.KernelSpec(family, theta)
    test_locs = np.ascontiguousarray(test_locations, dtype=np.float64)
    if test_locs.ndim != 2 or test_locs.shape[1] != 2:
        raise ValueError(f"test locations must have shape (k, 2), got {test_locs.shape}")
    if not (1 <= m <= train.n):
        raise ValueError(f"need 1 <= m <= n_train, got m={m}, n_train={train.n}")

    if m == train.n:
        preds, variances = _krige_dense(train, spec, test_locs)
    else:
        n_test = test_locs.shape[0]
        neighbors = geo.nearest_points(test_locs, train.locations, train.metric, m)
        preds = np.empty(n_test)
        variances = np.empty(n_test)
        chunk = max(1, batchla._CHUNK_ELEMS // (2 * m * m))

        def block(lo, hi):
            nbr = neighbors[lo:hi]
            nlocs = train.locations[nbr]
            dmat = geo.pairwise_distance(nlocs[:, :, None, :], nlocs[:, None, :, :], train.metric)
            sig = batchla.StridedMatrixBatch.from_matrices(kernels.cov(dmat, spec))
            dvec = geo.pairwise_distance(test_locs[lo:hi, None, :], nlocs, train.metric)
            vb = batchla.StridedVectorBatch.from_vectors(kernels.cov(dvec, spec))
            yb = batchla.StridedVectorBatch.from_vectors(train.observations[nbr])
            lower = batchla.batch_potrf(sig)
            v_prime = batchla.batch_trsv(lower, vb)
            y_prime = batchla.batch_trsv(lower, yb)
            preds[lo:hi] = batchla.batch_dot(v_prime, y_prime).values
            variances[lo:hi] = theta.sigma_sq - batchla.batch_dot(v_prime, v_prime).values

        parallel.map_chunks(block, 0, n_test, chunk)

    mse = None
    if test_values is not None:
        truth = np.asarray(test_values, dtype=np.float64)
        if truth.shape != (test_locs.shape[0],):
            raise ValueError(f"truth shape {truth.shape} does not match {test_locs.shape[0]} test points")
        err = preds - truth
        mse = float(np.mean(err * err))
    return PredictionReport(predictions=preds, mse=mse, variances=variances)
