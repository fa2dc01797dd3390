"""Local constant and local linear Fréchet regression on the torus.

Both estimators minimize a weighted sum of squared response-space distances.
The local constant weights are the toroidal kernel values; the local linear
weights correct them with first-order tangent terms built from the local
moments

    mu0 = mean_i K_i,   mu1 = mean_i K_i theta_i,   mu2 = mean_i K_i theta_i theta_i',

where theta_i are the tangent coordinates of the predictors at the query and
K_i the kernel values. With b solving mu2 b = mu1 and sigma = mu0 - mu1'b,
the signed weights are

    W_i = K_i (1 - b' theta_i) / sigma,

which satisfy mean(W) = 1 and mean(W theta) = 0 identically. Both identities
hold at floating-point accuracy because sigma is computed from the same
solved vector b that enters the weights.

Everything is written over query batches so that cross-validation and
simulation can amortize the trigonometry; the single-query operations are
thin wrappers over the batched path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateVarianceError,
    EmptyNeighborhoodError,
    SingularDesignError,
)
from .kernels import BandwidthVector, KernelFamily, gap_weights
from .metric import ResponseSpace, weighted_frechet_mean
from .torus import TorusPoint, canonicalize

CONDITION_LIMIT = 1e12

# The weight identities mean(W) = 1 and mean(W theta) = 0 carry rounding of
# size eps * (mu0 + |mu1||b|) / sigma, so sigma values below this relative
# floor cannot support them at 1e-10 and are treated as degenerate.
_IDENTITY_TOL = 1e-10
_SIGMA_GUARD = 100.0 * np.finfo(float).eps / _IDENTITY_TOL

LOCAL_CONSTANT = "lc"
LOCAL_LINEAR = "ll"

_ESTIMATOR_ALIASES = {
    "lc": LOCAL_CONSTANT, "local_constant": LOCAL_CONSTANT, "constant": LOCAL_CONSTANT,
    "ll": LOCAL_LINEAR, "local_linear": LOCAL_LINEAR, "linear": LOCAL_LINEAR,
}


def normalize_estimator(name: str) -> str:
    try:
        return _ESTIMATOR_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; expected 'lc' or 'll'") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable sample of torus predictors with metric-space responses."""

    space: ResponseSpace
    angles: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        ang = np.asarray(self.angles, dtype=float)
        if ang.ndim != 2 or ang.shape[0] < 1 or ang.shape[1] < 1:
            raise ValueError("predictor angles must form a nonempty (n, d) array")
        ang = np.asarray(canonicalize(ang))
        ang.setflags(write=False)
        object.__setattr__(self, "angles", ang)
        resp = np.asarray(self.responses)
        if resp.shape[0] != ang.shape[0]:
            raise ValueError(f"{ang.shape[0]} predictors but {resp.shape[0]} responses")
        resp = resp.copy()
        resp.setflags(write=False)
        object.__setattr__(self, "responses", resp)

    @classmethod
    def from_payloads(cls, space: ResponseSpace, predictors, responses) -> "Dataset":
        """Build from TorusPoints (or raw angle rows) and unvalidated payloads."""
        rows = [p.angles if isinstance(p, TorusPoint) else np.atleast_1d(p)
                for p in predictors]
        if len(rows) == 0:
            raise ValueError("need at least one observation")
        return cls(space, np.stack(rows), space.stack(responses))

    @property
    def n(self) -> int:
        return self.angles.shape[0]

    @property
    def dim(self) -> int:
        return self.angles.shape[1]

    def predictor(self, i: int) -> TorusPoint:
        return TorusPoint(self.angles[i])

    def subset(self, index) -> "Dataset":
        return Dataset(self.space, self.angles[index], self.responses[index])


@dataclass
class LocalMoments:
    """Per-query kernel moments and tangent coordinates."""

    mu0: float
    mu1: np.ndarray
    mu2: np.ndarray
    sigma: float
    theta: np.ndarray
    kernel_weights: np.ndarray
    condition_number: float


@dataclass
class FitDiagnostics:
    condition_number: float
    sigma: float
    solver_iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class LocalFit:
    """Estimate at one query with the weights that produced it."""

    estimate: object
    weights: np.ndarray
    query: TorusPoint
    estimator: str
    diagnostics: FitDiagnostics


def _theta_gaps(data_angles: np.ndarray, query_angles: np.ndarray):
    """Tangent coordinates and cosine gaps of every observation at every query.

    Returns (theta, gaps), both of shape (q, n, d).
    """
    delta = data_angles[None, :, :] - query_angles[:, None, :]
    theta = np.asarray(canonicalize(delta))
    gaps = np.clip(1.0 - np.cos(delta), 0.0, 2.0)
    return theta, gaps


@dataclass
class QueryBatch:
    """Precomputed geometry for a fixed (training set, query set) pair.

    Kernel values depend on the bandwidth only through the cosine gaps, so
    bandwidth searches reuse one of these per fold.
    """

    data: Dataset
    query_angles: np.ndarray
    theta: np.ndarray = field(init=False)
    gaps: np.ndarray = field(init=False)

    def __post_init__(self):
        q = np.asarray(canonicalize(np.atleast_2d(np.asarray(self.query_angles, float))))
        if q.shape[1] != self.data.dim:
            raise ValueError(f"query dimension {q.shape[1]} != data dimension {self.data.dim}")
        self.query_angles = q
        self.theta, self.gaps = _theta_gaps(self.data.angles, q)

    def moments(self, h: BandwidthVector, kernel: KernelFamily):
        """Kernel values and the three local moments for every query row."""
        n = self.data.n
        kvals = gap_weights(kernel, self.gaps, h)
        mu0 = kvals.mean(axis=1)
        mu1 = np.einsum("qn,qnd->qd", kvals, self.theta) / n
        mu2 = np.einsum("qn,qnd,qne->qde", kvals, self.theta, self.theta) / n
        return kvals, mu0, mu1, mu2

    def local_constant_weights(self, h: BandwidthVector, kernel: KernelFamily):
        """Rows K_i / mu0 (mean one); ok is False where every kernel value is zero."""
        kvals, mu0, _, _ = self.moments(h, kernel)
        ok = mu0 > 0.0
        weights = np.zeros_like(kvals)
        weights[ok] = kvals[ok] / mu0[ok, None]
        return weights, ok, mu0

    def local_linear_weights(self, h: BandwidthVector, kernel: KernelFamily):
        """Signed local linear weight rows with per-row condition diagnostics.

        Returns (weights, ok, cond, sigma); ok rows satisfy the conditioning
        guard cond <= 1e12 and sigma > 0.
        """
        kvals, mu0, mu1, mu2 = self.moments(h, kernel)
        eigs = np.linalg.eigvalsh(mu2)
        lo, hi = eigs[:, 0], eigs[:, -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(lo > 0.0, hi / lo, np.inf)
        ok = cond <= CONDITION_LIMIT
        q, n = kvals.shape
        weights = np.zeros((q, n))
        sigma = np.full(q, np.nan)
        if np.any(ok):
            beta = _solve_refined(mu2[ok], mu1[ok])
            sig = mu0[ok] - np.einsum("qd,qd->q", mu1[ok], beta)
            proj = np.einsum("qnd,qd->qn", self.theta[ok], beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                w_ok = kvals[ok] * (1.0 - proj) / sig[:, None]
            noise = mu0[ok] + np.linalg.norm(mu1[ok], axis=1) * \
                np.linalg.norm(beta, axis=1)
            pos = sig > _SIGMA_GUARD * noise
            w_ok[~pos] = 0.0
            weights[ok] = w_ok
            sigma[ok] = sig
            ok = ok.copy()
            ok[np.nonzero(ok)[0][~pos]] = False
        return weights, ok, cond, sigma

    def weight_rows(self, h: BandwidthVector, kernel: KernelFamily, estimator: str):
        """Weights for either estimator plus per-row diagnostics."""
        estimator = normalize_estimator(estimator)
        if estimator == LOCAL_CONSTANT:
            weights, ok, _ = self.local_constant_weights(h, kernel)
            q = weights.shape[0]
            return weights, ok, np.full(q, np.nan), np.full(q, np.nan)
        return self.local_linear_weights(h, kernel)

    def estimates(self, h: BandwidthVector, kernel: KernelFamily, estimator: str,
                  rng=None):
        """Fit every query row; failed rows are masked out rather than raised.

        Returns (values, ok, weights, iterations, converged).
        """
        weights, ok, _, _ = self.weight_rows(h, kernel, estimator)
        q = weights.shape[0]
        values = np.zeros((q,) + self.data.responses.shape[1:])
        iterations = np.zeros(q, dtype=int)
        converged = np.zeros(q, dtype=bool)
        if np.any(ok):
            vals, mean_ok, iters, conv = self.data.space.frechet_mean_batch(
                self.data.responses, weights[ok], rng=rng)
            values[ok] = vals
            iterations[ok] = iters
            converged[ok] = conv & mean_ok
            ok = ok.copy()
            ok[np.nonzero(ok)[0][~(mean_ok & conv)]] = False
        return values, ok, weights, iterations, converged


def _solve_refined(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched symmetric solve with one step of iterative refinement."""
    sol = np.linalg.solve(mats, rhs[..., None])[..., 0]
    resid = rhs - np.einsum("qde,qe->qd", mats, sol)
    sol = sol + np.linalg.solve(mats, resid[..., None])[..., 0]
    return sol


def _single_batch(data: Dataset, x: TorusPoint, h: BandwidthVector,
                  kernel: KernelFamily) -> QueryBatch:
    if x.dim != data.dim:
        raise ValueError(f"query dimension {x.dim} != data dimension {data.dim}")
    if h.dim != data.dim:
        raise ValueError(f"bandwidth dimension {h.dim} != data dimension {data.dim}")
    return QueryBatch(data, x.angles[None, :])


def local_moments(data: Dataset, x: TorusPoint, h: BandwidthVector,
                  kernel: KernelFamily) -> LocalMoments:
    """Kernel values, tangent coordinates, and moments at a single query."""
    batch = _single_batch(data, x, h, kernel)
    kvals, mu0, mu1, mu2 = batch.moments(h, kernel)
    eigs = np.linalg.eigvalsh(mu2[0])
    cond = eigs[-1] / eigs[0] if eigs[0] > 0.0 else np.inf
    if cond <= CONDITION_LIMIT:
        beta = _solve_refined(mu2, mu1)[0]
        sigma = float(mu0[0] - mu1[0] @ beta)
    else:
        sigma = float("nan")
    return LocalMoments(mu0=float(mu0[0]), mu1=mu1[0], mu2=mu2[0], sigma=sigma,
                        theta=batch.theta[0], kernel_weights=kvals[0],
                        condition_number=float(cond))


def local_linear_weights(moments: LocalMoments) -> np.ndarray:
    """Signed weights W_i = K_i (1 - b'theta_i)/sigma from precomputed moments.

    Raises SingularDesignError when mu2 is (numerically) singular and
    DegenerateVarianceError when sigma <= 0.
    """
    if not np.isfinite(moments.condition_number) or \
            moments.condition_number > CONDITION_LIMIT:
        raise SingularDesignError(
            f"second moment matrix is singular (condition number "
            f"{moments.condition_number:.3g} exceeds {CONDITION_LIMIT:.0e})",
            condition_number=moments.condition_number)
    beta = _solve_refined(moments.mu2[None], moments.mu1[None])[0]
    sigma = float(moments.mu0 - moments.mu1 @ beta)
    noise = moments.mu0 + float(np.linalg.norm(moments.mu1) * np.linalg.norm(beta))
    if not sigma > _SIGMA_GUARD * noise:
        raise DegenerateVarianceError(
            f"local variance term sigma = {sigma:.3g} is not positive at working "
            f"precision (noise floor {_SIGMA_GUARD * noise:.3g})")
    return moments.kernel_weights * (1.0 - moments.theta @ beta) / sigma


def local_constant_estimate(data: Dataset, x: TorusPoint, h: BandwidthVector,
                            kernel: KernelFamily, rng=None) -> LocalFit:
    """Kernel-weighted Fréchet mean at the query (metric Nadaraya-Watson)."""
    batch = _single_batch(data, x, h, kernel)
    weights, ok, _ = batch.local_constant_weights(h, kernel)
    if not ok[0]:
        raise EmptyNeighborhoodError(
            "all kernel weights are zero at the query; enlarge the bandwidth "
            "or use a strictly positive kernel")
    return _finish_fit(data, x, weights[0], LOCAL_CONSTANT,
                       cond=float("nan"), sigma=float("nan"), rng=rng)


def local_linear_estimate(data: Dataset, x: TorusPoint, h: BandwidthVector,
                          kernel: KernelFamily, rng=None) -> LocalFit:
    """Fréchet mean under the tangent-corrected signed weights."""
    _single_batch(data, x, h, kernel)  # dimension checks
    moments = local_moments(data, x, h, kernel)
    weights = local_linear_weights(moments)
    return _finish_fit(data, x, weights, LOCAL_LINEAR,
                       cond=moments.condition_number, sigma=moments.sigma, rng=rng)


def _finish_fit(data: Dataset, x: TorusPoint, weights: np.ndarray, estimator: str,
                cond: float, sigma: float, rng=None) -> LocalFit:
    result = weighted_frechet_mean(data.space, data.responses, weights, rng=rng)
    diag = FitDiagnostics(condition_number=cond, sigma=sigma,
                          solver_iterations=result.iterations,
                          converged=result.converged)
    return LocalFit(estimate=result.value, weights=weights, query=x,
                    estimator=estimator, diagnostics=diag)
