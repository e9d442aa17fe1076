"""Single Gaussian observation models, weighted refits, priors and scaled likelihoods.

Score matrices are plain (T, S) float64 arrays of log scores over a global
state layout; -inf marks impossible cells, NaN is never legal.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.linalg import solve_triangular

from .corpus import atomic_write_text, fmt_float
from .errors import (
    DegenerateStatisticsError,
    InconsistentPriorError,
    InvalidDataError,
)

LOG_2PI = math.log(2.0 * math.pi)
COV_MODES = ("full", "diag")

__all__ = [
    "GaussianModel",
    "GaussianStats",
    "log_density",
    "fit_weighted",
    "score_frames",
    "posterior_to_loglikelihood",
    "combine_scores",
    "estimate_priors",
    "check_score_matrix",
    "read_priors",
    "write_priors",
    "read_posterior_file",
    "write_posterior_file",
]


class GaussianModel:
    """Multivariate Gaussian with full or diagonal covariance.

    mean: (dim,). cov: (dim, dim) for full mode, (dim,) of variances for diag.
    The Cholesky factor and log determinant are cached on first use.
    """

    def __init__(self, mean, cov, covariance: str = "full"):
        if covariance not in COV_MODES:
            raise ValueError(f"covariance must be one of {COV_MODES}")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.asarray(cov, dtype=np.float64)
        self.covariance = covariance
        if self.mean.ndim != 1 or self.mean.size == 0:
            raise InvalidDataError("mean must be a nonempty vector")
        dim = self.mean.shape[0]
        if covariance == "full":
            if self.cov.shape != (dim, dim):
                raise InvalidDataError(f"full covariance must be ({dim}, {dim})")
            if not np.allclose(self.cov, self.cov.T, rtol=1e-9, atol=1e-12):
                raise InvalidDataError("covariance matrix not symmetric")
        else:
            if self.cov.shape != (dim,):
                raise InvalidDataError(f"diagonal covariance must be ({dim},)")
            if np.any(self.cov <= 0.0):
                raise InvalidDataError("diagonal covariance needs positive variances")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov))):
            raise InvalidDataError("non-finite Gaussian parameters")
        self._chol = None
        self._log_det = None

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _factorize(self):
        if self._log_det is not None:
            return
        if self.covariance == "diag":
            self._chol = np.sqrt(self.cov)
            self._log_det = float(np.sum(np.log(self.cov)))
            return
        cov = self.cov
        # deterministic jitter escalation keeps a barely indefinite matrix usable
        base = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(cov)))))
        jitter = 0.0
        for _ in range(64):
            try:
                L = np.linalg.cholesky(cov if jitter == 0.0 else cov + jitter * np.eye(self.dim))
                self._chol = L
                self._log_det = float(2.0 * np.sum(np.log(np.diag(L))))
                return
            except np.linalg.LinAlgError:
                jitter = base if jitter == 0.0 else jitter * 2.0
        raise DegenerateStatisticsError("covariance not factorizable even with jitter")

    def log_density_many(self, frames: np.ndarray) -> np.ndarray:
        """Log density of each row of frames, shape (T,)."""
        self._factorize()
        x = np.asarray(frames, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise InvalidDataError(f"frames must be (T, {self.dim})")
        d = x - self.mean
        if self.covariance == "diag":
            q = np.sum((d / self._chol) ** 2, axis=1)
        else:
            y = solve_triangular(self._chol, d.T, lower=True, check_finite=False)
            q = np.sum(y * y, axis=0)
        return -0.5 * (self.dim * LOG_2PI + self._log_det + q)

    def log_density(self, frame) -> float:
        return float(self.log_density_many(np.asarray(frame, dtype=np.float64)[None, :])[0])


def log_density(model: GaussianModel, frame) -> float:
    """Log of the Gaussian density at one frame."""
    return model.log_density(frame)


class GaussianStats:
    """Weighted sufficient statistics (mass, weighted sum, weighted second moment).

    Accumulation is associative, so per-video statistics merge in any grouping
    without changing the final fit.
    """

    def __init__(self, dim: int, covariance: str = "full"):
        if covariance not in COV_MODES:
            raise ValueError(f"covariance must be one of {COV_MODES}")
        self.dim = dim
        self.covariance = covariance
        self.weight = 0.0
        self.wx = np.zeros(dim)
        self.wxx = np.zeros((dim, dim)) if covariance == "full" else np.zeros(dim)

    def add(self, samples: np.ndarray, weights: np.ndarray) -> None:
        x = np.asarray(samples, dtype=np.float64)
        w = np.asarray(weights, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim or w.shape != (x.shape[0],):
            raise ValueError("samples must be (N, dim) with matching (N,) weights")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        nz = w > 0.0
        if not np.all(nz):
            x = x[nz]
            w = w[nz]
        if x.shape[0] == 0:
            return
        self.weight += float(np.sum(w))
        self.wx += w @ x
        if self.covariance == "full":
            self.wxx += (x * w[:, None]).T @ x
        else:
            self.wxx += w @ (x * x)

    def merge(self, other: "GaussianStats") -> None:
        if other.dim != self.dim or other.covariance != self.covariance:
            raise ValueError("cannot merge stats with different layouts")
        self.weight += other.weight
        self.wx += other.wx
        self.wxx += other.wxx

    def finalize(self, variance_floor: float = 1e-4) -> GaussianModel:
        """Fit mean and covariance; the covariance uses the refit mean.

        Diagonal entries are clamped from below to the floor (clamped, not
        incremented, so clean estimates stay exact).
        """
        if self.weight <= 0.0:
            raise DegenerateStatisticsError("zero total weight, nothing to fit")
        mean = self.wx / self.weight
        if self.covariance == "full":
            cov = self.wxx / self.weight - np.outer(mean, mean)
            cov = (cov + cov.T) / 2.0
            d = np.diagonal(cov).copy()
            np.fill_diagonal(cov, np.maximum(d, variance_floor))
        else:
            cov = np.maximum(self.wxx / self.weight - mean * mean, variance_floor)
        return GaussianModel(mean, cov, self.covariance)


def fit_weighted(samples, weights, *, covariance: str = "full",
                 variance_floor: float = 1e-4) -> GaussianModel:
    """Weighted maximum likelihood Gaussian fit (biased covariance, divisor W)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be (N, dim)")
    stats = GaussianStats(x.shape[1], covariance)
    stats.add(x, weights)
    return stats.finalize(variance_floor)


def score_frames(state_models, frames: np.ndarray) -> np.ndarray:
    """Stack per-state log densities into a (T, S) score matrix."""
    x = np.asarray(frames, dtype=np.float64)
    out = np.empty((x.shape[0], len(state_models)))
    for s, m in enumerate(state_models):
        out[:, s] = m.log_density_many(x)
    return out


def check_score_matrix(scores: np.ndarray, n_states: int | None = None) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise InvalidDataError("score matrix must be 2-D")
    if n_states is not None and scores.shape[1] != n_states:
        raise InvalidDataError(
            f"score matrix has {scores.shape[1]} states, expected {n_states}"
        )
    if np.any(np.isnan(scores)) or np.any(np.isposinf(scores)):
        raise InvalidDataError("score matrix entries must be finite or -inf")
    return scores


def posterior_to_loglikelihood(posteriors: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """Turn state posteriors into log scaled likelihoods: log p(s|x) - log p(s).

    A state with zero prior and zero posterior everywhere scores -inf; zero
    prior with positive posterior mass is inconsistent and raises.
    """
    post = np.asarray(posteriors, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64)
    if post.ndim != 2 or priors.shape != (post.shape[1],):
        raise InvalidDataError("posteriors (T, S) and priors (S,) must agree")
    if np.any(post < 0.0) or not np.all(np.isfinite(post)):
        raise InvalidDataError("posteriors must be finite and nonnegative")
    dead = priors <= 0.0
    if np.any(post[:, dead] > 0.0):
        raise InconsistentPriorError("positive posterior mass on a zero-prior state")
    with np.errstate(divide="ignore"):
        scores = np.log(post) - np.where(dead, 0.0, np.log(np.where(dead, 1.0, priors)))
    scores[:, dead] = -np.inf
    return scores


def combine_scores(a, b):
    """Elementwise log of the arithmetic mean of two probabilities given in log space."""
    return np.logaddexp(a, b) - math.log(2.0)


def estimate_priors(state_id_arrays, n_states: int) -> np.ndarray:
    """Relative frame frequency of every global state across aligned videos."""
    counts = np.zeros(n_states, dtype=np.int64)
    for ids in state_id_arrays:
        ids = np.asarray(ids)
        if ids.size == 0:
            continue
        if ids.min() < 0 or ids.max() >= n_states:
            raise InvalidDataError("state id outside the global layout")
        counts += np.bincount(ids, minlength=n_states)
    total = int(counts.sum())
    if total == 0:
        raise DegenerateStatisticsError("no aligned frames to estimate priors from")
    return counts / float(total)


# ---------------------------------------------------------------------------
# prior and posterior files


def read_priors(path, n_states: int | None = None) -> np.ndarray:
    """Read one prior per line; must be nonnegative and sum to 1 within 1e-9."""
    path = os.fspath(path)
    vals = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise InvalidDataError(f"{path}:{ln}: bad prior value") from None
    p = np.asarray(vals, dtype=np.float64)
    if p.size == 0:
        raise InvalidDataError(f"{path}: empty prior table")
    if n_states is not None and p.size != n_states:
        raise InvalidDataError(f"{path}: {p.size} priors for {n_states} states")
    if np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise InvalidDataError(f"{path}: priors must be finite and nonnegative")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise InvalidDataError(f"{path}: priors sum to {p.sum()!r}, not 1")
    return p


def write_priors(path, priors: np.ndarray) -> None:
    atomic_write_text(path, "\n".join(fmt_float(v) for v in priors) + "\n")


def read_posterior_file(path, n_states: int | None = None) -> np.ndarray:
    """Read a per-frame state posterior matrix, header "T S" then T rows.

    Rows must sum to 1 within 1e-3 and are renormalized exactly on load.
    """
    path = os.fspath(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise InvalidDataError(f"{path}: posterior header must be 'T S'")
        try:
            T, S = int(header[0]), int(header[1])
        except ValueError:
            raise InvalidDataError(f"{path}: posterior header must be two integers") from None
        try:
            data = np.loadtxt(fh, dtype=np.float64, ndmin=2, max_rows=T)
        except ValueError as e:
            raise InvalidDataError(f"{path}: {e}") from None
    if data.shape != (T, S):
        raise InvalidDataError(f"{path}: header declares {(T, S)}, data is {data.shape}")
    if n_states is not None and S != n_states:
        raise InvalidDataError(f"{path}: {S} states in file, model has {n_states}")
    if np.any(data < 0.0) or not np.all(np.isfinite(data)):
        raise InvalidDataError(f"{path}: posteriors must be finite and nonnegative")
    sums = data.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-3):
        t = int(np.argmax(np.abs(sums - 1.0)))
        raise InvalidDataError(f"{path}: row {t} sums to {sums[t]!r}, outside 1 +- 1e-3")
    return data / sums[:, None]


def write_posterior_file(path, posteriors: np.ndarray) -> None:
    post = np.asarray(posteriors, dtype=np.float64)
    lines = [f"{post.shape[0]} {post.shape[1]}"]
    for row in post:
        lines.append(" ".join(fmt_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
