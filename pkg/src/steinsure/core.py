"""Shared numerical infrastructure: reproducible streams, data containers,
Gaussian sampling, and a chi-square quantile routine.

Random numbers are produced by counter-based Philox generators keyed by a
``(seed, stream_id)`` pair, so any replication can be regenerated in
isolation without advancing global state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc


@dataclass(frozen=True)
class RngStream:
    """Immutable handle for a reproducible random stream.

    Two streams with the same ``(seed, stream_id)`` always yield identical
    draws; distinct ``stream_id`` values give statistically independent
    streams under the same seed.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.Philox(key=(self.seed & 0xFFFFFFFFFFFFFFFF,
                                  self.stream_id & 0xFFFFFFFFFFFFFFFF))
        )

    def child(self, offset: int) -> "RngStream":
        """Derive a sub-stream; ``offset`` shifts the stream id."""
        return RngStream(self.seed, self.stream_id + offset)


def sample_gaussian_vector(stream: RngStream, n: int, sigma: float = 1.0) -> np.ndarray:
    """Draw an n-vector with independent N(0, sigma^2) entries."""
    if n <= 0:
        raise ValueError("n must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return sigma * stream.generator().standard_normal(n)


def gaussian_design(stream: RngStream, n: int, p: int,
                    covariance: np.ndarray | None = None) -> np.ndarray:
    """Sample an n-by-p design with i.i.d. rows N(0, covariance).

    ``covariance=None`` means the identity.  The covariance must be symmetric
    positive definite (checked via Cholesky).
    """
    z = stream.generator().standard_normal((n, p))
    if covariance is None:
        return z
    covariance = np.asarray(covariance, dtype=float)
    if covariance.shape != (p, p):
        raise ValueError("covariance must be p-by-p")
    try:
        chol = np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    return z @ chol.T


@dataclass
class RegressionProblem:
    """A fixed design matrix with a response vector and known noise level."""

    x: np.ndarray
    y: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.x.ndim != 2:
            raise ValueError("design matrix must be 2-dimensional")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(
                "design has %d rows but response has %d entries"
                % (self.x.shape[0], self.y.shape[0])
            )
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass
class SequenceModel:
    """Direct observation model y = mu + noise, with known noise level."""

    y: np.ndarray
    sigma: float = 1.0
    mu: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.mu is not None:
            self.mu = np.asarray(self.mu, dtype=float).ravel()
            if self.mu.shape != self.y.shape:
                raise ValueError("mu and y must have equal length")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def n(self) -> int:
        return self.y.shape[0]


def chi_square_cdf(df: float, x) -> np.ndarray | float:
    """Chi-square CDF through the regularized lower incomplete gamma."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, gammainc(df / 2.0, np.maximum(x, 0.0) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def chi_square_quantile(df: float, prob: float) -> float:
    """Invert the chi-square CDF by bisection.

    Parameters
    ----------
    df : positive degrees of freedom (need not be an integer).
    prob : probability level strictly inside (0, 1).

    Returns the value q with P(chi2_df <= q) = prob to relative
    accuracy 1e-10.  Raises ValueError on invalid input and RuntimeError
    if the bracket fails to tighten within the iteration cap.
    """
    if df <= 0:
        raise ValueError("df must be positive")
    if not (0.0 < prob < 1.0):
        raise ValueError("prob must lie strictly between 0 and 1")
    lo = 0.0
    hi = df + 20.0 * np.sqrt(2.0 * df) + 40.0
    # Widen the bracket if the target mass lies beyond the default cap.
    while chi_square_cdf(df, hi) < prob:
        hi *= 2.0
        if not np.isfinite(hi):
            raise RuntimeError("quantile bracket diverged")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi_square_cdf(df, mid) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * max(1.0, 0.5 * (lo + hi)):
            return 0.5 * (lo + hi)
    raise RuntimeError("chi-square quantile bisection did not converge")
