"""
Monte Carlo verification of (0, delta) privacy.

With epsilon = 0 the smallest admissible delta for a pair of output laws is
their total variation distance, so verification reduces to estimating
``TV(P, Q) = P(A) - Q(A)`` on ``A = {x : p(x) > q(x)}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from wdp_lti.calibrate import NoiseSpec, PrivacySpec, require_pure
from wdp_lti.errors import DimensionMismatch, SingularCovariance
from wdp_lti.lti import StackedMaps, pushforward
from wdp_lti.matgauss import SINGULAR_RTOL, Gaussian, pinsker_tv_bound
from wdp_lti.sampling import chunk_rng, chunk_sizes, draw, gaussian_factor, map_chunks, sample

__all__ = ["TvEstimate", "VerifyReport", "dp_verify", "log_density", "sample", "tv_monte_carlo"]

# stream ids for the two sides of the TV estimator
_P_STREAM, _Q_STREAM = 1, 2


class _Whitener:
    """Precomputed pieces of a nonsingular Gaussian log-density."""

    def __init__(self, P: Gaussian):
        w, V = np.linalg.eigh(P.cov) if P.dim else (np.zeros(0), np.zeros((0, 0)))
        if w.size and (w[-1] <= 0 or w[0] < SINGULAR_RTOL * w[-1]):
            raise SingularCovariance("log-density needs a nonsingular covariance")
        self.mean = P.mean
        self.W = V / np.sqrt(w)
        self.const = -0.5 * (P.dim * math.log(2.0 * math.pi) + float(np.sum(np.log(w))))

    def __call__(self, x: NDArray) -> NDArray:
        z = (x - self.mean) @ self.W
        return self.const - 0.5 * np.einsum("ij,ij->i", z, z)


def log_density(P: Gaussian, x: ArrayLike) -> float | NDArray:
    """Log-density of ``P`` at one point (returns a float) or at each row of a 2-D array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != P.dim:
        raise DimensionMismatch(f"point has dimension {X.shape[1]}, law has {P.dim}")
    out = _Whitener(P)(X)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class TvEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int


def tv_monte_carlo(P: Gaussian, Q: Gaussian, n: int, seed: int) -> TvEstimate:
    """Estimate ``TV(P, Q)`` from ``n`` draws of each law.

    Draws are made in fixed-size chunks with per-chunk seeds, and only integer
    hit counts are merged, so the estimate does not depend on the thread count.
    """
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimension mismatch: {P.dim} vs {Q.dim}")
    n = int(n)
    sizes = chunk_sizes(n)
    logp, logq = _Whitener(P), _Whitener(Q)
    Lp, Lq = gaussian_factor(P), gaussian_factor(Q)

    def hits(k: int) -> tuple[int, int]:
        xp = draw(P, sizes[k], chunk_rng(seed, _P_STREAM, k), Lp)
        xq = draw(Q, sizes[k], chunk_rng(seed, _Q_STREAM, k), Lq)
        return (
            int(np.count_nonzero(logp(xp) > logq(xp))),
            int(np.count_nonzero(logp(xq) > logq(xq))),
        )

    counts = map_chunks(hits, len(sizes))
    p1 = sum(c[0] for c in counts) / n
    p2 = sum(c[1] for c in counts) / n
    se = math.sqrt(p1 * (1 - p1) / n + p2 * (1 - p2) / n)
    return TvEstimate(value=p1 - p2, std_error=se, n_samples=n, seed=int(seed))


@dataclass(frozen=True)
class VerifyReport:
    tv_estimate: TvEstimate
    delta: float
    passed: bool
    pinsker_bound: float

    def to_json(self) -> dict[str, Any]:
        return {
            "tv": self.tv_estimate.value,
            "std_error": self.tv_estimate.std_error,
            "n": self.tv_estimate.n_samples,
            "seed": self.tv_estimate.seed,
            "delta": self.delta,
            "pass": self.passed,
            "pinsker_bound": self.pinsker_bound,
        }


# pass band, in standard errors, around the estimated TV
PASS_SIGMAS = 3.0


def dp_verify(
    maps: StackedMaps,
    px0: Gaussian,
    pu: Gaussian,
    px0p: Gaussian,
    pup: Gaussian,
    noise: NoiseSpec,
    priv: PrivacySpec,
    n: int,
    seed: int,
) -> VerifyReport:
    """Empirically check ``TV(P_Y, P_Y') <= delta`` for one pair of input laws."""
    require_pure(priv)
    V = noise.materialize(maps.output_dim)
    Y = pushforward(maps, px0, pu, V)
    Yp = pushforward(maps, px0p, pup, V)
    est = tv_monte_carlo(Y, Yp, n, seed)
    return VerifyReport(
        tv_estimate=est,
        delta=priv.delta,
        passed=est.value <= priv.delta + PASS_SIGMAS * est.std_error,
        pinsker_bound=pinsker_tv_bound(Y, Yp),
    )
