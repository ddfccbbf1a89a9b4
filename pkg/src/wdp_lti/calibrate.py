"""
Noise calibration for (0, delta) privacy of input distributions.

Adjacency is measured by the 2-Wasserstein distance between the joint laws of
``(x0, U)``. Three rules are provided:

* :func:`theorem1_check` certifies one specific pair of input laws,
* :func:`corollary1_noise` gives isotropic noise that works for every c-adjacent pair,
* :func:`theorem2_noise` is the cheaper rule when the law of ``x0`` is public.

All rules return the smallest noise meeting their sufficient condition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Literal, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from wdp_lti.errors import DimensionMismatch, PublicStateMismatch, UnsupportedEpsilon, ZeroNoise
from wdp_lti.lti import StackedMaps, pushforward, sensitivity
from wdp_lti.matgauss import Gaussian, eig_extremes, product, psd_eigh, symmetrize, w2_distance

# slack for eigenvalue round-off when comparing lambda_min against the threshold
EIG_RTOL = 1e-12


@dataclass(frozen=True)
class AdjacencySpec:
    c: float
    p: int = 2

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"c must be positive, got {self.c}")
        if self.p != 2:
            raise ValueError(f"only p = 2 is supported, got p = {self.p}")


@dataclass(frozen=True)
class PrivacySpec:
    delta: float
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


def require_pure(priv: PrivacySpec) -> None:
    if priv.epsilon != 0:
        raise UnsupportedEpsilon(
            f"only epsilon = 0 is supported by the calibration rules, got epsilon = {priv.epsilon}"
        )


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Output noise covariance, either ``sigma2 * I`` or a full matrix."""

    kind: Literal["isotropic", "full"]
    sigma2: float = 0.0
    cov: NDArray | None = None

    @classmethod
    def isotropic(cls, sigma2: float) -> "NoiseSpec":
        sigma2 = float(sigma2)
        if not (math.isfinite(sigma2) and sigma2 >= 0):
            raise ValueError(f"sigma2 must be a nonnegative variance, got {sigma2}")
        return cls("isotropic", sigma2=sigma2)

    @classmethod
    def full(cls, cov: ArrayLike) -> "NoiseSpec":
        w, _ = psd_eigh(cov)
        M = symmetrize(cov)
        M.flags.writeable = False
        return cls("full", sigma2=float(w[0]) if w.size else 0.0, cov=M)

    @property
    def sigma(self) -> float:
        if self.kind != "isotropic":
            raise ValueError("sigma is only defined for isotropic noise")
        return math.sqrt(self.sigma2)

    def materialize(self, dim: int) -> NDArray:
        if self.kind == "isotropic":
            return self.sigma2 * np.eye(dim)
        assert self.cov is not None
        if self.cov.shape != (dim, dim):
            raise DimensionMismatch(f"noise covariance is {self.cov.shape}, expected {dim}x{dim}")
        return np.array(self.cov)

    def lambda_min(self, dim: int) -> float:
        if self.kind == "isotropic":
            return self.sigma2
        return max(eig_extremes(self.materialize(dim))[0], 0.0)

    def scaled(self, factor: float) -> "NoiseSpec":
        """Noise with standard deviation multiplied by ``factor``."""
        if self.kind == "isotropic":
            return NoiseSpec.isotropic(self.sigma2 * factor ** 2)
        return NoiseSpec.full(np.asarray(self.cov) * factor ** 2)


class Adjacency(NamedTuple):
    adjacent: bool
    w2: float


class Theorem1Result(NamedTuple):
    satisfied: bool
    lhs: float
    rhs: float


def check_adjacent(pair: tuple[Gaussian, Gaussian], spec: AdjacencySpec) -> Adjacency:
    """Whether two joint input laws are within W2 distance ``c``."""
    P, Q = pair
    w2 = w2_distance(P, Q)
    return Adjacency(w2 <= spec.c, w2)


def check_adjacent_inputs(
    px0: Gaussian, pu: Gaussian, px0p: Gaussian, pup: Gaussian, spec: AdjacencySpec
) -> Adjacency:
    return check_adjacent((product(px0, pu), product(px0p, pup)), spec)


def _threshold(c: float, lam: float, delta: float) -> float:
    return c * c * lam / (2.0 * delta * delta)


def theorem1_check(
    maps: StackedMaps,
    px0: Gaussian,
    pu: Gaussian,
    px0p: Gaussian,
    pup: Gaussian,
    noise: NoiseSpec,
    spec: AdjacencySpec,
    priv: PrivacySpec,
) -> Theorem1Result:
    """Pair-specific sufficient condition.

    ``lhs = min(lambda_min(Sigma_Y), lambda_min(Sigma_Y'))`` over the two noisy output
    covariances and ``rhs = c**2 * lambda_max([O N]^T [O N]) / (2 delta**2)``.
    """
    require_pure(priv)
    V = noise.materialize(maps.output_dim)
    Y = pushforward(maps, px0, pu, V)
    Yp = pushforward(maps, px0p, pup, V)
    lo1, hi1 = eig_extremes(Y.cov)
    lo2, hi2 = eig_extremes(Yp.cov)
    lhs = min(lo1, lo2)
    rhs = _threshold(spec.c, sensitivity(maps), priv.delta)
    ok = lhs >= rhs - EIG_RTOL * max(hi1, hi2, rhs)
    return Theorem1Result(bool(ok), lhs, rhs)


def corollary1_noise(maps: StackedMaps, spec: AdjacencySpec, priv: PrivacySpec) -> NoiseSpec:
    """Smallest isotropic noise that certifies every c-adjacent pair."""
    require_pure(priv)
    return NoiseSpec.isotropic(_threshold(spec.c, sensitivity(maps), priv.delta))


def input_sensitivity(maps: StackedMaps) -> float:
    """``lambda_max(N^T N)``."""
    if maps.N.size == 0:
        return 0.0
    return max(eig_extremes(maps.N.T @ maps.N)[1], 0.0)


def public_state_floor(maps: StackedMaps, sigma_x0: ArrayLike) -> float:
    """``lambda_min(O Sigma_x0 O^T)``: variance the public initial state already contributes."""
    S = symmetrize(sigma_x0)
    if S.shape != (maps.state_dim, maps.state_dim):
        raise DimensionMismatch(f"x0 covariance is {S.shape}, state dimension is {maps.state_dim}")
    psd_eigh(S)
    return max(eig_extremes(maps.O @ S @ maps.O.T)[0], 0.0)


def theorem2_noise(
    maps: StackedMaps, sigma_x0: ArrayLike, spec: AdjacencySpec, priv: PrivacySpec
) -> NoiseSpec:
    """Smallest isotropic noise when the initial-state law is public.

    ``sigma2 = max(0, c**2 lambda_max(N^T N) / (2 delta**2) - lambda_min(O Sigma_x0 O^T))``.
    """
    require_pure(priv)
    need = _threshold(spec.c, input_sensitivity(maps), priv.delta)
    return NoiseSpec.isotropic(max(0.0, need - public_state_floor(maps, sigma_x0)))


def require_public_x0(px0: Gaussian, px0p: Gaussian) -> None:
    """The public-state rule only covers pairs that share the initial-state law."""
    if not (np.array_equal(px0.mean, px0p.mean) and np.array_equal(px0.cov, px0p.cov)):
        raise PublicStateMismatch("the public-initial-state rule needs both pairs to share the x0 law")


def achievable_delta(
    maps: StackedMaps,
    noise: NoiseSpec,
    spec: AdjacencySpec,
    public_x0: ArrayLike | None = None,
) -> float:
    """Smallest delta certified for the given noise; the inverse of the two design rules.

    Without ``public_x0``: ``c * sqrt(lambda_max([O N]^T [O N]) / (2 lambda_min(Sigma_V)))``.
    With it: ``c * sqrt(lambda_max(N^T N) / (2 (lambda_min(O Sigma_x0 O^T) + lambda_min(Sigma_V))))``.
    """
    v = noise.lambda_min(maps.output_dim)
    if public_x0 is None:
        lam, floor = sensitivity(maps), v
    else:
        lam, floor = input_sensitivity(maps), public_state_floor(maps, public_x0) + v
    if floor <= 0.0:
        raise ZeroNoise("no noise in some output direction; no delta < 1 can be certified")
    return spec.c * math.sqrt(lam / (2.0 * floor))


Rule = Literal["corollary1", "theorem2"]


def calibration_report(
    maps: StackedMaps,
    spec: AdjacencySpec,
    priv: PrivacySpec,
    rule: Rule,
    sigma_x0: ArrayLike | None = None,
) -> dict[str, Any]:
    """JSON-ready summary of one design rule."""
    if rule == "corollary1":
        noise = corollary1_noise(maps, spec, priv)
        lam, floor = sensitivity(maps), None
    elif rule == "theorem2":
        if sigma_x0 is None:
            raise ValueError("the theorem2 rule needs the public x0 covariance")
        noise = theorem2_noise(maps, sigma_x0, spec, priv)
        lam, floor = input_sensitivity(maps), public_state_floor(maps, sigma_x0)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return {
        "rule": rule,
        "c": spec.c,
        "delta": priv.delta,
        "lambda_max": lam,
        "lambda_min_public_term": floor,
        "sigma2": noise.sigma2,
        "sigma": noise.sigma,
    }
