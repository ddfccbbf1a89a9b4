"""
Multivariate Gaussians, SPD matrix helpers, and closed-form distances.

Everything here is pure: a :class:`Gaussian` is validated once on construction
and its arrays are frozen, so instances can be shared freely between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

from wdp_lti.errors import DimensionMismatch, NotPsd, NotSymmetric, SingularCovariance

# asymmetry above this (relative to max |entry|) is an input error, below it we symmetrize
SYM_RTOL = 1e-8
# eigenvalues in [-PSD_CLIP * lambda_max, 0) are treated as round-off and clipped
PSD_CLIP = 1e-10
# lambda_min below SINGULAR_RTOL * lambda_max counts as singular for KL-type quantities
SINGULAR_RTOL = 1e-12


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def symmetrize(M: ArrayLike) -> NDArray:
    """Return ``(M + M.T) / 2`` after checking ``M`` is square and nearly symmetric."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if M.size == 0:
        return M.reshape(0, 0)
    scale = float(np.max(np.abs(M)))
    if not np.all(np.isfinite(M)):
        raise NotSymmetric("matrix has non-finite entries")
    asym = float(np.max(np.abs(M - M.T)))
    if asym > SYM_RTOL * scale:
        raise NotSymmetric(f"matrix asymmetry {asym:.3g} exceeds tolerance (scale {scale:.3g})")
    return 0.5 * (M + M.T)


def psd_eigh(M: ArrayLike) -> tuple[NDArray, NDArray]:
    """Symmetric eigendecomposition with the round-off clip applied to the spectrum."""
    S = symmetrize(M)
    if S.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    w, V = np.linalg.eigh(S)
    top = max(float(w[-1]), 0.0)
    if w[0] < -PSD_CLIP * top:
        raise NotPsd(f"eigenvalue {w[0]:.6g} is negative beyond round-off (lambda_max {top:.6g})")
    return np.clip(w, 0.0, None), V


def spd_sqrt(M: ArrayLike) -> NDArray:
    """
    Principal square root of a symmetric positive semidefinite matrix.

    Uses the symmetric eigendecomposition; eigenvalues that are negative only by
    round-off are clipped to zero first.

    Raises
    ------
    NotSymmetric
        If ``M`` is visibly asymmetric.
    NotPsd
        If ``M`` has an eigenvalue below ``-1e-10 * lambda_max``.
    """
    w, V = psd_eigh(M)
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def eig_extremes(M: ArrayLike) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the symmetrized input."""
    S = symmetrize(M)
    if S.size == 0:
        raise DimensionMismatch("eigenvalues of an empty matrix are undefined")
    w = np.linalg.eigvalsh(S)
    return float(w[0]), float(w[-1])


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Gaussian law with mean vector and positive semidefinite covariance.

    A zero covariance is allowed and stands for a point mass at the mean.
    """

    mean: NDArray
    cov: NDArray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0 and mean.size == 1:
            cov = cov.reshape(1, 1)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"mean has dimension {mean.size} but covariance has shape {cov.shape}"
            )
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean has non-finite entries")
        if mean.size:
            cov = symmetrize(cov)
            w, V = psd_eigh(cov)
            if np.linalg.eigvalsh(cov)[0] < 0.0:
                cov = (V * w) @ V.T
                cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    @classmethod
    def dirac(cls, point: ArrayLike) -> "Gaussian":
        point = np.asarray(point, dtype=float).reshape(-1)
        return cls(point, np.zeros((point.size, point.size)))

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Gaussian":
        try:
            mean, cov = obj["mean"], obj["cov"]
        except (KeyError, TypeError) as exc:
            raise ValueError("a Gaussian needs 'mean' and 'cov' fields") from exc
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0 and mean.size == 1:
            cov = cov.reshape(1, 1)
        return cls(mean, cov)

    def to_json(self) -> dict[str, Any]:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    def __repr__(self) -> str:
        return f"Gaussian(dim={self.dim}, mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def _same_dim(P: Gaussian, Q: Gaussian) -> int:
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimension mismatch: {P.dim} vs {Q.dim}")
    return P.dim


def w2_distance(P: Gaussian, Q: Gaussian) -> float:
    r"""
    2-Wasserstein distance between two Gaussians.

    Evaluates :math:`|m_1-m_2|^2 + \mathrm{tr}(\Sigma_1+\Sigma_2-2(\Sigma_1^{1/2}\Sigma_2\Sigma_1^{1/2})^{1/2})`.
    The covariance term equals :math:`\min_R \|\Sigma_1^{1/2} - \Sigma_2^{1/2} R\|_F^2` over
    orthogonal :math:`R`, attained at the polar factor of :math:`\Sigma_2^{1/2}\Sigma_1^{1/2}`;
    computing it as that residual keeps it nonnegative and avoids the cancellation
    the trace form suffers when the covariances are close.

    Singular (including zero) covariances are fine.
    """
    _same_dim(P, Q)
    dm = P.mean - Q.mean
    mean_term = float(dm @ dm)
    if P.dim == 0 or np.array_equal(P.cov, Q.cov):
        # the polar factor is I up to round-off; skip it so equal covariances give exactly 0
        return math.sqrt(mean_term)
    s1 = spd_sqrt(P.cov)
    s2 = spd_sqrt(Q.cov)
    U, _, Vt = np.linalg.svd(s2.T @ s1)
    resid = s1 - s2 @ (U @ Vt)
    cov_term = max(float(np.sum(resid * resid)), 0.0)
    return math.sqrt(mean_term + cov_term)


def w2_trace_form(P: Gaussian, Q: Gaussian) -> float:
    """Direct evaluation of the trace form of W2, clipped at zero. Kept as a cross-check."""
    _same_dim(P, Q)
    dm = P.mean - Q.mean
    if P.dim == 0 or np.array_equal(P.cov, Q.cov):
        # the polar factor is I up to round-off; skip it so equal covariances give exactly 0
        return math.sqrt(mean_term)
    s1 = spd_sqrt(P.cov)
    inner = spd_sqrt(s1 @ Q.cov @ s1)
    tr = float(np.trace(P.cov) + np.trace(Q.cov) - 2.0 * np.trace(inner))
    return math.sqrt(float(dm @ dm) + max(tr, 0.0))


def _nonsingular_eigh(cov: NDArray) -> tuple[NDArray, NDArray]:
    w, V = np.linalg.eigh(cov)
    top = float(w[-1]) if w.size else 0.0
    if w.size and (top <= 0.0 or w[0] < SINGULAR_RTOL * top):
        raise SingularCovariance(
            f"covariance is singular (lambda_min {w[0]:.3g}, lambda_max {top:.3g})"
        )
    return w, V


def kl_divergence(P: Gaussian, Q: Gaussian) -> float:
    """KL(P || Q) for nonsingular Gaussians.

    Log-determinants come from each covariance's own spectrum so that no
    determinant is ever formed explicitly.
    """
    n = _same_dim(P, Q)
    if n == 0:
        return 0.0
    w1, _ = _nonsingular_eigh(P.cov)
    w2, V2 = _nonsingular_eigh(Q.cov)
    d = V2.T @ (Q.mean - P.mean)
    maha = float(np.sum(d * d / w2))
    trace = float(np.sum(np.diag(V2.T @ P.cov @ V2) / w2))
    logdet = float(np.sum(np.log(w2)) - np.sum(np.log(w1)))
    return 0.5 * (maha + trace - n + logdet)


def symmetrized_kl(P: Gaussian, Q: Gaussian) -> float:
    return kl_divergence(P, Q) + kl_divergence(Q, P)


@dataclass(frozen=True)
class TvBoundReport:
    sym_kl: float
    w2: float
    lemma1_rhs: float
    pinsker_tv_bound: float


def lemma1_bound(P: Gaussian, Q: Gaussian) -> TvBoundReport:
    """Symmetrized KL, W2, the W2-based upper bound on symmetrized KL, and the TV bound.

    The bound is ``2 / min(lambda_min(Sigma_1), lambda_min(Sigma_2)) * W2**2``; the
    TV bound is ``0.5 * sqrt(sym_kl)``.
    """
    _same_dim(P, Q)
    if P.dim == 0:
        return TvBoundReport(0.0, 0.0, 0.0, 0.0)
    _nonsingular_eigh(P.cov)
    _nonsingular_eigh(Q.cov)
    skl = symmetrized_kl(P, Q)
    w2 = w2_distance(P, Q)
    lam = min(eig_extremes(P.cov)[0], eig_extremes(Q.cov)[0])
    rhs = 2.0 / lam * w2 * w2
    return TvBoundReport(
        sym_kl=skl,
        w2=w2,
        lemma1_rhs=rhs,
        pinsker_tv_bound=0.5 * math.sqrt(max(skl, 0.0)),
    )


def pinsker_tv_bound(P: Gaussian, Q: Gaussian) -> float:
    """``0.5 * sqrt(KL(P||Q) + KL(Q||P))``."""
    return 0.5 * math.sqrt(max(symmetrized_kl(P, Q), 0.0))


def pinsker_one_sided(P: Gaussian, Q: Gaussian) -> float:
    """Textbook Pinsker bound ``sqrt(KL(P||Q) / 2)``, for comparison."""
    return math.sqrt(max(kl_divergence(P, Q), 0.0) / 2.0)


def block_diag(*blocks: ArrayLike) -> NDArray:
    mats = [np.atleast_2d(np.asarray(b, dtype=float)) if np.size(b) else np.zeros((0, 0)) for b in blocks]
    size = sum(m.shape[0] for m in mats)
    out = np.zeros((size, size))
    i = 0
    for m in mats:
        k = m.shape[0]
        out[i:i + k, i:i + k] = m
        i += k
    return out


def product(P: Gaussian, Q: Gaussian) -> Gaussian:
    """Law of ``(X, Y)`` for independent ``X ~ P`` and ``Y ~ Q``."""
    return Gaussian(np.concatenate([P.mean, Q.mean]), block_diag(P.cov, Q.cov))
