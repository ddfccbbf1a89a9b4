"""
Discrete-time LTI systems and their stacked horizon maps.

For ``x(k+1) = A x(k) + B u(k)``, ``y(k) = C x(k) + D u(k)`` the outputs up to
horizon ``t`` satisfy ``Y = O x0 + N U`` with ``U = [u(0); ...; u(t)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

from wdp_lti.errors import DimensionMismatch
from wdp_lti.matgauss import Gaussian, eig_extremes, symmetrize
from wdp_lti.sampling import chunk_rng, chunk_sizes, draw, gaussian_factor, map_chunks


def _mat(x: ArrayLike, name: str) -> NDArray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {a.shape}")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LtiSystem:
    A: NDArray
    B: NDArray
    C: NDArray
    D: NDArray

    def __post_init__(self) -> None:
        A, B, C, D = (_mat(getattr(self, k), k) for k in "ABCD")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C must have {n} columns, got {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}")
        for k, v in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, k, v)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "LtiSystem":
        try:
            return cls(obj["A"], obj["B"], obj["C"], obj["D"])
        except (KeyError, TypeError) as exc:
            raise ValueError("a system needs 'A', 'B', 'C' and 'D' fields") from exc

    def to_json(self) -> dict[str, Any]:
        return {k: getattr(self, k).tolist() for k in "ABCD"}


@dataclass(frozen=True, eq=False)
class StackedMaps:
    horizon: int
    O: NDArray
    N: NDArray
    gram: NDArray

    @property
    def F(self) -> NDArray:
        """The joint map ``[O N]`` from ``(x0, U)`` to ``Y``."""
        return np.hstack([self.O, self.N])

    @property
    def state_dim(self) -> int:
        return self.O.shape[1]

    @property
    def input_dim(self) -> int:
        return self.N.shape[1]

    @property
    def output_dim(self) -> int:
        return self.O.shape[0]


def build_stacked(sys: LtiSystem, t: int) -> StackedMaps:
    """Stack the horizon-``t`` observability and block-Toeplitz input maps."""
    if int(t) != t or t < 0:
        raise ValueError(f"horizon must be a nonnegative integer, got {t}")
    t = int(t)
    n, m, q = sys.n, sys.m, sys.q
    O = np.zeros(((t + 1) * q, n))
    N = np.zeros(((t + 1) * q, (t + 1) * m))
    CAk = sys.C.copy()
    # markov[j] = C A^(j) B, the response j+1 steps after an input
    markov = []
    for k in range(t + 1):
        O[k * q:(k + 1) * q] = CAk
        markov.append(CAk @ sys.B)
        CAk = CAk @ sys.A
    for i in range(t + 1):
        N[i * q:(i + 1) * q, i * m:(i + 1) * m] = sys.D
        for j in range(i):
            N[i * q:(i + 1) * q, j * m:(j + 1) * m] = markov[i - j - 1]
    F = np.hstack([O, N])
    gram = F.T @ F
    gram = 0.5 * (gram + gram.T)
    for a in (O, N, gram):
        a.flags.writeable = False
    return StackedMaps(horizon=t, O=O, N=N, gram=gram)


def sensitivity(maps: StackedMaps) -> float:
    """``lambda_max([O N]^T [O N])``, i.e. the squared Lipschitz constant of ``(x0, U) -> Y``."""
    if maps.gram.size == 0:
        return 0.0
    return max(eig_extremes(maps.gram)[1], 0.0)


def lipschitz_bound(F: ArrayLike) -> float:
    """Spectral norm of ``F`` via the smaller of its two Gram matrices."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.size == 0:
        return 0.0
    G = F.T @ F if F.shape[1] <= F.shape[0] else F @ F.T
    return math.sqrt(max(eig_extremes(G)[1], 0.0))


def pushforward(maps: StackedMaps, px0: Gaussian, pu: Gaussian, noise_cov: ArrayLike) -> Gaussian:
    """Law of ``O x0 + N U + V`` for independent ``x0 ~ px0``, ``U ~ pu``, ``V ~ N(0, noise_cov)``."""
    if px0.dim != maps.state_dim:
        raise DimensionMismatch(f"x0 law has dimension {px0.dim}, system state is {maps.state_dim}")
    if pu.dim != maps.input_dim:
        raise DimensionMismatch(f"input law has dimension {pu.dim}, stacked input is {maps.input_dim}")
    V = np.asarray(noise_cov, dtype=float)
    if V.ndim == 0:
        V = V * np.eye(maps.output_dim)
    if V.shape != (maps.output_dim, maps.output_dim):
        raise DimensionMismatch(f"noise covariance must be {maps.output_dim}x{maps.output_dim}, got {V.shape}")
    O, N = maps.O, maps.N
    mean = O @ px0.mean + N @ pu.mean
    cov = O @ px0.cov @ O.T + N @ pu.cov @ N.T + symmetrize(V)
    return Gaussian(mean, 0.5 * (cov + cov.T))


def rollout(sys: LtiSystem, x0: NDArray, U: NDArray, horizon: int, V: NDArray | None = None) -> NDArray:
    """Step the state equation forward for a batch of runs.

    ``x0`` is ``(runs, n)``, ``U`` is ``(runs, (t+1) m)``, ``V`` (optional) is
    ``(runs, (t+1) q)``. Returns noisy stacked outputs ``(runs, (t+1) q)``.
    """
    x = np.atleast_2d(x0)
    runs = x.shape[0]
    m, q = sys.m, sys.q
    steps = horizon + 1
    Y = np.empty((runs, steps * q))
    for k in range(steps):
        u = U[:, k * m:(k + 1) * m]
        Y[:, k * q:(k + 1) * q] = x @ sys.C.T + u @ sys.D.T
        x = x @ sys.A.T + u @ sys.B.T
    if V is not None:
        Y += V
    return Y


# stream ids keep x0, input and noise draws independent under one root seed
_X0, _U, _V = 0, 1, 2


def simulate_outputs(
    sys: LtiSystem,
    horizon: int,
    px0: Gaussian,
    pu: Gaussian,
    noise_cov: ArrayLike,
    runs: int,
    seed: int,
    stream_base: int = 16,
) -> NDArray:
    """Sample ``runs`` noisy output sequences by explicit forward simulation."""
    q = sys.q
    dim_y = (horizon + 1) * q
    if px0.dim != sys.n or pu.dim != (horizon + 1) * sys.m:
        raise DimensionMismatch("initial-state or input law does not match the system and horizon")
    V = np.asarray(noise_cov, dtype=float)
    if V.ndim == 0:
        V = V * np.eye(dim_y)
    if V.shape != (dim_y, dim_y):
        raise DimensionMismatch(f"noise covariance must be {dim_y}x{dim_y}, got {V.shape}")
    pv = Gaussian(np.zeros(dim_y), V)
    sizes = chunk_sizes(runs)
    factors = [gaussian_factor(p) for p in (px0, pu, pv)]

    def one(k: int) -> NDArray:
        x0 = draw(px0, sizes[k], chunk_rng(seed, stream_base + _X0, k), factors[0])
        U = draw(pu, sizes[k], chunk_rng(seed, stream_base + _U, k), factors[1])
        noise = draw(pv, sizes[k], chunk_rng(seed, stream_base + _V, k), factors[2])
        return rollout(sys, x0, U, horizon, noise)

    return np.concatenate(map_chunks(one, len(sizes)), axis=0)
