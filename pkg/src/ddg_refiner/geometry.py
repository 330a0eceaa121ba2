# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Rigid-motion algebra and the Gaussian position-distribution calculus.

A probability density cloud (PDC) models a residue position as
``N(mean, cov)``. This module holds the closed-form squared-distance
moments used as edge features, the Monte Carlo estimators that serve as
oracles for them, and the rigid-motion action on PDCs.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import TypeAlias

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation as ScipyRotation

from .exceptions import InvalidPDCError, InvalidRotationError
from .models import MomentFormula

logger = logging.getLogger(__name__)

Vec3: TypeAlias = NDArray[np.float64]

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-12
MIN_BOND_NORM = 1e-9
MIN_MC_SAMPLES = 10_000
DEFAULT_SHARD_SIZE = 1_000_000


@dataclass(frozen=True)
class Rotation:
    """Proper rotation matrix ``Q`` (QᵀQ = I, det Q = +1)."""

    matrix: NDArray[np.float64]

    def __post_init__(self) -> None:
        q = np.asarray(self.matrix, dtype=np.float64)
        if q.shape != (3, 3) or not np.all(np.isfinite(q)):
            msg = f"Rotation must be a finite 3x3 matrix, got shape {q.shape}"
            raise InvalidRotationError(msg)
        if np.max(np.abs(q.T @ q - np.eye(3))) > ORTHOGONALITY_TOL:
            msg = "Rotation matrix is not orthogonal"
            raise InvalidRotationError(msg)
        if abs(np.linalg.det(q) - 1.0) > ORTHOGONALITY_TOL:
            msg = "Rotation matrix does not have determinant +1"
            raise InvalidRotationError(msg)
        object.__setattr__(self, "matrix", q)

    @classmethod
    def identity(cls) -> Rotation:
        return cls(np.eye(3))

    def apply(self, points: ArrayLike, shift: ArrayLike | None = None) -> NDArray[np.float64]:
        """Map points ``x`` (last axis of size 3) to ``Q x + g``."""
        out = np.asarray(points, dtype=np.float64) @ self.matrix.T
        if shift is not None:
            out = out + np.asarray(shift, dtype=np.float64)
        return out


@dataclass(frozen=True)
class GaussianPDC:
    """Positional distribution ``N(mean, cov)`` of one particle."""

    mean: Vec3
    cov: NDArray[np.float64]

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        cov = np.asarray(self.cov, dtype=np.float64)
        if cov.shape != (3, 3):
            msg = f"Covariance must be 3x3, got {cov.shape}"
            raise InvalidPDCError(msg)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            msg = "PDC mean and covariance must be finite"
            raise InvalidPDCError(msg)
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL:
            msg = "PDC covariance is not symmetric"
            raise InvalidPDCError(msg)
        eigvals, eigvecs = np.linalg.eigh(cov)
        if eigvals[0] < -PSD_TOL:
            msg = f"PDC covariance is not PSD (min eigenvalue {eigvals[0]:.3e})"
            raise InvalidPDCError(msg)
        if eigvals[0] < 0.0:
            # Round-off only: clamp to the nearest PSD matrix.
            cov = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
            cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def isotropic(cls, mean: ArrayLike, variance: float) -> GaussianPDC:
        """PDC with covariance ``variance · I``."""
        return cls(np.asarray(mean, dtype=np.float64), variance * np.eye(3))

    @classmethod
    def point(cls, mean: ArrayLike) -> GaussianPDC:
        """Deterministic PDC (zero covariance)."""
        return cls(np.asarray(mean, dtype=np.float64), np.zeros((3, 3)))

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all(self.cov == 0.0))

    def factor(self) -> NDArray[np.float64]:
        """Matrix ``L`` with ``L Lᵀ = cov`` (via eigendecomposition)."""
        eigvals, eigvecs = np.linalg.eigh(self.cov)
        if eigvals[0] < -PSD_TOL:
            msg = "Cannot factor a non-PSD covariance"
            raise InvalidPDCError(msg)
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


@dataclass(frozen=True)
class DistanceMoments:
    """Mean (Å²) and variance (Å⁴) of a squared inter-particle distance.

    Monte Carlo estimates also carry standard errors.
    """

    mean: float
    variance: float
    mean_se: float | None = None
    variance_se: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            msg = "Distance moments must be finite"
            raise InvalidPDCError(msg)


@dataclass(frozen=True)
class AngleMoments:
    """Mean (radians, in [0, π]) and variance of a bond angle."""

    mean: float
    variance: float
    mean_se: float | None = None


def pdc_difference(a: GaussianPDC, b: GaussianPDC) -> GaussianPDC:
    """Distribution of ``x_a − x_b`` for independent ``x_a``, ``x_b``."""
    return GaussianPDC(a.mean - b.mean, a.cov + b.cov)


def squared_distance_moments(
    a: GaussianPDC,
    b: GaussianPDC,
    formula: MomentFormula = MomentFormula.STANDARD,
) -> DistanceMoments:
    """Closed-form mean and variance of ``‖x_a − x_b‖²``.

    With ``S = Σ_a + Σ_b`` and ``m = μ_a − μ_b`` the mean is
    ``tr(S) + ‖m‖²``. The variance is ``2·tr(S²) + 4·mᵀSm`` for
    ``STANDARD`` and ``2·tr(S) + 4·mᵀSm`` for ``LINEAR_TRACE``.
    """
    diff = pdc_difference(a, b)
    s, m = diff.cov, diff.mean
    mean = float(np.trace(s) + m @ m)
    quad = float(4.0 * (m @ s @ m))
    if formula is MomentFormula.STANDARD:
        variance = float(2.0 * np.trace(s @ s)) + quad
    else:
        variance = float(2.0 * np.trace(s)) + quad
    return DistanceMoments(mean=mean, variance=max(variance, 0.0))


class _PowerSums:
    """Shifted power sums, reduced shard by shard in a fixed order."""

    def __init__(self, center: float):
        self.center = center
        self.count = 0
        self.sums = np.zeros(4)

    def add(self, values: NDArray[np.float64]) -> None:
        u = values - self.center
        u2 = u * u
        self.count += u.size
        self.sums += np.array(
            [u.sum(), u2.sum(), (u2 * u).sum(), (u2 * u2).sum()]
        )

    def moments(self) -> tuple[float, float, float, float]:
        """Return (mean, unbiased variance, SE of mean, SE of variance)."""
        n = self.count
        s1, s2, s3, s4 = self.sums / n
        mu = s1
        var_pop = max(s2 - mu * mu, 0.0)
        m4 = s4 - 4.0 * mu * s3 + 6.0 * mu * mu * s2 - 3.0 * mu**4
        variance = var_pop * n / (n - 1)
        mean_se = math.sqrt(variance / n)
        variance_se = math.sqrt(max(m4 - var_pop * var_pop, 0.0) / n)
        return self.center + mu, variance, mean_se, variance_se


def _shard_sizes(n_samples: int, shard_size: int) -> list[int]:
    full, rest = divmod(n_samples, shard_size)
    return [shard_size] * full + ([rest] if rest else [])


def mc_squared_distance_moments(
    a: GaussianPDC,
    b: GaussianPDC,
    n_samples: int,
    seed: int,
    shard_size: int = DEFAULT_SHARD_SIZE,
) -> DistanceMoments:
    """Monte Carlo mean and unbiased variance of ``‖x_a − x_b‖²``.

    Samples are drawn in shards from children of ``SeedSequence(seed)``,
    so the result is bit-identical for a fixed seed.
    """
    if n_samples < MIN_MC_SAMPLES:
        msg = f"n_samples must be at least {MIN_MC_SAMPLES}, got {n_samples}"
        raise ValueError(msg)
    la, lb = a.factor(), b.factor()
    # The closed-form mean only shifts the accumulator for numerical range.
    sums = _PowerSums(squared_distance_moments(a, b).mean)
    sizes = _shard_sizes(n_samples, shard_size)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    for size, child in zip(sizes, children, strict=True):
        rng = np.random.default_rng(child)
        xa = a.mean + rng.standard_normal((size, 3)) @ la.T
        xb = b.mean + rng.standard_normal((size, 3)) @ lb.T
        d = xa - xb
        sums.add(np.einsum("ij,ij->i", d, d))
    mean, variance, mean_se, variance_se = sums.moments()
    logger.debug(
        f"MC squared distance: n={n_samples} mean={mean:.6g}±{mean_se:.2g} "
        f"var={variance:.6g}±{variance_se:.2g}"
    )
    return DistanceMoments(mean, variance, mean_se, variance_se)


def _angle_undefined(p: GaussianPDC, q: GaussianPDC) -> bool:
    return (
        p.is_deterministic
        and q.is_deterministic
        and float(np.linalg.norm(p.mean - q.mean)) < MIN_BOND_NORM
    )


def mc_angle_moments(
    a: GaussianPDC,
    b: GaussianPDC,
    c: GaussianPDC,
    n_samples: int,
    seed: int,
    shard_size: int = DEFAULT_SHARD_SIZE,
    max_redraws: int = 100,
) -> AngleMoments:
    """Monte Carlo mean and variance of the angle at ``b`` in (a, b, c).

    The angle is the vertex angle between ``x_a − x_b`` and ``x_c − x_b``,
    so a straight chain gives π. Samples with a bond shorter than
    ``MIN_BOND_NORM`` are rejected and redrawn.
    """
    if n_samples < MIN_MC_SAMPLES:
        msg = f"n_samples must be at least {MIN_MC_SAMPLES}, got {n_samples}"
        raise ValueError(msg)
    if _angle_undefined(a, b) or _angle_undefined(b, c):
        msg = "Angle is undefined: two deterministic particles coincide"
        raise InvalidPDCError(msg)
    factors = [p.factor() for p in (a, b, c)]
    means = [p.mean for p in (a, b, c)]
    sums = _PowerSums(math.pi / 2.0)
    sizes = _shard_sizes(n_samples, shard_size)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    for size, child in zip(sizes, children, strict=True):
        rng = np.random.default_rng(child)
        kept: list[NDArray[np.float64]] = []
        have = 0
        for _ in range(max_redraws):
            xa, xb, xc = (
                mu + rng.standard_normal((size - have, 3)) @ lf.T
                for mu, lf in zip(means, factors, strict=True)
            )
            u, v = xa - xb, xc - xb
            nu = np.linalg.norm(u, axis=1)
            nv = np.linalg.norm(v, axis=1)
            ok = (nu >= MIN_BOND_NORM) & (nv >= MIN_BOND_NORM)
            cos = np.einsum("ij,ij->i", u[ok], v[ok]) / (nu[ok] * nv[ok])
            kept.append(np.arccos(np.clip(cos, -1.0, 1.0)))
            have += int(ok.sum())
            if have == size:
                break
        else:
            msg = "Angle is undefined: bond vectors keep collapsing to zero"
            raise InvalidPDCError(msg)
        sums.add(np.concatenate(kept))
    mean, variance, mean_se, _ = sums.moments()
    return AngleMoments(mean=mean, variance=variance, mean_se=mean_se)


def transform_pdc(p: GaussianPDC, q: Rotation, g: ArrayLike) -> GaussianPDC:
    """Action of ``x ↦ Q x + g`` on a PDC: ``(Q μ + g, Q Σ Qᵀ)``."""
    cov = q.matrix @ p.cov @ q.matrix.T
    return GaussianPDC(
        q.matrix @ p.mean + np.asarray(g, dtype=np.float64),
        0.5 * (cov + cov.T),
    )


def random_rotation(seed: int) -> Rotation:
    """Haar-uniform rotation, deterministic per seed."""
    return Rotation(ScipyRotation.random(random_state=seed).as_matrix())


def random_rotations(n: int, seed: int) -> NDArray[np.float64]:
    """``n`` Haar-uniform rotation matrices stacked as (n, 3, 3)."""
    return ScipyRotation.random(n, random_state=seed).as_matrix()


def random_rigid_motion(seed: int, scale: float = 10.0) -> tuple[Rotation, Vec3]:
    """Random rotation plus a Gaussian translation of the given scale."""
    rng = np.random.default_rng(seed)
    return random_rotation(seed), scale * rng.standard_normal(3)


def transform_covariances(
    covs: NDArray[np.float64], q: Rotation
) -> NDArray[np.float64]:
    """Conjugate a stack of (…, 3, 3) covariances by ``Q``."""
    return np.einsum("ij,...jk,lk->...il", q.matrix, covs, q.matrix)
