# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Property suites behind ``ddg-refiner check``.

- equivariance: rigid motions of random complexes through a PDC stack,
  plus covariance PSD stability over deep stacks.
- moments: closed-form squared-distance moments against Monte Carlo.
- gradients: finite-difference checks of every trainable parameter group.

Every suite uses fixed seeds and returns a ``SuiteReport``.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
import logging
import math
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .autograd import Tensor, detach, gradient_check, no_grad
from .config import ModelConfig, TrainConfig
from .exceptions import CheckFailedError
from .geometry import (
    GaussianPDC,
    Rotation,
    mc_squared_distance_moments,
    random_rigid_motion,
    squared_distance_moments,
    transform_covariances,
)
from .mmm import refine_loss
from .models import (
    AMINO_ACIDS,
    CheckSuite,
    Complex,
    MomentFormula,
    VarianceInitKind,
    VarianceRule,
)
from .pdc_net import EncoderParams, PdcLayerParams, VarianceInit, encode
from .pipeline import ModelParams, build_mutant_start, ddg_head, refine
from .structure import FIXED_FEATURES, N_TYPES
from .synthetic import helix_pair, random_mutation

logger = logging.getLogger(__name__)

EQUIVARIANCE_TOL = 1e-9
PSD_TOL = 1e-10
GRADIENT_TOL = 1e-4
# Below this gradient magnitude finite differences are compared absolutely.
GRADIENT_FLOOR = 1e-5
MOMENT_SE_LIMIT = 4.0

N_COMPLEXES = 10
N_MOTIONS = 100
N_EQUIVARIANCE_LAYERS = 4
N_PSD_LAYERS = 10
N_MOMENT_PAIRS = 20
N_MC_SAMPLES = 10**7
N_GRADIENT_INSTANCES = 5
CHECK_WIDTH = 32


@dataclass
class CheckResult:
    """Outcome of one property: worst deviation against its threshold."""

    name: str
    passed: bool
    max_deviation: float
    threshold: float
    details: dict[str, Any] = field(default_factory=dict)


@dataclass
class SuiteReport:
    """Results of one suite."""

    suite: CheckSuite
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def _result(name: str, deviation: float, threshold: float, **details: Any) -> CheckResult:
    passed = math.isfinite(deviation) and deviation < threshold
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, f"{name}: max deviation {deviation:.3e} (limit {threshold:.0e})")
    return CheckResult(name, passed, deviation, threshold, details)


def _random_complexes(n: int, seed: int) -> list[Complex]:
    rng = np.random.default_rng(seed)
    return [helix_pair(rng) for _ in range(n)]


def _moved(c: Complex, seed: int) -> tuple[Complex, Rotation, NDArray[np.float64]]:
    q, g = random_rigid_motion(seed)
    return c.with_coords(q.apply(c.coords, g)), q, np.asarray(g, dtype=np.float64)


# --------------------------------------------------------------------------
# Equivariance and PSD stability
# --------------------------------------------------------------------------


def _learned_variance(rng: np.random.Generator) -> VarianceInit:
    embedding = Tensor(rng.standard_normal((len(AMINO_ACIDS), 3)))
    return VarianceInit(VarianceInitKind.LEARNABLE, embedding=embedding)


def check_equivariance(
    n_complexes: int = N_COMPLEXES,
    n_motions: int = N_MOTIONS,
    n_layers: int = N_EQUIVARIANCE_LAYERS,
    variance_rule: VarianceRule = VarianceRule.ADDITIVE,
    seed: int = 0,
) -> list[CheckResult]:
    """Max deviation of h invariance, μ equivariance and Σ conjugation."""
    rng = np.random.default_rng(seed)
    params = EncoderParams.init(CHECK_WIDTH, n_layers, rng)
    variance = _learned_variance(rng)
    worst = {"h": 0.0, "mu": 0.0, "cov": 0.0}
    with no_grad():
        for ci, c in enumerate(_random_complexes(n_complexes, seed + 1)):
            base = encode(c, (), params, variance, variance_rule=variance_rule).states
            for m in range(n_motions):
                moved, q, g = _moved(c, seed + 1000 * ci + m)
                out = encode(moved, (), params, variance, variance_rule=variance_rule).states
                expected_mu = q.apply(base.mu.values, g)
                expected_cov = transform_covariances(base.covariances(), q)
                worst["h"] = max(worst["h"], float(np.max(np.abs(out.h.values - base.h.values))))
                worst["mu"] = max(worst["mu"], float(np.max(np.abs(out.mu.values - expected_mu))))
                worst["cov"] = max(
                    worst["cov"], float(np.max(np.abs(out.covariances() - expected_cov)))
                )
    rule = variance_rule.value
    return [
        _result(f"h invariance ({rule})", worst["h"], EQUIVARIANCE_TOL),
        _result(f"mu equivariance ({rule})", worst["mu"], EQUIVARIANCE_TOL),
        _result(f"cov conjugation ({rule})", worst["cov"], EQUIVARIANCE_TOL),
    ]


def _stress_layers(n_layers: int, rng: np.random.Generator) -> list[PdcLayerParams]:
    """Layers with O(1) variance weights and signed mean weights of a few tenths."""
    layers = [PdcLayerParams.init(CHECK_WIDTH, rng) for _ in range(n_layers)]
    for layer in layers:
        for head, scale in ((layer.phi_sigma, 1.0), (layer.phi_mu, 0.3)):
            w, b = head.weights[-1]
            w.values[...] = scale * rng.standard_normal(w.shape) / np.sqrt(w.shape[0])
            b.values[...] = 0.0
    return layers


def min_covariance_eigenvalue(
    c: Complex,
    layers: Sequence[PdcLayerParams],
    variance_rule: VarianceRule,
    variance: VarianceInit,
    type_embedding: Tensor,
) -> float:
    """Smallest covariance eigenvalue seen after every layer of the stack."""
    params = EncoderParams(type_embedding, list(layers))
    lowest = math.inf
    with no_grad():
        for depth in range(1, len(layers) + 1):
            states = encode(
                c, (), params, variance, n_layers=depth, variance_rule=variance_rule
            ).states
            lowest = min(lowest, float(np.linalg.eigvalsh(states.covariances()).min()))
    return lowest


def check_psd_stability(
    n_complexes: int = N_COMPLEXES, n_layers: int = N_PSD_LAYERS, seed: int = 0
) -> list[CheckResult]:
    """Deep stacks keep every Σ PSD under both variance rules."""
    rng = np.random.default_rng(seed)
    layers = _stress_layers(n_layers, rng)
    embedding = Tensor(0.1 * rng.standard_normal((N_TYPES + 1, CHECK_WIDTH - FIXED_FEATURES)))
    variance = _learned_variance(rng)
    results = []
    for rule in VarianceRule:
        lowest = min(
            min_covariance_eigenvalue(c, layers, rule, variance, embedding)
            for c in _random_complexes(n_complexes, seed + 7)
        )
        # Deviation is how far the spectrum dips below zero.
        results.append(
            _result(
                f"PSD after {n_layers} layers ({rule.value})",
                max(0.0, -lowest),
                PSD_TOL,
                min_eigenvalue=lowest,
            )
        )
    return results


# --------------------------------------------------------------------------
# Distance moments
# --------------------------------------------------------------------------


def random_pdc(rng: np.random.Generator) -> GaussianPDC:
    """Anisotropic PDC with mean in a 6 Å box and eigenvalues below ~2 Å²."""
    a = rng.standard_normal((3, 3)) * rng.uniform(0.2, 0.8)
    return GaussianPDC(rng.uniform(-3.0, 3.0, size=3), a @ a.T)


def check_moments(
    n_pairs: int = N_MOMENT_PAIRS, n_samples: int = N_MC_SAMPLES, seed: int = 0
) -> list[CheckResult]:
    """Closed-form moments against Monte Carlo, in standard errors.

    The standard formula must match within ``MOMENT_SE_LIMIT`` standard
    errors on every pair; the linear-trace formula is measured and
    reported but not required to match.
    """
    rng = np.random.default_rng(seed)
    z_mean = z_std = z_lin = 0.0
    measured: list[dict[str, float]] = []
    linear_matches = 0
    for k in range(n_pairs):
        a, b = random_pdc(rng), random_pdc(rng)
        mc = mc_squared_distance_moments(a, b, n_samples, seed + k)
        std = squared_distance_moments(a, b, MomentFormula.STANDARD)
        lin = squared_distance_moments(a, b, MomentFormula.LINEAR_TRACE)
        mean_se = mc.mean_se or math.inf
        var_se = mc.variance_se or math.inf
        zm = abs(mc.mean - std.mean) / mean_se
        zs = abs(mc.variance - std.variance) / var_se
        zl = abs(mc.variance - lin.variance) / var_se
        z_mean, z_std, z_lin = max(z_mean, zm), max(z_std, zs), max(z_lin, zl)
        linear_matches += int(zl < MOMENT_SE_LIMIT)
        measured.append(
            {
                "mc_mean": mc.mean,
                "mc_variance": mc.variance,
                "standard_variance": std.variance,
                "linear_trace_variance": lin.variance,
                "variance_se": var_se,
            }
        )
    return [
        _result("mean vs Monte Carlo (SE)", z_mean, MOMENT_SE_LIMIT),
        _result(
            "standard variance vs Monte Carlo (SE)",
            z_std,
            MOMENT_SE_LIMIT,
            pairs=measured,
        ),
        CheckResult(
            "linear-trace variance vs Monte Carlo (SE, informational)",
            passed=True,
            max_deviation=z_lin,
            threshold=MOMENT_SE_LIMIT,
            details={"pairs_matching": linear_matches, "n_pairs": n_pairs},
        ),
    ]


# --------------------------------------------------------------------------
# Gradients
# --------------------------------------------------------------------------


def _gradient_instance(
    seed: int,
) -> tuple[ModelParams, Callable[[], Tensor]]:
    """A small model and a differentiable joint loss with a fixed mutant branch."""
    config = ModelConfig(
        node_width=CHECK_WIDTH,
        pooled_width=CHECK_WIDTH // 2,
        encoder_layers=1,
        refiner_layers=1,
        knn_k=4,
    )
    cfg = TrainConfig(k_recycles=1, l=2, r=2)
    params = ModelParams.init(config, seed)
    rng = np.random.default_rng(seed)
    c = helix_pair(rng, len_ligand=8, len_receptor=8)
    muts = (random_mutation(c, rng),)
    region, start, mt_types = build_mutant_start(c, muts, cfg, seed)
    with no_grad():
        mt = detach(refine(c, start, region, mt_types, params, 1))
    target = float(rng.normal())

    def loss() -> Tensor:
        refined = refine(c, start, region, c.aa_indices, params, 1)
        err = ddg_head(c, mt, mt_types, params) - target
        return err * err + refine_loss(refined, c.coords, region)

    return params, loss


def check_gradients(
    n_instances: int = N_GRADIENT_INSTANCES,
    max_entries: int = 4,
    seed: int = 0,
) -> list[CheckResult]:
    """Finite differences against backward for each parameter group."""
    groups: dict[str, Callable[[ModelParams], list[Tensor]]] = {
        "encoder": lambda p: [t for n, t in p.encoder_parameters() if n != "variance_embedding"],
        "refiner": lambda p: [t for _, t in p.refiner_parameters()],
        "head": lambda p: [t for _, t in p.head_parameters()],
        "variance embedding": lambda p: [p.variance_embedding],
    }
    results = []
    for name, select in groups.items():
        worst = 0.0
        for k in range(n_instances):
            params, loss = _gradient_instance(seed + k)
            worst = max(
                worst, gradient_check(
                    loss, select(params), max_entries=max_entries, seed=k, floor=GRADIENT_FLOOR
                )
            )
        results.append(_result(f"{name} gradients (relative error)", worst, GRADIENT_TOL))
    return results


# --------------------------------------------------------------------------
# Runner
# --------------------------------------------------------------------------


def run_suite(suite: CheckSuite, **kwargs: Any) -> SuiteReport:
    """Run one concrete suite (not ``ALL``)."""
    if suite is CheckSuite.EQUIVARIANCE:
        results = (
            check_equivariance()
            + check_equivariance(variance_rule=VarianceRule.PROPAGATED)
            + check_psd_stability()
        )
    elif suite is CheckSuite.MOMENTS:
        results = check_moments(**kwargs)
    elif suite is CheckSuite.GRADIENTS:
        results = check_gradients(**kwargs)
    else:
        msg = f"run_suite expects a single suite, got {suite.value}"
        raise ValueError(msg)
    return SuiteReport(suite, results)


def run_checks(suite: CheckSuite = CheckSuite.ALL, raise_on_failure: bool = True) -> list[SuiteReport]:
    """Run the requested suites.

    Raises:
        CheckFailedError: If any property fails and ``raise_on_failure`` is set;
            the reports are attached to the exception
    """
    suites = [s for s in CheckSuite if s is not CheckSuite.ALL] if suite is CheckSuite.ALL else [suite]
    reports = [run_suite(s) for s in suites]
    failed = [r.name for rep in reports for r in rep.results if not r.passed]
    if failed and raise_on_failure:
        msg = f"{len(failed)} check(s) failed: {', '.join(failed)}"
        raise CheckFailedError(msg, reports)
    return reports
