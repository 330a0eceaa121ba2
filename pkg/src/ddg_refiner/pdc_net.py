# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Probability-density-cloud message passing.

Each residue carries invariant features ``h`` and a Gaussian position
``N(μ, Σ)``. A layer builds messages from invariant features and the
squared-distance moments of neighbouring clouds, then updates ``h``
(invariant), ``μ`` (equivariant, weighted sum of relative positions) and
``Σ`` (conjugation-equivariant, weighted sum of covariances).

Covariances travel through the network flattened row-major to ``(n, 9)``.
"""

from __future__ import annotations

from collections.abc import Collection, Iterator, Sequence
from dataclasses import dataclass, field
import logging

import numpy as np
from numpy.typing import NDArray

from . import autograd as ag
from .autograd import Tensor
from .exceptions import ShapeError, StructureError
from .geometry import GaussianPDC
from .models import AMINO_ACIDS, Complex, MomentFormula, VarianceInitKind, VarianceRule
from .structure import FIXED_FEATURES, N_TYPES, edges_from_ca, initial_features

logger = logging.getLogger(__name__)

MLP_HIDDEN_LAYERS = 2
# Final layers of the scalar heads start small so fresh layers barely
# move positions and covariances.
HEAD_INIT_SCALE = 0.01
SIGMA_HEAD_BIAS = -4.0

_DIAG = ag.DIAGONAL_3X3
_OUTER_LEFT = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
_OUTER_RIGHT = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
# (n, 3) diagonal entries -> (n, 9) flattened diagonal matrix.
_DIAG_PLACEMENT = np.zeros((3, 9))
_DIAG_PLACEMENT[[0, 1, 2], _DIAG] = 1.0


class Mlp:
    """Feed-forward network: SiLU hidden layers, linear output."""

    def __init__(self, weights: Sequence[tuple[Tensor, Tensor]]):
        self.weights = list(weights)

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        out_scale: float = 1.0,
        out_bias: float = 0.0,
    ) -> Mlp:
        """Random LeCun-normal weights, zero biases."""
        weights = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:], strict=True)):
            last = k == len(sizes) - 2
            scale = (out_scale if last else 1.0) / np.sqrt(fan_in)
            w = Tensor(scale * rng.standard_normal((fan_in, fan_out)), requires_grad=True)
            b = Tensor(np.full((1, fan_out), out_bias if last else 0.0), requires_grad=True)
            weights.append((w, b))
        return cls(weights)

    def __call__(self, x: Tensor) -> Tensor:
        for k, (w, b) in enumerate(self.weights):
            x = (x @ w) + b
            if k < len(self.weights) - 1:
                x = ag.silu(x)
        return x

    @property
    def in_width(self) -> int:
        return self.weights[0][0].shape[0]

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for k, (w, b) in enumerate(self.weights):
            yield f"{prefix}.{k}.w", w
            yield f"{prefix}.{k}.b", b


def _mlp_sizes(fan_in: int, width: int, fan_out: int) -> list[int]:
    return [fan_in, *([width] * MLP_HIDDEN_LAYERS), fan_out]


@dataclass
class PdcLayerParams:
    """Edge, node, mean and variance networks of one layer."""

    phi_e: Mlp
    phi_h: Mlp
    phi_mu: Mlp
    phi_sigma: Mlp

    @classmethod
    def init(cls, width: int, rng: np.random.Generator) -> PdcLayerParams:
        return cls(
            phi_e=Mlp.init(_mlp_sizes(2 * width + 2, width, width), rng),
            phi_h=Mlp.init(_mlp_sizes(2 * width, width, width), rng),
            phi_mu=Mlp.init(_mlp_sizes(width, width, 1), rng, HEAD_INIT_SCALE),
            phi_sigma=Mlp.init(
                _mlp_sizes(width, width, 1), rng, HEAD_INIT_SCALE, SIGMA_HEAD_BIAS
            ),
        )

    @property
    def width(self) -> int:
        return self.phi_h.weights[-1][0].shape[1]

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield from self.phi_e.named_parameters(f"{prefix}.phi_e")
        yield from self.phi_h.named_parameters(f"{prefix}.phi_h")
        yield from self.phi_mu.named_parameters(f"{prefix}.phi_mu")
        yield from self.phi_sigma.named_parameters(f"{prefix}.phi_sigma")


@dataclass(frozen=True)
class NodeState:
    """Features and position cloud of a single residue."""

    h: NDArray[np.float64]
    pdc: GaussianPDC


@dataclass
class NodeStates:
    """Batched node states: h (n, d), μ (n, 3), Σ flattened (n, 9)."""

    h: Tensor
    mu: Tensor
    cov: Tensor

    def __post_init__(self) -> None:
        n = self.h.shape[0]
        if self.mu.shape != (n, 3) or self.cov.shape != (n, 9):
            raise ShapeError("NodeStates", self.h.shape, self.mu.shape, self.cov.shape)

    def __len__(self) -> int:
        return self.h.shape[0]

    def node(self, i: int) -> NodeState:
        """Detached view of residue ``i``."""
        return NodeState(
            h=self.h.values[i].copy(),
            pdc=GaussianPDC(self.mu.values[i], self.cov.values[i].reshape(3, 3)),
        )

    def covariances(self) -> NDArray[np.float64]:
        """Covariances as an (n, 3, 3) array."""
        return self.cov.values.reshape(-1, 3, 3)


@dataclass
class EdgeGeometry:
    """Per-edge quantities shared by a layer and the coordinate readout."""

    receivers: NDArray[np.int64]
    senders: NDArray[np.int64]
    inv_degree: NDArray[np.float64]
    isolated: NDArray[np.float64]

    @classmethod
    def from_edges(cls, edges: NDArray[np.int64], n: int) -> EdgeGeometry:
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            msg = f"edge endpoint out of range for {n} nodes"
            raise StructureError(msg)
        receivers, senders = edges[:, 0], edges[:, 1]
        degree = np.bincount(receivers, minlength=n).astype(np.float64)
        return cls(
            receivers=receivers,
            senders=senders,
            inv_degree=(1.0 / np.maximum(degree, 1.0))[:, None],
            isolated=(degree == 0).astype(np.float64)[:, None],
        )

    def mean_over_neighbours(self, per_edge: Tensor, n: int) -> Tensor:
        """(1/|N(i)|) Σ_j per_edge[i←j]; zero for isolated nodes."""
        return ag.segment_sum(per_edge, self.receivers, n) * self.inv_degree


def distance_moment_features(
    mu: Tensor,
    cov: Tensor,
    geo: EdgeGeometry,
    formula: MomentFormula = MomentFormula.STANDARD,
) -> tuple[Tensor, Tensor]:
    """Mean and variance of ‖x_i − x_j‖² per edge, each shaped (E, 1)."""
    dmu = ag.take(mu, geo.receivers) - ag.take(mu, geo.senders)
    s = ag.take(cov, geo.receivers) + ag.take(cov, geo.senders)
    tr_s = ag.sum(ag.take(s, _DIAG, axis=1), axis=1, keepdims=True)
    mean = tr_s + ag.sum(dmu * dmu, axis=1, keepdims=True)
    outer = ag.take(dmu, _OUTER_LEFT, axis=1) * ag.take(dmu, _OUTER_RIGHT, axis=1)
    quad = ag.sum(s * outer, axis=1, keepdims=True)
    if formula is MomentFormula.STANDARD:
        spread = ag.sum(s * ag.take(s, ag.TRANSPOSE_3X3, axis=1), axis=1, keepdims=True)
    else:
        spread = tr_s
    return mean, 2.0 * spread + 4.0 * quad


def _symmetrize(cov: Tensor) -> Tensor:
    return 0.5 * (cov + ag.take(cov, ag.TRANSPOSE_3X3, axis=1))


def pdc_layer_with_messages(
    states: NodeStates,
    geo: EdgeGeometry,
    params: PdcLayerParams,
    variance_rule: VarianceRule = VarianceRule.ADDITIVE,
    formula: MomentFormula = MomentFormula.STANDARD,
) -> tuple[NodeStates, Tensor]:
    """One layer; also returns the edge messages (E, d)."""
    n = len(states)
    h, mu, cov = states.h, states.mu, states.cov
    mean_d, var_d = distance_moment_features(mu, cov, geo, formula)
    edge_in = ag.concat(
        [
            ag.take(h, geo.receivers),
            ag.take(h, geo.senders),
            ag.log1p(mean_d),
            ag.log1p(var_d),
        ],
        axis=1,
    )
    messages = params.phi_e(edge_in)

    aggregated = ag.segment_sum(messages, geo.receivers, n)
    updated_h = params.phi_h(ag.concat([h, aggregated], axis=1))
    new_h = geo.isolated * h + (1.0 - geo.isolated) * updated_h

    w_mu = params.phi_mu(messages)
    dmu = ag.take(mu, geo.receivers) - ag.take(mu, geo.senders)
    new_mu = mu + geo.mean_over_neighbours(dmu * w_mu, n)

    if variance_rule is VarianceRule.ADDITIVE:
        w_sigma = ag.softplus(params.phi_sigma(messages))
        pair_cov = ag.take(cov, geo.receivers) + ag.take(cov, geo.senders)
        new_cov = cov + geo.mean_over_neighbours(pair_cov * w_sigma, n)
    else:
        gain = 1.0 + geo.mean_over_neighbours(w_mu, n)
        spread = geo.mean_over_neighbours(ag.take(cov, geo.senders) * w_mu, n)
        new_cov = ag.psd_clamp(_symmetrize(gain * gain * cov + spread))
    return NodeStates(new_h, new_mu, new_cov), messages


def pdc_layer(
    states: NodeStates,
    edges: NDArray[np.int64],
    params: PdcLayerParams,
    variance_rule: VarianceRule = VarianceRule.ADDITIVE,
    formula: MomentFormula = MomentFormula.STANDARD,
) -> NodeStates:
    """Apply one PDC layer over directed edges ``(i, j)`` (j sends to i).

    Args:
        states: Current node states
        edges: (E, 2) integer array of receiver, sender pairs
        params: Layer networks
        variance_rule: ``ADDITIVE`` keeps Σ PSD by construction;
            ``PROPAGATED`` reuses the mean weights and is clamped to PSD
        formula: Squared-distance variance formula for the messages

    Returns:
        Updated states; isolated nodes pass through unchanged
    """
    geo = EdgeGeometry.from_edges(edges, len(states))
    new_states, _ = pdc_layer_with_messages(states, geo, params, variance_rule, formula)
    return new_states


def run_layers(
    states: NodeStates,
    edges: NDArray[np.int64],
    layers: Sequence[PdcLayerParams],
    variance_rule: VarianceRule = VarianceRule.ADDITIVE,
    formula: MomentFormula = MomentFormula.STANDARD,
) -> tuple[NodeStates, Tensor | None, EdgeGeometry]:
    """Stack of layers on a fixed edge set; returns the last messages too."""
    geo = EdgeGeometry.from_edges(edges, len(states))
    messages: Tensor | None = None
    for layer in layers:
        states, messages = pdc_layer_with_messages(
            states, geo, layer, variance_rule, formula
        )
    return states, messages, geo


@dataclass
class VarianceInit:
    """Initial covariance strategy; ``rmsf``/``embedding`` as the kind needs."""

    kind: VarianceInitKind = VarianceInitKind.IDENTITY
    rmsf: NDArray[np.float64] | None = None
    embedding: Tensor | None = None


def init_variance(init: VarianceInit, aa_indices: NDArray[np.int64]) -> Tensor:
    """Per-residue starting covariance, flattened to (n, 9).

    Identity gives I, RMSF gives rmsf²·I and the learnable strategy gives
    ``diag(softplus(e_type))`` from a (20, 3) embedding.

    Raises:
        StructureError: On an RMSF length mismatch or negative value
    """
    n = len(aa_indices)
    if init.kind is VarianceInitKind.IDENTITY:
        return Tensor(np.tile(np.eye(3).reshape(9), (n, 1)))
    if init.kind is VarianceInitKind.FROM_RMSF:
        if init.rmsf is None or len(init.rmsf) != n:
            got = None if init.rmsf is None else len(init.rmsf)
            msg = f"RMSF initialization needs {n} values, got {got}"
            raise StructureError(msg)
        rmsf = np.asarray(init.rmsf, dtype=np.float64)
        if np.any(rmsf < 0.0):
            msg = "RMSF values must be non-negative"
            raise StructureError(msg)
        return Tensor((rmsf**2)[:, None] * np.eye(3).reshape(1, 9))
    if init.embedding is None or init.embedding.shape != (len(AMINO_ACIDS), 3):
        msg = "Learnable variance initialization needs a (20, 3) embedding"
        raise StructureError(msg)
    diag = ag.softplus(ag.take(init.embedding, np.asarray(aa_indices, dtype=np.int64)))
    return diag @ Tensor(_DIAG_PLACEMENT)


@dataclass
class EncoderParams:
    """Type embedding plus a stack of PDC layers."""

    type_embedding: Tensor
    layers: list[PdcLayerParams] = field(default_factory=list)

    @classmethod
    def init(cls, width: int, n_layers: int, rng: np.random.Generator) -> EncoderParams:
        if width <= FIXED_FEATURES:
            raise ShapeError("EncoderParams", (width,))
        embed = Tensor(
            0.1 * rng.standard_normal((N_TYPES + 1, width - FIXED_FEATURES)),
            requires_grad=True,
        )
        return cls(embed, [PdcLayerParams.init(width, rng) for _ in range(n_layers)])

    @property
    def width(self) -> int:
        return FIXED_FEATURES + self.type_embedding.shape[1]

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.type_embedding", self.type_embedding
        for k, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.{k}")


@dataclass
class Encoding:
    """Encoder output: embeddings Z (n, d) and final node states."""

    z: Tensor
    states: NodeStates
    edges: NDArray[np.int64]


def encode(
    c: Complex,
    masked: Collection[int],
    params: EncoderParams,
    variance_init: VarianceInit,
    n_layers: int | None = None,
    knn_k: int = 8,
    variance_rule: VarianceRule = VarianceRule.ADDITIVE,
    formula: MomentFormula = MomentFormula.STANDARD,
    ca: Tensor | None = None,
    aa_indices: NDArray[np.int64] | None = None,
    hide_types: bool = False,
) -> Encoding:
    """Embed a complex with the PDC encoder.

    Args:
        c: Complex supplying residue types, groups and (by default) CA positions
        masked: Masked residue indices (sets the mask flag feature)
        params: Encoder parameters
        variance_init: Starting covariance strategy
        n_layers: Number of leading layers to apply (all when omitted)
        knn_k: Neighbours per residue in the graph
        variance_rule: Covariance update rule
        formula: Distance-moment variance formula
        ca: Differentiable CA positions overriding ``c.ca``
        aa_indices: Residue types overriding ``c.aa_indices``
        hide_types: Hide the type of masked residues

    Returns:
        Embeddings, final states and the edges used
    """
    if n_layers is not None and n_layers > len(params.layers):
        msg = f"encoder has {len(params.layers)} layers, {n_layers} requested"
        raise StructureError(msg)
    layers = params.layers if n_layers is None else params.layers[:n_layers]
    types = c.aa_indices if aa_indices is None else np.asarray(aa_indices, dtype=np.int64)
    mu = Tensor(c.ca) if ca is None else ca
    edges = edges_from_ca(mu.values, c.group_indices, knn_k).all_edges()
    h0 = initial_features(c, masked, params.type_embedding, hide_types, types)
    states = NodeStates(h0, mu, init_variance(variance_init, types))
    states, _, _ = run_layers(states, edges, layers, variance_rule, formula)
    return Encoding(states.h, states, edges)
