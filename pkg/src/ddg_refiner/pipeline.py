# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Joint structure refinement and ΔΔG prediction.

Three parameter groups cooperate: the encoder embeds a complex, the
refiner moves the masked residues of a corrupted structure (recycled
``k`` times, re-encoding between cycles) and a linear head maps the pooled
wild-type and mutant embeddings to a ΔΔG value. During training the
mutant branch is refined without gradients; only the wild-type
refinement contributes the reconstruction loss.
"""

from __future__ import annotations

from collections.abc import Collection, Iterator, Sequence
from dataclasses import dataclass
import logging

import numpy as np
from numpy.typing import NDArray

from . import autograd as ag
from .autograd import Tensor, backward, detach, no_grad
from .config import ModelConfig, TrainConfig
from .exceptions import MutationError, ShapeError, StructureError
from .mmm import (
    MaskRegion,
    corrupt,
    per_chain_mask_region,
    refine_loss,
    resolve_mutation,
    select_mask_region,
)
from .models import AA_INDEX, AMINO_ACIDS, CA_CHANNEL, Complex, DatasetEntry, Mutation
from .optim import Adam
from .pdc_net import (
    EdgeGeometry,
    EncoderParams,
    Encoding,
    Mlp,
    NodeStates,
    PdcLayerParams,
    VarianceInit,
    encode,
    run_layers,
)

logger = logging.getLogger(__name__)

N_READOUT_ATOMS = 4
READOUT_INIT_SCALE = 0.01
# softplus(0.5413) = 1, so a fresh learnable initialization is ≈ I.
_SOFTPLUS_INV_ONE = float(np.log(np.expm1(1.0)))


@dataclass
class ModelParams:
    """All learnable weights plus the architecture they were built for."""

    config: ModelConfig
    encoder: EncoderParams
    variance_embedding: Tensor
    refiner: list[PdcLayerParams]
    readout: Mlp
    head_w: Tensor
    head_b: Tensor
    projection: Tensor | None = None

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> ModelParams:
        """Seeded random initialization."""
        rng = np.random.default_rng(seed)
        width = config.node_width
        encoder = EncoderParams.init(width, config.encoder_layers, rng)
        variance = Tensor(
            _SOFTPLUS_INV_ONE + 0.01 * rng.standard_normal((len(AMINO_ACIDS), 3)),
            requires_grad=True,
        )
        refiner = [PdcLayerParams.init(width, rng) for _ in range(config.refiner_layers)]
        readout = Mlp.init([width, width, width, N_READOUT_ATOMS], rng, READOUT_INIT_SCALE)
        projection = None
        if config.pooled_width != width:
            projection = Tensor(
                rng.standard_normal((width, config.pooled_width)) / np.sqrt(width),
                requires_grad=True,
            )
        pooled = config.pooled_width
        head_w = Tensor(
            rng.standard_normal((2 * pooled, 1)) / np.sqrt(2 * pooled),
            requires_grad=True,
        )
        head_b = Tensor(np.zeros((1, 1)), requires_grad=True)
        return cls(config, encoder, variance, refiner, readout, head_w, head_b, projection)

    def encoder_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.encoder.named_parameters("encoder")
        yield "variance_embedding", self.variance_embedding

    def refiner_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for k, layer in enumerate(self.refiner):
            yield from layer.named_parameters(f"refiner.{k}")
        yield from self.readout.named_parameters("readout")

    def head_parameters(self) -> Iterator[tuple[str, Tensor]]:
        if self.projection is not None:
            yield "head.projection", self.projection
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def named_parameters(self) -> dict[str, Tensor]:
        """Every trainable tensor keyed by a stable dotted name."""
        return {
            **dict(self.encoder_parameters()),
            **dict(self.refiner_parameters()),
            **dict(self.head_parameters()),
        }

    def pretrain_parameters(self) -> dict[str, Tensor]:
        """Encoder and refiner weights (the head is left untouched)."""
        return {**dict(self.encoder_parameters()), **dict(self.refiner_parameters())}

    def variance_init(self, rmsf: NDArray[np.float64] | None = None) -> VarianceInit:
        return VarianceInit(self.config.variance_init, rmsf, self.variance_embedding)


def _encode(
    c: Complex,
    params: ModelParams,
    masked: Collection[int] = (),
    ca: Tensor | None = None,
    aa_indices: NDArray[np.int64] | None = None,
    rmsf: NDArray[np.float64] | None = None,
) -> Encoding:
    cfg = params.config
    return encode(
        c,
        masked,
        params.encoder,
        params.variance_init(rmsf),
        knn_k=cfg.knn_k,
        variance_rule=cfg.variance_rule,
        formula=cfg.formula,
        ca=ca,
        aa_indices=aa_indices,
    )


def _ca_of(coords: Tensor) -> Tensor:
    n = coords.shape[0]
    return ag.reshape(ag.take(coords, np.array([CA_CHANNEL]), axis=1), (n, 3))


def readout_coordinates(
    states: NodeStates, messages: Tensor, geo: EdgeGeometry, readout: Mlp
) -> Tensor:
    """Backbone atoms from final refiner states, shape (n, 5, 3).

    CA sits at the PDC mean; N, C, O and CB sit at
    ``CA + (1/|N(i)|) Σ_j (μ_i − μ_j)·φ_x(m_ij)`` with one scalar per atom.
    """
    n = len(states)
    mu = states.mu
    weights = readout(messages)
    dmu = ag.take(mu, geo.receivers) - ag.take(mu, geo.senders)
    offsets = [
        ag.segment_sum(dmu * ag.take(weights, np.array([a]), axis=1), geo.receivers, n)
        * geo.inv_degree
        for a in range(N_READOUT_ATOMS)
    ]
    n_at, c_at, o_at, cb_at = (mu + off for off in offsets)
    return ag.reshape(ag.concat([n_at, mu, c_at, o_at, cb_at], axis=1), (n, 5, 3))


def refine_once(
    c: Complex,
    coords: Tensor,
    region: MaskRegion,
    aa_indices: NDArray[np.int64],
    params: ModelParams,
    rmsf: NDArray[np.float64] | None = None,
) -> Tensor:
    """One recycle: encode the current structure, refine, replace masked rows."""
    cfg = params.config
    enc = _encode(c, params, region.indices, _ca_of(coords), aa_indices, rmsf)
    states, messages, geo = run_layers(
        enc.states, enc.edges, params.refiner, cfg.variance_rule, cfg.formula
    )
    if messages is None:
        msg = "Refiner needs at least one layer"
        raise StructureError(msg)
    atoms = readout_coordinates(states, messages, geo, params.readout)
    idx = region.index_array
    return ag.index_update(coords, idx, ag.take(atoms, idx))


def refine(
    c: Complex,
    corrupted: NDArray[np.float64] | Tensor,
    region: MaskRegion,
    site_types: NDArray[np.int64],
    params: ModelParams,
    k: int = 3,
    rmsf: NDArray[np.float64] | None = None,
) -> Tensor:
    """Recycle ``k`` refinement steps starting from corrupted coordinates.

    Args:
        c: Complex supplying residue types and partner groups
        corrupted: (n, 5, 3) starting coordinates
        region: Masked residues; every other row is returned unchanged
        site_types: Residue type index of every residue (mutant types for
            the mutant branch)
        params: Model parameters
        k: Number of recycles
        rmsf: Per-residue RMSF when covariances start from RMSF

    Returns:
        Refined coordinates as a tensor
    """
    if k < 1:
        msg = f"k must be at least 1, got {k}"
        raise ValueError(msg)
    coords = corrupted if isinstance(corrupted, Tensor) else Tensor(corrupted)
    for cycle in range(k):
        coords = refine_once(c, coords, region, site_types, params, rmsf)
        logger.debug(f"refine cycle {cycle + 1}/{k} done")
    return coords


def pool(z: Tensor) -> Tensor:
    """Column-wise mean of the residue embeddings, shape (1, d)."""
    if z.shape[0] < 1:
        raise ShapeError("pool", z.shape)
    return ag.mean(z, axis=0, keepdims=True)


def mutant_types(c: Complex, muts: Sequence[Mutation]) -> NDArray[np.int64]:
    """Residue types of the mutant complex."""
    types = c.aa_indices.copy()
    for mutation in muts:
        types[resolve_mutation(c, mutation)] = AA_INDEX[mutation.mt_aa]
    return types


def ddg_head(
    wt: Complex,
    mt_coords: NDArray[np.float64] | Tensor,
    mt_types: NDArray[np.int64],
    params: ModelParams,
    rmsf: NDArray[np.float64] | None = None,
) -> Tensor:
    """ŷ = g([pool(Z_WT) ‖ pool(Z_MT)]) with the true wild type and a refined mutant."""
    mt = mt_coords if isinstance(mt_coords, Tensor) else Tensor(mt_coords)
    z_wt = _encode(wt, params, rmsf=rmsf).z
    z_mt = _encode(wt, params, ca=_ca_of(mt), aa_indices=mt_types, rmsf=rmsf).z
    h_wt, h_mt = pool(z_wt), pool(z_mt)
    if params.projection is not None:
        h_wt, h_mt = h_wt @ params.projection, h_mt @ params.projection
    out = ag.concat([h_wt, h_mt], axis=1) @ params.head_w + params.head_b
    return ag.reshape(out, ())


def build_mutant_start(
    wt: Complex,
    muts: Sequence[Mutation],
    cfg: TrainConfig,
    seed: int,
) -> tuple[MaskRegion, NDArray[np.float64], NDArray[np.int64]]:
    """Mask region, corrupted start coordinates and mutant residue types."""
    region = select_mask_region(wt, muts, cfg.l, cfg.r)
    start = corrupt(wt.coords, region, cfg.corruption, cfg.alpha, seed)
    return region, start, mutant_types(wt, muts)


@dataclass
class Prediction:
    """Predicted ΔΔG plus the refined mutant backbone."""

    ddg: float
    mutant_coords: NDArray[np.float64]
    region: MaskRegion


def predict(
    wt: Complex,
    muts: Sequence[Mutation],
    params: ModelParams,
    cfg: TrainConfig,
    rmsf: NDArray[np.float64] | None = None,
) -> Prediction:
    """Inference path: corrupt, refine the mutant, encode both, apply the head."""
    if not muts:
        msg = "predict needs at least one mutation"
        raise MutationError(msg)
    with no_grad():
        region, start, types = build_mutant_start(wt, muts, cfg, cfg.seed)
        refined = refine(wt, start, region, types, params, cfg.k_recycles, rmsf)
        y = ddg_head(wt, refined, types, params, rmsf)
    return Prediction(y.item(), refined.numpy(), region)


def predict_ddg(
    wt: Complex,
    muts: Sequence[Mutation],
    params: ModelParams,
    cfg: TrainConfig,
    rmsf: NDArray[np.float64] | None = None,
) -> float:
    """Predicted binding free energy change in kcal/mol."""
    return predict(wt, muts, params, cfg, rmsf).ddg


@dataclass
class TrainSample:
    """A dataset entry with its parsed wild-type complex."""

    entry: DatasetEntry
    complex: Complex
    rmsf: NDArray[np.float64] | None = None


@dataclass
class StepLosses:
    """Loss tensors of one joint step (before the optimizer update)."""

    total: Tensor
    ddg: Tensor
    refine: Tensor
    mutant_coords: list[Tensor]

    def as_floats(self) -> dict[str, float]:
        return {
            "loss_total": self.total.item(),
            "loss_ddg": self.ddg.item(),
            "loss_refine": self.refine.item(),
        }


def joint_losses(
    batch: Sequence[TrainSample],
    params: ModelParams,
    cfg: TrainConfig,
    seed: int,
) -> StepLosses:
    """Build L_ΔΔG + λ·L_refine for a batch (graph recorded, no update)."""
    if not batch:
        msg = "train_step needs a non-empty batch"
        raise ValueError(msg)
    ddg_terms: list[Tensor] = []
    refine_terms: list[Tensor] = []
    mutant_coords: list[Tensor] = []
    for b, sample in enumerate(batch):
        wt = sample.complex
        region, start, mt_types = build_mutant_start(
            wt, sample.entry.mutations, cfg, seed + b
        )
        refined_wt = refine(
            wt, start, region, wt.aa_indices, params, cfg.k_recycles, sample.rmsf
        )
        refine_terms.append(refine_loss(refined_wt, wt.coords, region, cfg.delta))
        with no_grad():
            refined_mt = refine(
                wt, start, region, mt_types, params, cfg.k_recycles, sample.rmsf
            )
        mt = detach(refined_mt)
        mutant_coords.append(mt)
        y_hat = ddg_head(wt, mt, mt_types, params, sample.rmsf)
        err = y_hat - sample.entry.ddg
        ddg_terms.append(err * err)
    scale = 1.0 / len(batch)
    loss_ddg = ag.sum(ag.concat([ag.reshape(t, (1,)) for t in ddg_terms])) * scale
    loss_refine = ag.sum(ag.concat([ag.reshape(t, (1,)) for t in refine_terms])) * scale
    total = loss_ddg + loss_refine * cfg.lam
    return StepLosses(total, loss_ddg, loss_refine, mutant_coords)


def train_step(
    batch: Sequence[TrainSample],
    params: ModelParams,
    optimizer: Adam,
    cfg: TrainConfig,
    seed: int = 0,
) -> dict[str, float]:
    """One joint update; returns loss_total, loss_ddg and loss_refine."""
    optimizer.zero_grad()
    losses = joint_losses(batch, params, cfg, seed)
    backward(losses.total)
    optimizer.step()
    return losses.as_floats()


def pretrain_loss(
    structures: Sequence[Complex],
    params: ModelParams,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> Tensor:
    """Refinement loss with one random mask window per chain of each structure."""
    if not structures:
        msg = "mmm_pretrain_step needs at least one structure"
        raise ValueError(msg)
    terms: list[Tensor] = []
    for c in structures:
        region, _ = per_chain_mask_region(c, rng, cfg.l, cfg.r)
        start = corrupt(c.coords, region, cfg.corruption, cfg.alpha, int(rng.integers(2**31)))
        refined = refine(c, start, region, c.aa_indices, params, cfg.k_recycles)
        terms.append(ag.reshape(refine_loss(refined, c.coords, region, cfg.delta), (1,)))
    return ag.mean(ag.concat(terms))


def mmm_pretrain_step(
    structures: Sequence[Complex],
    params: ModelParams,
    optimizer: Adam,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> float:
    """One masked-refinement update of encoder and refiner (head untouched).

    ``optimizer`` should be built over ``params.pretrain_parameters()``.
    """
    optimizer.zero_grad()
    loss = pretrain_loss(structures, params, cfg, rng)
    backward(loss)
    optimizer.step()
    return loss.item()


def covariance_sq_norms(
    c: Complex, params: ModelParams, rmsf: NDArray[np.float64] | None = None
) -> Tensor:
    """Squared Frobenius norm of every final encoder covariance, shape (n,)."""
    cov = _encode(c, params, rmsf=rmsf).states.cov
    return ag.sum(cov * cov, axis=1)


def uncertainty_loss(
    c: Complex, rmsf_target: NDArray[np.float64], params: ModelParams
) -> Tensor:
    """mean_i (‖Σ_i‖²_F − RMSF_i)²."""
    target = np.asarray(rmsf_target, dtype=np.float64)
    if target.shape != (len(c),):
        msg = f"Need {len(c)} RMSF values, got {target.shape[0] if target.ndim else 0}"
        raise StructureError(msg)
    diff = covariance_sq_norms(c, params) - target
    return ag.mean(diff * diff)


def uncertainty_train_step(
    c: Complex,
    rmsf_target: NDArray[np.float64],
    params: ModelParams,
    optimizer: Adam,
) -> float:
    """One update of the covariance-vs-RMSF regression."""
    optimizer.zero_grad()
    loss = uncertainty_loss(c, rmsf_target, params)
    backward(loss)
    optimizer.step()
    return loss.item()
