# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2025 The Linux Foundation

"""Mask-mutation modeling: mask windows, corruption and the refinement loss.

A mask window of ``l`` residues before and ``r`` after every mutation site
is hidden and re-initialized, either by Gaussian noise or by placing the
masked residues evenly on the line between the residues flanking the
window (extrapolating when the window touches a chain end).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
import logging

import numpy as np
from numpy.typing import NDArray

from . import autograd as ag
from .autograd import Tensor
from .exceptions import MutationError, ShapeError, StructureError
from .models import CA_CHANNEL, Complex, CorruptionKind, Mutation

logger = logging.getLogger(__name__)

DEFAULT_FLANK = 5
DEFAULT_ALPHA = 0.5
DEFAULT_DELTA = 1.0


@dataclass(frozen=True)
class MaskSegment:
    """A run of consecutive masked residues within one chain.

    ``chain_indices`` lists the complex indices of the whole chain in order;
    ``start`` and ``stop`` are inclusive positions into that list.
    """

    chain_id: str
    chain_indices: tuple[int, ...]
    start: int
    stop: int

    @property
    def has_left(self) -> bool:
        return self.start > 0

    @property
    def has_right(self) -> bool:
        return self.stop < len(self.chain_indices) - 1

    @property
    def indices(self) -> tuple[int, ...]:
        return self.chain_indices[self.start : self.stop + 1]


@dataclass(frozen=True)
class MaskRegion:
    """Masked residue indices plus their per-chain segments."""

    indices: tuple[int, ...]
    segments: tuple[MaskSegment, ...]

    def __post_init__(self) -> None:
        if not self.indices:
            msg = "Mask region is empty"
            raise StructureError(msg)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, i: object) -> bool:
        return i in self.indices

    @property
    def index_array(self) -> NDArray[np.int64]:
        return np.array(self.indices, dtype=np.int64)


def region_from_positions(c: Complex, masked: set[int]) -> MaskRegion:
    """Group masked complex indices into per-chain consecutive segments."""
    segments: list[MaskSegment] = []
    for chain_id, chain in c.chain_order.items():
        positions = [p for p, i in enumerate(chain) if i in masked]
        run_start = None
        for k, p in enumerate(positions):
            if run_start is None:
                run_start = p
            if k + 1 == len(positions) or positions[k + 1] != p + 1:
                segments.append(MaskSegment(chain_id, tuple(chain), run_start, p))
                run_start = None
    return MaskRegion(tuple(sorted(masked)), tuple(segments))


def resolve_mutation(c: Complex, mutation: Mutation) -> int:
    """Complex index of the residue a mutation targets.

    Raises:
        MutationError: If the site is missing or its type is not ``wt_aa``
    """
    index = c.residue_index(
        mutation.chain_id, mutation.seq_number, mutation.insertion_code
    )
    if index is None:
        msg = f"Mutation {mutation}: residue not found in structure"
        raise MutationError(msg)
    found = c.residues[index].aa
    if found != mutation.wt_aa:
        msg = f"Mutation {mutation}: structure has '{found}' at that site"
        raise MutationError(msg)
    return index


def _window(c: Complex, index: int, l: int, r: int) -> set[int]:  # noqa: E741
    chain = c.chain_order[c.residues[index].chain_id]
    p = chain.index(index)
    return set(chain[max(0, p - l) : min(len(chain), p + r + 1)])


def select_mask_region(
    c: Complex,
    muts: Sequence[Mutation],
    l: int = DEFAULT_FLANK,  # noqa: E741
    r: int = DEFAULT_FLANK,
) -> MaskRegion:
    """Union of the ``[m − l, m + r]`` windows around every mutation site.

    Windows are clipped to the mutated residue's chain and never cross
    into another chain.

    Raises:
        MutationError: If a site is missing or its wild-type letter differs
    """
    if l < 0 or r < 0:
        msg = f"Window flanks must be non-negative, got l={l}, r={r}"
        raise ValueError(msg)
    if not muts:
        msg = "At least one mutation is needed to place a mask window"
        raise MutationError(msg)
    masked: set[int] = set()
    for mutation in muts:
        masked |= _window(c, resolve_mutation(c, mutation), l, r)
    return region_from_positions(c, masked)


def random_mask_region(
    c: Complex,
    rng: np.random.Generator,
    l: int = DEFAULT_FLANK,  # noqa: E741
    r: int = DEFAULT_FLANK,
) -> tuple[MaskRegion, int]:
    """Window around a random seed residue of a random chain.

    The whole chain is never masked, so interpolation always has an anchor.

    Returns:
        The region and the seed residue index
    """
    chains = _maskable_chains(c)
    chain = chains[int(rng.integers(len(chains)))]
    masked, seed = _random_chain_window(c, chain, rng, l, r)
    return region_from_positions(c, masked), seed


def per_chain_mask_region(
    c: Complex,
    rng: np.random.Generator,
    l: int = DEFAULT_FLANK,  # noqa: E741
    r: int = DEFAULT_FLANK,
) -> tuple[MaskRegion, list[int]]:
    """One window around a random seed residue in every maskable chain.

    Chains of two residues or fewer are left unmasked.

    Returns:
        The merged region and the seed residue of each masked chain
    """
    masked: set[int] = set()
    seeds: list[int] = []
    for chain in _maskable_chains(c):
        window, seed = _random_chain_window(c, chain, rng, l, r)
        masked |= window
        seeds.append(seed)
    return region_from_positions(c, masked), seeds


def _maskable_chains(c: Complex) -> list[list[int]]:
    chains = [list(chain) for chain in c.chain_order.values() if len(chain) > 2]
    if not chains:
        msg = "No chain is long enough to mask a window"
        raise StructureError(msg)
    return chains


def _random_chain_window(
    c: Complex,
    chain: list[int],
    rng: np.random.Generator,
    l: int,  # noqa: E741
    r: int,
) -> tuple[set[int], int]:
    seed = chain[int(rng.integers(len(chain)))]
    masked = _window(c, seed, l, r)
    if len(masked) >= len(chain) - 1:
        # Keep two anchor residues on one side.
        keep = set(chain[:2]) if chain.index(seed) >= len(chain) // 2 else set(chain[-2:])
        masked -= keep
    return masked, seed


def corrupt_noise(
    coords: NDArray[np.float64],
    region: MaskRegion,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
) -> NDArray[np.float64]:
    """Add i.i.d. ``N(0, α²)`` noise to every atom of the masked residues."""
    if alpha <= 0.0:
        msg = f"Noise scale alpha must be positive, got {alpha}"
        raise ValueError(msg)
    out = np.array(coords, dtype=np.float64)
    rng = np.random.default_rng(seed)
    idx = region.index_array
    out[idx] += rng.normal(0.0, alpha, size=out[idx].shape)
    return out


def _anchor(coords: NDArray[np.float64], index: int, channel: int) -> NDArray[np.float64]:
    x = coords[index, channel]
    return coords[index, CA_CHANNEL] if np.any(np.isnan(x)) else x


def corrupt_interpolate(
    coords: NDArray[np.float64], region: MaskRegion
) -> NDArray[np.float64]:
    """Re-initialize masked residues on lines through the flanking residues.

    Per segment and per atom channel: with anchors on both sides the
    residues are spread evenly between them; with only a right anchor they
    are extrapolated backwards from the two residues after the segment,
    with only a left anchor forwards from the two before it. Anchors that
    lack the channel's atom (CB of glycine) use their CA. Atoms absent from
    a masked residue stay absent.

    Raises:
        StructureError: If a segment has no anchor or the single anchor
            side lacks the second residue extrapolation needs
    """
    source = np.asarray(coords, dtype=np.float64)
    out = source.copy()
    for seg in region.segments:
        chain = seg.chain_indices
        if not seg.has_left and not seg.has_right:
            msg = f"Chain {seg.chain_id} is fully masked; no anchor to interpolate from"
            raise StructureError(msg)
        if seg.has_left and seg.has_right:
            left, right = chain[seg.start - 1], chain[seg.stop + 1]
            steps = seg.stop - seg.start + 2
            for channel in range(source.shape[1]):
                x_l = _anchor(source, left, channel)
                x_r = _anchor(source, right, channel)
                for t, i in enumerate(seg.indices, start=1):
                    out[i, channel] = x_l + t * (x_r - x_l) / steps
        elif seg.has_right:
            if seg.stop + 2 >= len(chain):
                msg = f"Chain {seg.chain_id}: extrapolation needs two residues after the mask"
                raise StructureError(msg)
            right, right2 = chain[seg.stop + 1], chain[seg.stop + 2]
            for channel in range(source.shape[1]):
                x_r = _anchor(source, right, channel)
                x_r2 = _anchor(source, right2, channel)
                for p in range(seg.start, seg.stop + 1):
                    out[chain[p], channel] = x_r - (seg.stop + 1 - p) * (x_r2 - x_r)
        else:
            if seg.start < 2:
                msg = f"Chain {seg.chain_id}: extrapolation needs two residues before the mask"
                raise StructureError(msg)
            left, left2 = chain[seg.start - 1], chain[seg.start - 2]
            for channel in range(source.shape[1]):
                x_l = _anchor(source, left, channel)
                x_l2 = _anchor(source, left2, channel)
                for p in range(seg.start, seg.stop + 1):
                    out[chain[p], channel] = x_l + (p - seg.start + 1) * (x_l - x_l2)
    absent = np.isnan(source)
    out[absent] = np.nan
    return out


def corrupt(
    coords: NDArray[np.float64],
    region: MaskRegion,
    kind: CorruptionKind,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
) -> NDArray[np.float64]:
    """Dispatch to the configured corruption mode."""
    if kind is CorruptionKind.NOISE:
        return corrupt_noise(coords, region, alpha, seed)
    return corrupt_interpolate(coords, region)


def _present_mask(true_rows: NDArray[np.float64]) -> NDArray[np.float64]:
    return (~np.any(np.isnan(true_rows), axis=-1)).astype(np.float64)


def refine_loss(
    pred: Tensor | NDArray[np.float64],
    true: NDArray[np.float64],
    region: MaskRegion,
    delta: float = DEFAULT_DELTA,
) -> Tensor:
    """Huber loss of masked-residue atom positions.

    For each masked residue the Huber function of every present atom's
    displacement length is averaged over its atoms; the result is the mean
    over masked residues.
    """
    if not len(region):
        msg = "refine_loss needs a non-empty region"
        raise StructureError(msg)
    idx = region.index_array
    true_rows = np.asarray(true, dtype=np.float64)[idx]
    present = _present_mask(true_rows)
    if isinstance(pred, Tensor):
        if pred.shape != np.shape(true):
            raise ShapeError("refine_loss", pred.shape, np.shape(true))
        rows = ag.take(pred, idx)
    else:
        rows = Tensor(np.nan_to_num(np.asarray(pred, dtype=np.float64)[idx]))
    residual = rows - np.nan_to_num(true_rows)
    per_atom = ag.huber(ag.norm(residual, axis=-1), delta) * present
    counts = np.maximum(present.sum(axis=1), 1.0)
    per_residue = ag.sum(per_atom, axis=1) * (1.0 / counts)
    return ag.mean(per_residue)


def masked_ca_rmsd(
    pred: NDArray[np.float64], true: NDArray[np.float64], region: MaskRegion
) -> float:
    """Root mean square CA displacement over the masked residues."""
    idx = region.index_array
    diff = np.asarray(pred)[idx, CA_CHANNEL] - np.asarray(true)[idx, CA_CHANNEL]
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))
