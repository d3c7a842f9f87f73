"""Hypercube quantization of the parameter space into fixed-length headers.

The bounding hypercube of the parameter set is split into cells of side
1/ceil(sqrt(n)); cells that meet the parameter set are enumerated in
lexicographic corner order and indexed by fixed-width bit strings. Each cell
carries a representative (its center projected back onto the parameter set),
so quantizing any theta moves it by at most sqrt(k)/ceil(sqrt(n)) <= sqrt(k/n).

Boundary points are assigned to the neighbouring cell with the smaller lower
corner, which makes encoding total and keeps encode a left inverse of decode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import ConfigError, DomainError, FormatError
from .sources import Family, MixtureFamily, as_param

_BOUNDARY_EPS_CELLS = 1e-9


@dataclass(frozen=True)
class HeaderBits:
    """Fixed-width unsigned value, big-endian on the wire."""

    value: int
    width: int

    def __post_init__(self):
        if self.width < 0 or self.value < 0 or self.value >= (1 << max(self.width, 1)):
            raise FormatError(f"header value {self.value} does not fit in {self.width} bits")


@dataclass(frozen=True)
class GridCell:
    index: int
    corner: Tuple[int, ...]  # integer lattice coordinates of the lower corner
    lower: np.ndarray
    representative: np.ndarray
    rep_on_boundary: bool  # projection/clamp moved the center onto the set's edge


@dataclass(frozen=True)
class ParamGrid:
    family: Family
    n: int
    side: float
    anchor: np.ndarray
    box_side: int  # J: integer side of the bounding hypercube
    per_axis: int
    cells: Tuple[GridCell, ...]
    header_bits: int
    _corner_index: dict = field(repr=False)

    @property
    def cell_count(self) -> int:
        return len(self.cells)


def _kept_corners(family: Family, per_axis: int, side: float, anchor: np.ndarray) -> np.ndarray:
    k = family.k
    grids = np.meshgrid(*[np.arange(per_axis)] * k, indexing="ij")
    corners = np.stack([g.ravel() for g in grids], axis=-1)  # lexicographic order
    if isinstance(family, MixtureFamily):
        # cell holds a simplex point iff sum(lower) < 1 <= sum(lower) + k*side;
        # with side = 1/q this is exact integer arithmetic
        q = round(1.0 / side)
        s = corners.sum(axis=1)
        keep = (q - k <= s) & (s <= q - 1)
    else:
        highs = np.array([hi for _, hi in family.theta_box])
        lower = anchor[None, :] + corners * side
        keep = np.all((corners == 0) | (lower < highs[None, :] - 0.0), axis=1)
    return corners[keep]


def _representative(family: Family, corner: np.ndarray, lower: np.ndarray, side: float, q: int):
    if isinstance(family, MixtureFamily):
        # Euclidean projection of the cell center onto the simplex, written as
        # an exact integer rational: rep_i = (k c_i - sum(c) + q) / (k q).
        # Kept cells have sum(c) <= q-1, so every numerator is >= 1 and the
        # projection never clips at zero nor lands on the simplex boundary.
        k = family.k
        numer = k * corner - corner.sum() + q
        rep = numer / float(k * q)
        on_boundary = False
    else:
        center = lower + side / 2
        lows = np.array([lo for lo, _ in family.theta_box])
        highs = np.array([hi for _, hi in family.theta_box])
        rep = np.clip(center, lows, highs)
        on_boundary = bool(np.any(rep != center))
    rep.flags.writeable = False
    return rep, on_boundary


def build_grid(family: Family, n: int) -> ParamGrid:
    """Enumerate the cells of side 1/ceil(sqrt(n)) that meet the parameter set."""
    if n < 1:
        raise DomainError("block length must be >= 1")
    q = math.isqrt(n - 1) + 1  # ceil(sqrt(n))
    side = 1.0 / q
    if isinstance(family, MixtureFamily):
        anchor = np.zeros(family.k)
        box_side = 1
    else:
        anchor = np.array([lo for lo, _ in family.theta_box])
        box_side = max(1, math.ceil(max(hi - lo for lo, hi in family.theta_box)))
    per_axis = box_side * q
    corners = _kept_corners(family, per_axis, side, anchor)
    cells = []
    corner_index = {}
    for idx, corner in enumerate(map(tuple, corners.tolist())):
        corner_arr = np.asarray(corner)
        lower = anchor + corner_arr * side
        rep, on_boundary = _representative(family, corner_arr, lower, side, q)
        lower.flags.writeable = False
        cells.append(GridCell(idx, corner, lower, rep, on_boundary))
        corner_index[corner] = idx
    header_bits = max(0, math.ceil(math.log2(len(cells)))) if len(cells) > 1 else 0
    grid = ParamGrid(
        family=family,
        n=n,
        side=side,
        anchor=anchor,
        box_side=box_side,
        per_axis=per_axis,
        cells=tuple(cells),
        header_bits=header_bits,
        _corner_index=corner_index,
    )
    for cell in cells:  # decode followed by encode must be the identity
        back = encode_param(grid, cell.representative)
        if back.value != cell.index:
            raise ConfigError(
                f"representative of cell {cell.index} encodes to cell {back.value}; "
                "a theta_box edge sits on a grid face, nudge the box"
            )
    return grid


def _cell_corner_of(grid: ParamGrid, theta: np.ndarray) -> Tuple[int, ...]:
    corner = []
    for j, t in enumerate(theta):
        u = (t - grid.anchor[j]) / grid.side
        i = max(min(int(math.floor(u)), grid.per_axis - 1), 0)
        # points on (or within float noise of) a cell face belong to the
        # lower cell; the 1e-9 band makes the rule rounding-proof
        if i > 0 and u - i < _BOUNDARY_EPS_CELLS:
            i -= 1
        corner.append(i)
    return tuple(corner)


def encode_param(grid: ParamGrid, theta) -> HeaderBits:
    """Header of the unique cell containing theta."""
    theta = as_param(grid.family, theta)
    corner = _cell_corner_of(grid, theta)
    idx = grid._corner_index.get(corner)
    if idx is None:
        raise DomainError(f"{theta} is not covered by the parameter grid")
    return HeaderBits(value=idx, width=grid.header_bits)


def decode_param(grid: ParamGrid, bits: HeaderBits) -> np.ndarray:
    """Representative of the addressed cell."""
    if bits.width != grid.header_bits:
        raise FormatError(
            f"header width {bits.width} does not match grid width {grid.header_bits}"
        )
    if bits.value >= grid.cell_count:
        raise FormatError(f"header value {bits.value} >= cell count {grid.cell_count}")
    return grid.cells[bits.value].representative


def header_bits_bound(family: Family, grid: ParamGrid) -> int:
    """k (log2 ceil(sqrt(n)) + log2 J) + 1: the rate-overhead budget for headers."""
    q = round(1.0 / grid.side)
    return math.floor(family.k * (math.log2(q) + math.log2(grid.box_side))) + 1
