"""The (n, n)-block two-stage codec: estimate, quantize the estimate, encode.

Each stream block t >= 2 is coded with the codebook matched to the
minimum-distance estimate computed from block t-1; the estimate's grid cell
travels as a fixed-width header, so the decoder recovers both the
reproduction and the identity of the active source. Block 1 has no past and
uses a designated initialization cell (the cell of the parameter-set
centroid). Codebooks are designed lazily per cell with seeds derived from
the cell index, so only visited cells cost design time and results are
reproducible run to run.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, DomainError, FormatError
from .estimator import CandidateGrid, YatracosMeasures
from .param_codec import HeaderBits, ParamGrid, build_grid, decode_param, encode_param
from .sources import Family, MixtureFamily, QuadratureGrid, SourceModel, default_grid
from .utils import derive_seed
from .vq import (
    AnyCodebook,
    DistortionSpec,
    LloydBudget,
    MAX_EXPLICIT_RATE_BITS,
    design_product_codebook,
    lloyd_design,
    quantize_blocks,
)

_MAGIC = b"UQ2S"
_VERSION = 1
_STREAM_HEAD = struct.Struct("<HIHHI")  # version, n, rate_bits, header_bits, block count

#: 'auto' bank policy designs explicit codebooks up to this many body bits;
#: beyond that, training cost grows as 2^bits and the bank switches to
#: product codebooks
DEFAULT_EXPLICIT_BITS_CAP = 6


class CodeBank:
    """Lazily designed, cached codebooks, one per parameter-grid cell.

    The cache fill is idempotent (same cell always designs the same codebook
    from seed = derive(global seed, cell index)), so concurrent fills are
    harmless.
    """

    def __init__(
        self,
        family: Family,
        grid: ParamGrid,
        rate_R: float,
        spec: DistortionSpec,
        design_seed: int,
        kind: str = "auto",
        explicit_bits_cap: int = DEFAULT_EXPLICIT_BITS_CAP,
        budget: Optional[LloydBudget] = None,
    ):
        self.family = family
        self.grid = grid
        self.n = grid.n
        self.rate_R = float(rate_R)
        self.spec = spec
        self.design_seed = int(design_seed)
        self.budget = budget
        self.rate_bits = max(0, int(math.ceil(self.n * self.rate_R - 1e-12)))
        if kind == "auto":
            kind = "explicit" if self.rate_bits <= explicit_bits_cap else "product"
        if kind not in ("explicit", "product"):
            raise ConfigError(f"unknown codebook kind {kind!r}")
        if kind == "explicit" and self.rate_bits > MAX_EXPLICIT_RATE_BITS:
            raise ConfigError(
                f"explicit codebooks capped at {MAX_EXPLICIT_RATE_BITS} body bits"
            )
        self.kind = kind
        self._cache: dict = {}

    def _design(self, model: SourceModel, seed: int) -> AnyCodebook:
        if self.kind == "explicit":
            return lloyd_design(model, self.n, self.rate_R, self.spec, seed, self.budget)
        return design_product_codebook(model, self.n, self.rate_R, self.spec, seed, self.budget)

    def codebook(self, cell_index: int) -> AnyCodebook:
        cb = self._cache.get(cell_index)
        if cb is None:
            rep = self.grid.cells[cell_index].representative
            seed = derive_seed(self.design_seed, "cell", cell_index)
            cb = self._design(SourceModel(self.family, rep), seed)
            self._cache.setdefault(cell_index, cb)
        return cb

    def design_for(self, theta, seed_key: str) -> AnyCodebook:
        """Same designer and budget pointed at an arbitrary parameter (baselines)."""
        seed = derive_seed(self.design_seed, seed_key, tuple(float(t) for t in np.asarray(theta)))
        return self._design(SourceModel(self.family, theta), seed)

    @property
    def cell_count(self) -> int:
        return self.grid.cell_count


def _theta_centroid(family: Family) -> np.ndarray:
    if isinstance(family, MixtureFamily):
        return np.full(family.k, 1.0 / family.k)
    return np.array([(lo + hi) / 2 for lo, hi in family.theta_box])


@dataclass
class TwoStageCode:
    """Bank + estimator wiring for one (family, n, R, p, seed) configuration."""

    family: Family
    bank: CodeBank
    est_grid: CandidateGrid
    quad: QuadratureGrid
    spec: DistortionSpec
    measures: YatracosMeasures = field(repr=False)
    init_cell: int

    @classmethod
    def build(
        cls,
        family: Family,
        n: int,
        rate_R: float,
        spec: DistortionSpec,
        seed: int,
        pair_cap: int = 4096,
        subsample_seed: int = 0,
        min_axis_step: float = 1.0 / 64,
        quad: Optional[QuadratureGrid] = None,
        bank_kind: str = "auto",
        budget: Optional[LloydBudget] = None,
    ) -> "TwoStageCode":
        quad = quad or default_grid(family)
        grid = build_grid(family, n)
        bank = CodeBank(family, grid, rate_R, spec, seed, kind=bank_kind, budget=budget)
        est_grid = CandidateGrid.build(
            family, n, pair_cap=pair_cap, subsample_seed=subsample_seed, min_axis_step=min_axis_step
        )
        measures = YatracosMeasures(family, est_grid, quad)
        init_cell = encode_param(grid, _theta_centroid(family)).value
        return cls(
            family=family,
            bank=bank,
            est_grid=est_grid,
            quad=quad,
            spec=spec,
            measures=measures,
            init_cell=init_cell,
        )

    @property
    def n(self) -> int:
        return self.bank.n

    @property
    def grid(self) -> ParamGrid:
        return self.bank.grid


@dataclass(frozen=True)
class EncodedBlock:
    header: HeaderBits
    body: int
    body_bits: int

    def __post_init__(self):
        if not 0 <= self.body < (1 << max(self.body_bits, 1)):
            raise FormatError(f"body does not fit in {self.body_bits} bits")


@dataclass(frozen=True)
class DecodedBlock:
    reproduction: np.ndarray
    theta_hat: np.ndarray


@dataclass(frozen=True)
class EstimateTrace:
    """Per-block estimator internals kept for harness diagnostics."""

    candidate_index: int
    theta_star: np.ndarray
    delta_at_star: float
    empirical: np.ndarray  # measures of the searched pairs on the previous block


def rate_per_letter(code: TwoStageCode) -> float:
    """(body bits + header bits) / n, the exact per-letter rate of the code."""
    return (code.bank.rate_bits + code.grid.header_bits) / code.n


def _check_blocks(code: TwoStageCode, blocks) -> np.ndarray:
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    if blocks.shape[0] < 1:
        raise DomainError("need at least one block")
    if blocks.shape[1] != code.n:
        raise DomainError(f"blocks have length {blocks.shape[1]}, code has n={code.n}")
    return blocks


def encode_stream_traced(
    code: TwoStageCode, blocks
) -> Tuple[List[EncodedBlock], List[Optional[EstimateTrace]]]:
    """Encode and also return the per-block estimator trace (None at t=1)."""
    blocks = _check_blocks(code, blocks)
    encoded: List[EncodedBlock] = []
    traces: List[Optional[EstimateTrace]] = []
    cell = code.init_cell
    for t in range(blocks.shape[0]):
        if t == 0:
            traces.append(None)
        else:
            emp = code.measures.empirical_measures(blocks[t - 1])
            deltas = code.measures.deltas_all_candidates(emp)
            idx = int(np.argmin(deltas))
            theta_star = code.est_grid.points[idx]
            cell = encode_param(code.grid, theta_star).value
            traces.append(
                EstimateTrace(
                    candidate_index=idx,
                    theta_star=theta_star,
                    delta_at_star=float(deltas[idx]),
                    empirical=emp,
                )
            )
        cb = code.bank.codebook(cell)
        bodies, _ = quantize_blocks(cb, blocks[t : t + 1], code.spec)
        encoded.append(
            EncodedBlock(
                header=HeaderBits(value=cell, width=code.grid.header_bits),
                body=bodies[0],
                body_bits=code.bank.rate_bits,
            )
        )
    return encoded, traces


def encode_stream(code: TwoStageCode, blocks) -> List[EncodedBlock]:
    """Header from the previous block's quantized estimate, body from this block."""
    encoded, _ = encode_stream_traced(code, blocks)
    return encoded


def decode_stream(code: TwoStageCode, encoded) -> List[DecodedBlock]:
    """Reproductions plus the per-block identified source parameter."""
    out = []
    for blk in encoded:
        if blk.body_bits != code.bank.rate_bits:
            raise FormatError(
                f"body width {blk.body_bits} does not match code rate bits {code.bank.rate_bits}"
            )
        theta_hat = decode_param(code.grid, blk.header)
        cb = code.bank.codebook(blk.header.value)
        out.append(DecodedBlock(reproduction=cb.reproduce(blk.body), theta_hat=theta_hat))
    return out


def nn_first_stage_encode(code: TwoStageCode, x_block) -> EncodedBlock:
    """Zero-memory baseline: pick the cell whose codebook fits this block best."""
    x = np.asarray(x_block, dtype=float).reshape(1, -1)
    if x.shape[1] != code.n:
        raise DomainError(f"block has length {x.shape[1]}, code has n={code.n}")
    best = None
    for cell in range(code.bank.cell_count):
        cb = code.bank.codebook(cell)
        bodies, repro = quantize_blocks(cb, x, code.spec)
        dist = float(code.spec.rho(x, repro).sum())
        if best is None or dist < best[0]:
            best = (dist, cell, bodies[0])
    _, cell, body = best
    return EncodedBlock(
        header=HeaderBits(value=cell, width=code.grid.header_bits),
        body=body,
        body_bits=code.bank.rate_bits,
    )


# ---------------------------------------------------------------------------
# stream wire format
# ---------------------------------------------------------------------------


def _bytes_per_block(header_bits: int, rate_bits: int) -> int:
    return (header_bits + rate_bits + 7) // 8


def pack_stream(code: TwoStageCode, encoded) -> bytes:
    """UQ2S container; per block the header bits then body bits, MSB first."""
    hb, rb = code.grid.header_bits, code.bank.rate_bits
    if rb > 0xFFFF or hb > 0xFFFF:
        raise FormatError("stream format caps header/body widths at 65535 bits")
    bpb = _bytes_per_block(hb, rb)
    pad = bpb * 8 - (hb + rb)
    out = [_MAGIC, _STREAM_HEAD.pack(_VERSION, code.n, rb, hb, len(encoded))]
    for blk in encoded:
        if blk.header.width != hb or blk.body_bits != rb:
            raise FormatError("encoded block widths do not match the code parameters")
        word = ((blk.header.value << rb) | blk.body) << pad
        out.append(word.to_bytes(bpb, "big"))
    return b"".join(out)


def unpack_stream(code: TwoStageCode, data: bytes) -> List[EncodedBlock]:
    """Parse and validate a UQ2S byte string; any inconsistency raises FormatError."""
    if len(data) < 4 + _STREAM_HEAD.size:
        raise FormatError("stream truncated before the header")
    if data[:4] != _MAGIC:
        raise FormatError("bad stream magic")
    version, n, rb, hb, count = _STREAM_HEAD.unpack_from(data, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported stream version {version}")
    if n != code.n or rb != code.bank.rate_bits or hb != code.grid.header_bits:
        raise FormatError("stream widths are inconsistent with the code parameters")
    bpb = _bytes_per_block(hb, rb)
    expected = 4 + _STREAM_HEAD.size + count * bpb
    if len(data) != expected:
        raise FormatError(f"stream has {len(data)} bytes, expected {expected}")
    pad = bpb * 8 - (hb + rb)
    blocks = []
    off = 4 + _STREAM_HEAD.size
    for _ in range(count):
        word = int.from_bytes(data[off : off + bpb], "big")
        off += bpb
        if pad and word & ((1 << pad) - 1):
            raise FormatError("nonzero padding bits in a packed block")
        word >>= pad
        body = word & ((1 << rb) - 1) if rb else 0
        header_val = word >> rb
        if header_val >= code.grid.cell_count:
            raise FormatError(f"header value {header_val} addresses no grid cell")
        blocks.append(
            EncodedBlock(header=HeaderBits(value=header_val, width=hb), body=body, body_bits=rb)
        )
    return blocks


def write_stream(path, code: TwoStageCode, encoded) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_stream(code, encoded))


def read_stream(path, code: TwoStageCode) -> List[EncodedBlock]:
    with open(path, "rb") as fh:
        return unpack_stream(code, fh.read())
