"""Fixed-rate n-block vector quantizers under rho(x, y) = |x - y|^p.

Two codebook representations share one encoder/decoder interface:

* ``Codebook`` holds materialized n-block codewords (Lloyd-designed or
  arbitrary) and brute-force nearest-neighbor encoding.
* ``ProductCodebook`` is the n-fold product of a scalar codebook. Its
  2^(n*b) codewords are never materialized; per-letter nearest-neighbor
  encoding is exact for additive distortion and the packed per-letter
  indices form the fixed-width body integer. This is what makes rate-R
  coding at large block lengths feasible while keeping the rate identity
  rate_bits = ceil(n*R) exact.

Also here: the Lloyd/LBG designer, the quantizer-mismatch comparison, and
the reference-letter codebook augmentation for unbounded distortion.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Tuple, Union

import numpy as np

from .errors import CapacityError, ConfigError, DomainError, FormatError
from .sources import SourceModel, Support, default_grid, sample, variational_distance
from .utils import derive_seed

#: explicit designs above this many body bits are refused (2^bits codewords)
MAX_EXPLICIT_RATE_BITS = 12
#: exact augmented-codebook enumeration is refused above this block length
MAX_AUGMENT_BLOCK = 24
#: cap on scalar training letters for product-codebook design
MAX_TRAIN_LETTERS = 1 << 17

_MAGIC = b"UQVQ"
_VERSION = 1


@dataclass(frozen=True)
class DistortionSpec:
    """rho(x, xhat) = |x - xhat|^p with the metric bounded by d_max."""

    p_exponent: float = 2.0
    d_max: float = 1.0

    def __post_init__(self):
        if self.p_exponent <= 0:
            raise ConfigError("distortion exponent must be positive")
        if self.d_max <= 0:
            raise ConfigError("d_max must be positive")

    @classmethod
    def for_support(cls, support: Support, p: float = 2.0) -> "DistortionSpec":
        # reproduction letters are clamped to the support, so the metric
        # diameter of source plus reproduction alphabet is the width
        return cls(p_exponent=p, d_max=support.width)

    @property
    def rho_max(self) -> float:
        return self.d_max ** self.p_exponent

    def rho(self, x, xhat) -> np.ndarray:
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(xhat, dtype=float))
        if self.p_exponent == 2.0:
            return d * d
        if self.p_exponent == 1.0:
            return d
        return d ** self.p_exponent


@dataclass(frozen=True)
class LloydProvenance:
    seed: int
    training_blocks: int
    iterations: int
    distortion_trace: tuple = ()
    split_iterations: tuple = ()


@dataclass(frozen=True)
class Codebook:
    """Materialized list of reproduction n-blocks with fixed-width indexing."""

    n: int
    codewords: np.ndarray  # (count, n)
    rate_bits: int
    provenance: Optional[LloydProvenance] = None

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=float).reshape(-1, self.n)
        cw.flags.writeable = False
        object.__setattr__(self, "codewords", cw)
        if not 1 <= len(cw) <= (1 << self.rate_bits):
            raise ConfigError(
                f"{len(cw)} codewords do not fit in {self.rate_bits} body bits"
            )

    @property
    def codeword_count(self) -> int:
        return len(self.codewords)

    def reproduce(self, index: int) -> np.ndarray:
        if not 0 <= index < self.codeword_count:
            raise FormatError(f"codeword index {index} out of range")
        return self.codewords[index]


@dataclass(frozen=True)
class ProductCodebook:
    """n independent uses of a scalar codebook; codewords stay virtual."""

    n: int
    base: Codebook  # scalar: base.n == 1
    bits_per_letter: int

    def __post_init__(self):
        if self.base.n != 1:
            raise ConfigError("product codebook needs a scalar base codebook")
        if self.base.codeword_count > (1 << self.bits_per_letter):
            raise ConfigError("scalar levels do not fit in bits_per_letter")

    @property
    def rate_bits(self) -> int:
        return self.n * self.bits_per_letter

    @property
    def codeword_count(self) -> int:
        return self.base.codeword_count ** self.n

    @property
    def levels(self) -> np.ndarray:
        return self.base.codewords[:, 0]

    def letters_to_index(self, letters: np.ndarray) -> int:
        """Pack per-letter indices into one big-endian body integer."""
        b = self.bits_per_letter
        letters = np.asarray(letters, dtype=np.uint16)
        bits = np.unpackbits(letters.astype(">u2").view(np.uint8).reshape(-1, 2), axis=1)
        bitstream = bits[:, 16 - b :].ravel()
        pad = (-bitstream.size) % 8
        packed = np.packbits(bitstream)
        return int.from_bytes(packed.tobytes(), "big") >> pad if pad else int.from_bytes(
            packed.tobytes(), "big"
        )

    def index_to_letters(self, index: int) -> np.ndarray:
        total = self.rate_bits
        if not 0 <= index < (1 << total):
            raise FormatError("body index out of range for the block width")
        raw = index.to_bytes((total + 7) // 8, "big") if total else b""
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[-total:] if total else np.array([], dtype=np.uint8)
        b = self.bits_per_letter
        weights = 1 << np.arange(b - 1, -1, -1)
        letters = bits.reshape(self.n, b) @ weights
        if np.any(letters >= self.base.codeword_count):
            raise FormatError("body addresses a nonexistent scalar level")
        return letters

    def reproduce(self, index: int) -> np.ndarray:
        return self.levels[self.index_to_letters(index)]


AnyCodebook = Union[Codebook, ProductCodebook]


# ---------------------------------------------------------------------------
# encoding and distortion
# ---------------------------------------------------------------------------


def _block_distortion_matrix(
    cb: Codebook, blocks: np.ndarray, spec: DistortionSpec, truncate: Optional[float] = None
) -> np.ndarray:
    """Total block distortion to every codeword; shape (T, count)."""
    rho = spec.rho(blocks[:, None, :], cb.codewords[None, :, :])
    if truncate is not None:
        rho = np.minimum(rho, truncate)
    return rho.sum(axis=2)


def quantize_blocks(
    cb: AnyCodebook,
    blocks: np.ndarray,
    spec: DistortionSpec,
    truncate: Optional[float] = None,
):
    """Nearest-neighbor encode a (T, n) batch; ties go to the lowest index.

    Returns (indices, reproductions) where indices is a list of Python ints
    (bodies can exceed 64 bits for product codebooks).
    """
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    if blocks.shape[1] != cb.n:
        raise DomainError(f"blocks have length {blocks.shape[1]}, codebook n={cb.n}")
    if isinstance(cb, ProductCodebook):
        letters = cb.levels
        rho = spec.rho(blocks[:, :, None], letters[None, None, :])
        if truncate is not None:
            rho = np.minimum(rho, truncate)
        letter_idx = rho.argmin(axis=2)
        repro = letters[letter_idx]
        indices = [cb.letters_to_index(row) for row in letter_idx]
        return indices, repro
    dists = _block_distortion_matrix(cb, blocks, spec, truncate)
    idx = dists.argmin(axis=1)
    return [int(i) for i in idx], cb.codewords[idx]


def nn_encode(cb: AnyCodebook, x_block, spec: DistortionSpec) -> int:
    """Index of the codeword minimizing the block distortion."""
    indices, _ = quantize_blocks(cb, np.asarray(x_block, dtype=float)[None, :], spec)
    return indices[0]


def distortion_on_sample(cb: AnyCodebook, blocks, spec: DistortionSpec) -> float:
    """Mean per-letter distortion of nearest-neighbor coding over the blocks."""
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    if blocks.size == 0:
        raise DomainError("need at least one block")
    _, repro = quantize_blocks(cb, blocks, spec)
    return float(spec.rho(blocks, repro).mean())


# ---------------------------------------------------------------------------
# Lloyd design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LloydBudget:
    training_blocks: Optional[int] = None  # default 200 * codeword count
    max_iters: int = 50
    tol: float = 1e-6


def _centroid(blocks: np.ndarray, p: float) -> np.ndarray:
    return np.median(blocks, axis=0) if p == 1.0 else blocks.mean(axis=0)


def lloyd_design(
    model: SourceModel,
    n: int,
    rate_R: float,
    spec: DistortionSpec,
    seed: int,
    budget: Optional[LloydBudget] = None,
) -> Codebook:
    """Generalized Lloyd design of an explicit codebook with 2^ceil(nR) codewords.

    Deterministic given the seed. Empty cells are refilled by splitting the
    codeword of the highest-distortion cell with a +-1e-3 perturbation.
    Only p in {1, 2} have closed-form centroid steps.
    """
    if spec.p_exponent not in (1.0, 2.0):
        raise ConfigError("Lloyd design supports p in {1, 2} only")
    rate_bits = int(math.ceil(n * rate_R - 1e-12))
    rate_bits = max(rate_bits, 0)
    if rate_bits > MAX_EXPLICIT_RATE_BITS:
        raise CapacityError(
            f"{rate_bits} body bits means 2^{rate_bits} explicit codewords; "
            f"cap is {MAX_EXPLICIT_RATE_BITS} (use a product codebook)"
        )
    count = 1 << rate_bits
    budget = budget or LloydBudget()
    t_blocks = budget.training_blocks or 200 * count
    if t_blocks < 10 * count:
        raise ConfigError("training budget below 10 blocks per codeword")
    training = sample(model, derive_seed(seed, "lloyd-train"), t_blocks * n).reshape(t_blocks, n)
    rng = np.random.default_rng(derive_seed(seed, "lloyd-init"))
    codewords = training[rng.choice(t_blocks, size=count, replace=False)].copy()
    lo, hi = model.support.lo, model.support.hi
    trace = []
    splits = []
    prev = math.inf
    iterations = 0
    for it in range(budget.max_iters):
        dists = _block_distortion_matrix(
            Codebook(n=n, codewords=codewords, rate_bits=rate_bits), training, spec
        )
        assign = dists.argmin(axis=1)
        cur = float(dists[np.arange(t_blocks), assign].mean()) / n
        trace.append(cur)
        iterations = it + 1
        new = codewords.copy()
        cell_cost = np.zeros(count)
        for c in range(count):
            members = assign == c
            if members.any():
                new[c] = _centroid(training[members], spec.p_exponent)
                cell_cost[c] = float(dists[members, c].sum())
        empty = [c for c in range(count) if not (assign == c).any()]
        if empty:
            splits.append(it)
            for c in empty:
                donor = int(np.argmax(cell_cost))
                new[c] = new[donor] + 1e-3 * rng.choice([-1.0, 1.0], size=n)
                cell_cost[donor] /= 2  # avoid splitting the same donor repeatedly
        codewords = np.clip(new, lo, hi)
        if prev < math.inf and prev - cur < budget.tol * max(prev, 1e-30):
            break
        prev = cur
    return Codebook(
        n=n,
        codewords=codewords,
        rate_bits=rate_bits,
        provenance=LloydProvenance(
            seed=int(seed),
            training_blocks=t_blocks,
            iterations=iterations,
            distortion_trace=tuple(trace),
            split_iterations=tuple(splits),
        ),
    )


def design_product_codebook(
    model: SourceModel,
    n: int,
    rate_R: float,
    spec: DistortionSpec,
    seed: int,
    budget: Optional[LloydBudget] = None,
) -> ProductCodebook:
    """Scalar Lloyd design replicated over the block (integer rates only)."""
    b = int(round(rate_R))
    if abs(rate_R - b) > 1e-9 or b < 1:
        raise ConfigError("product codebooks need an integer rate >= 1 bit per letter")
    levels = 1 << b
    if budget is None or budget.training_blocks is None:
        letters = min(200 * levels * max(n, 1), MAX_TRAIN_LETTERS)
        budget = LloydBudget(
            training_blocks=letters,
            max_iters=budget.max_iters if budget else 50,
            tol=budget.tol if budget else 1e-6,
        )
    base = lloyd_design(model, 1, float(b), spec, seed, budget)
    return ProductCodebook(n=n, base=base, bits_per_letter=b)


# ---------------------------------------------------------------------------
# quantizer mismatch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MismatchGap:
    lhs: float  # |D_P^(1/p) - D_Q^(1/p)| by Monte Carlo
    rhs: float  # 2^(1/p) d_max d_V(P, Q) by quadrature
    mc_sigma: float  # standard error of lhs


def _root_sigma(d: float, sigma: float, p: float) -> float:
    # one-sided finite differences stay defined near d = 0
    up = (d + sigma) ** (1 / p) - d ** (1 / p)
    dn = d ** (1 / p) - max(d - sigma, 0.0) ** (1 / p)
    return max(up, dn)


def mismatch_gap(
    cb: AnyCodebook,
    model_p: SourceModel,
    model_q: SourceModel,
    spec: DistortionSpec,
    mc_budget: int,
    seed: int,
) -> MismatchGap:
    """Monte Carlo check data for |D_P^(1/p) - D_Q^(1/p)| <= 2^(1/p) d_max d_V."""
    if model_p.family is not model_q.family and model_p.family != model_q.family:
        raise DomainError("mismatch comparison needs models from one family")
    p = spec.p_exponent

    def mc_distortion(model: SourceModel, sub: str):
        blocks = sample(model, derive_seed(seed, sub), mc_budget * cb.n).reshape(mc_budget, cb.n)
        _, repro = quantize_blocks(cb, blocks, spec)
        per_block = spec.rho(blocks, repro).mean(axis=1)
        return float(per_block.mean()), float(per_block.std(ddof=1) / math.sqrt(mc_budget))

    d_p, s_p = mc_distortion(model_p, "mismatch-P")
    d_q, s_q = mc_distortion(model_q, "mismatch-Q")
    lhs = abs(d_p ** (1 / p) - d_q ** (1 / p))
    sigma = math.hypot(_root_sigma(d_p, s_p, p), _root_sigma(d_q, s_q, p))
    quad = default_grid(model_p.family)
    dv = variational_distance(model_p.family, model_p.theta, model_q.theta, quad)
    rhs = 2 ** (1 / p) * spec.d_max * dv
    return MismatchGap(lhs=lhs, rhs=rhs, mc_sigma=sigma)


# ---------------------------------------------------------------------------
# reference-letter augmentation (unbounded-distortion extension)
# ---------------------------------------------------------------------------


def robust_reencode(
    x_block,
    base_reproduction,
    delta: float,
    ref_letter: float,
    threshold: float,
    spec: DistortionSpec,
) -> np.ndarray:
    """Replace letters whose distortion exceeds the threshold by the reference.

    At most floor(delta*n) substitutions are allowed; past that the whole
    block collapses to the all-reference codeword.
    """
    x = np.asarray(x_block, dtype=float)
    base = np.asarray(base_reproduction, dtype=float)
    if x.shape != base.shape:
        raise DomainError("block and reproduction lengths differ")
    violations = spec.rho(x, base) > threshold
    if violations.sum() <= math.floor(delta * x.size):
        return np.where(violations, ref_letter, base)
    return np.full_like(base, ref_letter)


@dataclass(frozen=True)
class AugmentedCodebook:
    """Base codebook plus all reference-letter substitutions of bounded weight."""

    base: AnyCodebook
    delta: float
    ref_letter: float
    threshold: float

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def max_substitutions(self) -> int:
        return math.floor(self.delta * self.n)

    @property
    def codeword_count(self) -> int:
        subs = sum(math.comb(self.n, i) for i in range(self.max_substitutions + 1))
        return self.base.codeword_count * subs + 1

    def codewords(self) -> np.ndarray:
        """Materialize the full augmented codebook (n <= 24 only)."""
        if self.n > MAX_AUGMENT_BLOCK:
            raise CapacityError(
                f"augmented codebooks materialize only up to n={MAX_AUGMENT_BLOCK}"
            )
        if isinstance(self.base, ProductCodebook):
            raise CapacityError("cannot materialize a virtual product base")
        out = []
        for cw in self.base.codewords:
            for i in range(self.max_substitutions + 1):
                for pos in combinations(range(self.n), i):
                    row = cw.copy()
                    row[list(pos)] = self.ref_letter
                    out.append(row)
        out.append(np.full(self.n, float(self.ref_letter)))
        return np.array(out)

    def contains(self, block) -> bool:
        """Procedural membership; never materializes the codebook."""
        block = np.asarray(block, dtype=float)
        if np.all(block == self.ref_letter):
            return True
        if isinstance(self.base, ProductCodebook):
            lv = self.base.levels
            ok_letter = np.isclose(block[:, None], lv[None, :]).any(axis=1)
            subs = ~ok_letter
            return bool(np.all(block[subs] == self.ref_letter) and subs.sum() <= self.max_substitutions)
        for cw in self.base.codewords:
            diff = block != cw
            if diff.sum() <= self.max_substitutions and np.all(block[diff] == self.ref_letter):
                return True
        return False

    def encode(self, x_block, spec: DistortionSpec) -> np.ndarray:
        """Base nearest-neighbor under the truncated distortion, then substitute."""
        x = np.asarray(x_block, dtype=float)
        _, repro = quantize_blocks(self.base, x[None, :], spec, truncate=self.threshold)
        return robust_reencode(x, repro[0], self.delta, self.ref_letter, self.threshold, spec)


def augment_codebook(
    base: AnyCodebook, delta: float, ref_letter: float, threshold: float
) -> AugmentedCodebook:
    return AugmentedCodebook(base=base, delta=delta, ref_letter=ref_letter, threshold=threshold)


# ---------------------------------------------------------------------------
# codebook file format
# ---------------------------------------------------------------------------


def write_codebook(path, cb: Codebook, spec: DistortionSpec) -> None:
    """UQVQ container: header, row-major float64 LE codewords, provenance footer."""
    if isinstance(cb, ProductCodebook):
        raise CapacityError("product codebooks are virtual and cannot be serialized")
    prov = cb.provenance or LloydProvenance(seed=0, training_blocks=0, iterations=0)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HIId", _VERSION, cb.n, cb.codeword_count, spec.p_exponent))
        fh.write(np.ascontiguousarray(cb.codewords, dtype="<f8").tobytes())
        fh.write(struct.pack("<QQ", prov.seed, prov.training_blocks))


def read_codebook(path) -> Tuple[Codebook, float]:
    """Parse a UQVQ file; returns (codebook, p_exponent)."""
    with open(path, "rb") as fh:
        data = fh.read()
    head = struct.calcsize("<HIId")
    if len(data) < 4 + head:
        raise FormatError("codebook file truncated")
    if data[:4] != _MAGIC:
        raise FormatError("bad codebook magic")
    version, n, count, p = struct.unpack_from("<HIId", data, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported codebook version {version}")
    if count < 1 or n < 1:
        raise FormatError("codebook file declares an empty codebook")
    body = count * n * 8
    expected = 4 + head + body + 16
    if len(data) != expected:
        raise FormatError(f"codebook file has {len(data)} bytes, expected {expected}")
    cw = np.frombuffer(data, dtype="<f8", count=count * n, offset=4 + head).reshape(count, n)
    seed, training = struct.unpack_from("<QQ", data, 4 + head + body)
    rate_bits = max(0, math.ceil(math.log2(count)))
    cb = Codebook(
        n=n,
        codewords=cw.copy(),
        rate_bits=rate_bits,
        provenance=LloydProvenance(seed=seed, training_blocks=training, iterations=0),
    )
    return cb, float(p)
