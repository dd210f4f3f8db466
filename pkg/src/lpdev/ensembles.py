"""Mean-zero, unit-variance sub-Gaussian entry laws and counter-based sampling.

Every random value in the package is a pure function of
``(master_seed, stream_id, flat_index)``: word ``k`` of a stream is the
``k``-th 64-bit output of a Philox4x64 generator keyed by the seed pair, so
any block of entries can be produced independently of every other block.
This is what makes parallel fills and chunked Monte Carlo loops reproducible
regardless of chunking or thread count.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate, optimize
from scipy.special import gamma as gamma_fn
from scipy.special import ndtri

KINDS = ("gaussian", "rademacher", "uniform_scaled", "two_point")

SQRT3 = math.sqrt(3.0)
PSI2_FLOOR = 1.0 / math.sqrt(math.log(2.0))

# Words generated per worker task; fixed so results never depend on threads.
CHUNK_WORDS = 1 << 20
# Default cap on entries in one materialised sample (float64 -> 8 bytes each).
MAX_ENTRIES = 150_000_000

_U64 = 1 << 64


class BudgetError(MemoryError):
    """Requested sample would exceed the configured memory budget."""


@dataclass(frozen=True)
class DistributionSpec:
    """An entry law with mean 0 and variance 1.

    ``two_point`` puts mass ``prob`` on ``a`` and ``1 - prob`` on ``b``;
    use :meth:`two_point` to build it, which solves the moment system.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    prob: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "two_point":
            mean = self.prob * self.a + (1 - self.prob) * self.b
            var = self.prob * self.a**2 + (1 - self.prob) * self.b**2
            if not (0 < self.prob < 1) or abs(mean) > 1e-12 or abs(var - 1) > 1e-12:
                raise ValueError(
                    f"two_point(a={self.a}, b={self.b}, prob={self.prob}) is not mean-zero/unit-variance"
                )

    @classmethod
    def gaussian(cls) -> "DistributionSpec":
        return cls("gaussian")

    @classmethod
    def rademacher(cls) -> "DistributionSpec":
        return cls("rademacher")

    @classmethod
    def uniform_scaled(cls) -> "DistributionSpec":
        """Uniform on [-sqrt 3, sqrt 3]."""
        return cls("uniform_scaled")

    @classmethod
    def two_point(cls, a: float, prob: float) -> "DistributionSpec":
        """Two-point law with P(X = a) = prob.

        The mean-zero condition fixes the second atom ``b = -prob*a/(1-prob)``;
        unit variance then requires ``a**2 = (1-prob)/prob``. Parameters that
        miss that constraint are rejected rather than renormalised.
        """
        a = float(a)
        prob = float(prob)
        if not (0.0 < prob < 1.0):
            raise ValueError(f"two_point prob must lie in (0, 1), got {prob}")
        b = -prob * a / (1.0 - prob)
        var = prob * a * a + (1.0 - prob) * b * b
        if not math.isclose(var, 1.0, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(
                f"two_point(a={a}, prob={prob}) has variance {var:.6g}; "
                f"unit variance needs a = {math.sqrt((1 - prob) / prob):.6g}"
            )
        # snap to the exact solution so the dataclass check is tight
        a = math.copysign(math.sqrt((1.0 - prob) / prob), a)
        b = -prob * a / (1.0 - prob)
        return cls("two_point", a=a, b=b, prob=prob)

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse ``gaussian``, ``rademacher``, ``uniform_scaled`` or ``two_point(a,prob)``."""
        text = text.strip().lower()
        if text in ("gaussian", "rademacher", "uniform_scaled"):
            return cls(text)
        if text == "uniform":
            return cls("uniform_scaled")
        match = re.fullmatch(r"two_point[(:]\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)?", text)
        if match:
            return cls.two_point(float(match.group(1)), float(match.group(2)))
        raise ValueError(f"cannot parse distribution {text!r}")

    @property
    def name(self) -> str:
        if self.kind == "two_point":
            return f"two_point({self.a:.12g},{self.prob:.12g})"
        return self.kind

    def lp_moment(self, p: float) -> float:
        """E|X|^p."""
        if self.kind == "gaussian":
            return 2 ** (p / 2) * gamma_fn((p + 1) / 2) / math.sqrt(math.pi)
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "uniform_scaled":
            return SQRT3**p / (p + 1)
        return self.prob * abs(self.a) ** p + (1 - self.prob) * abs(self.b) ** p

    def lp_norm(self, p: float) -> float:
        """||X||_{L^p}."""
        return self.lp_moment(p) ** (1.0 / p)

    def transform(self, words: np.ndarray) -> np.ndarray:
        """Map raw uint64 words to draws, one word per draw."""
        if self.kind == "rademacher":
            return 1.0 - 2.0 * (words >> np.uint64(63)).astype(np.float64)
        u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0**-53)
        if self.kind == "gaussian":
            return ndtri(u)
        if self.kind == "uniform_scaled":
            return SQRT3 * (2.0 * u - 1.0)
        return np.where(u < self.prob, self.a, self.b)


CATALOG = (
    DistributionSpec.gaussian(),
    DistributionSpec.rademacher(),
    DistributionSpec.uniform_scaled(),
    DistributionSpec.two_point(3.0, 0.1),
)


def _solve_psi2(mgf_minus_two, lo: float, hi: float) -> float:
    while mgf_minus_two(hi) > 0:
        hi *= 2
    while mgf_minus_two(lo) <= 0:
        lo /= 2
    return optimize.brentq(mgf_minus_two, lo, hi, xtol=1e-14, rtol=1e-13)


def theoretical_psi2(spec: DistributionSpec) -> Optional[float]:
    """Exact psi_2 norm of one entry, or None when no closed form is coded."""
    if spec.kind == "rademacher":
        return PSI2_FLOOR
    if spec.kind == "gaussian":
        # E exp(g^2/t^2) = (1 - 2/t^2)^{-1/2} = 2
        return math.sqrt(8.0 / 3.0)
    if spec.kind == "uniform_scaled":

        def f(t):
            val, _ = integrate.quad(lambda u: math.exp(u * u / (t * t)), 0.0, SQRT3, epsabs=0, epsrel=1e-13)
            return val / SQRT3 - 2.0

        return _solve_psi2(f, 1.0, 2.0)
    if spec.kind == "two_point":

        def g(t):
            return spec.prob * math.exp(spec.a**2 / t**2) + (1 - spec.prob) * math.exp(spec.b**2 / t**2) - 2.0

        return _solve_psi2(g, 1.0, 4.0)
    return None


def derive_stream(*parts) -> int:
    """Stable 64-bit stream id from arbitrary labels (ints/strings)."""
    norm = []
    for part in parts:
        if isinstance(part, (int, np.integer)):
            norm.append(str(int(part)))
        elif isinstance(part, (float, np.floating)):
            norm.append(float(part).hex())
        else:
            norm.append(str(part))
    digest = hashlib.blake2b("\x1f".join(norm).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class SeededSampler:
    spec: DistributionSpec
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not (0 <= int(value) < _U64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")

    @property
    def key(self) -> int:
        return int(self.master_seed) | (int(self.stream_id) << 64)

    def child(self, *labels) -> "SeededSampler":
        """Independent stream for a sub-task (same seed, derived stream id)."""
        return SeededSampler(self.spec, self.master_seed, derive_stream(self.stream_id, *labels))

    def with_spec(self, spec: DistributionSpec) -> "SeededSampler":
        return SeededSampler(spec, self.master_seed, self.stream_id)

    def words(self, start: int, count: int) -> np.ndarray:
        """Raw words ``start .. start+count-1`` of this stream."""
        block, lane = divmod(int(start), 4)
        bg = np.random.Philox(key=self.key, counter=block)
        raw = bg.random_raw(count + lane)
        return raw[lane:]

    def draw(self, start: int, count: int) -> np.ndarray:
        return self.spec.transform(self.words(start, count))

    def array(self, shape, offset: int = 0, threads: int = 1, budget: int = MAX_ENTRIES) -> np.ndarray:
        """Fill an array whose flat (C-order) index ``k`` holds draw ``offset + k``."""
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        total = math.prod(shape)
        if total > budget:
            raise BudgetError(f"sample of {total} entries exceeds budget of {budget}")
        out = np.empty(total, dtype=np.float64)
        starts = range(0, total, CHUNK_WORDS)

        def fill(s):
            e = min(s + CHUNK_WORDS, total)
            out[s:e] = self.draw(offset + s, e - s)

        if threads > 1 and total > CHUNK_WORDS:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(fill, starts))
        else:
            for s in starts:
                fill(s)
        return out.reshape(shape)


@dataclass
class MatrixSample:
    entries: np.ndarray
    spec: Optional[DistributionSpec] = None
    master_seed: Optional[int] = None
    stream_id: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2:
            raise ValueError("matrix entries must be two-dimensional")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("matrix entries must be finite")

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def header(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "spec": self.spec.name if self.spec else None,
            "seed": self.master_seed,
            "stream": self.stream_id,
        }


def sample_matrix(sampler: SeededSampler, m: int, n: int, threads: int = 1, budget: int = MAX_ENTRIES) -> MatrixSample:
    """m x n matrix; entry (i, j) is draw ``i*n + j`` of the sampler's stream."""
    if m < 1 or n < 1:
        raise ValueError(f"matrix dimensions must be positive, got {m}x{n}")
    entries = sampler.array((m, n), threads=threads, budget=budget)
    return MatrixSample(entries, sampler.spec, sampler.master_seed, sampler.stream_id)


def sample_vector(sampler: SeededSampler, m: int, threads: int = 1, budget: int = MAX_ENTRIES) -> np.ndarray:
    if m < 1:
        raise ValueError(f"vector length must be positive, got {m}")
    return sampler.array((m,), threads=threads, budget=budget)


# --------------------------------------------------------------------- I/O

_MAGIC = b"LPDEVMAT"


def save_matrix_csv(path, sample: MatrixSample) -> None:
    h = sample.header()
    line = "# " + ";".join(f"{k}={v}" for k, v in h.items())
    np.savetxt(path, sample.entries, delimiter=",", header=line[2:], comments="# ", fmt="%.17g")


def _parse_header_value(v: str):
    if v == "None":
        return None
    try:
        return int(v)
    except ValueError:
        return v


def load_matrix_csv(path) -> MatrixSample:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing matrix header line")
    header = dict(item.split("=", 1) for item in first[1:].strip().split(";"))
    header = {k: _parse_header_value(v) for k, v in header.items()}
    entries = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if entries.shape != (header["m"], header["n"]):
        raise ValueError(f"{path}: header says {header['m']}x{header['n']}, data is {entries.shape}")
    spec = DistributionSpec.parse(header["spec"]) if header.get("spec") else None
    return MatrixSample(entries, spec, header.get("seed"), header.get("stream"))


def save_matrix_binary(path, sample: MatrixSample) -> None:
    """Magic, uint32 header length, JSON header, then row-major little-endian float64."""
    header = json.dumps(sample.header(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(sample.entries.astype("<f8").tobytes(order="C"))


def load_matrix_binary(path) -> MatrixSample:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not an lpdev matrix file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        data = np.frombuffer(fh.read(), dtype="<f8")
    entries = data.reshape(header["m"], header["n"]).astype(np.float64)
    spec = DistributionSpec.parse(header["spec"]) if header.get("spec") else None
    return MatrixSample(entries, spec, header.get("seed"), header.get("stream"))


def map_chunks(fn, items, threads: int = 1) -> list:
    """Apply ``fn`` to each work item, optionally on a thread pool; order preserved."""
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]
