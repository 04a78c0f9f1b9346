"""OAM mode space, Alice's phase-encoded states and Bob's two-mode projectors.

States live on integer OAM labels. For even ``L`` the band skips ``l = 0``;
for odd ``L`` it is centred on zero. Positions inside the band are called
*slots* (0..L-1, ascending label order).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from .errors import (
    AliasingError,
    DimensionMismatchError,
    InvalidDimensionError,
    InvalidSettingError,
    OutOfBandError,
)

NORM_TOL = 1e-12
DEFAULT_GRID = 1024


@dataclass(frozen=True)
class ModeIndexSet:
    L: int
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.labels) != self.L:
            raise InvalidDimensionError(f"expected {self.L} labels, got {len(self.labels)}")
        if any(b <= a for a, b in zip(self.labels, self.labels[1:])):
            raise InvalidDimensionError("labels must be strictly increasing")

    def slot(self, label: int) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise OutOfBandError(f"label {label} is not in the L={self.L} band") from None

    def __contains__(self, label) -> bool:
        return label in self.labels

    def slot_pairs(self) -> list[tuple[int, int]]:
        """All unordered slot pairs ``(i, j)``, ``i < j``, in lexicographic order."""
        return list(itertools.combinations(range(self.L), 2))

    def label_pairs(self) -> list[tuple[int, int]]:
        return [(self.labels[i], self.labels[j]) for i, j in self.slot_pairs()]

    def window(self, guard: int = 2) -> tuple[int, ...]:
        """The band extended outward by ``guard`` labels on each side."""
        lo, hi = self.labels[0], self.labels[-1]
        below = tuple(range(lo - guard, lo))
        above = tuple(range(hi + 1, hi + guard + 1))
        return below + self.labels + above


def make_index_set(L: int) -> ModeIndexSet:
    if not isinstance(L, (int, np.integer)) or isinstance(L, bool) or L < 2:
        raise InvalidDimensionError(f"dimension L must be an integer >= 2, got {L!r}")
    L = int(L)
    if L % 2 == 0:
        half = L // 2
        labels = tuple(l for l in range(-half, half + 1) if l != 0)
    else:
        half = (L - 1) // 2
        labels = tuple(range(-half, half + 1))
    return ModeIndexSet(L, labels)


@dataclass(frozen=True)
class PhasePattern:
    """Alice's bit string; ``bits[k]`` is the sign bit of the mode in slot ``k``."""

    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"phase bits must be 0 or 1: {self.bits}")

    @property
    def L(self) -> int:
        return len(self.bits)

    @property
    def is_canonical(self) -> bool:
        return self.bits[0] == 0

    def canonical(self) -> PhasePattern:
        """Global-phase representative with ``bits[0] == 0``."""
        if self.is_canonical:
            return self
        return PhasePattern(tuple(1 - b for b in self.bits))

    @property
    def bitstring(self) -> str:
        return "".join(map(str, self.bits))

    @classmethod
    def from_bitstring(cls, text: str) -> PhasePattern:
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_index(cls, index: int, L: int) -> PhasePattern:
        """Canonical pattern whose L-1 free bits spell ``index`` (MSB first)."""
        if not 0 <= index < 2 ** (L - 1):
            raise ValueError(f"index {index} out of range for L={L}")
        return cls.from_bitstring("0" + format(index, f"0{L - 1}b") if L > 1 else "0")

    @property
    def index(self) -> int:
        """Inverse of :meth:`from_index` (on the canonical form)."""
        return int(self.canonical().bitstring[1:] or "0", 2)

    def parity(self, slot_a: int, slot_b: int) -> int:
        return self.bits[slot_a] ^ self.bits[slot_b]


def canonical_patterns(L: int) -> Iterator[PhasePattern]:
    """All 2**(L-1) canonical patterns in ascending index order."""
    for i in range(2 ** (L - 1)):
        yield PhasePattern.from_index(i, L)


@dataclass(frozen=True)
class StateVector:
    """Sparse amplitudes over OAM labels.

    ``subnormalized`` marks states that lost weight in a lossy channel.
    """

    amplitudes: Mapping[int, complex]
    subnormalized: bool = False

    def __post_init__(self):
        amps = {int(k): complex(v) for k, v in self.amplitudes.items()}
        object.__setattr__(self, "amplitudes", amps)
        if not self.subnormalized and abs(self.norm2() - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {self.norm2()!r})")

    def __getitem__(self, label: int) -> complex:
        return self.amplitudes.get(label, 0j)

    def norm2(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self.amplitudes.values())

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(l for l, a in self.amplitudes.items() if a != 0))

    def inner(self, other: StateVector) -> complex:
        """<self|other>."""
        return sum((self[l].conjugate() * a for l, a in other.amplitudes.items()), 0j)

    def to_array(self, labels) -> np.ndarray:
        return np.array([self[l] for l in labels], dtype=complex)

    @classmethod
    def from_array(cls, labels, values, subnormalized=False) -> StateVector:
        return cls(dict(zip(labels, values)), subnormalized=subnormalized)


def prepare_state(s: PhasePattern, idx: ModeIndexSet) -> StateVector:
    if s.L != idx.L:
        raise DimensionMismatchError(f"pattern has {s.L} bits but L={idx.L}")
    amp = 1 / math.sqrt(idx.L)
    return StateVector({l: (-amp if b else amp) for l, b in zip(idx.labels, s.bits)})


class Sign(enum.IntEnum):
    PLUS = 1
    MINUS = -1

    @property
    def symbol(self) -> str:
        return "+" if self is Sign.PLUS else "-"


@dataclass(frozen=True)
class ProjectorSetting:
    """Bob's projector (|m> + sign |m - r>)/sqrt(2) with ``r = m - m_minus_r``."""

    m: int
    m_minus_r: int
    sign: Sign = Sign.PLUS

    def __post_init__(self):
        object.__setattr__(self, "sign", Sign(self.sign))
        if self.m == self.m_minus_r:
            raise InvalidSettingError(f"projector needs two distinct modes, got m = m-r = {self.m}")

    @property
    def r(self) -> int:
        return self.m - self.m_minus_r

    @property
    def pair(self) -> frozenset[int]:
        return frozenset((self.m, self.m_minus_r))

    def with_sign(self, sign: Sign) -> ProjectorSetting:
        return ProjectorSetting(self.m, self.m_minus_r, sign)

    def validate(self, idx: ModeIndexSet) -> None:
        for label in (self.m, self.m_minus_r):
            if label not in idx:
                raise OutOfBandError(f"label {label} is not in the L={idx.L} band")


def make_projector(setting: ProjectorSetting, idx: ModeIndexSet | None = None) -> StateVector:
    if idx is not None:
        setting.validate(idx)
    amp = 1 / math.sqrt(2)
    return StateVector({setting.m: amp, setting.m_minus_r: int(setting.sign) * amp})


def all_settings(idx: ModeIndexSet) -> list[ProjectorSetting]:
    """One plus-branch setting per unordered pair, ordered by slot pair.

    ``m`` is the higher-slot label so ``r > 0``.
    """
    return [ProjectorSetting(hi, lo, Sign.PLUS) for lo, hi in idx.label_pairs()]


def detection_probability(psi: StateVector, proj: StateVector) -> float:
    p = abs(proj.inner(psi)) ** 2
    return min(max(p, 0.0), 1.0)


def transmission_function(setting: ProjectorSetting) -> Callable[[np.ndarray], np.ndarray]:
    """Complex transmission exp(-i m phi) (1 + sign exp(i r phi)) / sqrt(2) of Bob's element."""
    m, r, sigma = setting.m, setting.r, int(setting.sign)

    def t(phi):
        phi = np.asarray(phi, dtype=float)
        return np.exp(-1j * m * phi) * (1 + sigma * np.exp(1j * r * phi)) / math.sqrt(2)

    return t


@dataclass(frozen=True)
class AzimuthalGrid:
    N: int = DEFAULT_GRID
    phi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"grid needs at least one sample, got N={self.N}")
        object.__setattr__(self, "phi", 2 * np.pi * np.arange(self.N) / self.N)

    @staticmethod
    def min_samples(max_abs_label: int) -> int:
        return 4 * max_abs_label + 4

    def check(self, max_abs_label: int) -> None:
        need = self.min_samples(max_abs_label)
        if self.N < need:
            raise AliasingError(f"N={self.N} samples alias harmonics up to |l|={max_abs_label}; need N >= {need}")


def field_profile(psi: StateVector, phi: np.ndarray) -> np.ndarray:
    """psi(phi) = sum_l a_l exp(i l phi)."""
    labels = np.array(list(psi.amplitudes), dtype=float)
    amps = np.array(list(psi.amplitudes.values()), dtype=complex)
    if labels.size == 0:
        return np.zeros_like(phi, dtype=complex)
    return np.exp(1j * np.outer(phi, labels)) @ amps


def azimuthal_overlap(psi: StateVector, setting: ProjectorSetting, grid: AzimuthalGrid | None = None) -> float:
    """Detection probability from the hologram picture, by quadrature.

    The field is multiplied by Bob's transmission and coupled into a single-mode
    fibre, which keeps only the l = 0 component:
    ``|(1/2pi) \\int psi(phi) t(phi) dphi|^2``. On a uniform grid the trapezoid
    rule is an exact discrete Fourier coefficient below Nyquist.
    """
    grid = grid or AzimuthalGrid()
    labels = list(psi.amplitudes) + [setting.m, setting.m_minus_r]
    grid.check(max(abs(l) for l in labels))
    integrand = field_profile(psi, grid.phi) * transmission_function(setting)(grid.phi)
    coupled = integrand.mean()
    return float(min(abs(coupled) ** 2, 1.0))


def generation_phase_profile(s: PhasePattern, idx: ModeIndexSet, grid: AzimuthalGrid | None = None) -> np.ndarray:
    """Azimuthal phase of Alice's superposition, sampled on ``grid``.

    Samples where the superposition vanishes (|sum| < 1e-12) get phase 0.
    """
    grid = grid or AzimuthalGrid()
    if s.L != idx.L:
        raise DimensionMismatchError(f"pattern has {s.L} bits but L={idx.L}")
    signs = np.where(np.array(s.bits) == 1, -1.0, 1.0)
    total = np.exp(1j * np.outer(grid.phi, np.array(idx.labels, dtype=float))) @ signs
    phase = np.angle(total)
    phase[np.abs(total) < 1e-12] = 0.0
    return phase
