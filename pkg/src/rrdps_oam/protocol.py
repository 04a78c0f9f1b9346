"""Monte Carlo RRDPS key exchange: preparation, channel, detection, sifting.

Each round draws from its own counter-based block of random words, so a
session is reproducible bit-for-bit no matter how rounds are chunked or run
in parallel. Word layout per round:

    0  Alice's pattern (low L-1 bits are the free phase bits)
    1  Bob's mode-pair choice
    2  detection uniform
    3  sifting coin
    4+ channel variates
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from . import rng as rngmod
from .channel import GUARD, ChannelModel, combined_background, transform
from .errors import NotSiftableError, ProbabilityOverflowError
from .matrix import pair_columns, state_amplitudes
from .modes import (
    ModeIndexSet,
    PhasePattern,
    ProjectorSetting,
    Sign,
    StateVector,
    detection_probability,
    make_index_set,
    make_projector,
)

SIFT_EFFICIENCY = 0.5
W_PATTERN, W_PAIR, W_DETECT, W_SIFT, W_CHANNEL = range(5)
DEFAULT_CHUNK = 1 << 15


class Outcome(enum.IntEnum):
    NO_CLICK = 0
    CLICK_PLUS = 1
    CLICK_MINUS = 2
    BACKGROUND_CLICK = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def is_click(self) -> bool:
        return self is not Outcome.NO_CLICK


@dataclass(frozen=True)
class RoundRecord:
    round_id: int
    s: PhasePattern
    setting: ProjectorSetting | None
    outcome: Outcome
    alice_bit: int | None = None
    bob_bit: int | None = None
    sifted: bool = False

    def __post_init__(self):
        if self.sifted and (self.alice_bit is None or self.bob_bit is None or not self.outcome.is_click):
            raise ValueError("a sifted round needs both bits and a click")


@dataclass(frozen=True)
class SiftedKeyPair:
    alice_key: np.ndarray
    bob_key: np.ndarray

    def __post_init__(self):
        if len(self.alice_key) != len(self.bob_key):
            raise ValueError("sifted keys differ in length")

    def __len__(self):
        return len(self.alice_key)

    @property
    def errors(self) -> int:
        return int(np.count_nonzero(self.alice_key != self.bob_key))

    @property
    def defined(self) -> bool:
        return len(self) > 0

    @property
    def qber(self) -> float:
        """Error fraction; NaN for an empty key."""
        return self.errors / len(self) if len(self) else math.nan

    @property
    def qber_stderr(self) -> float:
        if not len(self):
            return math.nan
        q = self.qber
        return math.sqrt(q * (1 - q) / len(self))


# decision helpers shared by the scalar API and the batch engine

def pattern_indices(words: np.ndarray, L: int) -> np.ndarray:
    mask = np.uint64((1 << (L - 1)) - 1)
    return np.asarray(words, dtype=np.uint64) & mask


def pair_indices(u: np.ndarray, n_pairs: int) -> np.ndarray:
    return np.minimum((np.asarray(u) * n_pairs).astype(np.int64), n_pairs - 1)


def decide_outcomes(u, p_plus, p_minus, p_bg):
    """Map detection uniforms to (outcome, fired sign) arrays."""
    u = np.asarray(u, dtype=float)
    p_plus = np.asarray(p_plus, dtype=float)
    p_minus = np.asarray(p_minus, dtype=float)
    click = p_plus + p_minus
    if np.any(click > 1 + 1e-9):
        raise ProbabilityOverflowError(f"click probability {float(np.max(click))!r} exceeds 1")
    spill = p_bg * np.clip(1 - click, 0, None) / 2
    outcome = np.full(u.shape, int(Outcome.NO_CLICK), dtype=np.int8)
    sign = np.ones(u.shape, dtype=np.int8)
    edges = [(p_plus, Outcome.CLICK_PLUS, 1), (p_minus, Outcome.CLICK_MINUS, -1),
             (spill, Outcome.BACKGROUND_CLICK, 1), (spill, Outcome.BACKGROUND_CLICK, -1)]
    lo = np.zeros(u.shape)
    for width, code, sg in edges:
        hit = (u >= lo) & (u < lo + width)
        outcome[hit] = int(code)
        sign[hit] = sg
        lo = lo + width
    return outcome, sign


# scalar protocol steps

def alice_prepare(L: int, rng: np.random.Generator) -> PhasePattern:
    """Uniform canonical pattern: bits[0] = 0, the rest fair coins."""
    word = rng.integers(0, 2**64, dtype=np.uint64, endpoint=False)
    return PhasePattern.from_index(int(pattern_indices(word, L)), L)


def bob_choose_setting(rng: np.random.Generator, idx: ModeIndexSet) -> tuple[ProjectorSetting, ProjectorSetting]:
    """Uniform mode pair; returns its (plus, minus) projectors."""
    pairs = idx.label_pairs()
    lo, hi = pairs[int(pair_indices(rng.random(), len(pairs)))]
    plus = ProjectorSetting(hi, lo, Sign.PLUS)
    return plus, plus.with_sign(Sign.MINUS)


def detect(psi_out: StateVector, setting: ProjectorSetting, p_bg: float, rng: np.random.Generator,
           survival: float = 1.0) -> tuple[Outcome, Sign]:
    """Sample Bob's detector for one round; returns the outcome and the branch that fired."""
    p_plus = detection_probability(psi_out, make_projector(setting.with_sign(Sign.PLUS))) * survival
    p_minus = detection_probability(psi_out, make_projector(setting.with_sign(Sign.MINUS))) * survival
    outcome, sign = decide_outcomes(np.array([rng.random()]), p_plus, p_minus, p_bg)
    return Outcome(int(outcome[0])), Sign(int(sign[0]))


def sift(record: RoundRecord, rng: np.random.Generator | None = None, keep: bool | None = None,
         idx: ModeIndexSet | None = None) -> RoundRecord:
    """Fill in both key bits and decide whether the round is kept.

    Bob's bit is 0 for a plus-branch click and 1 for minus. The round is kept
    when both modes are in band and the 1/2-efficiency coin (``keep``, or a
    draw from ``rng``) says so.
    """
    if not record.outcome.is_click or record.setting is None:
        raise NotSiftableError(f"round {record.round_id} has no click to sift")
    idx = idx or make_index_set(record.s.L)
    st = record.setting
    in_band = st.m in idx and st.m_minus_r in idx
    alice_bit = record.s.parity(idx.slot(st.m), idx.slot(st.m_minus_r)) if in_band else None
    bob_bit = 0 if st.sign is Sign.PLUS else 1
    if keep is None:
        if rng is None:
            raise ValueError("sift needs either a keep decision or a random generator")
        keep = rng.random() < SIFT_EFFICIENCY
    return replace(record, alice_bit=alice_bit, bob_bit=bob_bit, sifted=bool(keep and in_band))


# batch engine

@dataclass
class Transcript:
    """Columnar per-round log; rows are in round order."""

    L: int
    round_id: np.ndarray
    pattern: np.ndarray
    pair: np.ndarray
    outcome: np.ndarray
    sign: np.ndarray
    alice_bit: np.ndarray
    bob_bit: np.ndarray
    sifted: np.ndarray

    def __len__(self):
        return len(self.round_id)

    def records(self) -> Iterator[RoundRecord]:
        idx = make_index_set(self.L)
        pairs = idx.label_pairs()
        for k in range(len(self)):
            lo, hi = pairs[self.pair[k]]
            outcome = Outcome(int(self.outcome[k]))
            click = outcome.is_click
            yield RoundRecord(
                round_id=int(self.round_id[k]),
                s=PhasePattern.from_index(int(self.pattern[k]), self.L),
                setting=ProjectorSetting(hi, lo, Sign(int(self.sign[k]))),
                outcome=outcome,
                alice_bit=int(self.alice_bit[k]) if click else None,
                bob_bit=int(self.bob_bit[k]) if click else None,
                sifted=bool(self.sifted[k]),
            )

    def to_text(self) -> str:
        """One ``key=value`` line per round."""
        idx = make_index_set(self.L)
        pairs = idx.label_pairs()
        lines = []
        for k in range(len(self)):
            lo, hi = pairs[self.pair[k]]
            outcome = Outcome(int(self.outcome[k]))
            click = outcome.is_click
            bits = PhasePattern.from_index(int(self.pattern[k]), self.L).bitstring
            lines.append(
                f"round_id={int(self.round_id[k])} s={bits} m={hi} m_minus_r={lo} "
                f"sign={'+' if self.sign[k] > 0 else '-'} outcome={outcome.label} "
                f"alice_bit={int(self.alice_bit[k]) if click else '-'} "
                f"bob_bit={int(self.bob_bit[k]) if click else '-'} sifted={int(self.sifted[k])}"
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def concat(cls, parts: list[Transcript]) -> Transcript:
        fields = ("round_id", "pattern", "pair", "outcome", "sign", "alice_bit", "bob_bit", "sifted")
        return cls(parts[0].L, **{f: np.concatenate([getattr(p, f) for p in parts]) for f in fields})

    def key_pair(self) -> SiftedKeyPair:
        keep = self.sifted.astype(bool)
        return SiftedKeyPair(self.alice_bit[keep].copy(), self.bob_bit[keep].copy())


def _run_chunk(L: int, ch: ChannelModel, p_bg: float, seed: int, start: int, stop: int) -> Transcript:
    idx = make_index_set(L)
    slot_pairs = idx.slot_pairs()
    n_pairs = len(slot_pairs)
    k = ch.n_variates(L)
    words = rngmod.round_words(seed, start, stop, rngmod.block_width(W_CHANNEL + k))
    u = rngmod.to_unit(words)

    pattern = pattern_indices(words[:, W_PATTERN], L)
    pair = pair_indices(u[:, W_PAIR], n_pairs)
    sa = np.array([p[0] for p in slot_pairs])[pair]
    sb = np.array([p[1] for p in slot_pairs])[pair]
    rows = np.arange(stop - start)

    if ch.kind == "empirical":
        plus, minus = _empirical_probs(ch, pattern, pair, idx)
    else:
        amps = state_amplitudes(pattern, idx)
        out, survival = transform(ch, amps, idx.window(GUARD), u[:, W_CHANNEL:W_CHANNEL + k] if k else None)
        ca, cb = pair_columns(np.stack([sa, sb], axis=1))
        a, b = out[rows, ca], out[rows, cb]
        plus = np.abs(a + b) ** 2 / 2 * survival
        minus = np.abs(a - b) ** 2 / 2 * survival

    outcome, sign = decide_outcomes(u[:, W_DETECT], plus, minus, combined_background(p_bg, ch.background))
    free = (pattern[:, None] >> np.arange(L - 2, -1, -1, dtype=np.uint64)[None, :]) & np.uint64(1)
    bits = np.concatenate([np.zeros((len(rows), 1), dtype=np.uint64), free], axis=1).astype(np.int8)
    alice_bit = bits[rows, sa] ^ bits[rows, sb]
    bob_bit = np.where(sign > 0, 0, 1).astype(np.int8)
    click = outcome != Outcome.NO_CLICK
    sifted = click & (u[:, W_SIFT] < SIFT_EFFICIENCY)
    return Transcript(L, np.arange(start, stop, dtype=np.int64), pattern, pair, outcome, sign,
                      alice_bit, bob_bit, sifted)


def _empirical_probs(ch, pattern, pair, idx):
    pairs = idx.label_pairs()
    plus = np.empty(len(pattern))
    minus = np.empty(len(pattern))
    for k, (s, p) in enumerate(zip(pattern, pair)):
        label = PhasePattern.from_index(int(s), idx.L).bitstring
        plus[k], minus[k] = ch.matrix.lookup(label, pairs[p])
    return plus, minus


@dataclass(frozen=True)
class Session:
    L: int
    n_rounds: int
    channel: str
    p_bg: float
    seed: int
    transcript: Transcript
    key: SiftedKeyPair

    @property
    def qber(self) -> float:
        return self.key.qber

    @property
    def sifted_fraction(self) -> float:
        return len(self.key) / self.n_rounds


def run_session(L: int, n_rounds: int, ch: ChannelModel | None = None, p_bg: float = 0.0, seed: int = 0,
                chunk: int = DEFAULT_CHUNK, workers: int = 1) -> Session:
    """Run ``n_rounds`` independent rounds and sift the keys.

    ``chunk`` and ``workers`` only change scheduling, never the result.
    """
    if n_rounds < 1:
        raise ValueError(f"n_rounds must be >= 1, got {n_rounds}")
    if not 0 <= p_bg <= 1:
        raise ValueError(f"p_bg must lie in [0, 1], got {p_bg}")
    make_index_set(L)
    ch = ch or ChannelModel.identity()
    if ch.kind == "empirical" and ch.matrix.L != L:
        raise ValueError(f"empirical matrix is for L={ch.matrix.L}, not L={L}")
    bounds = [(a, min(a + chunk, n_rounds)) for a in range(0, n_rounds, chunk)]
    run = lambda ab: _run_chunk(L, ch, p_bg, seed, *ab)
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(ab) for ab in bounds]
    transcript = Transcript.concat(parts)
    key = transcript.key_pair()
    if not key.defined:
        warnings.warn(f"no sifted rounds in {n_rounds} rounds; QBER is undefined", RuntimeWarning, stacklevel=2)
    return Session(L, n_rounds, ch.describe(), p_bg, seed, transcript, key)
