"""Probability-of-detection matrices over Alice's states and Bob's settings.

Rows are canonical phase patterns in ascending index order; columns are mode
pairs sorted by slot indices. A full matrix stores two dense 2-D arrays (plus
branch, minus branch). A sampled matrix stores one entry per sampled cell:
``state_labels[k]``, ``setting_labels[k]``, ``probs_plus[k]``, ``probs_minus[k]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .channel import GUARD, ChannelModel, mean_click_probabilities
from .errors import ResourceLimitError
from .modes import ModeIndexSet, PhasePattern, make_index_set

FORMAT_VERSION = 1
MAX_FULL_L = 12
SIG_DIGITS = 12


@dataclass
class DetectionMatrix:
    L: int
    state_labels: list[str]
    setting_labels: list[tuple[int, int]]
    probs_plus: np.ndarray
    probs_minus: np.ndarray
    sampled: bool = False
    n_samples: int | None = None
    channel: str = "identity"
    seed: int | None = None

    def __post_init__(self):
        self.probs_plus = np.asarray(self.probs_plus, dtype=float)
        self.probs_minus = np.asarray(self.probs_minus, dtype=float)
        self.setting_labels = [tuple(map(int, p)) for p in self.setting_labels]
        if self.probs_plus.shape != self.probs_minus.shape:
            raise ValueError("plus and minus arrays differ in shape")
        if self.sampled:
            n = len(self.state_labels)
            if len(self.setting_labels) != n or self.probs_plus.shape != (n,):
                raise ValueError("sampled matrix needs one state, setting and probability per cell")
        elif self.probs_plus.shape != (len(self.state_labels), len(self.setting_labels)):
            raise ValueError("full matrix shape does not match its labels")
        total = self.probs_plus + self.probs_minus
        if np.any(self.probs_plus < 0) or np.any(self.probs_minus < 0) or np.any(total > 1 + 1e-9):
            raise ValueError("detection probabilities out of range")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.probs_plus.shape

    @property
    def index_set(self) -> ModeIndexSet:
        return make_index_set(self.L)

    def cells(self):
        """Yield ``(state_label, setting_label, p_plus, p_minus)`` for every stored cell."""
        if self.sampled:
            yield from zip(self.state_labels, self.setting_labels, self.probs_plus, self.probs_minus)
            return
        for i, s in enumerate(self.state_labels):
            for j, pair in enumerate(self.setting_labels):
                yield s, pair, self.probs_plus[i, j], self.probs_minus[i, j]

    def lookup(self, state_label: str, pair: tuple[int, int]) -> tuple[float, float]:
        """Click probabilities for one cell (``pair`` in either order)."""
        key = self._cell_index().get((state_label, frozenset(pair)))
        if key is None:
            raise KeyError(f"cell ({state_label}, {pair}) not in matrix")
        return float(self.probs_plus[key]), float(self.probs_minus[key])

    def _cell_index(self):
        cache = self.__dict__.get("_index")
        if cache is None:
            if self.sampled:
                cache = {(s, frozenset(p)): k for k, (s, p) in enumerate(zip(self.state_labels, self.setting_labels))}
            else:
                cache = {(s, frozenset(p)): (i, j) for i, s in enumerate(self.state_labels)
                         for j, p in enumerate(self.setting_labels)}
            self.__dict__["_index"] = cache
        return cache

    def swapped(self) -> DetectionMatrix:
        """Same matrix with the two sign branches exchanged."""
        return DetectionMatrix(self.L, list(self.state_labels), list(self.setting_labels), self.probs_minus.copy(),
                               self.probs_plus.copy(), self.sampled, self.n_samples, self.channel, self.seed)

    # serialization
    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "L": self.L,
            "channel": self.channel,
            "layout": "cells" if self.sampled else "dense",
            "state_labels": list(self.state_labels),
            "setting_labels": [list(p) for p in self.setting_labels],
            "probs_plus": _round(self.probs_plus),
            "probs_minus": _round(self.probs_minus),
            "sampled": self.sampled,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> DetectionMatrix:
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported matrix format_version {doc.get('format_version')!r}")
        return cls(
            L=int(doc["L"]),
            state_labels=list(doc["state_labels"]),
            setting_labels=[tuple(p) for p in doc["setting_labels"]],
            probs_plus=np.array(doc["probs_plus"], dtype=float),
            probs_minus=np.array(doc["probs_minus"], dtype=float),
            sampled=bool(doc["sampled"]),
            n_samples=doc.get("n_samples"),
            channel=doc.get("channel", "unknown"),
            seed=doc.get("seed"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> DetectionMatrix:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _round(a: np.ndarray):
    return np.vectorize(lambda x: float(f"{x:.{SIG_DIGITS}g}"), otypes=[float])(a).tolist() if a.size else a.tolist()


def state_amplitudes(indices, idx: ModeIndexSet) -> np.ndarray:
    """Amplitude rows over the guard window for canonical pattern indices."""
    indices = np.asarray(indices, dtype=np.uint64)
    L = idx.L
    shifts = np.arange(L - 2, -1, -1, dtype=np.uint64)
    free = ((indices[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.int8)
    bits = np.concatenate([np.zeros((indices.size, 1), dtype=np.int8), free], axis=1)
    amps = np.zeros((indices.size, L + 2 * GUARD), dtype=complex)
    amps[:, GUARD:GUARD + L] = np.where(bits == 1, -1.0, 1.0) / math.sqrt(L)
    return amps


def pair_columns(slot_pairs) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.asarray(slot_pairs, dtype=int).reshape(-1, 2)
    return pairs[:, 0] + GUARD, pairs[:, 1] + GUARD


def build_matrix(L: int, ch: ChannelModel | None = None, p_bg: float = 0.0,
                 draws: int | None = None, seed: int = 0) -> DetectionMatrix:
    """Enumerate every (state, setting) cell. Limited to L <= 12.

    Deterministic channels are applied exactly; stochastic ones use their
    closed-form expectation, or a ``draws``-sample Monte Carlo average.
    """
    ch = ch or ChannelModel.identity()
    idx = make_index_set(L)
    if L > MAX_FULL_L:
        raise ResourceLimitError(f"full enumeration is limited to L <= {MAX_FULL_L}; use sample_matrix for L={L}")
    indices = np.arange(2 ** (L - 1))
    slot_pairs = idx.slot_pairs()
    if ch.kind == "empirical":
        return _from_empirical(ch.matrix, L, indices, slot_pairs, idx)
    a, b = pair_columns(slot_pairs)
    plus, minus = mean_click_probabilities(ch, state_amplitudes(indices, idx), idx.window(GUARD), a, b, L,
                                           p_bg=p_bg, draws=draws, seed=seed)
    return DetectionMatrix(
        L=L,
        state_labels=[PhasePattern.from_index(int(i), L).bitstring for i in indices],
        setting_labels=[(idx.labels[i], idx.labels[j]) for i, j in slot_pairs],
        probs_plus=plus,
        probs_minus=minus,
        channel=ch.describe(),
    )


def _from_empirical(source: DetectionMatrix, L, indices, slot_pairs, idx):
    if source.L != L:
        raise ValueError(f"empirical matrix is for L={source.L}, not L={L}")
    states = [PhasePattern.from_index(int(i), L).bitstring for i in indices]
    settings = [(idx.labels[i], idx.labels[j]) for i, j in slot_pairs]
    plus = np.empty((len(states), len(settings)))
    minus = np.empty_like(plus)
    for r, s in enumerate(states):
        for c, p in enumerate(settings):
            plus[r, c], minus[r, c] = source.lookup(s, p)
    return DetectionMatrix(L, states, settings, plus, minus, channel=f"empirical:L={L}")


def total_cells(L: int) -> int:
    return 2 ** (L - 1) * (L * (L - 1) // 2)


def sample_cells(L: int, n: int, seed: int) -> list[tuple[int, int]]:
    """``n`` distinct (state index, pair index) cells, uniform without replacement."""
    total = total_cells(L)
    if not 1 <= n <= total:
        raise ValueError(f"need 1 <= n <= {total} cells for L={L}, got {n}")
    n_pairs = L * (L - 1) // 2
    gen = rngmod.generator(seed)
    if 2 * n > total:
        # dense regime: a permutation is cheaper than rejection
        picks = gen.permutation(total)[:n]
        return [(int(c) // n_pairs, int(c) % n_pairs) for c in picks]
    seen: dict[tuple[int, int], None] = {}
    while len(seen) < n:
        s = gen.integers(0, 2 ** (L - 1), dtype=np.uint64, endpoint=False)
        p = gen.integers(0, n_pairs)
        seen.setdefault((int(s), int(p)), None)
    return list(seen)


def sample_matrix(L: int, n: int, ch: ChannelModel | None = None, seed: int = 0,
                  p_bg: float = 0.0) -> DetectionMatrix:
    ch = ch or ChannelModel.identity()
    idx = make_index_set(L)
    cells = sample_cells(L, n, seed)
    slot_pairs = idx.slot_pairs()
    states = np.array([c[0] for c in cells], dtype=np.uint64)
    chosen = [slot_pairs[c[1]] for c in cells]
    state_labels = [PhasePattern.from_index(int(s), L).bitstring for s in states]
    setting_labels = [(idx.labels[i], idx.labels[j]) for i, j in chosen]
    if ch.kind == "empirical":
        looked = [ch.matrix.lookup(s, p) for s, p in zip(state_labels, setting_labels)]
        plus = np.array([x[0] for x in looked])
        minus = np.array([x[1] for x in looked])
    else:
        amps = state_amplitudes(states, idx)
        a, b = pair_columns(chosen)
        window = idx.window(GUARD)
        plus = np.empty(len(cells))
        minus = np.empty(len(cells))
        # one pair per row: evaluate row-by-pair on the diagonal
        for start in range(0, len(cells), 512):
            stop = min(start + 512, len(cells))
            rows = np.arange(stop - start)
            p, q = mean_click_probabilities(ch, amps[start:stop], window, a[start:stop], b[start:stop], L, p_bg=p_bg)
            plus[start:stop] = p[rows, rows]
            minus[start:stop] = q[rows, rows]
    return DetectionMatrix(L, state_labels, setting_labels, plus, minus, sampled=True, n_samples=n,
                           channel=ch.describe(), seed=seed)


def cell_parities(M: DetectionMatrix) -> np.ndarray:
    """Alice's key bit s_m xor s_{m-r} for each stored cell, shaped like the probability arrays."""
    idx = M.index_set
    slot = {l: k for k, l in enumerate(idx.labels)}
    if M.sampled:
        return np.array([int(s[slot[p[0]]]) ^ int(s[slot[p[1]]]) for s, p in zip(M.state_labels, M.setting_labels)])
    bits = np.array([[int(c) for c in s] for s in M.state_labels])
    ia = np.array([slot[p[0]] for p in M.setting_labels])
    ib = np.array([slot[p[1]] for p in M.setting_labels])
    return bits[:, ia] ^ bits[:, ib]


@dataclass(frozen=True)
class MatrixQber:
    qber: float
    defined: bool
    click_mass: float


def qber_details(M: DetectionMatrix) -> MatrixQber:
    parity = cell_parities(M)
    wrong = np.where(parity == 0, M.probs_minus, M.probs_plus)
    mass = float(np.sum(M.probs_plus + M.probs_minus))
    if mass <= 0:
        return MatrixQber(math.nan, False, 0.0)
    return MatrixQber(float(np.sum(wrong)) / mass, True, mass)


def qber_from_matrix(M: DetectionMatrix) -> float:
    """Expected error rate over all stored cells; NaN when nothing clicks."""
    if M.probs_plus.size == 0:
        raise ValueError("empty detection matrix")
    return qber_details(M).qber
