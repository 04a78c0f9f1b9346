"""Parametric noise models for the free-space link and detector.

Every model acts on a batch of amplitude rows laid out over an index set's
guard-extended label window (:meth:`ModeIndexSet.window`). Stochastic models
consume pre-drawn uniforms so the Monte Carlo engine can feed them from
counter-based streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
import scipy.linalg
import scipy.special

from . import rng as rngmod
from .errors import ContractViolation, InvalidDimensionError
from .modes import ModeIndexSet, StateVector, make_index_set

KINDS = ("identity", "dephasing", "crosstalk", "mode_phase", "aperture", "white_noise", "empirical")
DESCRIPTOR_KEYS = {
    "identity": (),
    "dephasing": ("sigma",),
    "crosstalk": ("eps",),
    "mode_phase": ("quad", "lin"),
    "aperture": ("lmax", "floor"),
    "white_noise": ("p",),
    "empirical": ("path",),
}
GUARD = 2
UNITARY_TOL = 1e-10


class ChannelSpecError(ValueError):
    """Malformed channel descriptor; ``token`` is the offending piece."""

    def __init__(self, message: str, token: str):
        super().__init__(f"{message}: {token!r}")
        self.token = token


def _as_theta(theta) -> Callable[[int], float]:
    if callable(theta):
        return theta
    table = dict(theta)
    return lambda l: float(table.get(l, 0.0))


@dataclass(frozen=True)
class ChannelModel:
    kind: str = "identity"
    params: Mapping[str, Any] = field(default_factory=dict)
    theta: Callable[[int], float] | None = field(default=None, compare=False)
    matrix: Any = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}; expected one of {KINDS}")
        p = self.params
        if self.kind == "dephasing" and not p["sigma"] >= 0:
            raise ValueError(f"dephasing sigma must be >= 0, got {p['sigma']}")
        if self.kind == "crosstalk" and not 0 <= p["eps"] <= 1:
            raise ValueError(f"crosstalk eps must lie in [0, 1], got {p['eps']}")
        if self.kind == "aperture":
            if p["l_max"] < 0:
                raise ValueError(f"aperture l_max must be >= 0, got {p['l_max']}")
            if not 0 <= p["floor"] <= 1:
                raise ValueError(f"aperture floor must lie in [0, 1], got {p['floor']}")
        if self.kind == "white_noise" and not 0 <= p["p"] <= 1:
            raise ValueError(f"white_noise p must lie in [0, 1], got {p['p']}")
        if self.kind == "mode_phase" and self.theta is None:
            raise ValueError("mode_phase needs a theta map")
        if self.kind == "empirical" and self.matrix is None:
            raise ValueError("empirical channel needs a detection matrix")

    # constructors
    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def dephasing(cls, sigma: float):
        return cls("dephasing", {"sigma": float(sigma)})

    @classmethod
    def crosstalk(cls, eps: float):
        return cls("crosstalk", {"eps": float(eps)})

    @classmethod
    def mode_phase(cls, theta, **describe):
        return cls("mode_phase", dict(describe), theta=_as_theta(theta))

    @classmethod
    def gouy(cls, quad: float = 0.0, lin: float = 0.0):
        """mode_phase with theta_l = quad * l**2 + lin * l."""
        return cls.mode_phase(lambda l: quad * l * l + lin * l, quad=float(quad), lin=float(lin))

    @classmethod
    def aperture(cls, l_max: int, floor: float = 0.0):
        return cls("aperture", {"l_max": int(l_max), "floor": float(floor)})

    @classmethod
    def white_noise(cls, p: float):
        return cls("white_noise", {"p": float(p)})

    @classmethod
    def empirical(cls, matrix):
        return cls("empirical", {"L": matrix.L}, matrix=matrix)

    @property
    def is_stochastic(self) -> bool:
        return self.kind in ("dephasing", "white_noise")

    @property
    def background(self) -> float:
        """Uniform false-click probability this model hands to the detector."""
        return self.params.get("floor", 0.0) if self.kind == "aperture" else 0.0

    def n_variates(self, L: int) -> int:
        if self.kind == "dephasing":
            return L + 2 * GUARD
        if self.kind == "white_noise":
            return 2
        return 0

    def describe(self) -> str:
        if self.kind == "mode_phase" and not self.params:
            return "mode_phase:custom"
        if self.kind == "empirical":
            return f"empirical:L={self.matrix.L}"
        if not self.params:
            return self.kind
        return self.kind + ":" + ",".join(f"{k}={v!r}" for k, v in self.params.items())

    def __str__(self):
        return self.describe()


def gouy_compensation(theta) -> ChannelModel:
    """The mode_phase channel that undoes ``mode_phase(theta)``."""
    theta = _as_theta(theta)
    return ChannelModel.mode_phase(lambda l: -theta(l))


def hopping_matrix(n: int) -> np.ndarray:
    """Nearest-neighbour hopping generator on ``n`` slots (real symmetric)."""
    return np.eye(n, k=1) + np.eye(n, k=-1)


def crosstalk_unitary(eps: float, n: int) -> np.ndarray:
    return scipy.linalg.expm(1j * eps * hopping_matrix(n))


def transform(ch: ChannelModel, amps: np.ndarray, window, variates: np.ndarray | None = None):
    """Apply ``ch`` to amplitude rows ``amps`` (shape ``(n, len(window))``).

    Returns ``(out, survival)``. For aperture the rows are renormalized and
    ``survival`` carries the kept weight; every other model has survival 1.
    """
    amps = np.asarray(amps, dtype=complex)
    n, width = amps.shape
    labels = np.asarray(window)
    survival = np.ones(n)
    kind = ch.kind

    if kind == "identity":
        return amps.copy(), survival
    if kind == "mode_phase":
        phases = np.array([ch.theta(int(l)) for l in labels], dtype=float)
        return amps * np.exp(1j * phases), survival
    if kind == "crosstalk":
        U = crosstalk_unitary(ch.params["eps"], width)
        return amps @ U.T, survival
    if kind == "aperture":
        kept = np.where(np.abs(labels) <= ch.params["l_max"], amps, 0)
        survival = np.sum(np.abs(kept) ** 2, axis=1)
        scale = np.divide(1.0, np.sqrt(survival), out=np.zeros_like(survival), where=survival > 0)
        return kept * scale[:, None], survival
    if kind == "dephasing":
        u = _need(variates, n, width, kind)
        delta = ch.params["sigma"] * scipy.special.ndtri(u[:, :width])
        return amps * np.exp(1j * delta), survival
    if kind == "white_noise":
        u = _need(variates, n, 2, kind)
        band = np.flatnonzero((labels >= _band_edge(labels, 0)) & (labels <= _band_edge(labels, -1)))
        out = amps.copy()
        hit = u[:, 0] < ch.params["p"]
        if hit.any():
            choice = band[np.minimum((u[hit, 1] * band.size).astype(int), band.size - 1)]
            out[hit] = 0
            out[np.flatnonzero(hit), choice] = 1.0
        return out, survival
    raise ContractViolation("the empirical channel acts on detection probabilities, not on states")


def _need(variates, n, k, kind):
    if variates is None:
        raise ValueError(f"{kind} channel needs {k} uniform variates per row")
    variates = np.asarray(variates, dtype=float)
    if variates.shape[0] != n or variates.shape[1] < k:
        raise ValueError(f"{kind} channel needs variates of shape ({n}, >={k}), got {variates.shape}")
    return variates


def _band_edge(window, which):
    # guard labels sit GUARD positions inside each end of the window
    return window[GUARD] if which == 0 else window[-GUARD - 1]


def _infer_index_set(psi: StateVector) -> ModeIndexSet:
    support = psi.support
    try:
        idx = make_index_set(len(support))
    except InvalidDimensionError:
        raise ValueError("cannot infer the mode band from this state; pass idx explicitly") from None
    if idx.labels != support:
        raise ValueError("cannot infer the mode band from this state; pass idx explicitly")
    return idx


def apply_channel(ch: ChannelModel, psi: StateVector, rng: np.random.Generator | None = None,
                  idx: ModeIndexSet | None = None) -> tuple[StateVector, float]:
    """Send one state through ``ch``.

    ``idx`` fixes the mode band (needed by crosstalk and white noise); when
    omitted it is inferred from a state that fills a whole band.
    """
    norm2 = psi.norm2()
    if abs(norm2 - 1.0) > 1e-12:
        raise ContractViolation(f"channel input must be unit norm, got norm^2 = {norm2!r}")
    if ch.kind == "identity":
        return psi, 1.0
    idx = idx or _infer_index_set(psi)
    window = idx.window(GUARD)
    stray = set(psi.support) - set(window)
    if stray:
        raise ValueError(f"state has weight outside the channel window: {sorted(stray)}")
    variates = None
    k = ch.n_variates(idx.L)
    if k:
        if rng is None:
            raise ValueError(f"{ch.kind} channel needs a random generator")
        variates = rng.random((1, k))
    out, survival = transform(ch, psi.to_array(window)[None, :], window, variates)
    amps = {l: a for l, a in zip(window, out[0]) if a != 0}
    if ch.kind == "white_noise" and np.array_equal(out[0], psi.to_array(window)):
        return psi, 1.0
    # a fully blocked aperture leaves nothing to renormalize
    return StateVector(amps, subnormalized=not amps), float(survival[0])


def mean_click_probabilities(ch: ChannelModel, amps: np.ndarray, window, col_a, col_b, L: int,
                             p_bg: float = 0.0, draws: int | None = None, seed: int = 0):
    """Expected plus/minus click probabilities for every (state row, pair) combination.

    ``amps`` has shape ``(S, W)``; ``col_a``/``col_b`` are window columns of the
    two modes of each pair. Returns arrays of shape ``(S, P)``. Stochastic
    models use closed-form expectations unless ``draws`` asks for a Monte Carlo
    average instead. Background clicks (``p_bg`` plus any aperture floor) are
    added as ``p_bg * (1 - P+ - P-)`` split evenly between the branches.
    """
    amps = np.asarray(amps, dtype=complex)
    col_a = np.asarray(col_a)
    col_b = np.asarray(col_b)

    if ch.is_stochastic and draws:
        k = rngmod.block_width(ch.n_variates(L))
        plus = np.zeros((amps.shape[0], col_a.size))
        minus = np.zeros_like(plus)
        for d in range(draws):
            u = rngmod.to_unit(rngmod.round_words(seed, d, d + 1, k))
            out, _ = transform(ch, amps, window, np.repeat(u, amps.shape[0], axis=0))
            p, q = _branch_probs(out[:, col_a], out[:, col_b])
            plus += p
            minus += q
        plus /= draws
        minus /= draws
    elif ch.kind == "dephasing":
        a, b = amps[:, col_a], amps[:, col_b]
        base = (np.abs(a) ** 2 + np.abs(b) ** 2) / 2
        cross = np.real(a * np.conj(b)) * math.exp(-ch.params["sigma"] ** 2)
        plus, minus = base + cross, base - cross
    elif ch.kind == "white_noise":
        p = ch.params["p"]
        plus, minus = _branch_probs(amps[:, col_a], amps[:, col_b])
        plus = (1 - p) * plus + p / L
        minus = (1 - p) * minus + p / L
    else:
        out, survival = transform(ch, amps, window)
        plus, minus = _branch_probs(out[:, col_a], out[:, col_b])
        plus = plus * survival[:, None]
        minus = minus * survival[:, None]

    bg = combined_background(p_bg, ch.background)
    if bg:
        spill = bg * np.clip(1 - plus - minus, 0, None) / 2
        plus, minus = plus + spill, minus + spill
    return np.clip(plus, 0, 1), np.clip(minus, 0, 1)


def _branch_probs(a, b):
    return np.abs(a + b) ** 2 / 2, np.abs(a - b) ** 2 / 2


def combined_background(*probs: float) -> float:
    """Probability that at least one independent background source fires."""
    miss = 1.0
    for p in probs:
        miss *= 1 - p
    return 1 - miss


def parse_channel(text: str, load_matrix: Callable[[str], Any] | None = None) -> ChannelModel:
    """Parse ``kind[:key=value,...]``, e.g. ``dephasing:sigma=0.3``.

    Recognised keys: dephasing ``sigma``; crosstalk ``eps``; mode_phase
    ``quad``/``lin`` (theta_l = quad*l^2 + lin*l); aperture ``lmax``/``floor``;
    white_noise ``p``; empirical ``path``.
    """
    kind, _, rest = text.strip().partition(":")
    if kind not in KINDS:
        raise ChannelSpecError("unknown channel kind", kind)
    params = {}
    for token in filter(None, (t.strip() for t in rest.split(","))):
        key, eq, value = token.partition("=")
        if not eq or not key:
            raise ChannelSpecError("expected key=value", token)
        key = key.strip()
        if key not in DESCRIPTOR_KEYS[kind]:
            raise ChannelSpecError(f"unknown {kind} parameter", token)
        params[key] = (value.strip(), token)

    def take(key, conv, default=None):
        if key not in params:
            if default is None:
                raise ChannelSpecError(f"{kind} channel needs parameter", key)
            return default
        value, token = params.pop(key)
        try:
            return conv(value)
        except ValueError:
            raise ChannelSpecError("bad value", token) from None

    try:
        if kind == "identity":
            ch = ChannelModel.identity()
        elif kind == "dephasing":
            ch = ChannelModel.dephasing(take("sigma", float))
        elif kind == "crosstalk":
            ch = ChannelModel.crosstalk(take("eps", float))
        elif kind == "mode_phase":
            ch = ChannelModel.gouy(take("quad", float, 0.0), take("lin", float, 0.0))
        elif kind == "aperture":
            ch = ChannelModel.aperture(take("lmax", int), take("floor", float, 0.0))
        elif kind == "white_noise":
            ch = ChannelModel.white_noise(take("p", float))
        else:
            path = take("path", str)
            if load_matrix is None:
                raise ChannelSpecError("empirical channel cannot be loaded here", path)
            ch = ChannelModel.empirical(load_matrix(path))
    except ChannelSpecError:
        raise
    except ValueError as exc:
        raise ChannelSpecError(str(exc), text) from None
    return ch
