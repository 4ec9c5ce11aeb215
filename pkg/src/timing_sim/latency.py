"""Pairwise latency models and the order statistics built on them.

All times are in milliseconds.  A model describes the distribution of the
one-way latency ``L[i, j]`` from validator ``i`` to validator ``j``; a
:class:`LatencyDraw` is one realisation of the full matrix for one round.
Draws are i.i.d. across rounds and pairs, and a draw is a pure function of
``(model, seed, round)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DRAW_BLOCK",
    "LatencyDraw",
    "LatencyModel",
    "DeterministicLine",
    "DeterministicCluster",
    "LognormalWorld",
    "ExplicitMatrix",
    "PingTable",
    "sample_draw",
    "sample_draws",
    "sample_block",
    "order_statistic",
    "world_model_from_table",
    "load_ping_table",
    "normalize_weights",
    "colocate",
]


@dataclass(frozen=True, eq=False)
class LatencyDraw:
    """Realised latencies for one round; ``latency[i, j]`` is i -> j."""

    round: int
    latency: np.ndarray

    @property
    def n(self) -> int:
        return self.latency.shape[0]


class LatencyModel:
    """Base class for latency models.

    Subclasses set ``n`` and ``deterministic`` and implement either
    :meth:`matrix` (deterministic) or :meth:`sample` (stochastic).
    """

    n: int
    deterministic: bool = False

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.matrix()

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` independent draws, shape (count, n, n)."""
        return np.stack([self.sample(rng) for _ in range(count)])

    def matrix(self) -> np.ndarray:
        raise TypeError(f"{type(self).__name__} is stochastic; use sample()")

    def tags(self) -> list[str]:
        return [str(i) for i in range(self.n)]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DeterministicLine(LatencyModel):
    """Validators at integer positions ``0..n-1``; ``L[i, j] = spacing * |i - j|``."""

    n: int
    spacing: float = 1.0
    deterministic: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"line needs n >= 1, got {self.n}")
        if not self.spacing > 0:
            raise ValueError("line spacing must be positive")
        pos = np.arange(self.n, dtype=np.float64)
        object.__setattr__(self, "_m", _frozen(self.spacing * np.abs(pos[:, None] - pos[None, :])))

    def matrix(self) -> np.ndarray:
        return self._m

    def tags(self) -> list[str]:
        return [f"x={i}" for i in range(self.n)]


@dataclass(frozen=True, eq=False)
class DeterministicCluster(LatencyModel):
    """Two clusters X (validators ``0..|X|-1``) and Y (the rest).

    Intra-cluster latency is ``eps``, inter-cluster latency is ``inter``.
    """

    size_x: int
    size_y: int
    eps: float
    inter: float
    deterministic: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.size_x <= 0 or self.size_y < 0:
            raise ValueError("cluster sizes must be positive")
        if not (self.inter > self.eps > 0):
            raise ValueError(f"cluster latencies need inter > eps > 0, got eps={self.eps}, inter={self.inter}")
        side = np.array([0] * self.size_x + [1] * self.size_y)
        m = np.where(side[:, None] == side[None, :], self.eps, self.inter).astype(np.float64)
        np.fill_diagonal(m, 0.0)
        object.__setattr__(self, "_m", _frozen(m))

    @property
    def n(self) -> int:
        return self.size_x + self.size_y

    def matrix(self) -> np.ndarray:
        return self._m

    def tags(self) -> list[str]:
        return ["X"] * self.size_x + ["Y"] * self.size_y


@dataclass(frozen=True, eq=False)
class LognormalWorld(LatencyModel):
    """Validators placed in cities with lognormal pairwise latencies.

    Same-city pairs use ``lognormal(intra_mean, intra_std)``; cross-city
    pairs use ``lognormal(ln(ping[a, b]), inter_std)`` where the parameters
    are those of the underlying normal and ``ping`` is directional, in ms.
    """

    cities: tuple[str, ...]
    counts: tuple[int, ...]
    ping: np.ndarray
    intra_mean: float = 1.0
    intra_std: float = 0.5
    inter_std: float = 0.8

    def __post_init__(self):
        ping = np.asarray(self.ping, dtype=np.float64)
        k = len(self.cities)
        if ping.shape != (k, k):
            raise ValueError(f"ping table must be {k}x{k}, got {ping.shape}")
        if len(self.counts) != k:
            raise ValueError("one node count per city required")
        if any(c < 0 for c in self.counts) or sum(self.counts) == 0:
            raise ValueError("node counts must be nonnegative with a positive total")
        off = ~np.eye(k, dtype=bool)
        if np.isnan(ping).any():
            raise ValueError("ping table has missing city pairs")
        if (ping[off] <= 0).any():
            raise ValueError("ping table entries between distinct cities must be positive")
        if self.intra_std < 0 or self.inter_std < 0:
            raise ValueError("lognormal std must be nonnegative")
        city = np.repeat(np.arange(k), self.counts)
        same = city[:, None] == city[None, :]
        with np.errstate(divide="ignore"):
            logping = np.log(np.where(off, ping, 1.0))
        loc = np.where(same, self.intra_mean, logping[city[:, None], city[None, :]])
        scale = np.where(same, self.intra_std, self.inter_std)
        object.__setattr__(self, "ping", _frozen(ping))
        object.__setattr__(self, "_city", city)
        object.__setattr__(self, "_loc", _frozen(loc))
        object.__setattr__(self, "_scale", _frozen(scale))

    @property
    def n(self) -> int:
        return int(sum(self.counts))

    def log_location(self, i: int, j: int) -> float:
        """Mean of the underlying normal for the pair i -> j."""
        return float(self._loc[i, j])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_many(rng, 1)[0]

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        z = rng.standard_normal((count, self.n, self.n))
        m = np.exp(self._loc + self._scale * z)
        _zero_diagonals(m)
        return m

    def tags(self) -> list[str]:
        return [self.cities[c] for c in self._city]


_DISTRIBUTIONS = ("fixed", "lognormal", "exponential")


@dataclass(frozen=True, eq=False)
class ExplicitMatrix(LatencyModel):
    """Per-pair latency given by a matrix of locations.

    ``fixed`` uses the values directly, ``lognormal`` uses ``ln(value)`` as
    the underlying mean with std ``sigma``, ``exponential`` uses the value
    as the mean.  The diagonal is always zero.
    """

    values: np.ndarray
    distribution: str = "fixed"
    sigma: float = 0.5

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("latency matrix must be square")
        if self.distribution not in _DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {_DISTRIBUTIONS}")
        off = ~np.eye(v.shape[0], dtype=bool)
        if (v[off] < 0).any() or np.isnan(v).any():
            raise ValueError("latencies must be nonnegative")
        if self.distribution == "lognormal" and (v[off] <= 0).any():
            raise ValueError("lognormal locations must be positive")
        np.fill_diagonal(v, 0.0)
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def deterministic(self) -> bool:
        return self.distribution == "fixed"

    def matrix(self) -> np.ndarray:
        if not self.deterministic:
            return super().matrix()
        return self.values

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_many(rng, 1)[0]

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        shape = (count,) + self.values.shape
        if self.distribution == "fixed":
            return np.broadcast_to(self.values, shape).copy()
        if self.distribution == "lognormal":
            with np.errstate(divide="ignore"):
                m = np.exp(np.log(self.values) + self.sigma * rng.standard_normal(shape))
        else:
            m = self.values * rng.standard_exponential(shape)
        _zero_diagonals(m)
        return m


def _zero_diagonals(stack: np.ndarray) -> None:
    n = stack.shape[-1]
    stack[:, np.arange(n), np.arange(n)] = 0.0


# draws are generated in fixed blocks of rounds, one generator per block
DRAW_BLOCK = 256


def _seed_words(rng_seed) -> list[int]:
    if isinstance(rng_seed, (int, np.integer)):
        return [int(rng_seed)]
    return [int(s) for s in rng_seed]


def sample_block(model: LatencyModel, rng_seed, block: int) -> np.ndarray:
    """Draws for rounds ``block * DRAW_BLOCK`` up to the next block, shape (DRAW_BLOCK, n, n)."""
    rng = np.random.default_rng(_seed_words(rng_seed) + [int(block)])
    return model.sample_many(rng, DRAW_BLOCK)


def sample_draw(model: LatencyModel, rng_seed, round: int) -> LatencyDraw:
    """Realised latency matrix of ``model`` for ``round``.

    Identical ``(model, rng_seed, round)`` always yields the same matrix, in
    any order of calls.  ``rng_seed`` is a nonnegative int or a sequence of them.
    """
    if model.deterministic:
        return LatencyDraw(round, model.matrix())
    return LatencyDraw(round, sample_block(model, rng_seed, round // DRAW_BLOCK)[round % DRAW_BLOCK].copy())


def sample_draws(model: LatencyModel, rng_seed, start: int, count: int) -> np.ndarray:
    """Stack of draws for rounds ``start .. start+count-1``, shape (count, n, n)."""
    out = np.empty((count, model.n, model.n))
    if model.deterministic:
        out[:] = model.matrix()
        return out
    r = start
    while r < start + count:
        block, offset = divmod(r, DRAW_BLOCK)
        take = min(DRAW_BLOCK - offset, start + count - r)
        out[r - start : r - start + take] = sample_block(model, rng_seed, block)[offset : offset + take]
        r += take
    return out


def order_statistic(values, r: int):
    """The ``r``-th smallest (1-based) element of ``values``, counting multiplicity."""
    a = np.asarray(values, dtype=np.float64).ravel()
    if not 1 <= r <= a.size:
        raise ValueError(f"rank {r} out of range for {a.size} values")
    return float(np.partition(a, r - 1)[r - 1])


def colocate(latency: np.ndarray, members: Sequence[int]) -> np.ndarray:
    """Copy of ``latency`` with zero latency between every pair in ``members``."""
    out = np.array(latency, dtype=np.float64)
    idx = np.asarray(sorted(members), dtype=np.intp)
    if idx.size:
        out[np.ix_(idx, idx)] = 0.0
    return out


# -- world table --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PingTable:
    cities: tuple[str, ...]
    ping: np.ndarray
    weights: tuple[int, ...]


def load_ping_table(path: str | Path | None = None) -> PingTable:
    """Read a city ping table (CSV with a header of city names and a weight column).

    With no path, the bundled 11-city table is returned.
    """
    if path is None:
        text = resources.files("timing_sim").joinpath("data/world_pings.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = list(csv.reader(line for line in text.splitlines() if line.strip()))
    header = [h.strip() for h in rows[0]]
    if header[-1].lower() != "weight":
        raise ValueError("ping table header must end with a 'weight' column")
    cities = tuple(header[1:-1])
    body = rows[1:]
    if [r[0].strip() for r in body] != list(cities):
        raise ValueError("ping table rows must list the header cities in the same order")
    ping = np.full((len(cities), len(cities)), np.nan)
    weights = []
    for a, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"row {a + 2}: expected {len(header)} fields, got {len(row)}")
        for b, cell in enumerate(row[1:-1]):
            cell = cell.strip()
            if cell:
                ping[a, b] = float(cell)
        weights.append(int(row[-1]))
    return PingTable(cities, ping, tuple(weights))


def normalize_weights(weights: Sequence[int], total: int) -> tuple[int, ...]:
    """Scale integer weights to sum to ``total`` by largest-remainder rounding."""
    s = sum(weights)
    if total <= 0 or s <= 0:
        raise ValueError("weights and total must be positive")
    exact = [w * total / s for w in weights]
    out = [math.floor(x) for x in exact]
    short = total - sum(out)
    # ties go to the earlier city, keeping the result deterministic
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - out[i]), i))
    for i in order[:short]:
        out[i] += 1
    return tuple(out)


def world_model_from_table(
    ping_table: np.ndarray,
    weights: Sequence[int],
    intra_params: tuple[float, float] = (1.0, 0.5),
    inter_params: float = 0.8,
    cities: Sequence[str] | None = None,
) -> LognormalWorld:
    """Build a :class:`LognormalWorld` from a city ping table in ms.

    ``intra_params`` is (mean, std) of the underlying normal within a city;
    ``inter_params`` is the underlying std across cities, whose mean is the
    natural log of the directional table entry.
    """
    ping = np.asarray(ping_table, dtype=np.float64)
    if ping.ndim != 2 or ping.shape[0] != ping.shape[1]:
        raise ValueError("ping table must be square")
    if any(w <= 0 for w in weights):
        raise ValueError("city weights must be positive")
    if cities is None:
        cities = [f"city{a}" for a in range(ping.shape[0])]
    mean, std = intra_params
    return LognormalWorld(
        cities=tuple(cities),
        counts=tuple(int(w) for w in weights),
        ping=ping,
        intra_mean=mean,
        intra_std=std,
        inter_std=inter_params,
    )
