import math
import numpy as np
from dataclasses import dataclass
from scipy.optimize import brentq

from ..errors import ArgumentError, CapacityError

MAX_AGENTS = 20

SAMPLING_MODES = ("all_proper", "fixed_count", "theorem5")


def _check_agents(n: int) -> None:
    if n > MAX_AGENTS:
        raise CapacityError(f"[Coalition] n={n} exceeds the {MAX_AGENTS}-agent limit")
    if n < 2:
        raise ArgumentError(f"[Coalition] need at least 2 agents, got n={n}")


def proper_count(n: int) -> int:
    """Number of nonempty proper coalitions of n agents."""
    return (1 << n) - 2


# ─────────────────────────────────────────────────────────────────────────────
# Coalition: bitmask over agents 0..n-1, never empty, never the grand coalition
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, order=True)
class Coalition:
    mask: int
    n: int

    def __post_init__(self):
        _check_agents(self.n)
        if not 0 < self.mask < (1 << self.n) - 1:
            raise ArgumentError(
                f"[Coalition] mask {self.mask} is empty or the grand coalition for n={self.n}")

    @classmethod
    def from_members(cls, members, n: int) -> "Coalition":
        mask = 0
        for i in members:
            if not 0 <= i < n:
                raise ArgumentError(f"[Coalition] agent {i} out of range for n={n}")
            mask |= 1 << i
        return cls(mask, n)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.mask >> i & 1)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    def indicator(self) -> np.ndarray:
        return np.array([self.mask >> i & 1 for i in range(self.n)], dtype=np.float64)

    def __contains__(self, agent: int) -> bool:
        return bool(self.mask >> agent & 1)

    def __str__(self) -> str:
        return "{" + ",".join(str(i) for i in self.members) + "}"


# ─────────────────────────────────────────────────────────────────────────────
# Per-timestep coalition advantage table
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CoalitionAdvantageTable:
    n: int
    entries: tuple[tuple[Coalition, float], ...]
    grand_advantage: float

    def __post_init__(self):
        _check_agents(self.n)
        entries = tuple((c, float(v)) for c, v in self.entries)
        seen = set()
        for c, v in entries:
            if c.n != self.n:
                raise ArgumentError(f"[Table] coalition {c} built for n={c.n}, table has n={self.n}")
            if c.mask in seen:
                raise ArgumentError(f"[Table] duplicate coalition {c}")
            if not math.isfinite(v):
                raise ArgumentError(f"[Table] non-finite advantage for coalition {c}")
            seen.add(c.mask)
        if not math.isfinite(self.grand_advantage):
            raise ArgumentError("[Table] grand advantage must be finite")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "grand_advantage", float(self.grand_advantage))

    @classmethod
    def from_masks(cls, n: int, grand_advantage: float, values: dict[int, float]) -> "CoalitionAdvantageTable":
        return cls(n, tuple((Coalition(mask, n), v) for mask, v in values.items()), grand_advantage)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def coalitions(self) -> list[Coalition]:
        return [c for c, _ in self.entries]

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.entries], dtype=np.float64)

    @property
    def masks(self) -> list[int]:
        return [c.mask for c, _ in self.entries]

    def as_dict(self) -> dict[int, float]:
        return {c.mask: v for c, v in self.entries}

    def membership(self) -> np.ndarray:
        """(m, n) 0/1 matrix, row k marks the members of entry k."""
        if not self.entries:
            return np.zeros((0, self.n))
        return np.stack([c.indicator() for c, _ in self.entries])

    def restrict(self, masks) -> "CoalitionAdvantageTable":
        lookup = self.as_dict()
        missing = [m for m in masks if m not in lookup]
        if missing:
            raise ArgumentError(f"[Table] coalitions {missing[:5]} not present in the table")
        return CoalitionAdvantageTable.from_masks(self.n, self.grand_advantage, {m: lookup[m] for m in masks})


# ─────────────────────────────────────────────────────────────────────────────
# Sampling
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SamplingPlan:
    mode: str = "fixed_count"
    count: int = 0
    delta: float = 0.5
    Delta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SAMPLING_MODES:
            raise ArgumentError(f"[SamplingPlan] unknown mode '{self.mode}', expected one of {SAMPLING_MODES}")
        if self.mode == "fixed_count" and self.count < 0:
            raise ArgumentError(f"[SamplingPlan] count must be >= 0, got {self.count}")
        if self.mode == "theorem5" and not (0 < self.delta < 1 and 0 < self.Delta < 1):
            raise ArgumentError(f"[SamplingPlan] delta and Delta must lie in (0, 1), got {self.delta}, {self.Delta}")

    def with_seed(self, seed: int) -> "SamplingPlan":
        return SamplingPlan(self.mode, self.count, self.delta, self.Delta, int(seed))


def default_count(n: int) -> int:
    """Roughly half of the proper coalitions: 2^(n-1) - 1."""
    return (1 << (n - 1)) - 1


def probable_core_count(n: int, delta: float, Delta: float) -> int:
    """
    Sample size for the delta-probable core at confidence 1 - Delta, with the
    order-bound constant set to 1 and capped at the number of proper coalitions.
    """
    _check_agents(n)
    if not (0 < delta < 1 and 0 < Delta < 1):
        raise ArgumentError(f"[Coalition] delta and Delta must lie in (0, 1), got {delta}, {Delta}")
    raw = ((n + 2) * math.log(1 / delta) + math.log(1 / Delta)) / delta ** 2
    return min(math.ceil(raw), proper_count(n))


def implied_delta(n: int, m: int, Delta: float) -> float:
    """Invert the sample-size formula: the delta that m samples certify at confidence 1 - Delta."""
    _check_agents(n)
    if not 0 < Delta < 1:
        raise ArgumentError(f"[Coalition] Delta must lie in (0, 1), got {Delta}")
    floor = math.log(1 / Delta)
    if m <= floor:
        return 1.0

    def excess(delta):
        return ((n + 2) * math.log(1 / delta) + floor) / delta ** 2 - m

    return float(brentq(excess, 1e-9, 1.0, xtol=1e-12))


def all_proper_coalitions(n: int) -> list[Coalition]:
    _check_agents(n)
    return [Coalition(mask, n) for mask in range(1, (1 << n) - 1)]


def sample_coalitions(n: int, plan: SamplingPlan) -> list[Coalition]:
    """
    Distinct coalitions drawn uniformly without replacement, sorted by mask.

    The draw is a prefix of one seeded permutation, so for a fixed seed a
    smaller sample is always contained in a larger one.
    """
    _check_agents(n)
    total = proper_count(n)
    if plan.mode == "all_proper":
        return all_proper_coalitions(n)
    if plan.mode == "theorem5":
        m = probable_core_count(n, plan.delta, plan.Delta)
    else:
        m = plan.count
        if m > total:
            raise ArgumentError(f"[Coalition] cannot sample {m} distinct coalitions, only {total} exist for n={n}")
    rng = np.random.default_rng(plan.seed)
    masks = np.sort(rng.permutation(total)[:m] + 1)
    return [Coalition(int(mask), n) for mask in masks]


def draw_coalitions(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Masks drawn uniformly with replacement."""
    _check_agents(n)
    return rng.integers(1, (1 << n) - 1, size=count)


# ─────────────────────────────────────────────────────────────────────────────
# Table builders
# ─────────────────────────────────────────────────────────────────────────────

def random_table(n: int, rng: np.random.Generator, coalitions=None,
                 low: float = -10.0, high: float = 10.0) -> CoalitionAdvantageTable:
    coalitions = all_proper_coalitions(n) if coalitions is None else list(coalitions)
    grand = float(rng.uniform(low, high))
    values = rng.uniform(low, high, size=len(coalitions))
    return CoalitionAdvantageTable(n, tuple(zip(coalitions, values)), grand)


def lopsided_pair_table() -> CoalitionAdvantageTable:
    """Two agents; agent 0 alone holds the high potential while the joint outcome is poor."""
    return CoalitionAdvantageTable.from_masks(2, -5.0, {0b01: 5.0, 0b10: -5.0})


def three_agent_table() -> CoalitionAdvantageTable:
    return CoalitionAdvantageTable.from_masks(3, -2.0, {0b011: 1.0, 0b101: 0.0, 0b110: 5.0})
