"""Ground-truth change schedules and realization of the observed stream.

A schedule is the (unknown to the detector) set of onset times at which the
stream switches to the transient law F1 for a fixed number of samples.
Onsets are 1-based, windows are ``[onset, onset + duration - 1]``, and any
two onsets must be more than ``duration`` apart so windows never touch.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from .distributions import DistributionPair

Placement = Literal["even_grid", "uniform_random", "explicit"]


class InfeasibleScheduleError(ValueError):
    """Requested schedule parameters cannot satisfy the spacing invariants."""


@dataclass(frozen=True)
class ChangeSchedule:
    """Onset times of transient changes, their common duration, and the horizon.

    Invariants (checked at construction):
      * onsets are strictly increasing positive integers,
      * consecutive onsets differ by more than ``duration`` (non-overlap,
        with at least one nominal sample between windows),
      * the last window ends at or before ``horizon``.

    An empty onset tuple is the no-change regime.
    """

    onsets: tuple[int, ...]
    duration: int
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "onsets", tuple(int(g) for g in self.onsets))
        if self.duration < 1:
            raise ValueError(f"duration must be a positive integer, got {self.duration}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon}")
        prev = 0
        for g in self.onsets:
            if g < 1:
                raise ValueError(f"onsets must be positive integers, got {g}")
            if prev and g <= prev:
                raise ValueError(f"onsets must be strictly increasing, got {prev} then {g}")
            if prev and g - prev <= self.duration:
                raise ValueError(
                    f"onsets {prev} and {g} are {g - prev} apart; gaps must exceed "
                    f"the duration {self.duration}"
                )
            prev = g
        if self.onsets and self.onsets[-1] + self.duration - 1 > self.horizon:
            raise ValueError(
                f"last transient window ends at {self.onsets[-1] + self.duration - 1}, "
                f"beyond horizon {self.horizon}"
            )

    @property
    def s(self) -> int:
        """Number of change-points."""
        return len(self.onsets)

    @property
    def affected_count(self) -> int:
        """Total number of transient samples (s * duration)."""
        return self.s * self.duration

    def affected_times(self) -> np.ndarray:
        """All 1-based times generated by F1, in increasing order."""
        if not self.onsets:
            return np.empty(0, dtype=np.int64)
        starts = np.asarray(self.onsets, dtype=np.int64)
        return (starts[:, None] + np.arange(self.duration, dtype=np.int64)).ravel()

    def is_affected(self, t: int) -> bool:
        """True when the sample at time t is drawn from F1."""
        i = bisect.bisect_right(self.onsets, t)
        return i > 0 and t <= self.onsets[i - 1] + self.duration - 1

    def last_affected_at_or_before(self, t: int) -> int:
        """Most recent F1-generated time at or before t, or 0 when none exists.

        This is the reference point of the coarse filtration: the segment
        ``(last_affected, t]`` contains only nominal samples.
        """
        if t < 1:
            raise ValueError(f"t must be >= 1, got {t}")
        i = bisect.bisect_right(self.onsets, t)
        if i == 0:
            return 0
        return min(self.onsets[i - 1] + self.duration - 1, t)

    def to_dict(self) -> dict:
        return {"onsets": list(self.onsets), "duration": self.duration, "horizon": self.horizon}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ChangeSchedule":
        return cls(
            onsets=tuple(data["onsets"]),
            duration=int(data["duration"]),
            horizon=int(data["horizon"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "ChangeSchedule":
        return cls.from_dict(json.loads(text))


def make_schedule(
    horizon: int,
    s: int,
    duration: int,
    placement: Placement = "even_grid",
    rng: np.random.Generator | None = None,
    onsets: Iterable[int] | None = None,
) -> ChangeSchedule:
    """Build a valid schedule of s transient changes over the horizon.

    Placements:
      * ``even_grid`` (default): onsets at floor(k * horizon / s), k = 1..s.
        Deterministic, used for reproducible experiments.
      * ``uniform_random``: exactly uniform over all valid schedules, via the
        bijection between gap-constrained onset tuples and plain s-subsets of
        a shrunken index range.  Requires ``rng``.
      * ``explicit``: validates the provided ``onsets``.

    Raises :class:`InfeasibleScheduleError` when ``s * (duration + 1) >
    horizon`` for the generated placements; explicit lists are checked only
    against the schedule invariants.
    """
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    if placement == "explicit":
        if onsets is None:
            raise ValueError("explicit placement requires onsets")
        return ChangeSchedule(onsets=tuple(onsets), duration=duration, horizon=horizon)
    if onsets is not None:
        raise ValueError(f"onsets are only accepted with explicit placement, not {placement!r}")
    if s == 0:
        return ChangeSchedule(onsets=(), duration=duration, horizon=horizon)
    if s * (duration + 1) > horizon:
        raise InfeasibleScheduleError(
            f"cannot place {s} non-overlapping changes of duration {duration} "
            f"in a horizon of {horizon}: need s*(duration+1) <= horizon"
        )
    if placement == "even_grid":
        # grid over the legal onset range, so the last window still fits;
        # at duration 1 this is the plain floor(k * horizon / s) grid
        last_start = horizon - duration + 1
        chosen = tuple(k * last_start // s for k in range(1, s + 1))
        return ChangeSchedule(onsets=chosen, duration=duration, horizon=horizon)
    if placement == "uniform_random":
        if rng is None:
            raise ValueError("uniform_random placement requires an rng")
        # Subtracting (i-1)*duration from the i-th onset maps valid schedules
        # one-to-one onto s-subsets of {1, ..., horizon + 1 - s*duration}.
        m = horizon + 1 - s * duration
        base = np.sort(rng.choice(m, size=s, replace=False)) + 1
        chosen = tuple(int(b + i * duration) for i, b in enumerate(base))
        return ChangeSchedule(onsets=chosen, duration=duration, horizon=horizon)
    raise ValueError(f"unknown placement {placement!r}")


def generate_sequence(
    pair: DistributionPair, schedule: ChangeSchedule, rng: np.random.Generator
) -> np.ndarray:
    """Realize the stream: F1 inside transient windows, F0 elsewhere.

    Returns a float array of length ``schedule.horizon``; index i holds the
    sample at time t = i + 1.  Deterministic given the generator state.
    """
    x = np.asarray(pair.sample("nominal", rng, schedule.horizon), dtype=float)
    affected = schedule.affected_times()
    if affected.size:
        x[affected - 1] = pair.sample("alternative", rng, affected.size)
    return x


def write_sequence_csv(path, x: np.ndarray) -> None:
    """Dump a sequence as single-column decimal text, 17 significant digits."""
    with open(path, "w", encoding="utf-8") as f:
        for v in x:
            f.write(f"{v:.17g}\n")


def read_sequence_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return np.array([float(line) for line in f if line.strip()], dtype=float)
