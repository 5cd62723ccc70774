"""Game containers and the canonical 15-second scoring grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

GAME_MINUTES = 48.0
N_STEPS = 192  # 15-second spacing over 48 minutes
LAST_SAMPLE = 47.0 + 59.0 / 60.0  # 47:59, just before the horn


def game_times(n_steps: int = N_STEPS) -> np.ndarray:
    """Sampling times in minutes, ``t_0 = 0`` through ``t_{n_steps}``.

    Interior points are equally spaced over the game; the final sample sits
    at 47:59 rather than 48:00.
    """
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    t = np.arange(n_steps + 1) * (GAME_MINUTES / n_steps)
    t[-1] = LAST_SAMPLE
    return t


@dataclass
class GamePath:
    game_id: str
    season: str
    times: np.ndarray
    score_diff: np.ndarray  # home minus away
    home_win: int
    probs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.score_diff = np.asarray(self.score_diff, dtype=float)
        if self.times.shape != self.score_diff.shape:
            raise DomainError(f"game {self.game_id}: times and score_diff differ in length")
        if len(self.score_diff) and self.score_diff[0] != 0:
            raise DomainError(f"game {self.game_id}: score difference at tip-off must be 0")
        if self.home_win not in (0, 1):
            raise DomainError(f"game {self.game_id}: home_win must be 0 or 1")
        self.home_win = int(self.home_win)

    @property
    def n_points(self) -> int:
        return len(self.times)
