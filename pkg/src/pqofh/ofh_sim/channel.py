from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class ChannelModel:
    base_delay_us: float = 0.0
    delay_jitter_us: float = 0.0
    loss_rate: float = 0.0

    def __post_init__(self):
        if self.base_delay_us < 0 or self.delay_jitter_us < 0:
            raise ValueError("delays must be non-negative")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError("loss_rate must lie in [0, 1]")

    @property
    def delay_stddev_us(self) -> float:
        return self.delay_jitter_us / np.sqrt(3.0)


class Channel:
    """Seeded loss and delay. Same model and seed give the same drop/delay sequence."""

    def __init__(self, model: ChannelModel, seed: int = 0):
        self.model = model
        self._rng = np.random.default_rng(seed)

    def sample(self, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """(dropped mask, delay in ns) for the next ``count`` packets."""
        m = self.model
        dropped = self._rng.random(count) < m.loss_rate
        offsets = self._rng.uniform(-m.delay_jitter_us, m.delay_jitter_us, count) if m.delay_jitter_us else np.zeros(count)
        delay_ns = np.rint(np.maximum(m.base_delay_us + offsets, 0.0) * 1000.0).astype(np.int64)
        return dropped, delay_ns

    def inject(self, send_ns: int) -> Optional[int]:
        """Delivery time for one packet sent at ``send_ns``, or None if dropped."""
        dropped, delay = self.sample(1)
        if dropped[0]:
            return None
        return send_ns + int(delay[0])


def inject_channel(send_ns: int, channel: Channel) -> Optional[int]:
    return channel.inject(send_ns)
