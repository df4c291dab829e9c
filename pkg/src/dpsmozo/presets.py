"""Named experiment presets.

Each preset pins the decoding shape used for one of the reference datasets:
generation cap for online answers (t_max) and synthetic demos (t_max_synth),
the zero-shot top-k support size, the number of demonstrations mixed per
step, the planned query allowance, and the dataset's reference pool size
(used for the default delta = 1/pool_size when no pool file dictates it).
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["DatasetPreset", "PRESETS"]


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    pool_size: int
    t_max: int
    t_max_synth: int
    top_k: int
    n_shots: int
    n_test: int

    @property
    def default_delta(self) -> float:
        return 1.0 / self.pool_size


PRESETS = {
    "samsum": DatasetPreset("samsum", pool_size=14732, t_max=50, t_max_synth=30,
                            top_k=100, n_shots=4, n_test=100),
    "e2e": DatasetPreset("e2e", pool_size=42061, t_max=25, t_max_synth=20,
                         top_k=100, n_shots=4, n_test=100),
    "wikilarge": DatasetPreset("wikilarge", pool_size=149000, t_max=25, t_max_synth=20,
                               top_k=100, n_shots=4, n_test=100),
}
