"""Result records shared by the experiments and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class SweepRow:
    experiment: str
    m: int
    seed: int
    metric: str
    value: float
    std_err: Optional[float] = None

    def sort_key(self):
        return (self.experiment, self.m, self.seed, self.metric)


@dataclass
class TrialReport:
    """Metrics from one run; ``std_errs`` holds Monte Carlo errors where they apply."""

    experiment: str
    m: int
    seed: int
    metrics: dict[str, float] = field(default_factory=dict)
    std_errs: dict[str, float] = field(default_factory=dict)
    # e.g. {"empirical_mode": True} when a run is outside the proven regime
    flags: dict[str, bool] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.metrics[key]

    def rows(self) -> list[SweepRow]:
        out = [SweepRow(self.experiment, self.m, self.seed, k, float(v), self.std_errs.get(k))
               for k, v in self.metrics.items()]
        out.extend(SweepRow(self.experiment, self.m, self.seed, f"flag_{k}", 1.0 if v else 0.0)
                   for k, v in self.flags.items())
        return out
