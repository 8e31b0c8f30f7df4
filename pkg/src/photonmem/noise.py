"""Concrete noise-count law used by the PMF oracle and the simulator.

The closed-form statistics only ever use the mean and the second-order
autocorrelation g2 of a noise channel. Whenever an actual distribution
is required (sampling clicks, building probability tables) we realise
the pair (mean, g2) as a two-component mixture of a thermal and a
Poissonian law:

* 1 <= g2 <= 2: equal-mean mixture, weight ``g2 - 1`` on the thermal
  component.  g2 = 1 is pure Poissonian, g2 = 2 pure thermal.
* g2 > 2: mixture of a thermal component and vacuum (Poissonian with
  zero mean), weight ``2 / g2`` on the thermal part.

g2 < 1 (sub-Poissonian noise) cannot be realised by this family and
raises ValueError in sampling contexts; the closed forms elsewhere in
the package still accept any g2 >= 0 since they treat it as a number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson


@dataclass(frozen=True)
class NoiseLaw:
    """Detected noise counts with given mean and autocorrelation g2."""

    mean: float
    g2: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.mean) or self.mean < 0:
            raise ValueError(f"noise mean must be finite and >= 0, got {self.mean}")
        if not np.isfinite(self.g2) or self.g2 < 0:
            raise ValueError(f"noise g2 must be finite and >= 0, got {self.g2}")

    def components(self) -> tuple[float, float, float]:
        """Mixture weight on the thermal part and the two component means.

        Returns (w_thermal, mean_thermal, mean_poisson).
        """
        if self.mean == 0:
            return 0.0, 0.0, 0.0
        if self.g2 < 1:
            raise ValueError(
                f"g2={self.g2} < 1 cannot be realised by a thermal/Poissonian mixture"
            )
        if self.g2 <= 2:
            return self.g2 - 1.0, self.mean, self.mean
        return 2.0 / self.g2, self.mean * self.g2 / 2.0, 0.0

    def pgf(self, s):
        """Probability generating function E[s^N], elementwise in s."""
        if self.mean == 0:
            return np.ones_like(np.asarray(s, dtype=float)) + 0.0
        w, mt, mp = self.components()
        s = np.asarray(s, dtype=float)
        thermal = 1.0 / (1.0 + mt * (1.0 - s))
        poissonian = np.exp(mp * (s - 1.0))
        return w * thermal + (1.0 - w) * poissonian

    def pmf(self, n_max: int) -> np.ndarray:
        """P(N = 0..n_max) as a dense vector."""
        k = np.arange(n_max + 1)
        if self.mean == 0:
            out = np.zeros(n_max + 1)
            out[0] = 1.0
            return out
        w, mt, mp = self.components()
        if mt > 0:
            q = mt / (1.0 + mt)
            thermal = (1.0 - q) * q**k
        else:
            thermal = np.zeros(n_max + 1)
            thermal[0] = 1.0
        return w * thermal + (1.0 - w) * poisson.pmf(k, mp)

    def p0_p1(self) -> tuple[float, float]:
        """P(N=0) and P(N=1); the only pointwise values the closed forms need."""
        p = self.pmf(1)
        return float(p[0]), float(p[1])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw `size` independent counts.

        Always performs the same sequence of RNG calls so that streams
        stay reproducible regardless of parameter values.
        """
        if self.mean == 0:
            return np.zeros(size, dtype=np.int64)
        w, mt, mp = self.components()
        pick_thermal = rng.random(size) < w
        # geometric(p) has support {1, 2, ...}; shift to {0, 1, ...}
        thermal = rng.geometric(1.0 / (1.0 + mt), size) - 1
        poissonian = rng.poisson(mp, size)
        return np.where(pick_thermal, thermal, poissonian).astype(np.int64)
