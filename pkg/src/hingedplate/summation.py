"""Compensated (Kahan-Neumaier) accumulation for long series sums.

Sums with 1e5 terms must stay reproducible to ~1e-9 against arbitrary
precision oracles; plain float accumulation loses that near the tail.
"""

import numpy as np


class CompensatedSum:
    """Kahan-Neumaier accumulator for scalars or same-shape ndarrays."""

    def __init__(self, like=0.0):
        self._s = np.zeros_like(like, dtype=float) if np.ndim(like) else 0.0
        self._c = np.zeros_like(like, dtype=float) if np.ndim(like) else 0.0

    def add(self, x):
        t = self._s + x
        if np.ndim(self._s):
            big = np.abs(self._s) >= np.abs(x)
            self._c += np.where(big, (self._s - t) + x, (x - t) + self._s)
        else:
            if abs(self._s) >= abs(x):
                self._c += (self._s - t) + x
            else:
                self._c += (x - t) + self._s
        self._s = t
        return self

    @property
    def value(self):
        return self._s + self._c
