"""Learnable monotone interpolation map lambda(s): [s_min, s_max] -> [0, 1].

The map is built from learnable logits phi: a softmax turns them into positive
increments, a cumulative sum stacks the increments into a non-decreasing grid
of lambda values, and off-grid scalars are evaluated by piecewise-linear
interpolation between adjacent grid points.

Two learnable modes differ in how the grid endpoints behave:

* ``exact_endpoint`` (default): phi has S-1 entries and the grid value at
  index i is the sum of the first i increments, so lambda is exactly 0 at
  s_min and exactly 1 at s_max.
* ``paper_cumsum``: phi has S entries and grid value i includes increment i,
  so the first grid value is already positive.

``fixed_linear`` is the non-learnable ramp lambda(s) = (s-s_min)/(s_max-s_min).

Both learnable grids are normalized by their final cumulative value. That is
an algebraic no-op (softmax increments sum to one, and the normalizer has zero
derivative), but it pins the endpoints bit-exactly against float rounding.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import DomainError, UsageError
from .tensor import Tensor, concat, cumulative_sum, div, element, softmax

MODES = ("exact_endpoint", "paper_cumsum", "fixed_linear")


class MonotoneInterpolant:
    """Monotone lambda(s) over a grid of S scalar values."""

    def __init__(self, grid_size: int = 1000, mode: str = "exact_endpoint",
                 s_min: float = 0.0, s_max: float = 1.0):
        if mode not in MODES:
            raise UsageError(f"unknown interpolant mode {mode!r}; pick one of {MODES}")
        if grid_size < 2:
            raise UsageError(f"grid_size must be >= 2, got {grid_size}")
        if not s_max > s_min:
            raise DomainError(f"need s_min < s_max, got [{s_min}, {s_max}]")
        self.grid_size = int(grid_size)
        self.mode = mode
        self.s_min = float(s_min)
        self.s_max = float(s_max)
        if mode == "fixed_linear":
            self.phi = None
        else:
            n_logits = grid_size - 1 if mode == "exact_endpoint" else grid_size
            # zero logits -> uniform increments -> lambda starts as the linear ramp
            self.phi = Tensor(np.zeros(n_logits), grad_tracked=True)

    @property
    def n_logits(self) -> int:
        return 0 if self.phi is None else self.phi.size

    def grid_scalars(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.grid_size)

    def lambda_grid(self) -> Tensor:
        """All S lambda values as one tensor; differentiable w.r.t. phi."""
        if self.mode == "fixed_linear":
            return Tensor(np.linspace(0.0, 1.0, self.grid_size))
        p = softmax(self.phi)
        c = cumulative_sum(p)
        total = element(c, c.size - 1)
        if self.mode == "exact_endpoint":
            c = concat([Tensor(np.zeros(1)), c])
        return div(c, total)

    def lambda_table(self) -> np.ndarray:
        """Grid lambda values without gradient tracking."""
        return self.lambda_grid().data.copy()

    def _grid_position(self, s: float) -> float:
        if not self.s_min <= s <= self.s_max:
            raise DomainError(
                f"scalar {s} outside interpolant domain [{self.s_min}, {self.s_max}]")
        return (s - self.s_min) / (self.s_max - self.s_min) * (self.grid_size - 1)

    def lambda_eval(self, s: float) -> Tensor:
        """lambda(s) as a 0-d tensor; gradient flows to phi through the tape."""
        pos = self._grid_position(s)
        if self.mode == "fixed_linear":
            return Tensor(np.float64(pos / (self.grid_size - 1)))
        i0 = min(int(np.floor(pos)), self.grid_size - 2)
        w = pos - i0
        grid = self.lambda_grid()
        if w == 0.0:
            return element(grid, i0)
        return (1.0 - w) * element(grid, i0) + w * element(grid, i0 + 1)

    def lambda_grad_phi(self, grid_index: int) -> np.ndarray:
        """Analytic Jacobian row d lambda(s_i) / d phi at grid point i (0-based).

        exact_endpoint: p_j * (1[j < i] - lambda_i); paper_cumsum uses j <= i.
        Cross-check for the taped gradient, not used in training.
        """
        if self.mode == "fixed_linear":
            raise UsageError("fixed_linear interpolant has no learnable parameters")
        if not 0 <= grid_index < self.grid_size:
            raise DomainError(f"grid index {grid_index} out of range")
        e = np.exp(self.phi.data - self.phi.data.max())
        p = e / e.sum()
        if self.mode == "exact_endpoint":
            indicator = (np.arange(p.size) < grid_index).astype(np.float64)
        else:
            indicator = (np.arange(p.size) <= grid_index).astype(np.float64)
        lam_i = float(np.dot(p, indicator))
        return p * (indicator - lam_i)


def export_lambda_csv(interp: MonotoneInterpolant, path) -> None:
    """Write the lambda table as CSV with columns grid_index, s, lambda."""
    scalars = interp.grid_scalars()
    table = interp.lambda_table()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["grid_index", "s", "lambda"])
        for i, (s, lam) in enumerate(zip(scalars, table)):
            writer.writerow([i, repr(float(s)), repr(float(lam))])
