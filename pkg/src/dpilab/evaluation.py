"""Evaluation protocols: denoising sweeps, sample-quality metrics, plots.

The denoising sweep shares noise realizations across strategies by keying
every draw on (base_seed, t, realization index) only, so two models evaluated
on the same seeds consume identical (x_t, eps) pairs regardless of order.

Sample quality at desk scale is measured by energy distance (metric,
parameter-free, brute-force checkable) and mixture mode coverage instead of
feature-space scores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .diffusion import VPSchedule, corrupt, predict_eps
from .errors import ConfigError, ShapeError
from .flow import path_point, predict_v, velocity_target
from .networks import ConditionedModel

Array = np.ndarray


@dataclass(frozen=True)
class SweepRow:
    t: int
    sigma: float
    eps_mse: float
    noise_scaled_mse: float


@dataclass
class SweepReport:
    strategy: str
    seeds: int
    rows: list[SweepRow]

    def expected_eps_mse(self) -> float:
        """Mean eps-MSE over the sweep grid (the 'expected over the schedule'
        summary column)."""
        return float(np.mean([row.eps_mse for row in self.rows]))


def default_t_grid(T: int) -> np.ndarray:
    """Uniform 10-point grid; for T=1000 it contains all four anchor steps
    {0, 333, 666, 999}."""
    return np.unique(np.round(np.linspace(0, T - 1, 10)).astype(int))


def denoise_sweep(model: ConditionedModel, sched: VPSchedule, test_x0: Array,
                  t_grid=None, n_seeds: int = 20, base_seed: int = 0,
                  strategy_label: str | None = None) -> SweepReport:
    """Per-noise-level noise-prediction error with shared realizations."""
    grid = default_t_grid(sched.T) if t_grid is None else np.asarray(t_grid, dtype=int)
    rows = []
    for t in grid:
        acc = 0.0
        for k in range(n_seeds):
            rng = np.random.default_rng([base_seed, int(t), k])
            eps = rng.standard_normal(test_x0.shape)
            x_t = corrupt(test_x0, int(t), eps, sched)
            eps_hat = predict_eps(model, x_t, int(t), sched)
            acc += float(np.mean((eps_hat - eps) ** 2))
        eps_mse = acc / n_seeds
        sigma = float(sched.sigma[int(t)])
        rows.append(SweepRow(t=int(t), sigma=sigma, eps_mse=eps_mse,
                             noise_scaled_mse=sigma * sigma * eps_mse))
    label = strategy_label if strategy_label is not None else model.strategy
    return SweepReport(strategy=label, seeds=n_seeds, rows=rows)


def flow_objective(model: ConditionedModel, test_x1: Array, n_times: int = 100,
                   n_seeds: int = 20, base_seed: int = 0) -> float:
    """Held-out velocity-regression error over a uniform time grid with
    shared noise draws."""
    total = 0.0
    for ti in range(n_times):
        t = ti / (n_times - 1) if n_times > 1 else 0.5
        for k in range(n_seeds):
            rng = np.random.default_rng([base_seed, ti, k])
            x0 = rng.standard_normal(test_x1.shape)
            x_t = path_point(test_x1, x0, t)
            v = velocity_target(test_x1, x0)
            total += float(np.mean((predict_v(model, x_t, t) - v) ** 2))
    return total / (n_times * n_seeds)


def diffusion_objective(model: ConditionedModel, sched: VPSchedule, test_x0: Array,
                        t_stride: int = 10, n_seeds: int = 20,
                        base_seed: int = 0) -> float:
    """Held-out expected eps-MSE over the schedule (strided scalar grid)."""
    grid = np.arange(0, sched.T, t_stride)
    report = denoise_sweep(model, sched, test_x0, t_grid=grid, n_seeds=n_seeds,
                           base_seed=base_seed)
    return report.expected_eps_mse()


# ---------------------------------------------------------------------------
# sample-quality metrics
# ---------------------------------------------------------------------------

def _mean_cross_distance(a: Array, b: Array, block: int = 2048) -> float:
    total = 0.0
    for lo in range(0, a.shape[0], block):
        chunk = a[lo:lo + block]
        d2 = np.sum(chunk * chunk, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] \
            - 2.0 * chunk @ b.T
        total += float(np.sqrt(np.maximum(d2, 0.0)).sum())
    return total / (a.shape[0] * b.shape[0])


def energy_distance(a: Array, b: Array) -> float:
    """2 E|a-b| - E|a-a'| - E|b-b'| over all pairs (V-statistic)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"energy_distance: bad shapes {a.shape} vs {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ShapeError("energy_distance: empty sample set")
    return (2.0 * _mean_cross_distance(a, b)
            - _mean_cross_distance(a, a)
            - _mean_cross_distance(b, b))


def mode_coverage(samples: Array, centers: Array, radius: float,
                  min_share: float = 0.01):
    """Assign samples to nearest centers; a mode counts as covered when at
    least min_share of all samples land within radius of it."""
    if radius <= 0:
        raise ConfigError(f"mode_coverage: radius must be positive, got {radius}")
    samples = np.asarray(samples, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    d2 = np.sum(samples * samples, axis=1)[:, None] \
        + np.sum(centers * centers, axis=1)[None, :] - 2.0 * samples @ centers.T
    nearest = np.argmin(d2, axis=1)
    within = np.sqrt(np.maximum(d2[np.arange(len(samples)), nearest], 0.0)) <= radius
    counts = np.bincount(nearest[within], minlength=len(centers))
    covered = float(np.mean(counts >= min_share * len(samples)))
    return counts, covered


# ---------------------------------------------------------------------------
# CSV and SVG emitters
# ---------------------------------------------------------------------------

def sweep_to_csv(reports: list[SweepReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "sigma", "eps_mse", "noise_scaled_mse",
                         "strategy", "seeds"])
        for rep in reports:
            for row in rep.rows:
                writer.writerow([row.t, repr(row.sigma), repr(row.eps_mse),
                                 repr(row.noise_scaled_mse), rep.strategy, rep.seeds])


def samples_to_csv(samples: Array, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for row in np.asarray(samples):
            writer.writerow([repr(float(row[0])), repr(float(row[1]))])


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_plot(series, path, title: str = "", xlabel: str = "",
                  ylabel: str = "", logy: bool = False) -> None:
    """Minimal hand-written SVG polyline plot on a fixed 800x500 canvas.

    series is a list of (label, xs, ys) triples.
    """
    width, height = 800, 500
    ml, mr, mt, mb = 70, 160, 40, 50
    xs_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys_all = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if logy:
        ys_all = np.log10(np.maximum(ys_all, 1e-300))
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def sy(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width/2:.0f}" y="24" text-anchor="middle" '
             f'font-size="16">{title}</text>']
    # axes
    parts.append(f'<line x1="{ml}" y1="{height-mb}" x2="{width-mr}" y2="{height-mb}" '
                 'stroke="black"/>')
    parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height-mb}" stroke="black"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{sx(xv):.1f}" y="{height-mb+18}" text-anchor="middle" '
                     f'font-size="11">{xv:.3g}</text>')
        label = f"1e{yv:.2f}" if logy else f"{yv:.3g}"
        parts.append(f'<text x="{ml-8}" y="{sy(yv)+4:.1f}" text-anchor="end" '
                     f'font-size="11">{label}</text>')
    parts.append(f'<text x="{(ml+width-mr)/2:.0f}" y="{height-10}" text-anchor="middle" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="18" y="{(mt+height-mb)/2:.0f}" text-anchor="middle" '
                 f'font-size="13" transform="rotate(-90 18 {(mt+height-mb)/2:.0f})">'
                 f'{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(series):
        ys = np.asarray(ys, dtype=float)
        if logy:
            ys = np.log10(np.maximum(ys, 1e-300))
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
                       for x, y in zip(xs, ys))
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="2"/>')
        ly = mt + 18 * (i + 1)
        parts.append(f'<line x1="{width-mr+10}" y1="{ly}" x2="{width-mr+34}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width-mr+40}" y="{ly+4}" font-size="12">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def efficiency_csv(rows: list[dict], path) -> None:
    """Parameter/FLOP accounting table (one row per strategy)."""
    cols = ["strategy", "param_count", "forward_flops", "blend_flops",
            "blend_ratio", "blend_ratio_per_sample"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([row.get(c, "") for c in cols])
