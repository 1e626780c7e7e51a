"""Discrete gradient descent with optional Gaussian jitter.

One update is ``p <- p - tau * grad f(p) - eps * n`` with ``n`` a standard
normal pair.  ``descend`` is the vectorised kernel every other entry point
goes through; it only does elementwise work per trial, so a trial's result
never depends on which other trials share its batch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .landscape import Point2

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class DescentParams:
    tau: float
    eps: float = 0.0
    max_steps: int = 500
    grad_tol: float = 1e-6
    escape_bound: float = 100.0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"step size tau must be positive, got {self.tau}")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ValueError(f"noise scale eps must be nonnegative, got {self.eps}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError(f"max_steps must be a positive integer, got {self.max_steps}")
        if not self.grad_tol >= 0:
            raise ValueError(f"grad_tol must be nonnegative, got {self.grad_tol}")
        if not self.escape_bound > 0:
            raise ValueError(f"escape_bound must be positive, got {self.escape_bound}")

    @property
    def noisy(self) -> bool:
        return self.eps > 0


class RngStream:
    """Counter-based random stream keyed by ``(base_seed, stream_index)``.

    Backed by numpy's Philox with the pair packed into its 128-bit key, so a
    stream's output depends on nothing but that pair.  Draws are consumed in
    order: ``normals(n)`` yields the same pairs as ``n`` calls to
    ``normal_pair()``.
    """

    def __init__(self, base_seed: int, stream_index: int):
        self.base_seed = int(base_seed)
        self.stream_index = int(stream_index)
        key = (self.base_seed & _MASK64) | ((self.stream_index & _MASK64) << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream({self.base_seed}, {self.stream_index})"

    def uniform(self, lo: float, hi: float) -> float:
        return float(self._gen.uniform(lo, hi))

    def normal_pair(self) -> np.ndarray:
        return self._gen.standard_normal(2)

    def normals(self, n: int) -> np.ndarray:
        """``n`` consecutive standard normal pairs, shape (n, 2)."""
        return self._gen.standard_normal((n, 2))


class StopReason(enum.Enum):
    MAX_STEPS = "MaxSteps"
    GRAD_TOL = "GradTol"
    ESCAPED = "Escaped"


_REASONS = (StopReason.MAX_STEPS, StopReason.GRAD_TOL, StopReason.ESCAPED)
_MAX, _GRAD, _ESC = 0, 1, 2


@dataclass(frozen=True)
class Trajectory:
    start: Point2
    end: Point2
    steps_taken: int
    final_grad_norm: float
    final_value: float
    stop_reason: StopReason


@dataclass
class BatchResult:
    """Array form of many trajectories, index-aligned with the inputs."""

    x: np.ndarray
    y: np.ndarray
    steps: np.ndarray
    reason: np.ndarray  # codes into _REASONS
    grad_norm: np.ndarray
    value: np.ndarray

    def stop_reason(self, k: int) -> StopReason:
        return _REASONS[int(self.reason[k])]


def step(field, p: Point2, params: DescentParams, rng: RngStream | None = None) -> Point2:
    """One descent update from ``p``; draws one normal pair from ``rng`` only when eps > 0."""
    gx, gy = field.gradient(np.asarray(p.x, dtype=float), np.asarray(p.y, dtype=float))
    x = p.x - params.tau * gx
    y = p.y - params.tau * gy
    if params.noisy:
        if rng is None:
            raise ValueError("a noisy step needs an RngStream")
        nx, ny = rng.normal_pair()
        x = x - params.eps * nx
        y = y - params.eps * ny
    return Point2(float(x), float(y))


def descend(field, x0, y0, params: DescentParams, noise: np.ndarray | None = None) -> BatchResult:
    """Run descent for a batch of starting points.

    ``noise`` has shape (n, max_steps, 2) and is required when eps > 0.
    Gradient-norm stopping applies only to noiseless runs; escaping past
    ``escape_bound`` (or becoming non-finite) ends a trial.
    """
    x = np.array(x0, dtype=float, ndmin=1)
    y = np.array(y0, dtype=float, ndmin=1)
    n = x.size
    if params.noisy:
        if noise is None or noise.shape != (n, params.max_steps, 2):
            raise ValueError(f"noise must have shape {(n, params.max_steps, 2)}")
    steps = np.full(n, params.max_steps, dtype=np.int64)
    reason = np.full(n, _MAX, dtype=np.int8)

    # work on the still-running trials only and scatter back as they finish
    idx = np.arange(n)
    xa, ya = x.copy(), y.copy()
    tau, eps, bound = params.tau, params.eps, params.escape_bound
    check_grad = not params.noisy

    for t in range(params.max_steps):
        gx, gy = field.gradient(xa, ya)
        if check_grad:
            done = np.hypot(gx, gy) <= params.grad_tol
            if done.any():
                k = idx[done]
                x[k], y[k], steps[k], reason[k] = xa[done], ya[done], t, _GRAD
                keep = ~done
                idx, xa, ya, gx, gy = idx[keep], xa[keep], ya[keep], gx[keep], gy[keep]
                if idx.size == 0:
                    break
        xa = xa - tau * gx
        ya = ya - tau * gy
        if eps > 0:
            xa = xa - eps * noise[idx, t, 0]
            ya = ya - eps * noise[idx, t, 1]
        esc = ~((np.abs(xa) <= bound) & (np.abs(ya) <= bound))
        if esc.any():
            k = idx[esc]
            x[k], y[k], steps[k], reason[k] = xa[esc], ya[esc], t + 1, _ESC
            keep = ~esc
            idx, xa, ya = idx[keep], xa[keep], ya[keep]
            if idx.size == 0:
                break
    x[idx], y[idx] = xa, ya

    gx, gy = field.gradient(x, y)
    return BatchResult(x, y, steps, reason, np.hypot(gx, gy), np.asarray(field.value(x, y), dtype=float))


def run_trajectory(field, start: Point2, params: DescentParams, rng: RngStream | None = None) -> Trajectory:
    """Descend from ``start``; noise (if any) is drawn from ``rng`` in step order."""
    noise = None
    if params.noisy:
        if rng is None:
            raise ValueError("a noisy trajectory needs an RngStream")
        noise = rng.normals(params.max_steps)[None]
    res = descend(field, [start.x], [start.y], params, noise)
    return Trajectory(
        start=start,
        end=finite_point(res.x[0], res.y[0]),
        steps_taken=int(res.steps[0]),
        final_grad_norm=float(res.grad_norm[0]),
        final_value=float(res.value[0]),
        stop_reason=res.stop_reason(0),
    )


def finite_point(x, y) -> Point2:
    # an overflowed escapee is reported as a point far outside any region
    big = np.finfo(float).max
    return Point2(float(np.nan_to_num(x, nan=big, posinf=big, neginf=-big)),
                  float(np.nan_to_num(y, nan=big, posinf=big, neginf=-big)))
