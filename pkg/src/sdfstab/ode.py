"""Dormand-Prince 5(4) integration of ``x' = rhs(x, u)`` with piecewise-constant ``u``.

Pure-Python on small state vectors: the systems here have a handful of
states and the per-step overhead of numpy arrays would dominate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Rhs = Callable[[Sequence[float], float], Sequence[float]]

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# b - b_hat (5th minus embedded 4th order weights)
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

MAX_STEPS = 200_000


class IntegrationError(RuntimeError):
    """Step size underflow or a non-finite state; ``time`` is where it happened."""

    def __init__(self, message: str, time: float, state=None):
        self.time = time
        self.state = state
        super().__init__(f"{message} at t={time:.6g}")


def _dp_step(rhs: Rhs, x: list, k1: list, u: float, h: float):
    n = len(x)
    r = range(n)
    k2 = rhs([x[i] + h * A21 * k1[i] for i in r], u)
    k3 = rhs([x[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in r], u)
    k4 = rhs([x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in r], u)
    k5 = rhs([x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]) for i in r], u)
    k6 = rhs([x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
              for i in r], u)
    xn = [x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]) for i in r]
    k7 = rhs(xn, u)
    err = [h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
           for i in r]
    return xn, k7, err


def _initial_step(rhs: Rhs, x: list, u: float, k1: list, tol: float, span: float) -> float:
    d0 = max(abs(v) for v in x)
    d1 = max(abs(v) for v in k1)
    if d1 < 1e-12:
        h = span
    elif d0 < 1e-5:
        h = 1e-6 + tol ** 0.2 / d1
    else:
        h = 0.01 * d0 / d1
    return min(span, max(h, 1e-10))


def flow(rhs: Rhs, x0: Sequence[float], u: float, duration: float, tol: float = 1e-10, *,
         record: Callable[[float, list], bool | None] | None = None,
         t0: float = 0.0) -> list:
    """Integrate for ``duration`` (negative means backward) with constant input ``u``.

    Per accepted step the local error estimate satisfies
    ``|err_i| <= tol * (1 + max(|x_i|, |x_new_i|))``.  ``record(t, x)`` is
    called after every accepted step; returning ``True`` stops early.
    """
    x = [float(v) for v in x0]
    if duration == 0.0:
        return x
    direction = 1.0 if duration > 0 else -1.0
    span = abs(duration)
    if direction > 0:
        f = rhs
    else:
        def f(y, uu):
            return [-v for v in rhs(y, uu)]
    k1 = f(x, u)
    h = _initial_step(f, x, u, k1, tol, span)
    s = 0.0
    steps = 0
    while s < span:
        if span - s <= h * (1 + 1e-12):
            h = span - s
            last = True
        else:
            last = False
        xn, k7, err = _dp_step(f, x, k1, u, h)
        e = 0.0
        for i in range(len(x)):
            sc = tol * (1.0 + max(abs(x[i]), abs(xn[i])))
            e = max(e, abs(err[i]) / sc)
        if not math.isfinite(e):
            if h < 1e-14 * max(1.0, span):
                raise IntegrationError("non-finite state", t0 + direction * s, x)
            h *= 0.1
            continue
        if e <= 1.0:
            s = span if last else s + h
            x, k1 = xn, k7
            steps += 1
            if record is not None and record(t0 + direction * s, x):
                return x
            fac = 5.0 if e == 0.0 else min(5.0, max(0.2, 0.9 * e ** -0.2))
            h *= fac
        else:
            h *= max(0.1, 0.9 * e ** -0.2)
        if h < 1e-14 * max(1.0, span) and s < span:
            raise IntegrationError("step size underflow", t0 + direction * s, x)
        if steps > MAX_STEPS:
            raise IntegrationError("too many steps", t0 + direction * s, x)
    return x


def flow_fixed(rhs: Rhs, x0: Sequence[float], u: float, duration: float, steps: int) -> list:
    """Fixed-step Dormand-Prince (5th-order solution), for order checks."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = [float(v) for v in x0]
    h = duration / steps
    for _ in range(steps):
        x, _, _ = _dp_step(rhs, x, rhs(x, u), u, h)
    return x


@dataclass
class DenseTrajectory:
    """States at integrator steps and at every segment boundary."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    boundary_index: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self):
        return len(self.times)


def integrate_segments(rhs: Rhs, x0: Sequence[float], segments: Sequence[tuple[float, float]],
                       tol: float = 1e-10, *, t0: float = 0.0,
                       stop: Callable[[list], bool] | None = None) -> tuple[DenseTrajectory, bool]:
    """Integrate a sequence of ``(duration, u)`` segments without straddling boundaries.

    Returns the dense trajectory and whether ``stop`` fired (then the
    trajectory ends at the first offending step).
    """
    times = [t0]
    states = [list(map(float, x0))]
    inputs = [segments[0][1] if segments else 0.0]
    boundaries = [0]
    x = states[0]
    t = t0
    stopped = False
    for duration, u in segments:
        if duration < 0:
            raise ValueError("segment durations must be non-negative")
        inputs[-1] = u

        def rec(tt, xx, _u=u):
            nonlocal stopped
            times.append(tt)
            states.append(xx)
            inputs.append(_u)
            if stop is not None and stop(xx):
                stopped = True
                return True
            return None

        x = flow(rhs, x, u, duration, tol, record=rec, t0=t)
        if stopped:
            break
        t += duration
        times[-1] = t  # exact boundary time
        boundaries.append(len(times) - 1)
    traj = DenseTrajectory(np.array(times), np.array(states, dtype=float), np.array(inputs),
                           boundaries)
    return traj, stopped
