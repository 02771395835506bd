"""Sampled-data closed loop: at each sample instant a decrease witness is
synthesized from the measured state and applied open-loop until the next
sample.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifier import PreconditionError
from .ode import IntegrationError, integrate_segments
from .synth import ControlSchedule, SynthesisError, SynthParams, synthesize
from .systems import SystemDef

CONVERGED = "converged"
HORIZON = "horizon"
DIVERGED = "diverged"
ERROR = "error"


@dataclass(frozen=True)
class Partition:
    """Sample instants ``0 = T1 < T2 < ...`` covering ``[0, horizon]``."""

    times: tuple[float, ...]

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        if not ts or ts[0] != 0.0:
            raise ValueError("a partition starts at T1 = 0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("partition instants must be strictly increasing")
        object.__setattr__(self, "times", ts)

    @property
    def horizon(self) -> float:
        return self.times[-1]

    @classmethod
    def uniform(cls, delta: float, horizon: float) -> "Partition":
        if not delta > 0 or not horizon > 0:
            raise ValueError("delta and horizon must be positive")
        n = int(round(horizon / delta))
        if abs(n * delta - horizon) > 1e-9 * horizon:
            n = int(math.ceil(horizon / delta))
        ts = [k * delta for k in range(n)] + [horizon]
        return cls(tuple(ts))

    @classmethod
    def random(cls, lo: float, hi: float, horizon: float, seed: int) -> "Partition":
        if not 0 < lo <= hi:
            raise ValueError("need 0 < lo <= hi")
        rng = np.random.default_rng(seed)
        ts = [0.0]
        while ts[-1] < horizon:
            ts.append(min(horizon, ts[-1] + float(rng.uniform(lo, hi))))
        if ts[-1] - ts[-2] <= 0:
            ts.pop()
        return cls(tuple(ts))

    @classmethod
    def explicit(cls, times: Sequence[float]) -> "Partition":
        return cls(tuple(times))


@dataclass
class SampledTrajectory:
    dimension: int
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    V: np.ndarray
    sample_times: list[float]
    sample_states: list[list[float]]
    sample_V: list[float]
    schedules: list[ControlSchedule]
    termination: str
    message: str = ""
    margins: list[float] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return np.asarray(self.sample_states[-1])

    @property
    def peak(self) -> float:
        return float(np.max(np.linalg.norm(self.states, axis=1))) if len(self.states) else 0.0

    @property
    def converged(self) -> bool:
        return self.termination == CONVERGED

    @property
    def convergence_time(self) -> float | None:
        return self.sample_times[-1] if self.converged else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(self.dimension)] + ["u", "V"])
        for t, x, u, v in zip(self.times, self.states, self.inputs, self.V):
            w.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(u)), repr(float(v))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "termination": self.termination,
            "message": self.message,
            "samples": [{"t": t, "x": x, "V": v} for t, x, v in
                        zip(self.sample_times, self.sample_states, self.sample_V)],
            "schedules": [s.to_dict() for s in self.schedules],
            "peak": self.peak,
            "min_margin": min(self.margins) if self.margins else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def run_closed_loop(sys: SystemDef, x0, partition: Partition, params: SynthParams | None = None, *,
                    R: float = 2.0, radius: float = 1e-2, divergence: float | None = None,
                    tol: float = 1e-12) -> SampledTrajectory:
    """Simulate the sampled-data loop until the horizon, convergence or divergence.

    At each sample outside ``radius`` a witness is synthesized with cap
    equal to the sampling interval and padded with ``u = 0``.  The applied
    trajectory is integrated at ``tol``, the same tolerance at which the
    synthesizer re-verifies its witness.
    """
    params = params or SynthParams()
    x = [float(v) for v in x0]
    if len(x) != sys.dimension:
        raise PreconditionError(f"x0 has length {len(x)}, system dimension is {sys.dimension}")
    if not np.linalg.norm(x) <= R:
        raise PreconditionError(f"x0 lies outside the operating ball of radius {R}")
    divergence = 1e3 * R if divergence is None else divergence
    Vf = sys.V.compiled

    times, states, inputs = [0.0], [x], [0.0]
    s_times, s_states, s_V = [0.0], [x], [Vf(x)]
    schedules: list[ControlSchedule] = []
    margins: list[float] = []
    termination, message = HORIZON, ""
    T = partition.times
    for i in range(len(T)):
        nrm = float(np.linalg.norm(x))
        if nrm <= radius:
            termination = CONVERGED
            break
        if nrm >= divergence:
            termination = DIVERGED
            break
        if i == len(T) - 1:
            break
        dt = T[i + 1] - T[i]
        try:
            w = synthesize(sys, x, dt, params, pad=True)
            traj, _ = integrate_segments(sys.rhs, x, w.schedule.segments, tol, t0=T[i])
        except (SynthesisError, IntegrationError, ArithmeticError) as exc:
            termination, message = ERROR, f"t={T[i]:.6g}: {exc}"
            break
        schedules.append(w.schedule)
        inputs[-1] = w.schedule.segments[0][1]
        times.extend(traj.times[1:].tolist())
        states.extend(traj.states[1:].tolist())
        inputs.extend(traj.inputs[1:].tolist())
        x = traj.states[-1].tolist()
        times[-1] = T[i + 1]
        s_times.append(T[i + 1])
        s_states.append(x)
        s_V.append(Vf(x))
        margins.append(s_V[-2] - s_V[-1])
    st = np.array(states, dtype=float)
    Vs = np.array([Vf(p) for p in states])
    return SampledTrajectory(sys.dimension, np.array(times), st, np.array(inputs), Vs,
                             s_times, s_states, s_V, schedules, termination, message, margins)


@dataclass
class StabilityReport:
    deltas: list[float]
    peaks: dict[float, list[float]]
    convergence_times: dict[float, list[float | None]]
    failures: dict[float, list[str]] = field(default_factory=dict)

    @property
    def sup_peak(self) -> dict[float, float]:
        return {d: (max(p) if p else 0.0) for d, p in self.peaks.items()}

    def table(self) -> list[tuple[float, float]]:
        """``(delta, eps)`` rows with ``eps`` the empirical sup of peak norms."""
        sp = self.sup_peak
        return [(d, sp[d]) for d in self.deltas]

    def is_monotone(self, slack: float = 0.1) -> bool:
        rows = self.table()
        return all(b[1] >= a[1] * (1 - slack) for a, b in zip(rows, rows[1:]))

    def to_dict(self) -> dict:
        return {
            "table": [{"delta": d, "sup_peak": e} for d, e in self.table()],
            "peaks": {repr(d): p for d, p in self.peaks.items()},
            "convergence_times": {repr(d): c for d, c in self.convergence_times.items()},
            "failures": {repr(d): f for d, f in self.failures.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def random_on_sphere(rng: np.random.Generator, n: int, r: float) -> np.ndarray:
    v = rng.normal(size=n)
    return r * v / np.linalg.norm(v)


def stability_sweep(sys: SystemDef, deltas: Sequence[float], partition: Partition,
                    samples: int = 20, seed: int = 0, params: SynthParams | None = None, *,
                    R: float | None = None, radius: float = 1e-2) -> StabilityReport:
    """Closed loops from random ``|x0| = delta``; records the peak ``|x(t)|`` per run."""
    rng = np.random.default_rng(seed)
    deltas = [float(d) for d in deltas]
    peaks: dict[float, list[float]] = {}
    conv: dict[float, list] = {}
    fails: dict[float, list[str]] = {}
    for d in deltas:
        peaks[d], conv[d], fails[d] = [], [], []
        if d == 0.0:
            peaks[d].append(0.0)
            conv[d].append(0.0)
            continue
        for _ in range(samples):
            x0 = random_on_sphere(rng, sys.dimension, d)
            tr = run_closed_loop(sys, x0, partition, params, R=R if R is not None else max(2.0, d),
                                 radius=radius)
            peaks[d].append(tr.peak)
            conv[d].append(tr.convergence_time)
            if tr.termination == ERROR:
                fails[d].append(tr.message)
    return StabilityReport(deltas, peaks, conv, fails)
