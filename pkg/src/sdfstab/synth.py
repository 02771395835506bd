"""Finite-duration decrease witnesses: open-loop controls that lower ``V``.

A witness from ``x0`` is a piecewise-constant control on ``[0, eps]`` with
``V(x(eps)) < V(x0)`` and ``V(x(s)) <= 2 V(x0)`` along the way.  Two shapes are
searched:

* constant input ``u = -kappa * sign(gV(x0))`` (or ``u = 0`` when the drift
  already decreases ``V``);
* the two-phase schedule ``u2 = -rho*u1`` for time ``t`` followed by ``u1``
  for time ``rho*t``, whose value profile ``m(t) = V(X_{rho t}(Y_t(x0)))``
  has vanishing derivatives up to order ``N`` and a negative leading term.

Bracket signs only order the candidates; every witness is accepted by
simulation and re-checked at a tighter integrator tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifier import Classification, PreconditionError, Tag, classify_point
from .ode import IntegrationError, flow, integrate_segments
from .systems import SystemDef

GROWTH = 2.0  # along-interval bound V <= GROWTH * V(x0)


@dataclass(frozen=True)
class ControlSchedule:
    """Consecutive ``(duration, u)`` segments starting at time 0."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(d), float(u)) for d, u in self.segments)
        if not segs:
            raise ValueError("a schedule needs at least one segment")
        for d, u in segs:
            if not d > 0:
                raise ValueError(f"segment durations must be positive, got {d}")
            if not math.isfinite(u):
                raise ValueError(f"segment value must be finite, got {u}")
        object.__setattr__(self, "segments", segs)

    @property
    def total(self) -> float:
        return math.fsum(d for d, _ in self.segments)

    def padded(self, length: float) -> "ControlSchedule":
        """Append a ``u = 0`` segment so the schedule lasts ``length``."""
        rest = length - self.total
        if rest > 1e-12 * max(1.0, length):
            return ControlSchedule(self.segments + ((rest, 0.0),))
        return self

    def value_at(self, t: float) -> float:
        s = 0.0
        for d, u in self.segments:
            s += d
            if t < s:
                return u
        return self.segments[-1][1]

    def to_dict(self) -> dict:
        return {"segments": [list(s) for s in self.segments], "total": self.total}


def two_phase_schedule(u1: float, rho: float, t: float) -> ControlSchedule:
    if not t > 0:
        raise PreconditionError(f"two-phase duration must be positive, got t={t}")
    if not rho > 0:
        raise PreconditionError(f"rho must be positive, got {rho}")
    return ControlSchedule(((t, -rho * u1), (rho * t, u1)))


@dataclass(frozen=True)
class SynthParams:
    u_magnitudes: tuple[float, ...] = tuple(float(v) for v in np.logspace(-2, 1, 8))
    rhos: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    t_min: float = 1e-5
    ode_tol: float = 1e-10
    max_attempts: int = 5000
    rel_margin: float = 1e-9

    def __post_init__(self):
        for name in ("u_magnitudes", "rhos"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals or any(not v > 0 for v in vals):
                raise ValueError(f"{name} must be a nonempty sequence of positive numbers")
            object.__setattr__(self, name, vals)
        for name in ("t_min", "ode_tol", "rel_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def durations(self, cap: float) -> list[float]:
        """Candidate total durations: ``cap`` halved down to ``t_min``."""
        if not cap > 0:
            raise PreconditionError(f"duration cap must be positive, got {cap}")
        out = [cap]
        while out[-1] / 2 >= self.t_min:
            out.append(out[-1] / 2)
        return out

    def to_dict(self) -> dict:
        return {"u_magnitudes": list(self.u_magnitudes), "rhos": list(self.rhos),
                "t_min": self.t_min, "ode_tol": self.ode_tol,
                "max_attempts": self.max_attempts, "rel_margin": self.rel_margin}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthParams":
        return cls(**d)


@dataclass
class DecreaseWitness:
    schedule: ControlSchedule
    V_start: float
    V_end: float
    V_max_along: float
    classification: Classification
    kind: str
    x_end: list = field(default_factory=list)
    u1: float | None = None
    rho: float | None = None
    t: float | None = None
    attempts: int = 0

    @property
    def duration(self) -> float:
        return self.schedule.total

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "schedule": self.schedule.to_dict(),
            "V_start": self.V_start, "V_end": self.V_end, "V_max_along": self.V_max_along,
            "x_end": list(self.x_end),
            "classification": self.classification.to_dict(),
            "u1": self.u1, "rho": self.rho, "t": self.t,
            "search_trace_length": self.attempts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class SynthesisError(RuntimeError):
    """No candidate verified; ``trace`` lists every tried candidate and its V change."""

    def __init__(self, message: str, trace: list):
        self.trace = trace
        super().__init__(f"{message} ({len(trace)} candidates tried)")


# ---------------------------------------------------------------------------
# simulation helpers


def _simulate(sys: SystemDef, x0, segments, tol: float, vcap: float):
    """Run the segments, tracking max V; stop as soon as V exceeds ``vcap``."""
    Vf = sys.V.compiled
    rhs = sys.rhs
    vmax = Vf(x0)
    x = list(map(float, x0))
    blown = False

    def rec(_t, xx):
        nonlocal vmax, blown
        v = Vf(xx)
        if v > vmax:
            vmax = v
        if not v <= vcap:
            blown = True
            return True
        return None

    for d, u in segments:
        x = flow(rhs, x, u, d, tol, record=rec)
        if blown:
            break
    return x, Vf(x), vmax, blown


def _verify(sys, x0, schedule: ControlSchedule, params: SynthParams, v0: float):
    """Return ``(ok, x_end, V_end, V_max)``; ok needs a margin and the growth bound."""
    margin = params.rel_margin * v0
    x, v, vmax, blown = _simulate(sys, x0, schedule.segments, params.ode_tol, GROWTH * v0)
    if blown or not v < v0 - margin:
        return False, x, v, vmax
    # independent re-run at a tighter tolerance guards against integrator artefacts
    x2, v2, vmax2, blown2 = _simulate(sys, x0, schedule.segments, params.ode_tol / 100, GROWTH * v0)
    ok = not blown2 and v2 < v0 - margin and vmax2 <= GROWTH * v0
    return ok, x2, v2, max(vmax, vmax2)


class _Search:
    def __init__(self, sys, x0, params, cls, pad_to):
        self.sys, self.x0, self.params, self.cls, self.pad_to = sys, x0, params, cls, pad_to
        self.v0 = sys.V_value(x0)
        self.trace: list[dict] = []

    def attempt(self, schedule: ControlSchedule, kind: str, **info) -> DecreaseWitness | None:
        if len(self.trace) >= self.params.max_attempts:
            raise SynthesisError("attempt budget exhausted", self.trace)
        applied = schedule.padded(self.pad_to) if self.pad_to else schedule
        try:
            ok, x, v, vmax = _verify(self.sys, self.x0, applied, self.params, self.v0)
        except IntegrationError as exc:
            self.trace.append({"kind": kind, **info, "error": str(exc)})
            return None
        self.trace.append({"kind": kind, **info, "dV": v - self.v0, "V_max": vmax, "ok": ok})
        if not ok:
            return None
        return DecreaseWitness(applied, self.v0, v, vmax, self.cls, kind, list(map(float, x)),
                               attempts=len(self.trace), **info)


def _nonzero_state(x0) -> list[float]:
    x0 = [float(v) for v in x0]
    if not any(x0):
        raise PreconditionError("the initial state must be nonzero")
    return x0


def synth_constant(sys: SystemDef, x0, params: SynthParams | None = None, *, cap: float = 0.1,
                   classification: Classification | None = None,
                   pad_to: float | None = None) -> DecreaseWitness:
    """Single-segment witness for the ``GNonzero`` and ``ArtsteinSontag`` branches.

    Durations are tried from ``cap`` downwards and, for ``GNonzero``, input
    magnitudes from the largest candidate downwards.
    """
    params = params or SynthParams()
    x0 = _nonzero_state(x0)
    cls = classification or classify_point(sys, x0)
    if cls.tag not in (Tag.GNonzero, Tag.ArtsteinSontag):
        raise PreconditionError(f"constant-input branch needs GNonzero or ArtsteinSontag, got {cls.tag.value}")
    search = _Search(sys, x0, params, cls, pad_to)
    if cls.tag is Tag.GNonzero:
        sgn = math.copysign(1.0, cls.diagnostics["gV"])
        values = [-k * sgn for k in sorted(params.u_magnitudes, reverse=True)]
    else:
        values = [0.0]
    for eps in params.durations(cap):
        for u in values:
            w = search.attempt(ControlSchedule(((eps, u),)), "constant", u1=u, t=eps)
            if w is not None:
                return w
    raise SynthesisError("no constant input verified", search.trace)


def _predicted_signs(cls: Classification) -> list[float]:
    if cls.tag is Tag.P2:
        adg = cls.diagnostics.get(f"ad_g^{cls.N}V", 0.0)
        # leading term of m is proportional to u1^N * ad_g^N V with N odd
        first = -math.copysign(1.0, adg)
        return [first, -first]
    return [1.0, -1.0]


def synth_two_phase(sys: SystemDef, x0, classification: Classification | None = None,
                    params: SynthParams | None = None, *, cap: float = 0.1,
                    pad_to: float | None = None, allow_any_tag: bool = False) -> DecreaseWitness:
    """Search the two-phase schedule.

    Candidate order: total duration (from ``cap`` halving), then ``rho``,
    then ``|u1|`` descending, then the sign predicted by the certificate
    first.  The ``P1`` branch ends with ``u1 = 0`` (pure drift).
    """
    params = params or SynthParams()
    x0 = _nonzero_state(x0)
    cls = classification or classify_point(sys, x0)
    if not allow_any_tag and cls.tag not in (Tag.P1, Tag.P2, Tag.P3, Tag.P4):
        raise PreconditionError(f"two-phase branch needs a P1..P4 certificate, got {cls.tag.value}")
    search = _Search(sys, x0, params, cls, pad_to)
    signs = _predicted_signs(cls)
    mags = sorted(params.u_magnitudes, reverse=True)
    for eps in params.durations(cap):
        for rho in params.rhos:
            t = eps / (1.0 + rho)
            for mag in mags:
                for s in signs:
                    u1 = s * mag
                    w = search.attempt(two_phase_schedule(u1, rho, t), "two_phase", u1=u1, rho=rho, t=t)
                    if w is not None:
                        return w
    if cls.tag in (Tag.P1, Tag.Unclassified):
        for eps in params.durations(cap):
            w = search.attempt(ControlSchedule(((eps, 0.0),)), "drift", u1=0.0, t=eps)
            if w is not None:
                return w
    raise SynthesisError("no two-phase schedule verified", search.trace)


def synthesize(sys: SystemDef, x0, cap: float, params: SynthParams | None = None, *,
               pad: bool = False, classification: Classification | None = None) -> DecreaseWitness:
    """Witness with total duration at most ``cap`` (exactly ``cap`` when ``pad``).

    Falls back to the two-phase search when the constant branch finds
    nothing or the point is unclassified.
    """
    params = params or SynthParams()
    x0 = _nonzero_state(x0)
    cls = classification or classify_point(sys, x0)
    pad_to = cap if pad else None
    trace: list = []
    if cls.tag in (Tag.GNonzero, Tag.ArtsteinSontag):
        try:
            return synth_constant(sys, x0, params, cap=cap, classification=cls, pad_to=pad_to)
        except SynthesisError as exc:
            trace = exc.trace
    try:
        return synth_two_phase(sys, x0, cls, params, cap=cap, pad_to=pad_to, allow_any_tag=True)
    except SynthesisError as exc:
        raise SynthesisError(f"no witness found at x0={x0}", trace + exc.trace) from None


# ---------------------------------------------------------------------------
# value profile along the two-phase flow


def m_value(sys: SystemDef, x0, u1: float, rho: float, t: float, tol: float = 1e-12) -> float:
    """``V(X_{rho t}(Y_t(x0)))`` with ``Y = f - rho*u1*g``, ``X = f + u1*g``; negative ``t`` flows backward."""
    x = flow(sys.rhs, x0, -rho * u1, t, tol)
    x = flow(sys.rhs, x, u1, rho * t, tol)
    return sys.V_value(x)


def m_profile(sys: SystemDef, x0, u1: float, rho: float, t_grid: Sequence[float],
              tol: float = 1e-12) -> list[tuple[float, float]]:
    ts = [float(t) for t in t_grid]
    if any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise PreconditionError("t_grid must be positive and strictly increasing")
    return [(t, m_value(sys, x0, u1, rho, t, tol)) for t in ts]


def central_difference(fn, order: int, h: float) -> float:
    """Unnormalized central difference ``sum_j (-1)^j C(k,j) fn((k/2 - j) h)`` at 0."""
    return math.fsum((-1) ** j * math.comb(order, j) * fn((order / 2 - j) * h)
                     for j in range(order + 1))


def m_differences(sys: SystemDef, x0, u1: float, rho: float, h: float, max_order: int,
                  tol: float = 1e-12) -> list[float]:
    """Central differences of ``m`` at ``t = 0`` for orders ``1..max_order``."""
    cache: dict[float, float] = {}

    def m(t):
        if t not in cache:
            cache[t] = m_value(sys, x0, u1, rho, t, tol)
        return cache[t]

    return [central_difference(m, k, h) for k in range(1, max_order + 1)]


def dense_witness_trajectory(sys: SystemDef, x0, witness: DecreaseWitness, tol: float | None = None):
    """Dense states along a witness schedule (for plotting and bound checks)."""
    return integrate_segments(sys.rhs, x0, witness.schedule.segments, tol or 1e-12)[0]
