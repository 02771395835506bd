"""Pointwise certification of the sufficient decrease conditions, and grid scans.

At a nonzero state ``x`` the classifier reports the first of

* ``GNonzero``       ``|gV(x)| > eps0``
* ``ArtsteinSontag`` ``fV(x) < -eps0``
* for ``N = 1..N_max``, provided every ``f^i V`` (``i <= N``) and every
  product ``D1...Dk V`` of Hall words other than ``G`` with total order
  ``<= N`` vanishes at ``x``:

  - ``P1``  ``f^(N+1) V(x) < -eps0``
  - ``P2``  ``N`` odd and ``|ad_g^N f V(x)| > eps0``
  - ``P3``  ``N`` even and ``ad_g^N f V(x) < -eps0``
  - ``P4``  ``f^(N+1) V(x)`` vanishes and ``|ad_f^N g V(x)| > eps0``

and ``Unclassified`` otherwise.  Here ``ad_g^N f = [[..[f,g],..],g]`` and
``ad_f^N g = [[..[g,f],..],f]``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .liealg import F, G, ad_right, bracket
from .symexpr import ExpressionTooLarge, gradient
from .systems import SystemDef


class Tag(str, enum.Enum):
    GNonzero = "GNonzero"
    ArtsteinSontag = "ArtsteinSontag"
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    Unclassified = "Unclassified"


class PreconditionError(ValueError):
    """Raised for inputs outside an operation's domain (e.g. ``x = 0``)."""


@dataclass(frozen=True)
class Classification:
    tag: Tag
    N: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.tag is not Tag.Unclassified

    def to_dict(self) -> dict:
        return {"tag": self.tag.value, "N": self.N, "diagnostics": dict(self.diagnostics)}

    @classmethod
    def from_dict(cls, d: dict) -> "Classification":
        return cls(Tag(d["tag"]), int(d["N"]), dict(d.get("diagnostics", {})))


def _require_nonzero(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise PreconditionError("the state must be nonzero")
    return x


def check_214(sys: SystemDef, x, N: int) -> tuple[bool, dict]:
    """Do all order-``<= N`` quantities vanish at ``x``?

    Diagnostics map quantity names to values; evaluation stops at the
    first nonvanishing quantity, which is then the last entry.
    """
    x = _require_nonzero(x)
    if not 1 <= N <= sys.n_max:
        raise PreconditionError(f"N must lie in 1..{sys.n_max}, got {N}")
    eng = sys.engine
    tol = sys.zero_tol(x)
    diag: dict[str, float] = {}

    def vanishes(name, fld) -> bool:
        v = float(fld.compiled(x))
        diag[name] = v
        return abs(v) <= tol

    if not vanishes("gV", eng.gV):
        return False, diag
    for i in range(1, N + 1):
        if not vanishes(f"f^{i}V", eng.f_power(i)):
            return False, diag
    for order in range(1, N + 1):
        for prod, fld in eng.products(order):
            if not vanishes(f"{prod}V", fld):
                return False, diag
    return True, diag


def classify_point(sys: SystemDef, x) -> Classification:
    x = _require_nonzero(x)
    eng = sys.engine
    tol = sys.zero_tol(x)
    gv = float(eng.gV.compiled(x))
    if abs(gv) > tol:
        return Classification(Tag.GNonzero, 0, {"gV": gv})
    fv = float(eng.f_power(1).compiled(x))
    if fv < -tol:
        return Classification(Tag.ArtsteinSontag, 0, {"gV": gv, "fV": fv})
    diag: dict[str, float] = {}
    for N in range(1, sys.n_max + 1):
        ok, d = check_214(sys, x, N)
        diag.update(d)
        if not ok:
            # the condition sets are nested, so no larger N can pass either
            break
        fn1 = float(eng.f_power(N + 1).compiled(x))
        diag[f"f^{N + 1}V"] = fn1
        if fn1 < -tol:
            return Classification(Tag.P1, N, diag)
        adg = float(eng.ad_g_value(N).compiled(x))
        diag[f"ad_g^{N}V"] = adg
        if N % 2 == 1 and abs(adg) > tol:
            return Classification(Tag.P2, N, diag)
        if N % 2 == 0 and adg < -tol:
            return Classification(Tag.P3, N, diag)
        adf = float(eng.ad_f_value(N).compiled(x))
        diag[f"ad_f^{N}V"] = adf
        if abs(fn1) <= tol and abs(adf) > tol:
            return Classification(Tag.P4, N, diag)
    return Classification(Tag.Unclassified, 0, diag)


# ---------------------------------------------------------------------------
# grid scans


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned lattice ``lo + k*step`` within ``[lo, hi]`` per axis,
    minus the ball ``|x| < exclude_radius``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    step: float
    exclude_radius: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.exclude_radius > 0:
            raise ValueError("the grid must exclude a ball around the origin")

    @classmethod
    def cube(cls, n: int, half_width: float, step: float, exclude_radius: float = 1e-6) -> "GridSpec":
        return cls((-half_width,) * n, (half_width,) * n, step, exclude_radius)

    def axes(self) -> list[np.ndarray]:
        out = []
        for a, b in zip(self.lo, self.hi):
            k = int(math.floor((b - a) / self.step + 1e-9))
            # rounding keeps lattice coordinates like 0.25*k exact and x=0 hit exactly
            out.append(np.round(a + self.step * np.arange(k + 1), 12) + 0.0)
        return out

    def points(self) -> np.ndarray:
        axes = self.axes()
        if not axes or any(len(a) == 0 for a in axes):
            return np.zeros((0, len(self.lo)))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        keep = np.linalg.norm(pts, axis=1) >= self.exclude_radius
        return pts[keep]

    def describe(self) -> dict:
        return asdict(self)


@dataclass
class ScanReport:
    grid: dict
    points: list[list[float]]
    results: list[Classification | None]
    errors: dict[int, str] = field(default_factory=dict)
    nonpositive_V: list[list[float]] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        c = {t.value: 0 for t in Tag}
        c["error"] = 0
        for r in self.results:
            if r is None:
                c["error"] += 1
            else:
                c[r.tag.value] += 1
        return c

    @property
    def unclassified(self) -> list[list[float]]:
        return [p for p, r in zip(self.points, self.results)
                if r is not None and r.tag is Tag.Unclassified]

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "counts": self.counts,
            "unclassified": self.unclassified,
            "nonpositive_V": self.nonpositive_V,
            "errors": {str(k): v for k, v in self.errors.items()},
            "points": [
                {"x": p, **(r.to_dict() if r is not None else {"tag": "error", "N": 0, "diagnostics": {}})}
                for p, r in zip(self.points, self.results)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self, leading: int = 3) -> str:
        n = len(self.points[0]) if self.points else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(n)] + ["tag", "N"]
                   + [h for j in range(leading) for h in (f"q{j + 1}", f"v{j + 1}")])
        for p, r in zip(self.points, self.results):
            if r is None:
                w.writerow(list(p) + ["error", 0] + [""] * (2 * leading))
                continue
            items = list(r.diagnostics.items())[-leading:]
            cells = [c for k, v in items for c in (k, repr(v))]
            cells += [""] * (2 * leading - len(cells))
            w.writerow([repr(v) for v in p] + [r.tag.value, r.N] + cells)
        return buf.getvalue()


def _classify_chunk(args):
    sys, pts = args
    out = []
    for p in pts:
        try:
            out.append((classify_point(sys, p), None))
        except (ExpressionTooLarge, ArithmeticError, PreconditionError) as exc:
            out.append((None, f"{type(exc).__name__}: {exc}"))
    return out


def scan_region(sys: SystemDef, grid: GridSpec, workers: int | None = None) -> ScanReport:
    """Classify every lattice point; per-point errors are recorded, not raised.

    Output order follows the lattice order regardless of ``workers``.
    """
    if len(grid.lo) != sys.dimension:
        raise ValueError(f"grid dimension {len(grid.lo)} differs from system dimension {sys.dimension}")
    pts = grid.points()
    plist = [list(map(float, p)) for p in pts]
    if workers is None:
        workers = 1
    if workers > 1 and len(plist) > 1:
        chunks = [pts[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_classify_chunk, [(sys, c) for c in chunks]))
        merged = [None] * len(plist)
        for i, part in enumerate(parts):
            for j, item in enumerate(part):
                merged[i + j * workers] = item
    else:
        merged = _classify_chunk((sys, pts))
    results = [r for r, _ in merged]
    errors = {i: e for i, (_, e) in enumerate(merged) if e is not None}
    nonpos = [p for p in plist if not sys.V_value(p) > 0]
    return ScanReport(grid.describe(), plist, results, errors, nonpos)


# ---------------------------------------------------------------------------
# rank test for three-dimensional systems


@dataclass
class RankCheck:
    matrix: np.ndarray
    det: float
    full_rank: bool
    grad_nonzero: bool
    implication: bool

    @property
    def passed(self) -> bool:
        return self.full_rank and self.grad_nonzero and self.implication


def check_corollary1(sys: SystemDef, x) -> RankCheck:
    """Rank of ``[g | [f,g] | [f,[f,g]]]`` at ``x`` and the gradient conditions.

    ``implication`` tests: if ``gV``, ``fV`` and ``[f,g]V`` all vanish then
    ``[f,[f,g]]V`` does not.
    """
    if sys.dimension != 3:
        raise PreconditionError(f"the rank test needs a three-dimensional system, got n={sys.dimension}")
    x = _require_nonzero(x)
    eng = sys.engine
    tol = sys.zero_tol(x)
    fg = bracket(F, G)
    ffg = bracket(F, fg)
    cols = [eng.realize(G)(x), eng.realize(fg)(x), eng.realize(ffg)(x)]
    M = np.column_stack(cols)
    det = float(np.linalg.det(M))
    grad = np.array([float(d.compiled(x)) for d in gradient(sys.V)])
    vals = [float(v) for v in (M[:, 0] @ grad, sys.f(x) @ grad, M[:, 1] @ grad)]
    premise = all(abs(v) <= tol for v in vals)
    implication = (not premise) or abs(float(M[:, 2] @ grad)) > tol
    return RankCheck(M, det, abs(det) > tol, bool(np.linalg.norm(grad) > tol), implication)
