"""Basin boundary representation and analysis.

The boundary of a basin is a collection of closed C^4 curves described by
the arc-length parametrization (x(s), y(s)) and the angle theta(s) between
e_x and the exterior normal, with the direct-frame convention

    (x'(s), y'(s)) = (sin theta, -cos theta),    n = (cos theta, sin theta).

With this convention the outer shore is traversed clockwise (winding -2pi)
and islands counter-clockwise (winding +2pi).

Analytic generators are built from piecewise "theta programs" (straight /
circular-arc / smoothstep-blend segments) so that the flatness order of
cos theta at every corner is exact by construction rather than fitted.
Sampled boundaries (CSV of s,x,y) are supported through periodic quintic
splines.

Classification: Gamma_E = {cos theta > 0}, Gamma_W = {cos theta < 0},
Gamma_N / Gamma_S = {cos theta = 0, sin theta = +-1}.  Corners are the
endpoints of the flat pieces (which may be isolated points); each corner
carries a declared flatness profile on its arc side.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import InterpolatedUnivariateSpline, make_interp_spline
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .shapes import ramp_between, smoothstep4

__all__ = [
    "GeometryError", "HypothesisError", "FlatnessProfile", "BoundaryComponent",
    "DomainGeometry", "CurvilinearPoint", "build_geometry", "make_domain",
    "corner_asymptotics",
]

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Geometry construction or query failure."""


class HypothesisError(GeometryError):
    """A structural hypothesis on the basin shape is violated.

    The message names the violated hypothesis (H1-H4).
    """


# ---------------------------------------------------------------------------
# flatness profiles


@dataclass(frozen=True)
class FlatnessProfile:
    """Leading behaviour of cos theta on one side of a corner.

    kind 'algebraic':    cos theta ~ (C/n!) |s - s_i|^n
    kind 'exponential':  cos theta ~ C exp(-alpha/|s - s_i|)
    kind 'flat-interval': cos theta == 0 on this side (the corner bounds a
    flat edge).
    """

    kind: str
    side: str  # 'left' (s < s_i) or 'right' (s > s_i)
    n: int = 0
    alpha: float = 0.0
    C: float = 0.0

    def cos_equivalent(self, ds):
        ds = np.abs(np.asarray(ds, dtype=float))
        if self.kind == "algebraic":
            return self.C / math.factorial(self.n) * ds ** self.n
        if self.kind == "exponential":
            return self.C * np.exp(-self.alpha / np.maximum(ds, 1e-300))
        return np.zeros_like(ds)


def corner_asymptotics(profile, y):
    """Leading-order (x_E, x_E', x_E'') of the east graph near a corner.

    `y` is the distance |y - y_i| to the corner ordinate, assumed small.
    Algebraic order n gives x_E ~ C0 |y|^(1/(n+1)); the exponential case
    gives x_E ~ C0 / |ln y|.  Constants follow from integrating
    dy/ds = -cos theta against the declared equivalent of cos theta.
    """
    y = np.abs(np.asarray(y, dtype=float))
    if profile.kind == "flat-interval":
        raise GeometryError("no graph near a flat-interval corner side")
    if profile.kind == "algebraic":
        n = profile.n
        a = profile.C / math.factorial(n)
        # y ~ a s^(n+1)/(n+1), x ~ s  =>  x_E(y) = ((n+1) y / a)^(1/(n+1))
        c0 = ((n + 1) / a) ** (1.0 / (n + 1))
        xe = c0 * y ** (1.0 / (n + 1))
        xe1 = c0 / (n + 1) * y ** (1.0 / (n + 1) - 1.0)
        xe2 = c0 / (n + 1) * (1.0 / (n + 1) - 1.0) * y ** (1.0 / (n + 1) - 2.0)
        return xe, xe1, xe2
    # exponential: y(s) ~ (s^2/alpha) C e^(-alpha/s)  =>  s ~ alpha/|ln y|
    al = profile.alpha
    lny = np.log(np.maximum(y, 1e-300))
    xe = al / np.abs(lny)
    xe1 = 1.0 / (y * lny ** 2)
    xe2 = -1.0 / (y ** 2 * lny ** 2)
    return xe, xe1, xe2


# ---------------------------------------------------------------------------
# theta programs

_BLEND_SAMPLES = 4097


def _blend_c():
    """Displacement constant of a quarter-turn blend of unit length."""
    val, _ = quad(lambda u: math.cos(0.5 * math.pi * smoothstep4(u)), 0.0, 1.0,
                  epsabs=1e-13, epsrel=1e-13)
    return val


_C_BLEND = None


def blend_extent(length):
    """x- and y-extent of a 90-degree smoothstep fillet of given arc length."""
    global _C_BLEND
    if _C_BLEND is None:
        _C_BLEND = _blend_c()
    return _C_BLEND * length


class _Segment:
    def __init__(self, kind, theta0, theta1, length):
        if length <= 0:
            raise GeometryError("segment length must be positive")
        self.kind = kind
        self.theta0 = float(theta0)
        self.theta1 = float(theta1)
        self.length = float(length)
        self.s0 = 0.0  # filled by the program
        self.x0 = 0.0
        self.y0 = 0.0
        self._ix = None  # cumulative integral splines (blend only)
        self._iy = None

    # -- angle ------------------------------------------------------------
    def theta(self, ds, k=0):
        u = ds / self.length
        if self.kind == "straight":
            if k == 0:
                return np.full_like(np.asarray(ds, dtype=float), self.theta0)
            return np.zeros_like(np.asarray(ds, dtype=float))
        if self.kind == "arc":
            rate = (self.theta1 - self.theta0) / self.length
            if k == 0:
                return self.theta0 + rate * np.asarray(ds, dtype=float)
            if k == 1:
                return np.full_like(np.asarray(ds, dtype=float), rate)
            return np.zeros_like(np.asarray(ds, dtype=float))
        dth = self.theta1 - self.theta0
        b = smoothstep4(u, k)
        if k == 0:
            return self.theta0 + dth * b
        return dth * b / self.length ** k

    # -- position ---------------------------------------------------------
    def _prepare(self):
        if self.kind != "blend" or self._ix is not None:
            return
        u = np.linspace(0.0, 1.0, _BLEND_SAMPLES)
        th = self.theta(u * self.length)
        ix = cumulative_simpson(np.sin(th), x=u * self.length, initial=0.0)
        iy = cumulative_simpson(-np.cos(th), x=u * self.length, initial=0.0)
        self._ix = InterpolatedUnivariateSpline(u * self.length, ix, k=5)
        self._iy = InterpolatedUnivariateSpline(u * self.length, iy, k=5)

    def point(self, ds):
        ds = np.asarray(ds, dtype=float)
        if self.kind == "straight":
            return (self.x0 + math.sin(self.theta0) * ds,
                    self.y0 - math.cos(self.theta0) * ds)
        if self.kind == "arc":
            rate = (self.theta1 - self.theta0) / self.length
            th = self.theta0 + rate * ds
            x = self.x0 + (np.cos(self.theta0) - np.cos(th)) / rate
            y = self.y0 - (np.sin(th) - np.sin(self.theta0)) / rate
            return x, y
        self._prepare()
        return self.x0 + self._ix(ds), self.y0 + self._iy(ds)

    def end_point(self):
        x, y = self.point(np.array([self.length]))
        return float(x[0]), float(y[0])


class BoundaryComponent:
    """One closed boundary curve with arc-length parametrization."""

    def __init__(self, segments=None, start=(0.0, 0.0), closed_form=None,
                 length=None):
        if closed_form is not None:
            # closed_form = (theta_fn(s, k), point_fn(s) -> (x, y))
            self._theta_fn, self._point_fn = closed_form
            self.length = float(length)
            self.segments = None
        else:
            self.segments = segments
            s = 0.0
            x, y = start
            for seg in segments:
                seg.s0, seg.x0, seg.y0 = s, x, y
                s += seg.length
                x, y = seg.end_point()
            self.length = s
            gap = math.hypot(x - start[0], y - start[1])
            if gap > 1e-7 * max(1.0, self.length):
                raise GeometryError(
                    f"boundary component does not close (gap {gap:.2e})")
            self._starts = np.array([seg.s0 for seg in segments])
            self._theta_fn = None
            self._point_fn = None
        self._samples = None
        self._tree = None

    # ------------------------------------------------------------------
    def _locate(self, s):
        s = np.mod(np.asarray(s, dtype=float), self.length)
        idx = np.searchsorted(self._starts, s, side="right") - 1
        return s, np.clip(idx, 0, len(self.segments) - 1)

    def theta(self, s, k=0):
        if self._theta_fn is not None:
            return self._theta_fn(np.asarray(s, dtype=float), k)
        s, idx = self._locate(s)
        out = np.empty_like(s)
        for i in np.unique(idx):
            m = idx == i
            seg = self.segments[i]
            out[m] = seg.theta(s[m] - seg.s0, k)
        return out

    def point(self, s):
        if self._point_fn is not None:
            return self._point_fn(np.asarray(s, dtype=float))
        s, idx = self._locate(s)
        x = np.empty_like(s)
        y = np.empty_like(s)
        for i in np.unique(idx):
            m = idx == i
            seg = self.segments[i]
            xx, yy = seg.point(s[m] - seg.s0)
            x[m], y[m] = xx, yy
        return x, y

    def normal(self, s):
        th = self.theta(s)
        return np.cos(th), np.sin(th)

    def tangent(self, s):
        th = self.theta(s)
        return np.sin(th), -np.cos(th)

    def samples(self, n=4096):
        if self._samples is None or len(self._samples[0]) != n:
            s = np.linspace(0.0, self.length, n, endpoint=False)
            x, y = self.point(s)
            self._samples = (s, x, y)
        return self._samples

    def kdtree(self):
        if self._tree is None:
            _, x, y = self.samples()
            self._tree = cKDTree(np.column_stack([x, y]))
        return self._tree

    @classmethod
    def from_samples(cls, s, x, y):
        """Periodic quintic-spline component through (s, x, y) rows."""
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.isclose(x[0], x[-1]) and np.isclose(y[0], y[-1])):
            raise GeometryError("sampled component must repeat its first "
                                "point at the end (closed curve)")
        length = s[-1]
        spx = make_interp_spline(s, x, k=5, bc_type="periodic")
        spy = make_interp_spline(s, y, k=5, bc_type="periodic")
        tx = spx.derivative()(s)
        ty = spy.derivative()(s)
        th = np.unwrap(np.arctan2(tx, -ty))
        spt = make_interp_spline(s, th, k=5)

        def theta_fn(ss, k=0):
            return spt(np.mod(ss, length), nu=k) if k else spt(np.mod(ss, length))

        def point_fn(ss):
            m = np.mod(ss, length)
            return spx(m), spy(m)

        return cls(closed_form=(theta_fn, point_fn), length=length)


# ---------------------------------------------------------------------------
# structural records


@dataclass
class Flat:
    comp: int
    s0: float
    s1: float
    label: str               # 'N' or 'S'
    y: float = 0.0
    corner_a: int = -1       # corner index at s0
    corner_b: int = -1       # corner index at s1 (== corner_a when isolated)

    @property
    def isolated(self):
        return self.s1 <= self.s0


@dataclass
class Arc:
    comp: int
    s0: float
    s1: float
    label: str               # 'E' or 'W'
    corner_start: int = -1
    corner_end: int = -1
    # monotone y(s) inversion table, built lazily
    _table: tuple = field(default=None, repr=False)


@dataclass
class Corner:
    comp: int
    s: float
    x: float
    y: float
    flat: int                     # index into geom.flats
    end: str                      # 'a', 'b' or 'point'
    profile_left: FlatnessProfile = None
    profile_right: FlatnessProfile = None
    arc_left: int = -1            # arc ending at this corner (s < corner)
    arc_right: int = -1           # arc starting here
    in_Iplus: bool = False


@dataclass
class SigmaLine:
    y1: float
    x1: float
    corner: int
    x_west: float                 # western end (on Gamma_W)
    plus_side: str                # 'above' or 'below': side carrying the
    # protruding east graph (the side adjacent to the trace-matching arc)
    x_e_plus: float               # east graph limit on the plus side at y1
    flat: int                     # flat piece whose edge feeds the lift


@dataclass
class CurvilinearPoint:
    comp: int
    s: float
    z: float


# ---------------------------------------------------------------------------
# the assembled geometry


class DomainGeometry:
    def __init__(self, components, flats, corners, config=None):
        self.components = components
        self.flats = flats
        self.corners = corners
        self.config = dict(config or {})
        self.east_sin_cut = float(self.config.get("east_sin_cut", 0.5))
        self.classical_only = bool(self.config.get("classical_only", False))
        self.arcs = []
        self.slabs = None
        self.sigma_lines = []
        self.tube_width = None
        self.cutoff_width = None
        self._window_cache = {}
        self._finalize()

    # -- construction ---------------------------------------------------
    def _finalize(self):
        self._build_arcs()
        self._verify_frames()
        self._build_slabs()
        self._detect_sigma_lines()
        self._widths()
        self._verify_hypotheses()

    def _build_arcs(self):
        for ci, comp in enumerate(self.components):
            fl = sorted([f for f in self.flats if f.comp == ci],
                        key=lambda f: f.s0)
            if not fl:
                raise GeometryError("a component with no flat piece has no "
                                    "corner; not supported")
            # arcs are the complementary intervals (cyclically)
            for k, f in enumerate(fl):
                g = fl[(k + 1) % len(fl)]
                a0 = f.s1
                a1 = g.s0 if g.s0 > f.s1 else g.s0 + comp.length
                if a1 - a0 <= 0:
                    raise GeometryError("adjacent flat pieces overlap")
                mid = 0.5 * (a0 + a1)
                c = float(np.cos(comp.theta(np.array([mid]))))
                label = "E" if c > 0 else "W"
                self.arcs.append(Arc(ci, a0, a1, label))
        # wire corners <-> arcs / flats
        for fi, f in enumerate(self.flats):
            comp = self.components[f.comp]
            f.y = float(comp.point(np.array([f.s0]))[1][0])
        for qi, c in enumerate(self.corners):
            f = self.flats[c.flat]
            if c.end in ("a", "point"):
                f.corner_a = qi
            if c.end in ("b", "point"):
                f.corner_b = qi
        for ai, a in enumerate(self.arcs):
            comp = self.components[a.comp]

            def match(scorner, sval):
                return (abs((scorner - sval) % comp.length) < 1e-9
                        or abs((sval - scorner) % comp.length) < 1e-9)
            for qi, c in enumerate(self.corners):
                if c.comp != a.comp:
                    continue
                if match(c.s, a.s0):
                    a.corner_start = qi
                    c.arc_right = ai
                if match(c.s, a.s1):
                    a.corner_end = qi
                    c.arc_left = ai
        for c in self.corners:
            c.in_Iplus = any(
                0 <= ai < len(self.arcs) and self.arcs[ai].label == "E"
                for ai in (c.arc_left, c.arc_right))

    def _verify_frames(self):
        """Invariant: (x', y') = (sin theta, -cos theta) everywhere."""
        if self.classical_only:
            return  # raw rectangle: theta jumps at the vertices
        for comp in self.components:
            s = np.linspace(0, comp.length, 997, endpoint=False)
            h = 1e-6 * comp.length
            xp = (np.array(comp.point(s + h)) - np.array(comp.point(s - h))) \
                / (2 * h)
            th = comp.theta(s)
            err = np.max(np.abs(xp[0] - np.sin(th)) +
                         np.abs(xp[1] + np.cos(th)))
            if err > 1e-5:
                raise GeometryError(
                    f"frame consistency violated (max err {err:.2e})")

    # -- monotone arc graphs --------------------------------------------
    def _arc_table(self, ai):
        a = self.arcs[ai]
        if a._table is None:
            comp = self.components[a.comp]
            s = np.linspace(a.s0, a.s1, 2049)
            x, y = comp.point(s)
            # y is monotone: decreasing on E (y' = -cos < 0), increasing on W
            a._table = (s, x, y)
        return a._table

    def arc_y_range(self, ai):
        _, _, y = self._arc_table(ai)
        return float(min(y[0], y[-1])), float(max(y[0], y[-1]))

    def arc_s_of_y(self, ai, yq):
        """Invert y(s) on a monotone E/W arc (vectorized, Newton-refined)."""
        a = self.arcs[ai]
        comp = self.components[a.comp]
        s, _, y = self._arc_table(ai)
        yq = np.asarray(yq, dtype=float)
        if y[0] > y[-1]:
            s0 = np.interp(yq, y[::-1], s[::-1])
        else:
            s0 = np.interp(yq, y, s)
        for _ in range(3):
            _, yy = comp.point(s0)
            c = np.cos(comp.theta(s0))
            step = np.where(np.abs(c) > 1e-14, (yy - yq) / np.where(
                np.abs(c) > 1e-14, c, 1.0), 0.0)
            s0 = np.clip(s0 + step, a.s0, a.s1)
        return s0

    def arc_x_of_y(self, ai, yq):
        a = self.arcs[ai]
        s = self.arc_s_of_y(ai, yq)
        x, _ = self.components[a.comp].point(s)
        return x

    # -- slabs and regions ----------------------------------------------
    def _build_slabs(self):
        ys = sorted({round(f.y, 12) for f in self.flats})
        # global vertical extent
        ymin = min(self.arc_y_range(ai)[0] for ai in range(len(self.arcs)))
        ymax = max(self.arc_y_range(ai)[1] for ai in range(len(self.arcs)))
        edges = sorted({ymin, ymax, *ys})
        self.slab_edges = np.array(edges)
        self.slabs = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (lo + hi)
            hits = []
            for ai, a in enumerate(self.arcs):
                r0, r1 = self.arc_y_range(ai)
                if r0 - 1e-12 < mid < r1 + 1e-12:
                    hits.append((float(self.arc_x_of_y(ai, np.array([mid]))[0]),
                                 ai))
            hits.sort()
            if len(hits) % 2:
                raise GeometryError("odd number of boundary crossings; "
                                    "geometry inconsistent")
            intervals = []
            for j in range(0, len(hits), 2):
                xw, aw = hits[j]
                xe, ae = hits[j + 1]
                if self.arcs[aw].label != "W" or self.arcs[ae].label != "E":
                    raise GeometryError("slab interval is not W-E ordered; "
                                        "classification inconsistent")
                intervals.append((aw, ae))
            self.slabs.append(((lo, hi), intervals))

    def slab_index(self, y):
        idx = np.searchsorted(self.slab_edges, np.asarray(y, dtype=float),
                              side="right") - 1
        return np.clip(idx, 0, len(self.slabs) - 1)

    def interval_at(self, x, y):
        """(slab index, interval index) containing the point, else None."""
        si = int(self.slab_index(y))
        (lo, hi), intervals = self.slabs[si]
        if not (self.slab_edges[0] <= y <= self.slab_edges[-1]):
            return None
        for j, (aw, ae) in enumerate(intervals):
            xw = float(self.arc_x_of_y(aw, np.array([y]))[0])
            xe = float(self.arc_x_of_y(ae, np.array([y]))[0])
            if xw <= x <= xe:
                return si, j
        return None

    def x_east(self, x, y):
        """East graph value for the interval containing (x, y)."""
        hit = self.interval_at(x, y)
        if hit is None:
            raise GeometryError("point outside the basin")
        si, j = hit
        _, ae = self.slabs[si][1][j]
        return float(self.arc_x_of_y(ae, np.array([y]))[0]), ae

    def contains(self, x, y):
        """Vectorized membership test through the slab structure."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        flat_ys = self.slab_edges
        ok = (y > flat_ys[0]) & (y < flat_ys[-1])
        si = self.slab_index(y)
        for k in np.unique(si[ok]):
            m = ok & (si == k)
            _, intervals = self.slabs[k]
            inside = np.zeros(m.sum(), dtype=bool)
            ym = y[m]
            xm = x[m]
            for aw, ae in intervals:
                xw = self.arc_x_of_y(aw, ym)
                xe = self.arc_x_of_y(ae, ym)
                inside |= (xm > xw) & (xm < xe)
            out[m] = inside
        return out

    def raycast_contains(self, x, y):
        """Independent membership oracle: polygon crossing number."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        inside = np.zeros(x.shape, dtype=bool)
        for comp in self.components:
            _, px, py = comp.samples()
            px2 = np.roll(px, -1)
            py2 = np.roll(py, -1)
            cnt = np.zeros(x.shape, dtype=int)
            for (ax, ay, bx, by) in zip(px, py, px2, py2):
                cond = (ay > y) != (by > y)
                if not np.any(cond):
                    continue
                t = (y[cond] - ay) / (by - ay)
                xc = ax + t * (bx - ax)
                cnt[cond] += (xc > x[cond])
            inside ^= (cnt % 2).astype(bool)
        return inside

    def _detect_sigma_lines(self):
        """Find the discontinuity lines of the transport solution.

        Crossing an interior flat ordinate y1, the east graph of a region
        may switch from one arc to another with a genuine offset (the
        Sverdrup solution then jumps).  Compare the east arcs of the
        x-overlapping slab intervals on both sides of each edge; the line
        emanates from the endpoint corner of the shorter (less protruding)
        arc.
        """
        diam = self.slab_edges[-1] - self.slab_edges[0]
        tol = 1e-6 * diam
        for k in range(1, len(self.slabs)):
            y1 = float(self.slab_edges[k])
            below = self.slabs[k - 1][1]
            above = self.slabs[k][1]
            for awa, aea in above:
                for awb, aeb in below:
                    if aea == aeb:
                        continue
                    xea = float(self.arc_x_of_y(aea, np.array([y1]))[0])
                    xeb = float(self.arc_x_of_y(aeb, np.array([y1]))[0])
                    xwa = float(self.arc_x_of_y(awa, np.array([y1]))[0])
                    xwb = float(self.arc_x_of_y(awb, np.array([y1]))[0])
                    # must overlap in x to be two faces of the same line
                    if min(xea, xeb) - max(xwa, xwb) < tol:
                        continue
                    if abs(xea - xeb) < tol:
                        continue
                    plus = "above" if xea > xeb else "below"
                    short = aeb if plus == "above" else aea
                    x1 = min(xea, xeb)
                    arc = self.arcs[short]
                    qi = -1
                    for cand in (arc.corner_start, arc.corner_end):
                        if cand >= 0 and abs(self.corners[cand].y - y1) < tol:
                            qi = cand
                    if qi < 0:
                        raise GeometryError(
                            "discontinuity line without a matching corner")
                    self.sigma_lines.append(SigmaLine(
                        y1=y1, x1=x1, corner=qi, x_west=max(xwa, xwb),
                        plus_side=plus, x_e_plus=max(xea, xeb),
                        flat=self.corners[qi].flat))

    # -- scales ----------------------------------------------------------
    def _widths(self):
        mx = 0.0
        for comp in self.components:
            s = np.linspace(0, comp.length, 4096, endpoint=False)
            mx = max(mx, float(np.max(np.abs(comp.theta(s, 1)))))
        curv = 0.9 / mx if mx > 0 else np.inf
        # clearance: how far one can march inward along the normal from any
        # boundary point before leaving the basin again
        xmin, xmax, ymin, ymax = self.bbox()
        diam = math.hypot(xmax - xmin, ymax - ymin)
        px, py, nx, ny = [], [], [], []
        for comp in self.components:
            s = np.linspace(0.0, comp.length, 1024, endpoint=False)
            x, y = comp.point(s)
            cn, sn = comp.normal(s)
            px.append(x), py.append(y), nx.append(cn), ny.append(sn)
        px, py = np.concatenate(px), np.concatenate(py)
        nx, ny = np.concatenate(nx), np.concatenate(ny)
        t0 = 1e-3 * diam
        lo = np.full(px.shape, t0)
        hi = np.full(px.shape, np.inf)
        for t in np.linspace(t0, diam, 96):
            open_ = ~np.isfinite(hi)
            if not np.any(open_):
                break
            inside = self.contains(px[open_] - t * nx[open_],
                                   py[open_] - t * ny[open_])
            out = np.where(open_)[0]
            hi[out[~inside]] = t
            lo[out[inside]] = np.maximum(lo[out[inside]], t)
        hi[~np.isfinite(hi)] = diam
        m = hi > lo
        lo, hi = lo[m], hi[m]
        qx, qy, qnx, qny = px[m], py[m], nx[m], ny[m]
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            inside = self.contains(qx - mid * qnx, qy - mid * qny)
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        gap = float(np.min(lo)) if len(lo) else diam
        self.tube_width = min(curv, 0.5 * gap)
        self.cutoff_width = 0.45 * gap

    # -- hypothesis checks ----------------------------------------------
    def _verify_hypotheses(self):
        if self.classical_only:
            return
        # H3: the flat set at each ordinate must be connected.  Distinct
        # flat pieces sharing an ordinate are only admissible when they are
        # boundary-adjacent, which never happens for maximal pieces.
        seen = {}
        for fi, f in enumerate(self.flats):
            key = round(f.y, 9)
            if key in seen:
                raise HypothesisError(
                    "(H3) violated: two distinct flat pieces share the "
                    f"ordinate y = {f.y:.6g}")
            seen[key] = fi
        # H4: a corner joining Gamma_E and Gamma_W (through an isolated
        # flat point or directly) that is non-convex needs order >= 4.
        for c in self.corners:
            labs = {self.arcs[ai].label
                    for ai in (c.arc_left, c.arc_right) if ai >= 0}
            if labs == {"E", "W"}:
                comp = self.components[c.comp]
                tp = float(comp.theta(np.array([c.s + 1e-6]), 1)[0])
                nonconvex = tp > 0  # clockwise outer shore: convex has th'<0
                if c.comp > 0:
                    nonconvex = tp < 0
                for p in (c.profile_left, c.profile_right):
                    if nonconvex and p is not None and p.kind == "algebraic" \
                            and p.n < 4:
                        raise HypothesisError(
                            "(H4) violated: non-convex E/W corner with "
                            f"algebraic order n = {p.n} < 4")

    # -- curvilinear coordinates -----------------------------------------
    def project(self, x, y):
        """Nearest-boundary projection (any depth).

        Returns (comp index, s, z, inside) arrays.  z is the unsigned
        distance; inside is the slab-structure membership.
        """
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        best_d = np.full(x.shape, np.inf)
        best_s = np.zeros(x.shape)
        best_c = np.zeros(x.shape, dtype=int)
        for ci, comp in enumerate(self.components):
            svals, _, _ = comp.samples()
            d, idx = comp.kdtree().query(np.column_stack([x, y]))
            s = svals[idx]
            # Newton on g(s) = (p - gamma(s)) . gamma'(s) = 0
            for _ in range(6):
                px, py = comp.point(s)
                th = comp.theta(s)
                tx, ty = np.sin(th), -np.cos(th)
                thp = comp.theta(s, 1)
                rx, ry = x - px, y - py
                g = rx * tx + ry * ty
                # g' = -1 + (p - gamma) . n * theta'  (n = (cos, sin))
                gp = -1.0 + (rx * np.cos(th) + ry * np.sin(th)) * thp
                s = s - g / np.where(np.abs(gp) > 1e-12, gp, -1.0)
            px, py = comp.point(s)
            d = np.hypot(x - px, y - py)
            m = d < best_d
            best_d[m] = d[m]
            best_s[m] = np.mod(s[m], comp.length)
            best_c[m] = ci
        inside = self.contains(x, y)
        return best_c, best_s, best_d, inside

    def to_curvilinear(self, x, y):
        """Spec operation: tube coordinates of an interior point."""
        c, s, z, inside = self.project(np.array([x]), np.array([y]))
        if not inside[0] or z[0] >= self.tube_width:
            raise GeometryError("point outside the coordinate tube")
        return CurvilinearPoint(int(c[0]), float(s[0]), float(z[0]))

    def from_curvilinear(self, p):
        comp = self.components[p.comp]
        if not 0 <= p.z < self.tube_width:
            raise GeometryError("z outside the coordinate tube")
        px, py = comp.point(np.array([p.s]))
        nx, ny = comp.normal(np.array([p.s]))
        return float(px[0] - p.z * nx[0]), float(py[0] - p.z * ny[0])

    # -- nu-dependent corner windows --------------------------------------
    def _corner_side(self, qi, side):
        """The arc adjacent to corner qi on the given side (+1/-1)."""
        c = self.corners[qi]
        ai = c.arc_right if side > 0 else c.arc_left
        if ai < 0:
            raise GeometryError("corner has no arc on that side")
        return self.arcs[ai]

    def validity_endpoint(self, nu, qi, side):
        """s_i^+ (side=+1) or s_i^- (side=-1): edge of the E/W validity zone.

        The validity condition is nu^(1/3) |theta'| |cos theta|^(-7/3) < 1;
        the returned abscissa is the last crossing walking away from the
        corner.  Raises if the condition never holds on the half-arc
        (degenerate interval: nu too large).
        """
        c = self.corners[qi]
        arc = self._corner_side(qi, side)
        comp = self.components[c.comp]
        half = 0.5 * (arc.s1 - arc.s0)
        offs = np.geomspace(1e-9 * half, half, 400)

        def crit(off):
            s = c.s + side * off
            th1 = np.abs(comp.theta(np.atleast_1d(s), 1))
            ct = np.abs(np.cos(comp.theta(np.atleast_1d(s))))
            with np.errstate(divide="ignore", over="ignore"):
                return nu ** (1.0 / 3.0) * th1 * ct ** (-7.0 / 3.0) - 1.0
        vals = crit(offs)
        good = vals < 0
        if not np.any(good):
            raise GeometryError(
                "validity condition never satisfied on this half-arc "
                "(degenerate interval; nu too large)")
        last_bad = np.where(~good)[0]
        if len(last_bad) == 0:
            return c.s + side * offs[0]
        i = last_bad[-1]
        if i + 1 >= len(offs):
            raise GeometryError("validity zone empty up to mid-arc")
        off = brentq(lambda o: float(crit(np.array([o]))[0]),
                     offs[i], offs[i + 1], xtol=1e-12, rtol=1e-10)
        return c.s + side * off

    def energy_cutoff(self, nu, qi, side):
        """sigma_i^+/- : energy-injection endpoint on the given side."""
        c = self.corners[qi]
        arc = self._corner_side(qi, side)
        comp = self.components[c.comp]
        span = arc.s1 - arc.s0
        if arc.label == "E":
            # macroscopic: first abscissa where |sin theta| falls to the cut
            cut = self.east_sin_cut

            def f(off):
                return np.abs(np.sin(
                    comp.theta(c.s + side * np.atleast_1d(off)))) - cut
            offs = np.linspace(1e-9 * span, 0.95 * span, 800)
            vals = f(offs)
            if vals[0] < 0:
                raise GeometryError("|sin theta| below cut at the corner")
            drop = np.where(vals < 0)[0]
            if len(drop) == 0:
                # never drops below the cut before the far end: use mid-arc
                return c.s + side * 0.5 * span
            i = drop[0]
            off = brentq(lambda o: float(f(o)[0]), offs[i - 1], offs[i],
                         xtol=1e-12)
            return c.s + side * off
        # West: solve int_{s_i}^{sigma} |cos theta| = nu^(1/4)
        target = nu ** 0.25

        def integral(off):
            val, _ = quad(lambda t: abs(math.cos(float(
                comp.theta(np.array([c.s + side * t]))[0]))), 0.0, off,
                epsabs=1e-13, epsrel=1e-11, limit=200)
            return val
        hi = 0.95 * span
        if integral(hi) < target:
            raise GeometryError(
                "energy-cutoff integral equation unsolvable before the next "
                "corner (geometry too short for this nu)")
        off = brentq(lambda o: integral(o) - target, 1e-12, hi,
                     xtol=1e-12, rtol=1e-10)
        return c.s + side * off

    def corner_window(self, nu, qi, side):
        """Cached (s^+-, sigma^+-, ramp) for one corner side.

        The ramp phi rises from 0 at s^+- to 1 at sigma^+- walking away
        from the corner; derivative orders up to 4 are available.
        """
        key = (float(nu), qi, side)
        if key not in self._window_cache:
            if self.classical_only:
                # raw-corner regime: amplitudes run unramped into the
                # vertices (the forcing must vanish near the flats)
                c = self.corners[qi]

                def phi_one(s, k=0):
                    s = np.asarray(s, dtype=float)
                    return np.ones(s.shape) if k == 0 else np.zeros(s.shape)
                self._window_cache[key] = (c.s, c.s + side * 1e-9, phi_one)
                return self._window_cache[key]
            s_v = self.validity_endpoint(nu, qi, side)
            s_e = self.energy_cutoff(nu, qi, side)
            c = self.corners[qi]
            if side * (s_e - c.s) <= side * (s_v - c.s):
                # ordering sigma beyond s^+- must hold; nudge if quadrature
                # ties them (can only happen at coarse nu)
                s_e = c.s + side * (abs(s_v - c.s) * 1.05)

            def phi(s, k=0, a=s_v, b=s_e):
                return ramp_between(s, a, b, k)
            self._window_cache[key] = (s_v, s_e, phi)
        return self._window_cache[key]

    # -- misc helpers -----------------------------------------------------
    def bbox(self):
        xs, ys = [], []
        for comp in self.components:
            _, x, y = comp.samples()
            xs.append(x)
            ys.append(y)
        xs = np.concatenate(xs)
        ys = np.concatenate(ys)
        return float(xs.min()), float(xs.max()), float(ys.min()), float(ys.max())

    def arc_of_flat(self, fi, side):
        f = self.flats[fi]
        qi = f.corner_a if side < 0 else f.corner_b
        c = self.corners[qi]
        ai = c.arc_left if side < 0 else c.arc_right
        return ai


# ---------------------------------------------------------------------------
# generators


def _fillet(theta0, theta1, length):
    return _Segment("blend", theta0, theta1, length)


def _straight(theta, length):
    return _Segment("straight", theta, theta, length)


def _blend_profiles(length, comp_sign=1.0):
    """Algebraic order-4 profile constant of a 90-degree smoothstep fillet."""
    c_lead = 840.0 * (math.pi / 2.0) / length ** 4
    return c_lead


def circle(radius=2.0, center=(0.0, 0.0)):
    r = float(radius)
    cx, cy = center
    L = TWO_PI * r

    def theta_fn(s, k=0):
        s = np.asarray(s, dtype=float)
        if k == 0:
            return -s / r
        if k == 1:
            return np.full_like(s, -1.0 / r)
        return np.zeros_like(s)

    def point_fn(s):
        s = np.asarray(s, dtype=float)
        return cx + r * np.cos(s / r), cy - r * np.sin(s / r)

    comp = BoundaryComponent(closed_form=(theta_fn, point_fn), length=L)
    flats = [Flat(0, r * math.pi / 2, r * math.pi / 2, "S"),
             Flat(0, 3 * r * math.pi / 2, 3 * r * math.pi / 2, "N")]
    corners = []
    for fi, f in enumerate(flats):
        x, y = comp.point(np.array([f.s0]))
        corners.append(Corner(
            0, f.s0, float(x[0]), float(y[0]), fi, "point",
            profile_left=FlatnessProfile("algebraic", "left", n=1, C=1.0 / r),
            profile_right=FlatnessProfile("algebraic", "right", n=1,
                                          C=1.0 / r)))
    return [comp], flats, corners


def _island_circle(radius, center):
    r = float(radius)
    cx, cy = center
    L = TWO_PI * r

    def theta_fn(s, k=0):
        s = np.asarray(s, dtype=float)
        if k == 0:
            return s / r + math.pi
        if k == 1:
            return np.full_like(s, 1.0 / r)
        return np.zeros_like(s)

    def point_fn(s):
        s = np.asarray(s, dtype=float)
        return cx + r * np.cos(s / r), cy + r * np.sin(s / r)

    comp = BoundaryComponent(closed_form=(theta_fn, point_fn), length=L)
    # cos theta = -cos(s/r): zero at s/r = pi/2 (island top, sin theta = -1,
    # a 'S'-type flat point) and s/r = 3pi/2 (island bottom, 'N'-type)
    flats = [("S", r * math.pi / 2), ("N", 3 * r * math.pi / 2)]
    return comp, flats, r


def _box_program(W, H, P, h, f):
    """Body [0,W]x[-H,H] with east protrusion [W,W+P]x[-h,h], filleted."""
    cf = blend_extent(f)
    aN = W - 2 * cf
    e1 = H - h - 2 * cf
    e2 = 2 * h - 2 * cf
    pN = P - 2 * cf
    wE = 2 * H - 2 * cf
    for name, val in (("north edge", aN), ("upper east edge", e1),
                      ("protrusion east edge", e2),
                      ("protrusion flat edge", pN), ("west edge", wE)):
        if val <= 0.05:
            raise GeometryError(f"fillet too large: {name} length {val:.3f}")
    hp = math.pi / 2
    segs = [
        _straight(hp, aN),            # 0 body N edge
        _fillet(hp, 0.0, f),          # 1
        _straight(0.0, e1),           # 2 upper E body edge
        _fillet(0.0, hp, f),          # 3 concave, to protrusion top
        _straight(hp, pN),            # 4 protrusion N edge
        _fillet(hp, 0.0, f),          # 5
        _straight(0.0, e2),           # 6 protrusion E edge
        _fillet(0.0, -hp, f),         # 7
        _straight(-hp, pN),           # 8 protrusion S edge
        _fillet(-hp, 0.0, f),         # 9 concave, back to body
        _straight(0.0, e1),           # 10 lower E body edge
        _fillet(0.0, -hp, f),         # 11
        _straight(-hp, aN),           # 12 body S edge
        _fillet(-hp, -math.pi, f),    # 13
        _straight(-math.pi, wE),      # 14 W edge
        _fillet(-math.pi, -3 * hp, f),  # 15
    ]
    comp = BoundaryComponent(segs, start=(cf, H))
    C4 = _blend_profiles(f)
    flat_ids = [(0, "N"), (4, "N"), (8, "S"), (12, "S")]
    flats = []
    corners = []
    for si, lab in flat_ids:
        s0 = segs[si].s0
        s1 = s0 + segs[si].length
        fi = len(flats)
        flats.append(Flat(0, s0, s1, lab))
        for end, sc in (("a", s0), ("b", s1)):
            x, y = comp.point(np.array([sc]))
            pr = FlatnessProfile("algebraic",
                                 "left" if end == "a" else "right",
                                 n=4, C=C4)
            corners.append(Corner(
                0, sc, float(x[0]), float(y[0]), fi, end,
                profile_left=pr if end == "a" else None,
                profile_right=pr if end == "b" else None))
    return [comp], flats, corners


def peanut():
    # the protrusion must be long enough that the corner truncation
    # rectangles (width ~ delta_y^(1/5) each for order-4 flat corners) do
    # not swallow the whole Sverdrup jump at practical viscosities
    return _box_program(W=2.4, H=2.1, P=2.6, h=0.75, f=0.8)


def two_lobes():
    return _box_program(W=2.0, H=1.85, P=2.3, h=0.65, f=0.7)


def rounded_rectangle(width=3.0, height=2.4, fillet=0.8):
    cf = blend_extent(fillet)
    aN = width - 2 * cf
    aE = height - 2 * cf
    if min(aN, aE) <= 0.05:
        raise GeometryError("fillet too large for the rectangle")
    hp = math.pi / 2
    segs = [
        _straight(hp, aN),
        _fillet(hp, 0.0, fillet),
        _straight(0.0, aE),
        _fillet(0.0, -hp, fillet),
        _straight(-hp, aN),
        _fillet(-hp, -math.pi, fillet),
        _straight(-math.pi, aE),
        _fillet(-math.pi, -3 * hp, fillet),
    ]
    comp = BoundaryComponent(segs, start=(cf, height / 2.0))
    C4 = _blend_profiles(fillet)
    flats = []
    corners = []
    for si, lab in ((0, "N"), (4, "S")):
        s0 = segs[si].s0
        s1 = s0 + segs[si].length
        fi = len(flats)
        flats.append(Flat(0, s0, s1, lab))
        for end, sc in (("a", s0), ("b", s1)):
            x, y = comp.point(np.array([sc]))
            pr = FlatnessProfile("algebraic",
                                 "left" if end == "a" else "right", n=4, C=C4)
            corners.append(Corner(
                0, sc, float(x[0]), float(y[0]), fi, end,
                profile_left=pr if end == "a" else None,
                profile_right=pr if end == "b" else None))
    return [comp], flats, corners


def rectangle(width=1.0, height=1.0, origin=(0.0, 0.0)):
    """Raw rectangle (C^0 corners).

    Only admitted in the classical regime: forcing must vanish near the
    horizontal edges, no corner machinery applies.
    """
    x0, y0 = origin
    hp = math.pi / 2
    # theta program with zero-length corners is not representable; use a
    # closed form with discontinuous theta.
    W, H = float(width), float(height)
    L = 2 * (W + H)
    brk = np.array([0.0, H, H + W, H + W + H, L])
    # start at NE corner going down the east edge:
    # leg 0: E edge (theta=0, from (x0+W, y0+H) down)
    # leg 1: S edge (theta=-pi/2, heading west)
    # leg 2: W edge (theta=-pi, heading north wait: t=(sin(-pi),-cos(-pi))
    #        = (0,1): up)  -> ordering E,S,W,N keeps clockwise traversal
    thetas = np.array([0.0, -hp, -math.pi, -3 * hp])

    def theta_fn(s, k=0):
        s = np.mod(np.asarray(s, dtype=float), L)
        idx = np.clip(np.searchsorted(brk, s, side="right") - 1, 0, 3)
        if k == 0:
            return thetas[idx]
        return np.zeros_like(s)

    def point_fn(s):
        s = np.mod(np.asarray(s, dtype=float), L)
        idx = np.clip(np.searchsorted(brk, s, side="right") - 1, 0, 3)
        t = s - brk[idx]
        x = np.empty_like(s)
        y = np.empty_like(s)
        m = idx == 0
        x[m], y[m] = x0 + W, y0 + H - t[m]
        m = idx == 1
        x[m], y[m] = x0 + W - t[m], y0
        m = idx == 2
        x[m], y[m] = x0, y0 + t[m]
        m = idx == 3
        x[m], y[m] = x0 + t[m], y0 + H
        return x, y

    comp = BoundaryComponent(closed_form=(theta_fn, point_fn), length=L)
    flats = [Flat(0, H, H + W, "S"), Flat(0, 2 * H + W, L, "N")]
    corners = []
    for fi, f in enumerate(flats):
        for end, sc in (("a", f.s0), ("b", f.s1)):
            x, y = comp.point(np.array([sc]))
            pr = FlatnessProfile("flat-interval",
                                 "left" if end == "a" else "right")
            corners.append(Corner(0, sc, float(x[0]), float(y[0]), fi, end,
                                  profile_left=pr if end == "a" else None,
                                  profile_right=pr if end == "b" else None))
    return [comp], flats, corners


def annulus(shore_radius=2.0, island_radius=0.6, island_center=(0.0, 0.0)):
    comps, flats, corners = circle(shore_radius)
    comp2, flat_pts, r = _island_circle(island_radius, island_center)
    comps.append(comp2)
    for lab, sc in flat_pts:
        fi = len(flats)
        flats.append(Flat(1, sc, sc, lab))
        x, y = comp2.point(np.array([sc]))
        corners.append(Corner(
            1, sc, float(x[0]), float(y[0]), fi, "point",
            profile_left=FlatnessProfile("algebraic", "left", n=1, C=1.0 / r),
            profile_right=FlatnessProfile("algebraic", "right", n=1,
                                          C=1.0 / r)))
    return comps, flats, corners


_GENERATORS = {
    "circle": circle,
    "rectangle": rectangle,
    "rounded_rectangle": rounded_rectangle,
    "peanut": peanut,
    "two_lobes": two_lobes,
    "annulus": annulus,
}


def build_geometry(components, flats, corners, config=None):
    """Assemble and verify a DomainGeometry from its raw parts."""
    return DomainGeometry(components, flats, corners, config=config)


def make_domain(name, config=None, **kwargs):
    """Build a shipped analytic domain by generator name."""
    if name not in _GENERATORS:
        raise GeometryError(f"unknown domain generator '{name}'")
    comps, flats, corners = _GENERATORS[name](**kwargs)
    cfg = dict(config or {})
    if name == "rectangle":
        cfg["classical_only"] = True
    return build_geometry(comps, flats, corners, config=cfg)
