"""Assembly of the full boundary-layer approximation.

The approximate stream function is the sum of four groups:

  * the truncated transport solution plus its discontinuity repairs
    (interior + sigma stack),
  * one exponential layer per East arc,
  * one parabolic layer per horizontal piece (with its shoulders),
  * one two-mode exponential layer per West arc.

Every layer receives the boundary trace and outward normal derivative of
the *same* field (interior + sigma stack); the corner windows form an
exact partition of unity on the overlaps, so the composed field satisfies
the homogeneous clamped conditions pointwise wherever the data functions
are evaluated exactly.

Layers live in tube coordinates (s, z); Cartesian partial derivatives up
to total order 2 are obtained with the chain rule of the nearest-point
projection (s(x, y), z(x, y)).
"""

import numpy as np
from scipy.interpolate import InterpolatedUnivariateSpline

from .interior import InteriorField, TruncationParams, _periodic_spline
from .ew_layers import build_east_layer, build_west_layer
from .ns_layers import build_ns_layer, extinction_functional
from .sigma_layers import build_sigma_stack

__all__ = ["CompositeSolution", "build_composite", "tube_chain"]

_PARTIAL_INDEX = {(0, 0): 0, (1, 0): 1, (0, 1): 2,
                  (2, 0): 3, (1, 1): 4, (0, 2): 5}


def tube_chain(geom, comp_idx, s, z):
    """First and second Cartesian derivatives of the tube coordinates.

    Points at inward depth z on the normal ray of abscissa s satisfy
    (x, y) = gamma(s) - z n(s) with n = (cos theta, sin theta) the
    outward normal and gamma' = t = (sin theta, -cos theta).  Returns a
    dict with s_x, s_y, z_x, z_y and the six second derivatives.
    """
    comp = geom.components[comp_idx]
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    th = comp.theta(s)
    th1 = comp.theta(s, 1)
    th2 = comp.theta(s, 2)
    tx, ty = np.sin(th), -np.cos(th)
    nx, ny = np.cos(th), np.sin(th)
    h = 1.0 + z * th1
    out = {
        "s_x": tx / h, "s_y": ty / h,
        "z_x": -nx, "z_y": -ny,
        # s_ab = (t_a n_b + t_b n_a) theta'/h^2 - t_a t_b z theta''/h^3
        "s_xx": 2.0 * tx * nx * th1 / h ** 2 - tx * tx * z * th2 / h ** 3,
        "s_xy": (tx * ny + ty * nx) * th1 / h ** 2
                - tx * ty * z * th2 / h ** 3,
        "s_yy": 2.0 * ty * ny * th1 / h ** 2 - ty * ty * z * th2 / h ** 3,
        # z_ab = -theta' t_a t_b / h
        "z_xx": -th1 * tx * tx / h,
        "z_xy": -th1 * tx * ty / h,
        "z_yy": -th1 * ty * ty / h,
        "h": h,
    }
    return out


def _cartesian_from_tube(F, chain, ix, iy):
    """Assemble d_x^ix d_y^iy from tube partials F[(i, j)] and the chain."""
    c = chain
    if (ix, iy) == (0, 0):
        return F[(0, 0)]
    if (ix, iy) == (1, 0):
        return F[(1, 0)] * c["s_x"] + F[(0, 1)] * c["z_x"]
    if (ix, iy) == (0, 1):
        return F[(1, 0)] * c["s_y"] + F[(0, 1)] * c["z_y"]
    if (ix, iy) == (2, 0):
        return (F[(2, 0)] * c["s_x"] ** 2
                + 2.0 * F[(1, 1)] * c["s_x"] * c["z_x"]
                + F[(0, 2)] * c["z_x"] ** 2
                + F[(1, 0)] * c["s_xx"] + F[(0, 1)] * c["z_xx"])
    if (ix, iy) == (1, 1):
        return (F[(2, 0)] * c["s_x"] * c["s_y"]
                + F[(1, 1)] * (c["s_x"] * c["z_y"] + c["s_y"] * c["z_x"])
                + F[(0, 2)] * c["z_x"] * c["z_y"]
                + F[(1, 0)] * c["s_xy"] + F[(0, 1)] * c["z_xy"])
    if (ix, iy) == (0, 2):
        return (F[(2, 0)] * c["s_y"] ** 2
                + 2.0 * F[(1, 1)] * c["s_y"] * c["z_y"]
                + F[(0, 2)] * c["z_y"] ** 2
                + F[(1, 0)] * c["s_yy"] + F[(0, 1)] * c["z_yy"])
    raise ValueError("partials available up to total order 2")


class _TraceData:
    """Combined boundary data of the interior field and the sigma stack.

    Builds, per component, splines of the trace p(s) and of the outward
    normal derivative q(s) of (interior + sigma stack), sampled away from
    the spline ringing of the raw interior trace at discontinuity-line
    junctions (the combined data is continuous there by construction).
    """

    def __init__(self, field, stack, comp_idx, n=4096):
        geom = field.geom
        self.comp = geom.components[comp_idx]
        L = self.comp.length
        tr = field.traces(comp_idx)
        svals = np.asarray(tr["s"], dtype=float)
        p = np.asarray(tr["psi"], dtype=float).copy()
        q = np.asarray(tr["dn"], dtype=float).copy()
        if stack is not None:
            th = self.comp.theta(svals)
            xb, yb = self.comp.point(svals)
            # evaluate just inside the fluid, matching the side convention
            # of the interior trace at points wedged against a
            # discontinuity line (one-sided limits must pair up)
            eps = 1e-8 * (1.0 + geom.tube_width)
            xn = xb - eps * np.cos(th)
            yn = yb - eps * np.sin(th)
            p = p + stack.value(xn, yn)
            gx = stack.value(xn, yn, 1, 0)
            gy = stack.value(xn, yn, 0, 1)
            q = q + np.cos(th) * gx + np.sin(th) * gy
        ok = np.isfinite(p) & np.isfinite(q)
        self._L = L
        self._p = _periodic_spline(svals[ok], p[ok], L)
        self._q = _periodic_spline(svals[ok], q[ok], L)

    def p(self, s, k=0):
        s = np.mod(np.asarray(s, dtype=float), self._L)
        return self._p(s, k) if k else self._p(s)

    def q(self, s, k=0):
        s = np.mod(np.asarray(s, dtype=float), self._L)
        return self._q(s, k) if k else self._q(s)


class CompositeSolution:
    """Evaluator of the assembled approximation and of its four groups."""

    def __init__(self, geom, forcing, nu, field, stack, east, west, ns,
                 offset_field=None):
        self.geom = geom
        self.forcing = forcing
        self.nu = nu
        self.field = field
        self.stack = stack
        self.east = east
        self.west = west
        self.ns = ns
        # optional extra interior term (island indicator constructions)
        self.offset_field = offset_field

    # -- evaluation ------------------------------------------------------
    def _project(self, x, y):
        xf = np.asarray(x, dtype=float).ravel()
        yf = np.asarray(y, dtype=float).ravel()
        ci, s, z, _ = self.geom.project(xf, yf)
        return ci, s, z

    def _layer_sum(self, x, y, ix, iy):
        shape = np.broadcast(np.asarray(x, float), np.asarray(y, float)).shape
        xf = np.broadcast_to(np.asarray(x, float), shape).ravel()
        yf = np.broadcast_to(np.asarray(y, float), shape).ravel()
        ci, s, z = self._project(xf, yf)
        out = {"ew": np.zeros(xf.shape), "ns": np.zeros(xf.shape)}
        for group, layers in (("ew", self.east + self.west),
                              ("ns", self.ns)):
            for layer in layers:
                cidx = (layer.comp_idx if hasattr(layer, "comp_idx")
                        else self.geom.flats[layer.flat_idx].comp)
                m = (ci == cidx) & (z < self.geom.cutoff_width)
                if not np.any(m):
                    continue
                sm, zm = s[m], z[m]
                if ix + iy == 0:
                    vals = layer_value(layer, sm, zm, 0, 0)
                else:
                    chain = tube_chain(self.geom, cidx, sm, zm)
                    F = {}
                    for i in range(ix + iy + 1):
                        for j in range(ix + iy + 1 - i):
                            F[(i, j)] = layer_value(layer, sm, zm, i, j)
                    vals = _cartesian_from_tube(F, chain, ix, iy)
                out[group][m] += vals
        return {k: v.reshape(shape) for k, v in out.items()}

    def group_values(self, x, y, ix=0, iy=0):
        """Dict of the four component groups, Cartesian partial (ix, iy)."""
        shape = np.broadcast(np.asarray(x, float), np.asarray(y, float)).shape
        xf = np.broadcast_to(np.asarray(x, float), shape).ravel()
        yf = np.broadcast_to(np.asarray(y, float), shape).ravel()
        idx = _PARTIAL_INDEX[(ix, iy)]
        if ix + iy:
            interior = np.array([
                self.field.partials(xi, yi)[idx] for xi, yi in zip(xf, yf)])
        else:
            interior = np.array([
                self.field.value(xi, yi) for xi, yi in zip(xf, yf)])
        interior = np.asarray(interior, dtype=float).reshape(shape)
        if self.offset_field is not None:
            interior = interior + self.offset_field(xf, yf, ix, iy) \
                .reshape(shape)
        sigma = (self.stack.value(xf, yf, ix, iy).reshape(shape)
                 if self.stack is not None else np.zeros(shape))
        layers = self._layer_sum(xf, yf, ix, iy)
        return {"int": interior, "sigma": sigma,
                "ew": layers["ew"].reshape(shape),
                "ns": layers["ns"].reshape(shape)}

    def value(self, x, y, ix=0, iy=0):
        g = self.group_values(x, y, ix, iy)
        return g["int"] + g["sigma"] + g["ew"] + g["ns"]

    def grid_values(self, xs, ys, ix=0, iy=0):
        """Tensor-grid evaluation (rows share the interior integration)."""
        nx, ny = len(xs), len(ys)
        out = np.zeros((nx, ny))
        idx = _PARTIAL_INDEX[(ix, iy)]
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        if ix == 0 and iy <= 0:
            for j, yv in enumerate(ys):
                out[:, j] = self.field.row_values(yv, np.asarray(xs))
        else:
            for j, yv in enumerate(ys):
                out[:, j] = [self.field.partials(xv, yv)[idx] for xv in xs]
        if self.offset_field is not None:
            out = out + self.offset_field(X.ravel(), Y.ravel(), ix, iy) \
                .reshape(X.shape)
        if self.stack is not None:
            out = out + self.stack.value(X, Y, ix, iy)
        lay = self._layer_sum(X, Y, ix, iy)
        return out + lay["ew"] + lay["ns"]

    # -- diagnostics -----------------------------------------------------
    def boundary_defect(self, n=400, offsets=None):
        """Max over boundary samples of |psi| + |d_n psi| at z = 0.

        Every term is evaluated in its boundary limit: the interior trace
        is recomputed from scratch (not from the data splines the layers
        were built on), so the result measures the actual clamping
        defect of the assembled field.  offsets maps component index to
        the prescribed constant boundary value (island constructions).
        """
        offsets = offsets or {}
        worst = 0.0
        field = self.field
        for ci, comp in enumerate(self.geom.components):
            svals = np.linspace(0.0, comp.length, n, endpoint=False)
            xb, yb = comp.point(svals)
            th = comp.theta(svals)
            east = field._east_membership(ci, svals)
            psi = np.zeros(n)
            dn = np.zeros(n)
            for k in range(n):
                pk, dk = field._trace_point(ci, float(svals[k]),
                                            float(xb[k]), float(yb[k]),
                                            float(th[k]), bool(east[k]))
                psi[k], dn[k] = pk, dk
            bad = ~np.isfinite(dn)
            if np.any(bad):   # corner points: take the one-sided limit
                dn[bad] = np.interp(svals[bad], svals[~bad], dn[~bad])
            if self.stack is not None:
                # same inward-nudged side convention as the trace tables
                eps = 1e-8 * (1.0 + self.geom.tube_width)
                xn = xb - eps * np.cos(th)
                yn = yb - eps * np.sin(th)
                psi = psi + self.stack.value(xn, yn)
                gx = self.stack.value(xn, yn, 1, 0)
                gy = self.stack.value(xn, yn, 0, 1)
                dn = dn + np.cos(th) * gx + np.sin(th) * gy
            if self.offset_field is not None:
                psi = psi + self.offset_field(xb, yb, 0, 0)
                gx = self.offset_field(xb, yb, 1, 0)
                gy = self.offset_field(xb, yb, 0, 1)
                dn = dn + np.cos(th) * gx + np.sin(th) * gy
            z0 = np.zeros(n)
            for layer in self.east + self.west:
                if layer.comp_idx != ci:
                    continue
                psi = psi + layer.value(svals, z0)
                dn = dn - layer.value(svals, z0, 0, 1)
            for layer in self.ns:
                if self.geom.flats[layer.flat_idx].comp != ci:
                    continue
                psi = psi + layer.partials(svals, z0)
                dn = dn - layer.partials(svals, z0, 0, 1)
            psi = psi - offsets.get(ci, 0.0)
            worst = max(worst, float(np.max(np.abs(psi) + np.abs(dn))))
        return worst

    def extinction(self):
        """Energy-extinction functional summed over horizontal layers."""
        return sum(extinction_functional(la) for la in self.ns)


def layer_value(layer, s, z, i, j):
    """Uniform (s, z)-partial entry point over the two layer families."""
    if hasattr(layer, "value"):          # E/W exponential layer
        return layer.value(s, z, i, j)
    return layer.partials(s, z, i, j)    # parabolic layer


def build_composite(geom, forcing, nu, beta=1.0, with_sigma=True,
                    sigma_kwargs=None, ns_kwargs=None):
    """Construct every term of the approximation on one basin.

    Order of construction: interior field, then the discontinuity-line
    stack, then the exponential and parabolic layers, all of which lift
    the boundary data of (interior + stack) with corner windows that sum
    to one on the overlaps.
    """
    params = TruncationParams.build(geom, nu, beta=beta)
    field = InteriorField(geom, forcing, params)
    stack = None
    if with_sigma and geom.sigma_lines:
        stack = build_sigma_stack(geom, field, nu, **(sigma_kwargs or {}))
    data = {}

    def trace_data(ci):
        if ci not in data:
            data[ci] = _TraceData(field, stack, ci)
        return data[ci]

    east, west, ns = [], [], []
    for ai, arc in enumerate(geom.arcs):
        td = trace_data(arc.comp)
        if arc.label == "E":
            east.append(build_east_layer(geom, nu, ai, td.q))
        else:
            west.append(build_west_layer(geom, nu, ai, td.p, td.q))
    for fi, flat in enumerate(geom.flats):
        if geom.classical_only:
            # raw corners admit no parabolic layer; the forcing must
            # already vanish in a band along each horizontal edge
            xs = [geom.corners[flat.corner_a].x, geom.corners[flat.corner_b].x]
            gap = max(abs(flat.y - f2.y) for f2 in geom.flats) or 1.0
            band = 0.1 * gap
            if not forcing.vanishes_on_band(flat.y - band, flat.y + band,
                                            (min(xs), max(xs)), tol=1e-10):
                raise ValueError(
                    "a basin with raw corners needs forcing that vanishes "
                    "near its horizontal edges")
            continue
        td = trace_data(flat.comp)
        ns.append(build_ns_layer(geom, nu, fi, td.p, td.q,
                                 **(ns_kwargs or {})))
    return CompositeSolution(geom, forcing, nu, field, stack,
                             east, west, ns)
