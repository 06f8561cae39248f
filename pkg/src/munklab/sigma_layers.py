"""Discontinuity-line machinery for the transport solution.

When a flat edge protrudes eastward, the transport solution jumps across
the horizontal line continuing that edge westward.  Three terms repair
the jump so that the approximation stays H^2:

* a lifting term carried by one side of the line, linear in the offset
  from the line, whose coefficients lift_a, lift_b match the jump (west
  of the junction) and the boundary traces (along the edge);
* an interior singular layer, solved westward as a clamped degenerate
  parabolic problem whose floor follows the boundary around the junction
  corner and then flattens below the line;
* a small quadratic corrector near the West end of the line that keeps
  the western layer amplitude differentiable.

Internally everything is phrased in the mirrored offset eta = +-(y - y1)
chosen so the side carrying the protruding east graph is eta > 0.
"""

import math

import numpy as np
from scipy.interpolate import InterpolatedUnivariateSpline
from scipy.optimize import brentq

from .ns_layers import ParabolicProblem, ZmaxError, solve_parabolic
from .shapes import plateau

__all__ = ["SigmaLayerError", "LiftCoefficients", "SigmaLayer",
           "SigmaCorrector", "SigmaStack", "build_lift", "delta_tau_lift",
           "build_sigma_layer", "build_sigma_corrector", "build_sigma_stack"]


class SigmaLayerError(RuntimeError):
    pass


def _chi(u, k=0):
    """The band cut-off: plateau on [-1/2, 1/2], support [-1, 1]."""
    return plateau(np.asarray(u, dtype=float), k)


# ---------------------------------------------------------------------------
# lifting coefficients


class LiftCoefficients:
    """Piecewise coefficients of the one-sided lifting term.

    West of the junction abscissa x1 the coefficients are the constants
    cancelling the jump of the transport solution and of its first
    normal-offset derivative; between x1 and the eastern onset x_sigma
    they match the boundary traces along the edge; beyond x_sigma they
    vanish.  lift_b is expressed in the mirrored offset eta.
    """

    def __init__(self, geom, field, nu, sl):
        self.geom = geom
        self.field = field
        self.nu = nu
        self.sl = sl
        self.mirror = 1.0 if sl.plus_side == "above" else -1.0
        self.y1 = sl.y1
        self.x1 = sl.x1
        xmin, xmax, _, _ = geom.bbox()
        self.x_lo = xmin - 0.05 * (xmax - xmin)
        flat = geom.flats[sl.flat]
        self.comp_idx = flat.comp
        comp = geom.components[flat.comp]
        self._classify(flat, comp)
        self.j0, self.j1, self.j2 = field.sigma_jumps(sl)
        # constants branch (mirrored offset derivative)
        self.a_const = -self.j0
        self.b_const = -self.mirror * self.j1
        self._build_zone(comp)

    # -- onset selection ------------------------------------------------
    def _classify(self, flat, comp):
        g = self.geom
        if flat.isolated:
            self.case = 1
            far_qi = self.sl.corner
        else:
            far_qi = flat.corner_b if self.sl.corner == flat.corner_a \
                else flat.corner_a
        far = g.corners[far_qi]
        self.far_corner = far_qi
        # the arc walked onto when leaving the edge through the far corner
        if far.end == "b" or (far.end == "point" and far.arc_right >= 0):
            side, ai = +1, far.arc_right
        else:
            side, ai = -1, far.arc_left
        if ai < 0:
            raise SigmaLayerError("junction corner with no adjacent arc")
        self._far_side = side
        prof = far.profile_right if side > 0 else far.profile_left
        if prof is not None and prof.kind == "algebraic" and prof.n < 4:
            raise SigmaLayerError(
                "junction flatness order below 4: the floor of the "
                "singular layer is not C^4 here (unsupported geometry)")
        if not flat.isolated and g.arcs[ai].label == "E":
            # traces die out with the forcing cut-off before the far
            # corner, no transition ramp is needed
            self.case = 3
            self.sigma_minus = far.s
            self.varphi = None
        else:
            self.case = 2 if not flat.isolated else 1
            sv, se, phi = g.corner_window(self.nu, far_qi, side)
            self.sigma_minus = se
            self.varphi = phi
        self.x_sigma = float(comp.point(np.array([self.sigma_minus]))[0][0])
        if self.x_sigma <= self.x1:
            raise SigmaLayerError("onset abscissa does not extend east of "
                                  "the junction")

    # -- trace-matching zone --------------------------------------------
    def _build_zone(self, comp):
        g = self.geom
        flat = g.flats[self.sl.flat]
        q1 = g.corners[self.sl.corner]
        # boundary portion from the junction corner to the onset point.
        # The trace itself jumps at the junction corner, so the global
        # periodic trace splines ring there; refit one-sided splines from
        # the raw trace samples inside the zone instead.
        s_a, s_b = sorted((q1.s, self.sigma_minus))
        tr = self.field.traces(self.comp_idx)
        sel = (tr["s"] > s_a + 1e-10) & (tr["s"] < s_b - 1e-10)
        s_raw = tr["s"][sel]
        ok = np.isfinite(tr["psi"][sel]) & np.isfinite(tr["dn"][sel])
        s_raw = s_raw[ok]
        psi_sp = InterpolatedUnivariateSpline(s_raw, tr["psi"][sel][ok], k=5)
        dn_sp = InterpolatedUnivariateSpline(s_raw, tr["dn"][sel][ok], k=5)
        n = 1600
        u = np.linspace(0.0, 1.0, n)
        # grade towards both ends where the traces flatten out
        u = 0.5 * (1.0 - np.cos(math.pi * u))
        svals = s_a + (s_b - s_a) * u
        th = comp.theta(svals)
        x, y = comp.point(svals)
        eta_b = self.mirror * (y - self.y1)
        if self.varphi is None:
            phi = np.zeros_like(svals)
            phi1 = np.zeros_like(svals)
        else:
            phi = self.varphi(svals)
            phi1 = self.varphi(svals, 1)
        psi = psi_sp(svals)
        psi1 = psi_sp(svals, 1)
        dn = dn_sp(svals)
        b = self.mirror * (-(1.0 - phi) * np.sin(th) * dn
                           + (1.0 - phi) * np.cos(th) * psi1
                           - np.cos(th) * phi1 * psi)
        a = -(1.0 - phi) * psi - b * eta_b
        order = np.argsort(x)
        x, a, b, eta_b = x[order], a[order], b[order], eta_b[order]
        x, keep = np.unique(x, return_index=True)
        self._a_sp = InterpolatedUnivariateSpline(x, a[keep], k=5)
        self._b_sp = InterpolatedUnivariateSpline(x, b[keep], k=5)
        self._eta_sp = InterpolatedUnivariateSpline(x, eta_b[keep], k=5)
        self._zone = (float(x[0]), float(x[-1]))

    # -- coefficient evaluation -----------------------------------------
    def lift_a(self, x, k=0):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        west = x <= self.x1
        zone = (x > self.x1) & (x < self.x_sigma)
        if k == 0:
            out[west] = self.a_const
        if np.any(zone):
            out[zone] = self._a_sp(x[zone], k) if k else self._a_sp(x[zone])
        return out

    def lift_b(self, x, k=0):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        west = x <= self.x1
        zone = (x > self.x1) & (x < self.x_sigma)
        if k == 0:
            out[west] = self.b_const
        if np.any(zone):
            out[zone] = self._b_sp(x[zone], k) if k else self._b_sp(x[zone])
        return out

    def boundary_offset(self, x, k=0):
        """Mirrored offset of the matched boundary portion, as a graph."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        zone = (x >= self._zone[0]) & (x <= self._zone[1])
        if np.any(zone):
            out[zone] = self._eta_sp(x[zone], k) if k \
                else self._eta_sp(x[zone])
        return out

    def indicator(self, x, eta):
        """One-sided carrier: drops the eta < 0 half west of the junction."""
        x = np.asarray(x, dtype=float)
        eta = np.asarray(eta, dtype=float)
        return np.where((x < self.x1) & (eta < 0.0), 0.0, 1.0)

    # -- the lifting term itself ----------------------------------------
    def psi_lift(self, x, y, ix=0, iy=0):
        """Partial d_x^ix d_y^iy of the lifting term (total order <= 2)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        eta = self.mirror * (y - self.y1)
        eps = self.nu ** 0.25
        A = self.lift_a(x, ix)
        B = self.lift_b(x, ix)
        core = A + B * eta
        if iy == 0:
            val = _chi(eta / eps) * core
        elif iy == 1:
            val = _chi(eta / eps, 1) / eps * core + _chi(eta / eps) * B
        elif iy == 2:
            val = _chi(eta / eps, 2) / eps ** 2 * core \
                + 2.0 * _chi(eta / eps, 1) / eps * B
        else:
            raise ValueError("partials available up to total order 2")
        return self.indicator(x, eta) * val * self.mirror ** iy

    # -- diagnostics -----------------------------------------------------
    def coefficient_norm(self, k):
        """A_k = ||lift_a^(k)||_L1 + nu^(1/4) ||lift_b^(k)||_L1."""
        xs = np.linspace(self._zone[0], self._zone[1], 4001)
        a = np.abs(self._a_sp(xs, k) if k else self._a_sp(xs))
        b = np.abs(self._b_sp(xs, k) if k else self._b_sp(xs))
        na = np.trapezoid(a, xs)
        nb = np.trapezoid(b, xs)
        if k == 0:
            span = self.x1 - self.x_lo
            na += abs(self.a_const) * span
            nb += abs(self.b_const) * span
        return float(na + self.nu ** 0.25 * nb)

    def residual_norms(self, ny=200, nx=400):
        """(L2 of the curvature remainder, H^-2 estimator of the rest).

        The first remainder collects the chi'(eta) and chi''(eta) terms
        weighted by the second x-derivatives of the coefficients; the
        second is bounded through its explicit second antiderivative in x.
        """
        eps = self.nu ** 0.25
        xs = np.linspace(self.x_lo, self.x_sigma, nx)
        etas = np.linspace(-eps, eps, ny)
        X, E = np.meshgrid(xs, etas, indexing="ij")
        ind = self.indicator(X, E)
        a2 = self.lift_a(X, 2)
        b2 = self.lift_b(X, 2)
        u = E / eps
        r1 = ind * (4.0 * self.nu ** 0.75 * _chi(u, 1) * b2
                    + 2.0 * self.nu ** 0.5 * _chi(u, 2) * (a2 + b2 * E))
        r2 = ind * self.nu * _chi(u) * (a2 + b2 * E)
        inside = self.geom.contains(X, self.y1 + self.mirror * E)
        w1 = np.sqrt(np.trapezoid(np.trapezoid(
            (r1 * inside) ** 2, etas, axis=1), xs))
        w2 = np.sqrt(np.trapezoid(np.trapezoid(
            (r2 * inside) ** 2, etas, axis=1), xs))
        return float(w1), float(w2)


def build_lift(geom, field, nu, sl):
    """Lifting coefficients and evaluator for one discontinuity line."""
    return LiftCoefficients(geom, field, nu, sl)


def delta_tau_lift(lift, x, Y):
    """Forcing induced by the lifting term, in the stretched offset Y.

    chi+ { chi(Y)[a' + nu^(1/4) b' Y] - chi''''(Y)[a + nu^(1/4) b Y]
           - 4 nu^(1/4) chi'''(Y) b }.
    """
    x = np.asarray(x, dtype=float)
    Y = np.asarray(Y, dtype=float)
    x, Y = np.broadcast_arrays(x, Y)
    lam = lift.nu ** 0.25
    ind = lift.indicator(x, lam * Y)
    a0, a1 = lift.lift_a(x), lift.lift_a(x, 1)
    b0, b1 = lift.lift_b(x), lift.lift_b(x, 1)
    return ind * (_chi(Y) * (a1 + lam * b1 * Y)
                  - _chi(Y, 4) * (a0 + lam * b0 * Y)
                  - 4.0 * lam * _chi(Y, 3) * b0)


# ---------------------------------------------------------------------------
# the interior singular layer


class SigmaLayer:
    """Westward-propagating layer smoothing out the induced forcing.

    The clamped floor Y_minus follows the physical boundary through the
    junction corner, then flattens at bar_Y_minus below the line; the
    profile phi_sigma is marched westward from the onset abscissa.
    """

    def __init__(self, lift, delta_y, floor, traj, varsigma1_plus, t1_plus):
        self.lift = lift
        self.nu = lift.nu
        self.delta_y = delta_y
        self.mirror = lift.mirror
        self.y1 = lift.y1
        self.x1 = lift.x1
        self.x_sigma = lift.x_sigma
        self._floor = floor            # (x_vs, x_t1, graph, blend, eta_bar)
        self.traj = traj
        self.varsigma1_plus = varsigma1_plus
        self.t1_plus = t1_plus
        self.x_lo = float(self.x_sigma - traj.s[-1])
        self.bar_Y_minus = floor[4] / self.nu ** 0.25

    # -- the floor -------------------------------------------------------
    def eta_floor(self, x, k=0):
        x_vs, x_t1, graph, blend, eta_bar = self._floor
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        m_zone = x >= self.x1
        m_graph = (x >= x_vs) & (x < self.x1)
        m_blend = (x >= x_t1) & (x < x_vs)
        m_flat = x < x_t1
        if np.any(m_zone):
            out[m_zone] = self.lift.boundary_offset(x[m_zone], k)
        if np.any(m_graph):
            out[m_graph] = graph(x[m_graph], k) if k else graph(x[m_graph])
        if np.any(m_blend):
            out[m_blend] = np.polyval(np.polyder(blend, k) if k else blend,
                                      x[m_blend] - x_t1)
        if k == 0 and np.any(m_flat):
            out[m_flat] = eta_bar
        return out

    def Y_minus(self, x, k=0):
        return self.eta_floor(x, k) / self.nu ** 0.25

    # -- profile evaluation ---------------------------------------------
    def _phi(self, x, Z, dx=0, dZ=0):
        """phi_sigma partials through the trajectory spline."""
        t = self.x_sigma - np.asarray(x, dtype=float)
        sp = self.traj
        if sp._spline is None:
            sp.interp(sp.s[:1], sp.Z[:1])   # build lazily
        tt = np.clip(t, sp.s[0], sp.s[-1])
        Zc = np.clip(Z, 0.0, sp.Z[-1])
        val = sp._spline(tt, Zc, dx=dx, dy=dZ, grid=False)
        val = np.where((Z > sp.Z[-1]) | (Z < 0.0), 0.0, val)
        # d/dx = -d/dt
        return val * (-1.0) ** dx

    def psi_profile(self, x, Y, dx=0, dY=0):
        """Partials of the layer in (x, stretched offset Y)."""
        x = np.asarray(x, dtype=float)
        Y = np.asarray(Y, dtype=float)
        x, Y = np.broadcast_arrays(x, Y)
        Z = Y - self.Y_minus(x)
        if (dx, dY) == (0, 0):
            return self._phi(x, Z)
        Y1 = self.Y_minus(x, 1)
        if (dx, dY) == (0, 1):
            return self._phi(x, Z, 0, 1)
        if (dx, dY) == (0, 2):
            return self._phi(x, Z, 0, 2)
        if (dx, dY) == (1, 0):
            return self._phi(x, Z, 1, 0) - Y1 * self._phi(x, Z, 0, 1)
        if (dx, dY) == (1, 1):
            return self._phi(x, Z, 1, 1) - Y1 * self._phi(x, Z, 0, 2)
        if (dx, dY) == (2, 0):
            Y2 = self.Y_minus(x, 2)
            return (self._phi(x, Z, 2, 0)
                    - 2.0 * Y1 * self._phi(x, Z, 1, 1)
                    + Y1 ** 2 * self._phi(x, Z, 0, 2)
                    - Y2 * self._phi(x, Z, 0, 1))
        raise ValueError("partials available up to total order 2")

    def value(self, x, y, ix=0, iy=0):
        """Physical partials of the layer times the band cut-off."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        eta = self.mirror * (y - self.y1)
        lam = self.nu ** 0.25
        dy_band = self.delta_y
        Y = eta / lam

        def band(k):
            return _chi(eta / dy_band, k) / dy_band ** k

        def prof(dx, dY):
            return self.psi_profile(x, Y, dx, dY) / lam ** dY
        if (ix, iy) == (0, 0):
            out = band(0) * prof(0, 0)
        elif (ix, iy) == (1, 0):
            out = band(0) * prof(1, 0)
        elif (ix, iy) == (0, 1):
            out = band(1) * prof(0, 0) + band(0) * prof(0, 1)
        elif (ix, iy) == (2, 0):
            out = band(0) * prof(2, 0)
        elif (ix, iy) == (1, 1):
            out = band(1) * prof(1, 0) + band(0) * prof(1, 1)
        elif (ix, iy) == (0, 2):
            out = (band(2) * prof(0, 0) + 2.0 * band(1) * prof(0, 1)
                   + band(0) * prof(0, 2))
        else:
            raise ValueError("partials available up to total order 2")
        return out * self.mirror ** iy

    # -- diagnostics -----------------------------------------------------
    def station_profiles(self, n=20):
        """(Z grid, rows of phi_sigma) at n stations, for norm corpora."""
        idx = np.linspace(2, len(self.traj.s) - 2, n).astype(int)
        return self.traj.Z, self.traj.g[idx]

    def derivative_norms(self, nx=400):
        """(L4_x L2_Y of d_x psi, L2_x L2_Y of d_x^2 psi) west of onset."""
        xs = np.linspace(self.x_lo, self.x_sigma, nx)
        Z = self.traj.Z
        n1 = np.zeros(nx)
        n2 = np.zeros(nx)
        for i, x in enumerate(xs):
            xa = np.full_like(Z, x)
            Ym = self.Y_minus(np.array([x]))[0]
            d1 = self.psi_profile(xa, Ym + Z, 1, 0)
            d2 = self.psi_profile(xa, Ym + Z, 2, 0)
            n1[i] = np.trapezoid(d1 * d1, Z)
            n2[i] = np.trapezoid(d2 * d2, Z)
        l4 = np.trapezoid(n1 ** 2, xs) ** 0.25
        l2 = math.sqrt(np.trapezoid(n2, xs))
        return float(l4), float(l2)


def build_sigma_layer(lift, geom, nu, delta_y, n_z=3000, Z_max=30.0,
                      n_base=500):
    """March the singular layer westward from the onset abscissa."""
    floor, s_vs, s_t1 = _build_floor(lift, geom, nu, delta_y)
    eta_bar = floor[4]
    if abs(eta_bar) <= delta_y:
        raise SigmaLayerError(
            f"floor plateau {eta_bar / nu ** 0.25:.3g} does not clear the "
            f"band half-width {delta_y * nu ** -0.25:.3g}")
    layer = SigmaLayer(lift, delta_y, floor, _EmptyTraj(), s_vs, s_t1)

    xmin = lift.x_lo
    stations = _sigma_station_grid(lift, floor, xmin, n_base)
    t_grid = lift.x_sigma - stations[::-1]
    lam = nu ** 0.25

    def drift(t):
        return float(layer.Y_minus(np.array([lift.x_sigma - t]), 1)[0])

    def source(t, Z):
        x = lift.x_sigma - t
        Ym = float(layer.Y_minus(np.array([x]))[0])
        return delta_tau_lift(lift, np.full_like(Z, x), Ym + np.asarray(Z))

    problem = ParabolicProblem(
        s_grid=t_grid, b=drift, mu=lambda t: 1.0, S=source,
        g_in=lambda Z: np.zeros_like(Z), Z_max=Z_max, n_z=n_z, mu_floor=0.5)
    zmax = Z_max
    for _ in range(4):
        problem.Z_max = zmax
        try:
            traj = solve_parabolic(problem)
            break
        except ZmaxError as e:
            zmax = e.suggestion
    else:
        raise ZmaxError(zmax, 2 * zmax)
    layer.traj = traj
    layer.x_lo = float(lift.x_sigma - traj.s[-1])
    return layer


class _EmptyTraj:
    s = np.array([0.0, 1.0])
    Z = np.array([0.0, 1.0])


def _build_floor(lift, geom, nu, delta_y):
    """Floor pieces: boundary graph, C^4 blend, flat plateau."""
    q = geom.corners[lift.sl.corner]
    comp = geom.components[q.comp]
    ai = q.arc_right if q.arc_right >= 0 else q.arc_left
    if ai < 0:
        raise SigmaLayerError("junction corner with no adjacent arc")
    sgn = 1.0 if ai == q.arc_right else -1.0
    arc = geom.arcs[ai]
    t_max = 0.45 * (arc.s1 - arc.s0)

    def offset(t):
        _, y = comp.point(np.atleast_1d(q.s + sgn * t))
        return lift.mirror * (y - lift.y1)

    def slope_x(t):
        return float(np.sin(comp.theta(np.atleast_1d(q.s + sgn * t)))[0]) \
            * sgn
    # walk until the offset clears twice the band half-width (or the
    # boundary stops being a graph over x)
    ts = np.linspace(1e-9, t_max, 4000)
    eta = offset(ts)
    if np.any(eta > 1e-6 * delta_y):
        raise SigmaLayerError("boundary beyond the junction corner rises "
                              "on the carrying side; unsupported geometry")
    depth = -eta

    def first_cross(level):
        idx = np.where(depth >= level)[0]
        if len(idx) == 0:
            return None
        i = idx[0]
        if i == 0:
            return ts[0]
        return brentq(lambda t: -float(offset(np.array([t]))[0]) - level,
                      ts[i - 1], ts[i], xtol=1e-14)
    t_vs = first_cross(delta_y)
    if t_vs is None:
        raise SigmaLayerError("boundary never clears the band half-width "
                              "beyond the junction (nu too coarse)")
    t_t1 = first_cross(2.0 * delta_y)
    if t_t1 is None:
        t_t1 = ts[-1]
    # keep the floor a graph over x: stop before the boundary turns south
    steep = [t for t in np.linspace(t_vs, t_t1, 200)
             if abs(slope_x(t)) < 0.05]
    if steep:
        t_t1 = min(t_t1, min(steep))
    eta_bar = float(offset(np.array([t_t1]))[0])
    if -eta_bar <= delta_y:
        raise SigmaLayerError(
            "floor plateau does not clear the band half-width before the "
            "boundary stops being a graph (nu too coarse for this basin)")

    # graph piece eta(x) on [x(t_t1), x1]
    tt = np.linspace(0.0, 1.0, 3000) ** 2 * t_t1
    xg, yg = comp.point(q.s + sgn * tt)
    etag = lift.mirror * (yg - lift.y1)
    order = np.argsort(xg)
    xg, etag = xg[order], etag[order]
    xg, keep = np.unique(xg, return_index=True)
    graph = InterpolatedUnivariateSpline(xg, etag[keep], k=5)
    x_vs = float(comp.point(np.array([q.s + sgn * t_vs]))[0][0])
    x_t1 = float(comp.point(np.array([q.s + sgn * t_t1]))[0][0])

    # degree-9 two-point Hermite blend on [x_t1, x_vs]: graph data (value
    # and four derivatives) on the right, flat plateau on the left
    w = x_vs - x_t1
    if w <= 0:
        raise SigmaLayerError("degenerate blend interval for the floor")
    right = [float(graph(x_vs, k)) if k else float(graph(x_vs))
             for k in range(5)]
    Amat = np.zeros((10, 10))
    rhs = np.zeros(10)
    pows = np.arange(9, -1, -1.0)
    for k in range(5):
        # at u = w (right end): match the graph
        coef = np.zeros(10)
        for j in range(10):
            p = pows[j]
            if p >= k:
                coef[j] = math.perm(int(p), k) * w ** (p - k)
        Amat[k] = coef
        rhs[k] = right[k]
        # at u = 0 (left end): plateau value, flat derivatives
        coef = np.zeros(10)
        j = int(np.where(pows == k)[0][0])
        coef[j] = math.factorial(k)
        Amat[5 + k] = coef
        rhs[5 + k] = eta_bar if k == 0 else 0.0
    blend = np.linalg.solve(Amat, rhs)
    # the blend must stay strictly below the band
    uu = np.linspace(0.0, w, 500)
    vals = np.polyval(blend, uu)
    if np.max(vals) > -0.95 * delta_y:
        raise SigmaLayerError("floor blend re-enters the band; geometry "
                              "too abrupt at the junction corner")
    floor = (x_vs, x_t1, graph, blend, eta_bar)
    return floor, q.s + sgn * t_vs, q.s + sgn * t_t1


def _sigma_station_grid(lift, floor, x_lo, n_base):
    x_vs, x_t1 = floor[0], floor[1]
    pts = list(np.linspace(x_lo, lift.x_sigma, n_base))
    for xc in (lift.x1, x_vs, x_t1, lift.x_sigma):
        wid = max(x_vs - x_t1, 1e-3)
        d = wid / 64.0
        while d < 2.0 * wid:
            for cand in (xc + d, xc - d):
                if x_lo < cand < lift.x_sigma:
                    pts.append(cand)
            d *= 1.15
    pts = np.unique(np.asarray(pts))
    # drift-accuracy cap |Y_minus'| h <= 0.5 (estimated on the graph piece)
    span = max(abs(floor[4]), 1e-9) / lift.nu ** 0.25
    bmax = max(span / max(x_vs - x_t1, 1e-9), 1.0)
    cap = 0.5 / bmax
    out = [pts[0]]
    for p in pts[1:]:
        while p - out[-1] > cap:
            out.append(out[-1] + cap)
        out.append(p)
    return np.asarray(out)


# ---------------------------------------------------------------------------
# the western corrector


class SigmaCorrector:
    """Quadratic patch keeping the West amplitude differentiable.

    The second offset-derivative of the repaired field still jumps across
    the line; near the West end this would put a Dirac mass into the
    second derivative of the western layer amplitude.  A one-sided
    quadratic with half the jump as curvature cancels it locally.
    """

    def __init__(self, geom, nu, sl, jump2, s1W, x1W):
        self.geom = geom
        self.nu = nu
        self.sl = sl
        self.mirror = 1.0 if sl.plus_side == "above" else -1.0
        self.y1 = sl.y1
        self.jump2 = jump2
        self.s1W = s1W
        self.x1W = x1W
        self.width = abs(math.log(nu)) ** -0.2
        # (eta^2)'' = 2, so half the jump in curvature
        self.coef = -0.5 * jump2

    def _u(self, eta, k):
        """One-sided quadratic times the nu^(1/4) band cut-off."""
        eps = self.nu ** 0.25
        pos = eta > 0.0
        c = [_chi(eta / eps, j) / eps ** j for j in range(k + 1)]
        if k == 0:
            val = eta ** 2 * c[0]
        elif k == 1:
            val = 2.0 * eta * c[0] + eta ** 2 * c[1]
        elif k == 2:
            val = 2.0 * c[0] + 4.0 * eta * c[1] + eta ** 2 * c[2]
        elif k == 3:
            val = 6.0 * c[1] + 6.0 * eta * c[2] + eta ** 2 * c[3]
        elif k == 4:
            val = 12.0 * c[2] + 8.0 * eta * c[3] + eta ** 2 * c[4]
        else:
            raise ValueError("offset derivatives implemented to order 4")
        return np.where(pos, val, 0.0)

    def _v(self, x, k):
        return _chi((x - self.x1W) / self.width, k) / self.width ** k

    def value(self, x, y, ix=0, iy=0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        eta = self.mirror * (y - self.y1)
        return (self.coef * self._u(eta, iy) * self._v(x, ix)
                * self.mirror ** iy)

    # -- diagnostics -----------------------------------------------------
    def sup_norm(self, k, n=300):
        """max over mixed partials of total order k on the support."""
        eps = self.nu ** 0.25
        xs = np.linspace(self.x1W - self.width, self.x1W + self.width, n)
        etas = np.linspace(0.0, eps, n)
        X, E = np.meshgrid(xs, etas, indexing="ij")
        best = 0.0
        for ix in range(k + 1):
            iy = k - ix
            v = self.coef * self._u(E, iy) * self._v(X, ix)
            best = max(best, float(np.max(np.abs(v))))
        return best

    def munk_residual_norm(self, n=300):
        """L2 of (d_x - nu Delta^2) applied to the corrector (a.e. part)."""
        eps = self.nu ** 0.25
        xs = np.linspace(self.x1W - self.width, self.x1W + self.width, n)
        etas = np.linspace(1e-12, eps, n)
        X, E = np.meshgrid(xs, etas, indexing="ij")
        r = self.coef * (
            self._u(E, 0) * self._v(X, 1)
            - self.nu * (self._u(E, 4) * self._v(X, 0)
                         + 2.0 * self._u(E, 2) * self._v(X, 2)
                         + self._u(E, 0) * self._v(X, 4)))
        inside = self.geom.contains(X, self.y1 + self.mirror * E)
        r = r * inside
        return float(np.sqrt(np.trapezoid(np.trapezoid(r * r, etas, axis=1),
                                          xs)))


def build_sigma_corrector(geom, field, nu, sl):
    """Corrector at the West end of one discontinuity line."""
    _, _, j2 = field.sigma_jumps(sl)
    # locate the West end on the western boundary
    hit = geom.interval_at(0.5 * (sl.x_west + sl.x1),
                           sl.y1 + (1e-9 if sl.plus_side == "above"
                                    else -1e-9))
    if hit is None:
        raise SigmaLayerError("discontinuity line does not reach the basin")
    aw = geom.slabs[hit[0]][1][hit[1]][0]
    s1W = float(geom.arc_s_of_y(aw, np.array([sl.y1]))[0])
    comp = geom.components[geom.arcs[aw].comp]
    if abs(math.cos(float(comp.theta(np.array([s1W]))[0]))) < 1e-8:
        raise SigmaLayerError("western end of the line sits at a "
                              "geostrophic singular point")
    x1W = float(comp.point(np.array([s1W]))[0][0])
    return SigmaCorrector(geom, nu, sl, j2, s1W, x1W)


# ---------------------------------------------------------------------------
# the assembled stack


class SigmaStack:
    """Sum of the per-line repairs: lift + banded layer + corrector."""

    def __init__(self, geom, field, nu, lifts, layers, correctors):
        self.geom = geom
        self.field = field
        self.nu = nu
        self.lifts = lifts
        self.layers = layers
        self.correctors = correctors

    def value(self, x, y, ix=0, iy=0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for lf in self.lifts:
            out = out + lf.psi_lift(x, y, ix, iy)
        for la in self.layers:
            out = out + la.value(x, y, ix, iy)
        for co in self.correctors:
            out = out + co.value(x, y, ix, iy)
        return out

    def trace_functions(self, comp_idx, n=2000):
        """(p(s, k), q(s, k)): boundary trace of the stack and its outward
        normal derivative, as splines over the whole component."""
        geom = self.geom
        comp = geom.components[comp_idx]
        svals = np.linspace(0.0, comp.length, n, endpoint=False)
        th = comp.theta(svals)
        xb, yb = comp.point(svals)
        p = self.value(xb, yb)
        gx = self.value(xb, yb, 1, 0)
        gy = self.value(xb, yb, 0, 1)
        q = np.cos(th) * gx + np.sin(th) * gy
        from .interior import _periodic_spline
        sp = _periodic_spline(svals, p, comp.length)
        sq = _periodic_spline(svals, q, comp.length)
        return sp, sq


def build_sigma_stack(geom, field, nu, n_z=3000, Z_max=30.0,
                      jump_floor=1e-9):
    """All repairs for every discontinuity line of the basin.

    Lines whose transport-solution jumps are all below jump_floor carry
    no discontinuity for the given forcing (its support misses the
    obstacle shadow); they are skipped rather than repaired, which also
    admits obstacles whose junction flatness the layer floor could not
    follow.
    """
    lifts, layers, correctors = [], [], []
    for sl in geom.sigma_lines:
        j0, j1, j2 = field.sigma_jumps(sl)
        if max(abs(j0), abs(j1), abs(j2)) < jump_floor:
            continue
        lf = build_lift(geom, field, nu, sl)
        la = build_sigma_layer(lf, geom, nu, field.params.delta_y,
                               n_z=n_z, Z_max=Z_max)
        co = build_sigma_corrector(geom, field, nu, sl)
        lifts.append(lf)
        layers.append(la)
        correctors.append(co)
    return SigmaStack(geom, field, nu, lifts, layers, correctors)
