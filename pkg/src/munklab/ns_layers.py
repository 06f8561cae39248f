"""Degenerate fourth-order parabolic boundary layers on flat coasts.

The profile f(s, Z) of a horizontal-boundary layer obeys

    d_s f + b(s) d_Z f + mu(s) d_Z^4 f = 0,   Z > 0,

with clamped data f(s,0) = f0(s), d_Z f(s,0) = f1(s), where s plays the
role of time.  South coasts propagate forward in s, North coasts backward
(solved here by reversing the arc length).  The inhomogeneous boundary
data are lifted by the ansatz

    g = f - f0(s)(Z+1)e^{-Z} - f1(s) Z e^{-Z}

which turns the problem into a homogeneous one with an explicit source.
"""

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.linalg import solve_banded

from .shapes import plateau, ramp_between

__all__ = ["ParabolicProblem", "ParabolicTrajectory", "lift_source",
           "solve_parabolic", "NSLayer", "build_ns_layer",
           "extinction_functional", "ZmaxError"]


class ZmaxError(RuntimeError):
    def __init__(self, zmax, suggestion):
        super().__init__(
            f"profile not decayed at Z_max = {zmax}; retry with "
            f"Z_max = {suggestion}")
        self.suggestion = suggestion


@dataclass
class ParabolicProblem:
    s_grid: np.ndarray          # stations, increasing
    b: callable                 # drift coefficient b(s)
    mu: callable                # diffusion coefficient mu(s)
    S: callable                 # source S(s, Z) (vectorized in Z)
    g_in: callable              # initial profile g(s_start, Z)
    Z_max: float = 40.0
    n_z: int = 400
    mu_floor: float = 1e-3

    def validate(self):
        s = np.asarray(self.s_grid, dtype=float)
        if np.any(np.diff(s) <= 0):
            raise ValueError("s_grid must be strictly increasing")
        mu = np.array([float(self.mu(x)) for x in s])
        if np.min(mu) < self.mu_floor:
            raise ValueError(
                f"diffusion coefficient {np.min(mu):.3g} below the floor "
                f"{self.mu_floor}")


@dataclass
class ParabolicTrajectory:
    s: np.ndarray
    Z: np.ndarray
    g: np.ndarray               # shape (n_s, n_z)
    norms: np.ndarray           # per-station L2_Z norm of g
    dissipation: np.ndarray     # cumulative int mu ||d_Z^2 g||^2 ds
    source_l1: np.ndarray       # cumulative int ||S(s)||_{L2_Z} ds
    _spline: object = field(default=None, repr=False)

    def energy_slack(self):
        """Max over stations of LHS/RHS of the energy inequality.

        LHS = 1/2 ||g(s)||^2 + int_0^s mu ||d_Z^2 g||^2,
        RHS = ||g_in||^2 + (int_0^s ||S||)^2.
        """
        lhs = 0.5 * self.norms ** 2 + self.dissipation
        rhs = self.norms[0] ** 2 + self.source_l1 ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(lhs <= 1e-28, 0.0, lhs / np.maximum(rhs, 1e-28))
        return float(np.max(r))

    def moments(self, k_max=4):
        """Per-station L2_Z norms of Z^k g for k = 0..k_max."""
        out = []
        for k in range(k_max + 1):
            w = self.Z[None, :] ** k * self.g
            out.append(np.sqrt(np.trapezoid(w * w, self.Z, axis=1)))
        return np.array(out)

    def interp(self, s, Z):
        if self._spline is None:
            self._spline = RectBivariateSpline(
                self.s, self.Z, self.g, kx=3, ky=3)
        s = np.clip(np.asarray(s, dtype=float), self.s[0], self.s[-1])
        Z = np.asarray(Z, dtype=float)
        out = self._spline(s, np.clip(Z, 0.0, self.Z[-1]), grid=False)
        return np.where(Z > self.Z[-1], 0.0, out)


def lift_source(f0, f1, b, mu):
    """Source created by lifting inhomogeneous clamped data.

    f0, f1 are callables f(s, k) returning the k-th s-derivative (k = 0, 1).
    Returns S_lift(s, Z), the six-term source
        -f0'(Z+1)e^-Z - f1' Z e^-Z + b f0 Z e^-Z - b f1 (1-Z) e^-Z
        - mu f0 (Z-3) e^-Z - mu f1 (Z-4) e^-Z.
    """
    def S(s, Z):
        Z = np.asarray(Z, dtype=float)
        e = np.exp(-Z)
        bv, mv = float(b(s)), float(mu(s))
        a0, a0p = float(f0(s, 0)), float(f0(s, 1))
        a1, a1p = float(f1(s, 0)), float(f1(s, 1))
        return e * (-a0p * (Z + 1.0) - a1p * Z
                    + bv * a0 * Z - bv * a1 * (1.0 - Z)
                    - mv * a0 * (Z - 3.0) - mv * a1 * (Z - 4.0))
    return S


def lift_profile(f0, f1, s, Z):
    Z = np.asarray(Z, dtype=float)
    e = np.exp(-Z)
    return float(f0(s, 0)) * (Z + 1.0) * e + float(f1(s, 0)) * Z * e


def solve_parabolic(problem, check_far=True):
    """Implicit stepping in s of the lifted (homogeneous-data) problem."""
    problem.validate()
    s = np.asarray(problem.s_grid, dtype=float)
    n_z = problem.n_z
    Z = np.linspace(0.0, problem.Z_max, n_z)
    h = Z[1] - Z[0]
    g = np.zeros((len(s), n_z))
    g[0] = problem.g_in(Z)
    g[0, 0] = 0.0
    g[0, -1] = 0.0

    norms = np.zeros(len(s))
    norms[0] = _l2(g[0], h)
    dissipation = np.zeros(len(s))
    source_l1 = np.zeros(len(s))
    diss = _dissip(g[0], h) * float(problem.mu(s[0]))

    for k in range(len(s) - 1):
        hs = s[k + 1] - s[k]
        sk = s[k + 1]
        bv = float(problem.b(sk))
        mv = float(problem.mu(sk))
        ab = _banded_matrix(n_z, h, hs, bv, mv)
        rhs = g[k] + hs * np.asarray(problem.S(sk, Z), dtype=float)
        rhs[0] = 0.0
        rhs[1] = 0.0
        rhs[-1] = 0.0
        rhs[-2] = 0.0
        g[k + 1] = solve_banded((2, 2), ab, rhs)
        norms[k + 1] = _l2(g[k + 1], h)
        d_new = _dissip(g[k + 1], h) * mv
        dissipation[k + 1] = dissipation[k] + hs * d_new
        src = _l2(np.asarray(problem.S(sk, Z), dtype=float), h)
        source_l1[k + 1] = source_l1[k] + hs * src

    if check_far:
        peak = np.max(np.abs(g))
        tail = np.max(np.abs(g[:, -3]))
        if peak > 0 and tail > 1e-8 * peak:
            raise ZmaxError(problem.Z_max, 2.0 * problem.Z_max)
    return ParabolicTrajectory(s=s, Z=Z, g=g, norms=norms,
                               dissipation=dissipation, source_l1=source_l1)


def _banded_matrix(n, h, hs, bv, mv):
    """(I + hs (b D_Z + mu D_Z^4)) with clamped rows, banded (2,2) form."""
    c4 = hs * mv / h ** 4
    c1 = hs * bv / (2.0 * h)
    # diagonals: ab[u + i - j, j] = A[i, j]
    ab = np.zeros((5, n))
    # interior rows 2..n-3
    ab[0, 4:] += c4                      # A[i, i+2]
    ab[1, 3:] += -4.0 * c4 + c1          # A[i, i+1]
    ab[2, 2:] += 1.0 + 6.0 * c4         # A[i, i]
    ab[3, 1:] += -4.0 * c4 - c1         # A[i, i-1]
    ab[4, 0:] += c4                      # A[i, i-2]
    # rewrite boundary rows
    _set_row(ab, n, 0, {0: 1.0})
    _set_row(ab, n, 1, {1: 18.0, 2: -9.0, 3: 2.0})
    _set_row(ab, n, n - 2, {n - 2: 1.0})
    _set_row(ab, n, n - 1, {n - 1: 1.0})
    return ab


def _set_row(ab, n, i, entries):
    for off in range(-2, 3):
        j = i + off
        if 0 <= j < n:
            ab[2 - off, j] = entries.get(j, 0.0)


def _l2(v, h):
    return math.sqrt(np.trapezoid(v * v) * h)


def _dissip(v, h):
    d2 = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h ** 2
    return np.trapezoid(d2 * d2) * h


# ---------------------------------------------------------------------------
# specialization to North/South coasts


class NSLayer:
    """One horizontal-boundary layer (flat piece plus its shoulders)."""

    def __init__(self, geom, nu, flat_idx, traj, f0, f1, gamma, gamma_tilde,
                 orientation, s_lo, s_hi):
        self.geom = geom
        self.nu = nu
        self.flat_idx = flat_idx
        self.traj = traj
        self.f0 = f0
        self.f1 = f1
        self.gamma = gamma
        self.gamma_tilde = gamma_tilde
        self.orientation = orientation   # +1 forward (South), -1 (North)
        self.s_range = (s_lo, s_hi)

    def _unwrap(self, s):
        """Map periodic arc length into the layer's own frame."""
        L = self.geom.components[self.geom.flats[self.flat_idx].comp].length
        lo = self.s_range[0]
        return lo + np.mod(np.asarray(s, dtype=float) - lo, L)

    def profile(self, s, Z):
        """Full profile f = g + lift, evaluated pointwise (broadcast)."""
        s, Z = np.broadcast_arrays(np.asarray(s, dtype=float),
                                   np.asarray(Z, dtype=float))
        t = s if self.orientation > 0 else (self.s_range[1]
                                            + self.s_range[0] - s)
        g = self.traj.interp(t.ravel(), Z.ravel()).reshape(s.shape)
        e = np.exp(-np.clip(Z, 0.0, 700.0))
        a0 = np.array([self.f0(x, 0) for x in s.ravel()]).reshape(s.shape)
        a1 = np.array([self.f1(x, 0) for x in s.ravel()]).reshape(s.shape)
        return g + (a0 * (Z + 1.0) + a1 * Z) * e

    def evaluate(self, s, z, with_cutoff=True):
        """psi_NS(s, z) = gamma_tilde(s) f(s, z nu^-1/4) chi0(z)."""
        s = self._unwrap(s)
        z = np.asarray(z, dtype=float)
        Z = z * self.nu ** -0.25
        out = self.gamma_tilde(s) * self.profile(s, Z)
        if with_cutoff:
            out = out * plateau(z / self.geom.cutoff_width)
        return out

    # -- tube-coordinate partial derivatives ------------------------------
    def _slope_fix(self, t, k=0):
        """Spurious boundary slope of the interpolant, per station.

        The discrete solution is clamped (its one-sided fourth-order
        derivative at Z = 0 vanishes exactly) but the interpolating
        spline is not; subtracting slope(t) Z e^-Z restores the clamped
        slope identically without moving the boundary value.
        """
        if getattr(self, "_slope_sp", None) is None:
            if self.traj._spline is None:
                self.traj.interp(self.traj.s[:1], self.traj.Z[:1])
            sl = self.traj._spline(self.traj.s, np.array([0.0]), dy=1)[:, 0]
            from scipy.interpolate import InterpolatedUnivariateSpline
            self._slope_sp = InterpolatedUnivariateSpline(
                self.traj.s, sl, k=3)
        return self._slope_sp(t, k) if k else self._slope_sp(t)

    def _g_partial(self, s, Z, i, j):
        """d_s^i d_Z^j of the homogeneous part via the corrected spline."""
        if self.traj._spline is None:
            self.traj.interp(self.traj.s[:1], self.traj.Z[:1])
        t = s if self.orientation > 0 else (self.s_range[1]
                                            + self.s_range[0] - s)
        tc = np.clip(t, self.traj.s[0], self.traj.s[-1])
        Zc = np.clip(Z, 0.0, self.traj.Z[-1])
        out = self.traj._spline(tc, Zc, dx=i, dy=j, grid=False)
        e = np.exp(-np.clip(Zc, 0.0, 700.0))
        if j == 0:
            u = Zc * e
        elif j == 1:
            u = (1.0 - Zc) * e
        elif j == 2:
            u = (Zc - 2.0) * e
        else:
            raise ValueError("profile partials implemented to order 2 in Z")
        out = out - self._slope_fix(tc, i) * u
        out = out * self.orientation ** i
        return np.where(Z > self.traj.Z[-1], 0.0, out)

    def _lift_partial(self, s, Z, i, j):
        a0 = np.asarray(self.f0(s, i), dtype=float)
        a1 = np.asarray(self.f1(s, i), dtype=float)
        e = np.exp(-np.clip(Z, 0.0, 700.0))
        if j == 0:
            u0, u1 = Z + 1.0, Z
        elif j == 1:
            u0, u1 = -Z, 1.0 - Z
        elif j == 2:
            u0, u1 = Z - 1.0, Z - 2.0
        else:
            raise ValueError("lift partials implemented to order 2 in Z")
        return (a0 * u0 + a1 * u1) * e

    def partials(self, s, z, i=0, j=0):
        """d_s^i d_z^j of the layer in tube coordinates, total order <= 2."""
        s = self._unwrap(s)
        z = np.asarray(z, dtype=float)
        s, z = np.broadcast_arrays(s, z)
        out = np.zeros(s.shape)
        lo, hi = self.s_range
        w = self.geom.cutoff_width
        m = (s > lo) & (s < hi) & (z >= 0.0) & (z < w)
        if not np.any(m):
            return out
        sm, zm = s[m], z[m]
        Z = zm * self.nu ** -0.25
        acc = np.zeros(sm.shape)
        for a in range(i + 1):
            gt = self.gamma_tilde(sm, a)
            for b in range(j + 1):
                c0 = plateau(zm / w, b) / w ** b
                fi, fj = i - a, j - b
                fval = (self._g_partial(sm, Z, fi, fj)
                        + self._lift_partial(sm, Z, fi, fj)) \
                    * self.nu ** (-0.25 * fj)
                acc = acc + comb(i, a) * comb(j, b) * gt * c0 * fval
        out[m] = acc
        return out


def ns_station_grid(geom, nu, s_lo, s_hi, windows, n_base=400):
    """Stations graded toward the injection endpoints sigma."""
    pts = list(np.linspace(s_lo, s_hi, n_base))
    for (sv, se) in windows:
        wid = abs(sv - se)
        d = wid / 64.0
        while d < 4.0 * wid:
            for cand in (se + d, se - d, sv + d, sv - d):
                if s_lo < cand < s_hi:
                    pts.append(cand)
            d *= 1.15
    # honour the drift-accuracy restriction |b| h_s <= 0.5
    pts = np.unique(np.asarray(pts))
    bmax = nu ** -0.25
    cap = 0.5 / bmax
    out = [pts[0]]
    for p in pts[1:]:
        while p - out[-1] > cap:
            out.append(out[-1] + cap)
        out.append(p)
    return np.asarray(out)


def build_ns_layer(geom, nu, flat_idx, psibar0, psibar1, n_z=400,
                   Z_max=40.0, n_base=400):
    """Construct the boundary layer carried by one flat piece.

    psibar0(s, k), psibar1(s, k): trace of the field to cancel and of its
    outward normal derivative, with k-th s-derivatives for k <= 1.
    """
    f = geom.flats[flat_idx]
    comp = geom.components[f.comp]
    qa, qb = f.corner_a, f.corner_b
    sva, sea, phi_a = geom.corner_window(nu, qa, -1)
    svb, seb, phi_b = geom.corner_window(nu, qb, +1)
    wa = abs(sva - sea)
    wb = abs(svb - seb)

    # The marching range runs a little past each data window so the fade
    # ramp has room to land, but never into territory where sin(theta)
    # degenerates (on a circle the window can be a sizable arc and the
    # naive extension would cross the equator, flipping the transport
    # sign).  Cap the extension where |sin theta| stays above a floor.
    def _overhang(edge, direction, want):
        probes = np.linspace(0.0, want, 257)[1:]
        th = comp.theta(edge + direction * probes)
        bad = np.nonzero(np.abs(np.sin(th)) < 0.2)[0]
        return want if bad.size == 0 else probes[bad[0]] * (256.0 / 257.0)

    oa = _overhang(sea, -1.0, 1.05 * wa)
    ob = _overhang(seb, +1.0, 1.05 * wb)
    wa_eff = oa / 1.05
    wb_eff = ob / 1.05
    s_lo = sea - oa
    s_hi = seb + ob

    def gamma(s, k=0):
        out = 0.0
        for a in range(k + 1):
            fa = (1.0 - phi_a(s)) if a == 0 else -phi_a(s, a)
            fb = (1.0 - phi_b(s)) if k - a == 0 else -phi_b(s, k - a)
            out = out + comb(k, a) * fa * fb
        return out

    def gamma_tilde(s, k=0):
        s = np.asarray(s, dtype=float)
        out = 0.0
        for a in range(k + 1):
            left = ramp_between(s, sea - 1.0 * wa_eff, sea - 0.35 * wa_eff, a)
            right = ramp_between(s, seb + 1.0 * wb_eff, seb + 0.35 * wb_eff,
                                 k - a)
            out = out + comb(k, a) * left * right
        return out

    lam = nu ** 0.25

    def f0(s, k):
        return -sum(comb(k, a) * gamma(s, a) * psibar0(s, k - a)
                    for a in range(k + 1))

    # Sign: with z the inward distance, d_n = -d_z; cancelling the normal
    # derivative gamma * psibar1 needs d_Z f(s,0) = +nu^(1/4) gamma psibar1.
    def f1(s, k):
        return lam * sum(comb(k, a) * gamma(s, a) * psibar1(s, k - a)
                         for a in range(k + 1))

    orientation = +1 if f.label == "S" else -1

    def to_solver(s_phys):
        return s_phys if orientation > 0 else (s_lo + s_hi - s_phys)

    def b_coef(t):
        s_phys = to_solver(t)   # involution
        th = float(comp.theta(np.array([s_phys]))[0])
        return orientation * (-nu ** -0.25 * math.cos(th) / math.sin(th))

    def mu_coef(t):
        s_phys = to_solver(t)
        th = float(comp.theta(np.array([s_phys]))[0])
        return orientation * (-1.0 / math.sin(th))

    def f0_t(t, k):
        return f0(to_solver(t), k) * (orientation ** k)

    def f1_t(t, k):
        return f1(to_solver(t), k) * (orientation ** k)

    src = lift_source(f0_t, f1_t, b_coef, mu_coef)
    stations = ns_station_grid(geom, nu, s_lo, s_hi,
                               [(sva, sea), (svb, seb)], n_base=n_base)

    problem = ParabolicProblem(
        s_grid=stations, b=b_coef, mu=mu_coef, S=src,
        g_in=lambda Z: np.zeros_like(Z), Z_max=Z_max, n_z=n_z,
        mu_floor=0.05)
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
    return NSLayer(geom, nu, flat_idx, traj, f0, f1, gamma, gamma_tilde,
                   orientation, s_lo, s_hi)


def extinction_functional(layer):
    """int nu^-1/4 |cos theta| ||psi_S(s)||^2_{L2_Z} ds over the range."""
    geom = layer.geom
    f = geom.flats[layer.flat_idx]
    comp = geom.components[f.comp]
    s_lo, s_hi = layer.s_range
    svals = np.linspace(s_lo, s_hi, 600)
    Z = layer.traj.Z
    vals = np.zeros_like(svals)
    for i, s in enumerate(svals):
        prof = layer.profile(np.full_like(Z, s), Z)
        ct = abs(float(np.cos(comp.theta(np.array([s]))[0])))
        vals[i] = ct * np.trapezoid(prof * prof, Z)
    total = np.trapezoid(vals, svals)
    return layer.nu ** -0.25 * total
