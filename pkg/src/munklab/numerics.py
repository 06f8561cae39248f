"""Metrics and reference truth.

Everything that measures: the curvilinear Laplacian split used to verify
layer profiles, weighted energy and discrete dual norms, the independent
direct biharmonic solver on rectangles, residual measurement of the
assembled approximation, and sweep bookkeeping (CSV rows, log-log fits).
"""

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import InterpolatedUnivariateSpline

from .interior import truncation_mask

__all__ = ["GridField", "ResolutionError", "assemble_direct", "solve_direct",
           "direct_solve", "dual_h2_norm", "weighted_energy_norm",
           "curvilinear_laplacian", "fit_exponent", "SweepReport",
           "component_grids", "grid_second_derivative", "grid_laplacian",
           "component_norms", "residual_split", "truncation_estimates",
           "interior_window_error", "strip_errors", "west_amplitude_sups",
           "sobolev_ratio", "CSV_COLUMNS"]


class ResolutionError(RuntimeError):
    """A grid too coarse for the thinnest active scale (refusal)."""


# ---------------------------------------------------------------------------
# grids and discrete operators


@dataclass
class GridField:
    """Nodal values on a uniform rectangle grid (boundary included)."""

    x0: float
    x1: float
    y0: float
    y1: float
    h: float
    values: np.ndarray          # shape (nx + 1, ny + 1), index [i, j]

    @property
    def xs(self):
        return self.x0 + self.h * np.arange(self.values.shape[0])

    @property
    def ys(self):
        return self.y0 + self.h * np.arange(self.values.shape[1])

    def interior(self):
        return self.values[1:-1, 1:-1]


def _grid_shape(rect, n):
    x0, x1, y0, y1 = rect
    h = (x1 - x0) / n
    ny = int(round((y1 - y0) / h))
    if abs(ny * h - (y1 - y0)) > 1e-9 * max(1.0, y1 - y0):
        raise ValueError("rectangle aspect ratio must fit the square grid")
    return h, n, ny


def _dirichlet_laplacian(nx, ny, h):
    """5-point Laplacian on the (nx-1)(ny-1) interior nodes, zero outside."""
    ex = np.ones(nx - 1)
    ey = np.ones(ny - 1)
    Tx = sp.diags([ex[:-1], -2 * ex, ex[:-1]], [-1, 0, 1])
    Ty = sp.diags([ey[:-1], -2 * ey, ey[:-1]], [-1, 0, 1])
    Ix = sp.identity(nx - 1)
    Iy = sp.identity(ny - 1)
    return (sp.kron(Tx, Iy) + sp.kron(Ix, Ty)).tocsr() / h ** 2


def _clamped_biharmonic(nx, ny, h):
    """13-point bilaplacian with clamped conditions by ghost reflection.

    Unknowns are the interior nodes; the boundary value zero removes the
    distance-one neighbours, and the zero normal derivative reflects each
    distance-two ghost back onto its interior mirror node, which shows up
    as +1/h^4 on the diagonal of every node adjacent to a wall.
    """
    A = _dirichlet_laplacian(nx, ny, h)
    B = (A @ A).tolil()
    corr = 1.0 / h ** 4
    for i in range(1, nx):
        for j in range(1, ny):
            k = (i - 1) * (ny - 1) + (j - 1)
            c = 0.0
            if i == 1 or i == nx - 1:
                c += corr
            if j == 1 or j == ny - 1:
                c += corr
            # a node can touch two walls (corner): both ghosts reflect
            if c:
                B[k, k] += c
    return B.tocsr()


def _centered_dx(nx, ny, h):
    ex = np.ones(nx - 1)
    Dx = sp.diags([-ex[:-1], ex[:-1]], [-1, 1]) / (2.0 * h)
    return sp.kron(Dx, sp.identity(ny - 1)).tocsr()


@dataclass
class DirectSystem:
    rect: tuple
    n: int
    h: float
    ny: int
    matrix: sp.csc_matrix
    rhs: np.ndarray
    nu: float


def assemble_direct(nu, forcing, rect, n):
    """Sparse system for d_x psi - nu Delta^2 psi = tau, clamped walls."""
    h, nx, ny = _grid_shape(rect, n)
    if h > nu ** (1.0 / 3.0) / 6.0:
        need = int(math.ceil(6.0 * (rect[1] - rect[0]) / nu ** (1.0 / 3.0)))
        raise ResolutionError(
            f"grid step {h:.4g} cannot resolve the western layer at "
            f"nu={nu:g}; need n >= {need}")
    x0, _, y0, _ = rect
    xs = x0 + h * np.arange(1, nx)
    ys = y0 + h * np.arange(1, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    A = _centered_dx(nx, ny, h) - nu * _clamped_biharmonic(nx, ny, h)
    rhs = np.asarray(forcing.tau(X, Y), dtype=float).ravel()
    return DirectSystem(rect=tuple(rect), n=n, h=h, ny=ny,
                        matrix=A.tocsc(), rhs=rhs, nu=nu)


def solve_direct(system):
    lu = spla.splu(system.matrix)
    u = lu.solve(system.rhs)

    def backward_error(v):
        # componentwise-normwise backward error: the raw residual over
        # |A||u| + |b|, which stays meaningful when the 1/h^4 entries
        # amplify round-off far above the right-hand side scale
        r = system.matrix @ v - system.rhs
        scale = abs(system.matrix) @ np.abs(v) + np.abs(system.rhs)
        return float(np.max(np.abs(r) / np.maximum(scale.max(), 1e-300)))

    for _ in range(3):
        rel = backward_error(u)
        if rel <= 1e-12:
            break
        u = u - lu.solve(system.matrix @ u - system.rhs)
    rel = backward_error(u)
    if rel > 1e-10:
        raise RuntimeError(
            f"direct solve stalled at backward error {rel:.2e}")
    nx, ny = system.n, system.ny
    vals = np.zeros((nx + 1, ny + 1))
    vals[1:-1, 1:-1] = u.reshape(nx - 1, ny - 1)
    x0, x1, y0, y1 = system.rect
    return GridField(x0=x0, x1=x1, y0=y0, y1=y1, h=system.h, values=vals)


def direct_solve(nu, forcing, rect, n):
    return solve_direct(assemble_direct(nu, forcing, rect, n))


# ---------------------------------------------------------------------------
# norms


def dual_h2_norm(values, h):
    """Discrete negative-order norm sup <f, phi>/||phi||_H2.

    Realized as sqrt(<f, u>) with (I + Delta_h^2) u = f on the interior
    nodes, clamped boundary (u and its normal derivative vanish).
    ``values`` holds f on the full node grid; boundary entries ignored.
    """
    values = np.asarray(values, dtype=float)
    nx = values.shape[0] - 1
    ny = values.shape[1] - 1
    f = values[1:-1, 1:-1].ravel()
    A = sp.identity((nx - 1) * (ny - 1), format="csr") \
        + _clamped_biharmonic(nx, ny, h)
    u = spla.spsolve(A.tocsc(), f)
    return math.sqrt(max(float(np.dot(f, u)) * h * h, 0.0))


def weighted_energy_norm(f, nu, rect=(0.0, 1.0, 0.0, 1.0), n=256):
    """(int e^x f^2, nu int e^x (Delta f)^2) on a rectangle.

    ``f`` is either a callable f(x, y, ix, iy) with analytic second
    partials, or a GridField (Laplacian then by finite differences).
    """
    if isinstance(f, GridField):
        xs, ys, h = f.xs, f.ys, f.h
        vals = f.values
        lap = np.full_like(vals, np.nan)
        lap[1:-1, 1:-1] = (vals[2:, 1:-1] + vals[:-2, 1:-1]
                           + vals[1:-1, 2:] + vals[1:-1, :-2]
                           - 4.0 * vals[1:-1, 1:-1]) / h ** 2
        lap[0, :] = lap[1, :]
        lap[-1, :] = lap[-2, :]
        lap[:, 0] = lap[:, 1]
        lap[:, -1] = lap[:, -2]
        W = np.exp(xs)[:, None]
        part1 = float(np.trapezoid(np.trapezoid(W * vals ** 2, dx=h, axis=1),
                                   dx=h))
        part2 = nu * float(np.trapezoid(
            np.trapezoid(W * lap ** 2, dx=h, axis=1), dx=h))
        return part1, part2
    x0, x1, y0, y1 = rect
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.exp(X)
    v = np.asarray(f(X, Y, 0, 0), dtype=float)
    lap = (np.asarray(f(X, Y, 2, 0), dtype=float)
           + np.asarray(f(X, Y, 0, 2), dtype=float))
    hx = (x1 - x0) / n
    hy = (y1 - y0) / n
    part1 = float(np.trapezoid(np.trapezoid(W * v ** 2, dx=hy, axis=1),
                               dx=hx))
    part2 = nu * float(np.trapezoid(np.trapezoid(W * lap ** 2, dx=hy,
                                                 axis=1), dx=hx))
    return part1, part2


# ---------------------------------------------------------------------------
# curvilinear Laplacian split


def curvilinear_laplacian(F, lam, geom, s, z, comp_idx=0):
    """Laplacian of f(s, z) = F(s, lam(s) z) in tube coordinates.

    With J = 1 + z theta'(s) the exact operator is
        Delta = J^-1 [ d_z (J d_z) + d_s (J^-1 d_s) ].
    Returns (leading, remainder): the leading stretched term
    lam^2 F_ZZ and everything else, so callers can check the layer
    expansions term by term.  ``F(s, Z, i, j)`` returns the (i, j)
    partial in (s, Z); ``lam(s, k)`` the k-th derivative of the rate.
    """
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z >= geom.tube_width):
        raise ValueError("evaluation outside the tube neighbourhood")
    comp = geom.components[comp_idx]
    l0 = np.asarray(lam(s, 0), dtype=float)
    l1 = np.asarray(lam(s, 1), dtype=float)
    l2 = np.asarray(lam(s, 2), dtype=float)
    Z = l0 * z
    FZ = F(s, Z, 0, 1)
    FZZ = F(s, Z, 0, 2)
    FS = F(s, Z, 1, 0)
    FSZ = F(s, Z, 1, 1)
    FSS = F(s, Z, 2, 0)
    th1 = comp.theta(s, 1)
    th2 = comp.theta(s, 2)
    J = 1.0 + z * th1
    f_z = l0 * FZ
    f_zz = l0 ** 2 * FZZ
    f_s = FS + l1 * z * FZ
    f_ss = (FSS + 2.0 * l1 * z * FSZ + l2 * z * FZ
            + (l1 * z) ** 2 * FZZ)
    full = (f_zz + th1 / J * f_z + f_ss / J ** 2
            - z * th2 * f_s / J ** 3)
    lead = l0 ** 2 * FZZ
    return lead, full - lead


# ---------------------------------------------------------------------------
# exponent fits and sweep reports


def fit_exponent(nus, vals):
    """OLS slope of log(val) against log(nu); returns (slope, r_squared).

    Refuses fewer than 4 points or non-positive data.
    """
    nus = np.asarray(nus, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if nus.size < 4:
        raise ValueError("exponent fit needs at least 4 sweep points")
    if np.any(vals <= 0.0):
        raise ValueError("exponent fit needs positive quantities")
    x = np.log(nus)
    y = np.log(vals)
    A = np.column_stack([x, np.ones_like(x)])
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ coef
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    ss_res = float(np.sum((y - yhat) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


CSV_COLUMNS = ["nu",
               "norm_int_L2", "norm_ns_L2", "norm_ew_L2", "norm_sigma_L2",
               "norm_int_H2", "norm_ns_H2", "norm_ew_H2", "norm_sigma_H2",
               "dtau1_L2", "dtau2_Hm2",
               "err_interior", "err_west_H2", "err_ns",
               "extinction", "A1", "A2", "A3", "A4"]


@dataclass
class SweepReport:
    """Per-nu diagnostic rows plus log-log exponent fits."""

    n_islands: int = 0
    rows: list = field(default_factory=list)

    def columns(self):
        return CSV_COLUMNS + [f"c_app_{i}" for i in range(1,
                                                          self.n_islands + 1)]

    def add_row(self, **kw):
        self.rows.append(dict(kw))

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: -r["nu"])

    def column(self, name):
        return np.array([r.get(name, math.nan) for r in self.sorted_rows()])

    def to_csv(self):
        out = io.StringIO()
        cols = self.columns()
        out.write(", ".join(cols) + "\n")
        for r in self.sorted_rows():
            cells = []
            for c in cols:
                v = r.get(c, math.nan)
                cells.append("nan" if not np.isfinite(v) else f"{v:.10e}")
            out.write(", ".join(cells) + "\n")
        return out.getvalue()

    def write_csv(self, path):
        text = self.to_csv()
        with open(path, "w") as fh:
            fh.write(text)
        return text

    def fits(self, names=None):
        nus = self.column("nu")
        out = {}
        for c in (names or self.columns()[1:]):
            vals = self.column(c)
            ok = np.isfinite(vals) & (vals > 0)
            if np.sum(ok) >= 4:
                slope, r2 = fit_exponent(nus[ok], vals[ok])
                out[c] = {"slope": slope, "r2": r2}
        return out


# ---------------------------------------------------------------------------
# field grids of the assembled approximation


def _contiguous_runs(mask):
    idx = np.flatnonzero(np.diff(np.concatenate([[0], mask.view(np.int8),
                                                 [0]])))
    return list(zip(idx[::2], idx[1::2]))


def evaluation_grid(geom, nu, points_per_layer=8, margin=1e-6, max_nodes=None):
    """Uniform tensor grid resolving the thinnest layer scale.

    The step is the western-layer width nu^{1/3} divided by
    ``points_per_layer``.  Ordinates are shifted off any discontinuity
    lines so every row has a well-defined one-sided limit.
    """
    xs0, ys0 = [], []
    for comp in geom.components:
        sv = np.linspace(0.0, comp.length, 512, endpoint=False)
        bx, by = comp.point(sv)
        xs0.append(bx)
        ys0.append(by)
    bx = np.concatenate(xs0)
    by = np.concatenate(ys0)
    h = nu ** (1.0 / 3.0) / points_per_layer
    if max_nodes:
        area = (bx.max() - bx.min()) * (by.max() - by.min())
        h = max(h, math.sqrt(area / max_nodes))
    xs = np.arange(bx.min() + 0.5 * h, bx.max(), h)
    ys = np.arange(by.min() + 0.5 * h, by.max(), h)
    jumps = {c.y for c in geom.corners}
    for yj in jumps:
        near = np.abs(ys - yj) < 1e-7
        ys[near] += 3e-7
    return xs, ys, h


def component_grids(cs, xs, ys):
    """Values of the four component groups on a tensor grid.

    Returns ({'int','sigma','ew','ns'}: (nx, ny) arrays NaN outside the
    basin, inside mask).  Interior rows share one cumulative integration
    each; layers and the discontinuity stack evaluate vectorized.
    """
    geom = cs.geom
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = geom.contains(X, Y)
    shape = X.shape
    out = {k: np.full(shape, np.nan) for k in ("int", "sigma", "ew", "ns")}
    for j, yv in enumerate(ys):
        m = inside[:, j]
        for a, b in _contiguous_runs(m):
            out["int"][a:b, j] = cs.field.row_values(float(yv), xs[a:b])
    idx = inside
    if np.any(idx):
        xi, yi = X[idx], Y[idx]
        if cs.stack is not None:
            out["sigma"][idx] = cs.stack.value(xi, yi)
        else:
            out["sigma"][idx] = 0.0
        if cs.offset_field is not None:
            out["int"][idx] += cs.offset_field(xi, yi, 0, 0)
        lay = cs._layer_sum(xi, yi, 0, 0)
        out["ew"][idx] = lay["ew"]
        out["ns"][idx] = lay["ns"]
    return out, inside


def grid_second_derivative(arr, h, axis):
    """4th-order centered second derivative; NaN where the stencil leaves
    the valid region (two cells on each side)."""
    a = np.asarray(arr, dtype=float)
    out = np.full_like(a, np.nan)
    sl = [slice(None)] * a.ndim

    def shift(k):
        s = list(sl)
        s[axis] = slice(2 + k, a.shape[axis] - 2 + k)
        return a[tuple(s)]

    centre = list(sl)
    centre[axis] = slice(2, -2)
    out[tuple(centre)] = (-shift(2) + 16.0 * shift(1) - 30.0 * shift(0)
                          + 16.0 * shift(-1) - shift(-2)) / (12.0 * h ** 2)
    return out


def _first_derivative(arr, h, axis):
    a = np.asarray(arr, dtype=float)
    out = np.full_like(a, np.nan)
    sl = [slice(None)] * a.ndim

    def shift(k):
        s = list(sl)
        s[axis] = slice(2 + k, a.shape[axis] - 2 + k)
        return a[tuple(s)]

    centre = list(sl)
    centre[axis] = slice(2, -2)
    out[tuple(centre)] = (-shift(2) + 8.0 * shift(1)
                          - 8.0 * shift(-1) + shift(-2)) / (12.0 * h)
    return out


def grid_laplacian(arr, h):
    return (grid_second_derivative(arr, h, 0)
            + grid_second_derivative(arr, h, 1))


def _l2(arr, h):
    v = np.asarray(arr, dtype=float)
    return math.sqrt(float(np.nansum(v * v)) * h * h)


def component_norms(grids, h):
    """L2 and (finite-difference) H2 norms of each component group."""
    out = {}
    for name, g in grids.items():
        out[f"norm_{name}_L2"] = _l2(g, h)
        gx = _first_derivative(g, h, 0)
        gy = _first_derivative(g, h, 1)
        gxx = grid_second_derivative(g, h, 0)
        gyy = grid_second_derivative(g, h, 1)
        gxy = _first_derivative(gx, h, 1)
        h2sq = (np.nansum(g ** 2) + np.nansum(gx ** 2) + np.nansum(gy ** 2)
                + np.nansum(gxx ** 2) + 2.0 * np.nansum(gxy ** 2)
                + np.nansum(gyy ** 2)) * h * h
        out[f"norm_{name}_H2"] = math.sqrt(float(h2sq))
    return out


# ---------------------------------------------------------------------------
# residual measurement


def residual_split(cs, grids=None, mesh=None):
    """(||dtau1||_L2, dual-H2 estimate of dtau2) for a composite solution.

    The full defect (d_x - nu Delta^2) psi_app - tau is measured by
    high-order finite differences of the assembled evaluator on a
    uniform grid; the designated weak part dtau2 (the forcing times the
    deficit of the corner cut-off, which the theory only controls in the
    negative norm) is removed analytically before the pointwise norm is
    taken, and measured separately on its own grid.
    """
    geom, nu = cs.geom, cs.nu
    if mesh is None:
        xs, ys, h = evaluation_grid(geom, nu)
        grids = None
    else:
        xs, ys, h = mesh
    if grids is None:
        grids, _ = component_grids(cs, xs, ys)
    psi = grids["int"] + grids["sigma"] + grids["ew"] + grids["ns"]
    lap = grid_laplacian(psi, h)
    bilap = grid_laplacian(lap, h)
    psix = _first_derivative(psi, h, 0)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    tau = np.asarray(cs.forcing.tau(X, Y), dtype=float)
    dtau = psix - nu * bilap - tau
    chim1 = truncation_mask(geom, cs.field.params, X, Y) - 1.0
    dtau1 = dtau - tau * chim1
    dtau1_l2 = _l2(np.where(np.isfinite(dtau1), dtau1, np.nan), h)
    dtau2 = truncation_dual_norm(cs)
    return dtau1_l2, dtau2


def truncation_dual_norm(cs, points_per_band=8):
    """Dual-H2 estimate of tau (chi_nu - 1) on a bounding rectangle.

    The term is extended by zero off the basin; the grid resolves the
    vertical band width of the corner cut-off.
    """
    geom, nu = cs.geom, cs.nu
    p = cs.field.params
    if not p.delta_x:            # raw-corner regime: no truncation at all
        return 0.0
    bx, by = [], []
    for comp in geom.components:
        sv = np.linspace(0.0, comp.length, 256, endpoint=False)
        x, y = comp.point(sv)
        bx.append(x)
        by.append(y)
    bx = np.concatenate(bx)
    by = np.concatenate(by)
    h = p.delta_y / points_per_band
    h = max(h, max(bx.max() - bx.min(), by.max() - by.min()) / 640)
    nx = int(math.ceil((bx.max() - bx.min()) / h))
    ny = int(math.ceil((by.max() - by.min()) / h))
    xs = bx.min() + h * np.arange(nx + 1)
    ys = by.min() + h * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = geom.contains(X, Y)
    tau = np.asarray(cs.forcing.tau(X, Y), dtype=float)
    chim1 = truncation_mask(geom, p, X, Y) - 1.0
    f = np.where(inside, tau * chim1, 0.0)
    return dual_h2_norm(f, h)


def truncation_estimates(cs, grids, mesh):
    """(dual-H2 of the truncation source, L2 of Delta psi0 near N/S).

    The second entry integrates the interior Laplacian over horizontal
    strips of width 2 delta_y around the flat ordinates, where the
    truncated transport field concentrates its curvature.
    """
    xs, ys, h = mesh
    geom = cs.geom
    p = cs.field.params
    lap0 = grid_laplacian(grids["int"], h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    strip = np.zeros(X.shape, dtype=bool)
    for fl in geom.flats:
        strip |= np.abs(Y - fl.y) < 2.0 * p.delta_y
    vals = np.where(strip, lap0, np.nan)
    return truncation_dual_norm(cs), _l2(vals, h)


# ---------------------------------------------------------------------------
# direct-vs-asymptotic comparisons


def _sample_grid_field(gf, X, Y):
    from scipy.interpolate import RegularGridInterpolator
    itp = RegularGridInterpolator((gf.xs, gf.ys), gf.values, method="cubic")
    return itp(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)


def interior_window_error(direct, cs, window=(0.25, 0.75, 0.25, 0.75), n=64):
    """Relative L2 gap between the direct truth and the transport field
    on an interior window clear of every layer."""
    x0, x1, y0, y1 = window
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    psi0 = np.empty(X.shape)
    for j, yv in enumerate(ys):
        psi0[:, j] = cs.field.row_values(float(yv), xs)
    psid = _sample_grid_field(direct, X, Y)
    num = math.sqrt(float(np.mean((psid - psi0) ** 2)))
    den = math.sqrt(float(np.mean(psi0 ** 2)))
    return num / max(den, 1e-300)


def strip_errors(direct, cs, n=96):
    """(west H2-seminorm relative error, N/S strip L2 relative error).

    West strip: x within 6 nu^{1/3} of the wall, compared against the
    full approximation in the second-derivative seminorm.  N/S strips:
    width 3 nu^{1/4}, plain L2.
    """
    nu = cs.nu
    gx0, gx1 = direct.x0, direct.x1
    gy0, gy1 = direct.y0, direct.y1
    hfd = nu ** (1.0 / 3.0) / 10.0

    def seminorm_rel(x0, x1, y0, y1, h):
        xs = np.arange(x0, x1 + h / 2, h)
        ys = np.arange(y0, y1 + h / 2, h)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pd = _sample_grid_field(direct, X, Y)
        pa = cs.grid_values(xs, ys)
        d2 = [grid_second_derivative(pd - pa, h, 0),
              grid_second_derivative(pd - pa, h, 1)]
        r2 = [grid_second_derivative(pa, h, 0),
              grid_second_derivative(pa, h, 1)]
        num = math.sqrt(sum(float(np.nansum(a ** 2)) for a in d2))
        den = math.sqrt(sum(float(np.nansum(a ** 2)) for a in r2))
        return num / max(den, 1e-300)

    wid = min(6.0 * nu ** (1.0 / 3.0), 0.45 * (gx1 - gx0))
    pad = 2 * direct.h
    err_w = seminorm_rel(gx0 + pad, gx0 + wid, gy0 + 0.2 * (gy1 - gy0),
                         gy1 - 0.2 * (gy1 - gy0), hfd)
    wns = min(3.0 * nu ** 0.25, 0.3 * (gy1 - gy0))
    hns = nu ** 0.25 / 10.0
    errs = []
    for ys_rng in ((gy0 + pad, gy0 + wns), (gy1 - wns, gy1 - pad)):
        xs = np.arange(gx0 + 0.15 * (gx1 - gx0), gx1 - 0.15 * (gx1 - gx0),
                       hns)
        ys = np.arange(ys_rng[0], ys_rng[1], hns)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pd = _sample_grid_field(direct, X, Y)
        pa = cs.grid_values(xs, ys)
        num = math.sqrt(float(np.mean((pd - pa) ** 2)))
        den = math.sqrt(float(np.mean(pa ** 2)))
        errs.append(num / max(den, 1e-300))
    return err_w, max(errs)


# ---------------------------------------------------------------------------
# auxiliary diagnostics


def west_amplitude_sups(cs, n=4096):
    """sup_s |d^k A/ds^k|, k = 1..4, of the western layer amplitudes.

    A is the complex amplitude of the western profile; near a junction
    with an interior discontinuity line it steepens as nu shrinks, and
    these sups track that growth.
    """
    sups = np.zeros(4)
    for layer in cs.west:
        s0, s1 = layer.support
        sv = np.linspace(s0, s1, n)
        vals = np.asarray(layer.amp(sv), dtype=complex)
        for part in (vals.real, vals.imag):
            spl = InterpolatedUnivariateSpline(sv, part, k=5)
            for k in range(1, 5):
                dk = spl(sv, k)
                sups[k - 1] = max(sups[k - 1], float(np.max(np.abs(dk))))
    return sups


def sobolev_ratio(Z, f):
    """||f||_inf / (||f||_2^{7/8} ||d_Z^4 f||_2^{1/8}) on a half-line grid.

    For clamped profiles (f(0) = f'(0) = 0, decaying) the interpolation
    inequality bounds this by sqrt(2).
    """
    Z = np.asarray(Z, dtype=float)
    f = np.asarray(f, dtype=float)
    spl = InterpolatedUnivariateSpline(Z, f, k=5)
    zf = np.linspace(Z[0], Z[-1], 8 * len(Z))
    sup = float(np.max(np.abs(spl(zf))))
    l2 = math.sqrt(float(np.trapezoid(spl(zf) ** 2, zf)))
    d4 = spl(zf, 4)
    l2d4 = math.sqrt(float(np.trapezoid(d4 ** 2, zf)))
    if l2 == 0.0 or l2d4 == 0.0:
        return 0.0
    return sup / (l2 ** (7.0 / 8.0) * l2d4 ** (1.0 / 8.0))
