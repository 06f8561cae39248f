"""Wind-stress forcings.

Each forcing exposes the scalar field tau(x, y), its partial derivatives up
to total order four (needed by the transport-solution traces and by the
residual bookkeeping), and a potential P with dP/dx = tau so that
T = (0, P) satisfies curl T = tau (used by the multiply-connected solver).
"""

import math

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.special import erf

__all__ = ["Forcing", "ConstantForcing", "SinYForcing", "GaussianGyreForcing",
           "TabulatedForcing", "make_forcing"]


class Forcing:
    """Interface: value, derivatives, x-potential."""

    max_order = 4

    def tau(self, x, y):
        raise NotImplementedError

    def d(self, x, y, ix, iy):
        """Partial derivative d^(ix+iy) tau / dx^ix dy^iy."""
        raise NotImplementedError

    def potential(self, x, y):
        """P with dP/dx = tau(x, y), P(0, y) = 0."""
        raise NotImplementedError

    def __call__(self, x, y):
        return self.tau(x, y)

    def vanishes_on_band(self, y0, y1, xspan, tol=1e-12):
        """True when |tau| <= tol on the horizontal band [y0, y1]."""
        xs = np.linspace(xspan[0], xspan[1], 101)
        ys = np.linspace(y0, y1, 21)
        X, Y = np.meshgrid(xs, ys)
        return float(np.max(np.abs(self.tau(X, Y)))) <= tol


class ConstantForcing(Forcing):
    def __init__(self, amplitude=1.0):
        self.amplitude = float(amplitude)

    def tau(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.full(np.broadcast(x, np.asarray(y)).shape, self.amplitude)

    def d(self, x, y, ix, iy):
        if ix == iy == 0:
            return self.tau(x, y)
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def potential(self, x, y):
        return self.amplitude * np.asarray(x, dtype=float) \
            + 0.0 * np.asarray(y, dtype=float)


class SinYForcing(Forcing):
    """tau = A sin(a (y - y0))."""

    def __init__(self, amplitude=1.0, wavenumber=math.pi, y0=0.0):
        self.amplitude = float(amplitude)
        self.a = float(wavenumber)
        self.y0 = float(y0)

    def tau(self, x, y):
        y = np.asarray(y, dtype=float)
        return (self.amplitude * np.sin(self.a * (y - self.y0))
                + 0.0 * np.asarray(x, dtype=float))

    def d(self, x, y, ix, iy):
        if ix > 0:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        y = np.asarray(y, dtype=float)
        ph = self.a * (y - self.y0) + iy * math.pi / 2.0
        return (self.amplitude * self.a ** iy * np.sin(ph)
                + 0.0 * np.asarray(x, dtype=float))

    def potential(self, x, y):
        return np.asarray(x, dtype=float) * self.tau(0.0, y)


class GaussianGyreForcing(Forcing):
    """tau = A exp(-((x-x0)^2 + (y-y0)^2) / (2 w^2))."""

    def __init__(self, amplitude=1.0, center=(0.0, 0.0), width=0.5):
        self.amplitude = float(amplitude)
        self.x0, self.y0 = map(float, center)
        self.w = float(width)

    def d(self, x, y, ix, iy):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = (x - self.x0) / self.w
        v = (y - self.y0) / self.w
        val = self.amplitude * np.exp(-(u * u + v * v) / 2.0)
        # d^k/dx^k e^{-u^2/2} = (-1)^k He_k(u) e^{-u^2/2} / w^k
        return (val * self._hermite(ix, u) * self._hermite(iy, v)
                * (-1.0) ** (ix + iy) / self.w ** (ix + iy))

    @staticmethod
    def _hermite(k, t):
        """Probabilists' Hermite polynomial He_k."""
        if k == 0:
            return np.ones_like(t)
        hm, h = np.ones_like(t), t
        for n in range(1, k):
            hm, h = h, t * h - n * hm
        return h

    def tau(self, x, y):
        return self.d(x, y, 0, 0)

    def potential(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gy = np.exp(-((y - self.y0) / self.w) ** 2 / 2.0)
        s = self.w * math.sqrt(math.pi / 2.0)
        ix = s * (erf((x - self.x0) / (self.w * math.sqrt(2.0)))
                  - erf((0.0 - self.x0) / (self.w * math.sqrt(2.0))))
        return self.amplitude * gy * ix


class TabulatedForcing(Forcing):
    """Quintic tensor-spline through gridded samples."""

    def __init__(self, xs, ys, values):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (len(xs), len(ys)):
            raise ValueError("values must be shaped (len(xs), len(ys))")
        self._sp = RectBivariateSpline(xs, ys, values, kx=5, ky=5)
        self._anti = None
        self._xs, self._ys = xs, ys

    def tau(self, x, y):
        return self._sp(np.asarray(x, dtype=float),
                        np.asarray(y, dtype=float), grid=False)

    def d(self, x, y, ix, iy):
        return self._sp(np.asarray(x, dtype=float),
                        np.asarray(y, dtype=float), dx=ix, dy=iy, grid=False)

    def potential(self, x, y):
        # Gauss-Legendre quadrature of the spline along x (exact to the
        # node count; the integrand is a smooth quintic spline)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        x, y = np.broadcast_arrays(x, y)
        nodes, w = np.polynomial.legendre.leggauss(48)
        t = 0.5 * x[..., None] * (nodes + 1.0)
        vals = self._sp(t.ravel(),
                        np.broadcast_to(y[..., None], t.shape).ravel(),
                        grid=False).reshape(t.shape)
        return 0.5 * x * np.sum(w * vals, axis=-1)

    @classmethod
    def from_csv(cls, path):
        """CSV rows x, y, tau on a rectangular grid (any row order)."""
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        vals = np.full((len(xs), len(ys)), np.nan)
        ii = np.searchsorted(xs, data[:, 0])
        jj = np.searchsorted(ys, data[:, 1])
        vals[ii, jj] = data[:, 2]
        if np.any(np.isnan(vals)):
            raise ValueError("tabulated forcing is not a full grid")
        return cls(xs, ys, vals)


def make_forcing(name, **kwargs):
    table = {
        "constant": ConstantForcing,
        "sin_y": SinYForcing,
        "gaussian_gyre": GaussianGyreForcing,
    }
    if name == "tabulated":
        if "path" in kwargs:
            return TabulatedForcing.from_csv(kwargs["path"])
        return TabulatedForcing(**kwargs)
    if name not in table:
        raise ValueError(f"unknown forcing '{name}'")
    return table[name](**kwargs)
