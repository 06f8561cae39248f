"""East/West exponential boundary layers of width (nu/|cos theta|)^(1/3).

East arcs carry a single decaying mode A(s) e^{-lambda z}; its amplitude is
pinned by cancelling the normal derivative of the transport solution, and
the leftover O(nu^{1/3}) Dirichlet trace is removed by a corrector that is
flat in z at the boundary.  West arcs carry two decaying complex-conjugate
modes, so both the trace and the normal derivative can be lifted at once
(western intensification: the layer amplitude is O(1) there).

Conventions: z is the inward distance, so d_n = -d_z on the boundary.
"""

import cmath
import math
from math import comb

import numpy as np

from .shapes import plateau

__all__ = ["EWLayerError", "lambda_ew", "EWLayer", "build_east_layer",
           "build_west_layer"]

_ALPHA_W = cmath.exp(1j * math.pi / 3.0)


class EWLayerError(RuntimeError):
    pass


def _cos_derivs(comp, s):
    """(|cos theta|, d_s|cos theta|, d_s^2|cos theta|) with sign chain."""
    s = np.asarray(s, dtype=float)
    th = comp.theta(s)
    th1 = comp.theta(s, 1)
    th2 = comp.theta(s, 2)
    u = np.cos(th)
    u1 = -np.sin(th) * th1
    u2 = -np.cos(th) * th1 ** 2 - np.sin(th) * th2
    sg = np.sign(u)
    return np.abs(u), sg * u1, sg * u2


def lambda_ew(geom, nu, s, comp=0, k=0):
    """Inverse layer width lambda = (|cos theta(s)| / nu)^(1/3).

    k = 1, 2 return arc-length derivatives.  Raises at geostrophic
    singular points (cos theta = 0).
    """
    c, c1, c2 = _cos_derivs(geom.components[comp], s)
    if np.any(c < 1e-13):
        raise EWLayerError("cos theta vanishes: E/W layer width is singular")
    lam = (c / nu) ** (1.0 / 3.0)
    if k == 0:
        return lam
    if k == 1:
        return lam * c1 / (3.0 * c)
    if k == 2:
        return lam * (c2 / (3.0 * c) - 2.0 * c1 ** 2 / (9.0 * c ** 2))
    raise ValueError("k must be 0, 1 or 2")


class EWLayer:
    """One boundary-layer term living on a single E or W arc.

    The evaluator composes amplitude(s) x exp-profile(lambda(s) z) with the
    validity ramps in s and the tube cut-off chi0 in z, and provides mixed
    (s, z) partial derivatives up to total order 2 for norm assembly.
    """

    def __init__(self, geom, nu, arc_idx, amp, side):
        self.geom = geom
        self.nu = nu
        self.arc_idx = arc_idx
        self.arc = geom.arcs[arc_idx]
        self.comp_idx = self.arc.comp
        self.comp = geom.components[self.arc.comp]
        self.amp = amp            # amp(s, k): real (East) / A_plus (West)
        self.side = side          # 'E' or 'W'
        self.alpha = 1.0 + 0.0j if side == "E" else _ALPHA_W
        qs, qe = self.arc.corner_start, self.arc.corner_end
        sv0, se0, phi0 = geom.corner_window(nu, qs, +1)
        sv1, se1, phi1 = geom.corner_window(nu, qe, -1)
        # windows are expressed relative to the stored corner abscissae,
        # which may be wrapped; shift them into the arc's unwrapped frame
        self._shift0 = self.arc.s0 - geom.corners[qs].s
        self._shift1 = self.arc.s1 - geom.corners[qe].s
        self._phi0, self._phi1 = phi0, phi1
        self.support = (sv0 + self._shift0, sv1 + self._shift1)
        self.sigma = (se0 + self._shift0, se1 + self._shift1)

    # -- building blocks ---------------------------------------------------
    def _unwrap(self, s):
        L = self.comp.length
        return self.arc.s0 + np.mod(np.asarray(s, dtype=float)
                                    - self.arc.s0, L)

    def ramp(self, s, k=0):
        """R = phi_start^+ phi_end^-, the amplitude support window."""
        s = self._unwrap(s)
        s0, s1 = s - self._shift0, s - self._shift1
        if k == 0:
            return self._phi0(s0) * self._phi1(s1)
        out = 0.0
        for a in range(k + 1):
            out = out + comb(k, a) * self._phi0(s0, a) * self._phi1(s1, k - a)
        return out

    def lam(self, s, k=0):
        return lambda_ew(self.geom, self.nu, self._unwrap(s),
                         comp=self.comp_idx, k=k)

    def _profile(self, s, z, i, j):
        """d_s^i d_z^j of A(s) exp(-alpha lambda(s) z), complex."""
        s = self._unwrap(s)
        z = np.asarray(z, dtype=float)
        al = self.alpha
        lam = self.lam(s)
        A = [np.asarray(self.amp(s, k), dtype=complex) for k in range(i + 1)]
        with np.errstate(under="ignore"):
            E = np.exp(-al * lam * z)
        if i >= 1:
            l1 = self.lam(s, 1)
        if i >= 2:
            l2 = self.lam(s, 2)
        if (i, j) == (0, 0):
            core = A[0]
        elif (i, j) == (0, 1):
            core = A[0] * (-al * lam)
        elif (i, j) == (0, 2):
            core = A[0] * (al * lam) ** 2
        elif (i, j) == (1, 0):
            core = A[1] + A[0] * (-al * l1 * z)
        elif (i, j) == (1, 1):
            core = A[1] * (-al * lam) + A[0] * (-al * l1 + al ** 2 * lam * l1 * z)
        elif (i, j) == (2, 0):
            core = (A[2] + 2.0 * A[1] * (-al * l1 * z)
                    + A[0] * (-al * l2 * z + al ** 2 * l1 ** 2 * z ** 2))
        else:
            raise ValueError("partials available up to total order 2")
        return core * E

    def _real_profile(self, s, z, i, j):
        h = self._profile(s, z, i, j)
        if self.side == "E":
            return h.real
        val = 2.0 * h.real
        return val

    def chi0(self, z, k=0):
        w = self.geom.cutoff_width
        return plateau(np.asarray(z, dtype=float) / w, k) / w ** k

    # -- public evaluators -------------------------------------------------
    def value(self, s, z, i=0, j=0, with_corrector=True):
        """d_s^i d_z^j of the layer (plus East corrector), in tube coords."""
        s = np.asarray(s, dtype=float)
        z = np.asarray(z, dtype=float)
        s, z = np.broadcast_arrays(s, z)
        out = np.zeros(s.shape)
        lo, hi = self.support
        su = self._unwrap(s)
        m = (su > lo) & (su < hi) & (z < self.geom.cutoff_width) & (z >= 0.0)
        if not np.any(m):
            return out
        sm, zm = su[m], z[m]
        acc = np.zeros(sm.shape)
        for a in range(i + 1):
            Ra = self.ramp(sm, a)
            for b in range(j + 1):
                Cb = self.chi0(zm, b)
                if np.all(Ra == 0.0) or np.all(Cb == 0.0):
                    continue
                acc = acc + (comb(i, a) * comb(j, b) * Ra * Cb
                             * self._real_profile(sm, zm, i - a, j - b))
        if with_corrector and self.side == "E":
            # corrector -R(s) A(s) chi0(z): cancels the layer's Dirichlet
            # trace exactly and is flat in z at the boundary
            acc = acc + self._corrector(sm, zm, i, j)
        out[m] = acc
        return out

    def _corrector(self, s, z, i, j):
        """d_s^i d_z^j of -R(s) A(s) chi0(z) (East only)."""
        Cb = self.chi0(z, j)
        RA = 0.0
        for a in range(i + 1):
            RA = RA + comb(i, a) * self.ramp(s, a) * np.real(self.amp(s, i - a))
        return -RA * Cb

    def trace0(self, s, k=0):
        """s-derivative of the boundary (z = 0) trace of the layer stack."""
        s = np.asarray(s, dtype=float)
        return self.value(s, np.zeros_like(s), i=k, j=0)

    def dn0(self, s, k=0):
        """s-derivative of the outward normal derivative at z = 0."""
        s = np.asarray(s, dtype=float)
        return -self.value(s, np.zeros_like(s), i=k, j=1)

    def imag_defect(self, s, z):
        """West conjugacy check: imaginary part left after pairing modes."""
        if self.side == "E":
            return np.zeros(np.broadcast(s, z).shape)
        h = self._profile(s, z, 0, 0)
        return np.abs((h + np.conj(h)).imag)


def build_east_layer(geom, nu, arc_idx, dn_trace):
    """East amplitude A = -lambda^{-1} d_n psi (cancels the normal trace).

    dn_trace(s, k): outward normal derivative of the transport solution on
    the arc and its s-derivatives, k <= 2.
    """
    arc = geom.arcs[arc_idx]
    if arc.label != "E":
        raise EWLayerError("arc is not an East boundary")

    def amp(s, k=0):
        lam = lambda_ew(geom, nu, s, comp=arc.comp)
        if k == 0:
            return -dn_trace(s, 0) / lam
        l1 = lambda_ew(geom, nu, s, comp=arc.comp, k=1)
        if k == 1:
            return -dn_trace(s, 1) / lam + dn_trace(s, 0) * l1 / lam ** 2
        l2 = lambda_ew(geom, nu, s, comp=arc.comp, k=2)
        return (-dn_trace(s, 2) / lam + 2.0 * dn_trace(s, 1) * l1 / lam ** 2
                + dn_trace(s, 0) * (l2 / lam ** 2 - 2.0 * l1 ** 2 / lam ** 3))
    return EWLayer(geom, nu, arc_idx, amp, "E")


def build_west_layer(geom, nu, arc_idx, p_trace, q_trace):
    """West amplitude pair from the 2x2 trace system.

    p_trace, q_trace: boundary trace and outward normal derivative of the
    field to lift (transport solution plus the Sigma stack), with
    s-derivatives k <= 2.  The complex amplitude A_plus satisfies
    2 Re A_plus = -p and the Z-slope relation; A_minus = conj(A_plus).
    """
    arc = geom.arcs[arc_idx]
    if arc.label != "W":
        raise EWLayerError("arc is not a West boundary")
    rt3 = math.sqrt(3.0)

    def amp(s, k=0):
        lam = lambda_ew(geom, nu, s, comp=arc.comp)
        p = [np.asarray(p_trace(s, m), dtype=float) for m in range(k + 1)]
        q = [np.asarray(q_trace(s, m), dtype=float) for m in range(k + 1)]
        if k == 0:
            a = -p[0] / 2.0
            b = (-p[0] / 2.0 + q[0] / lam) / rt3
            return a + 1j * b
        l1 = lambda_ew(geom, nu, s, comp=arc.comp, k=1)
        if k == 1:
            a = -p[1] / 2.0
            b = (-p[1] / 2.0 + q[1] / lam - q[0] * l1 / lam ** 2) / rt3
            return a + 1j * b
        l2 = lambda_ew(geom, nu, s, comp=arc.comp, k=2)
        a = -p[2] / 2.0
        b = (-p[2] / 2.0 + q[2] / lam - 2.0 * q[1] * l1 / lam ** 2
             - q[0] * (l2 / lam ** 2 - 2.0 * l1 ** 2 / lam ** 3)) / rt3
        return a + 1j * b
    return EWLayer(geom, nu, arc_idx, amp, "W")
