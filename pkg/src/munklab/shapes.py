"""Smooth cutoff machinery shared by every layer construction.

Three families of profiles:

* ``ramp`` -- the C-infinity bump-integral ramp, 0 for t <= 0 and 1 for
  t >= 1, with analytic derivatives up to order 4.  All transition
  functions (validity ramps, truncation shoulders, boundary-data windows)
  are rescalings of this single function, so derivative bookkeeping lives
  in one place.
* ``plateau`` -- the even cutoff chi with plateau [-1/2, 1/2] and support
  [-1, 1], again with derivatives up to order 4 (orders 3 and 4 feed the
  discontinuity-layer source term).
* ``smoothstep4`` -- the polynomial step u^4(35 - 84u + 70u^2 - 20u^3),
  used by the geometry generators where an exact algebraic flatness order
  at the junctions is wanted.
"""

import numpy as np

__all__ = ["ramp", "plateau", "smoothstep4", "ramp_between"]

_MAX_ORDER = 4

# Derivatives of r(t) = e(t) / (e(t) + e(1-t)), e(t) = exp(-1/t), are
# generated symbolically once and cached as numpy-callables.  Doing this
# by hand to order 4 is error-prone; the expressions are only evaluated
# on the open interval (0, 1) where they are smooth.
_ramp_funcs = None


def _build_ramp_funcs():
    global _ramp_funcs
    if _ramp_funcs is not None:
        return _ramp_funcs
    import sympy as sp

    t = sp.Symbol("t", positive=True)
    e = sp.exp(-1 / t)
    em = sp.exp(-1 / (1 - t))
    r = e / (e + em)
    funcs = []
    expr = r
    for k in range(_MAX_ORDER + 1):
        funcs.append(sp.lambdify(t, expr, modules="numpy"))
        expr = sp.diff(expr, t)
    _ramp_funcs = funcs
    return funcs


def ramp(t, k=0):
    """C-infinity ramp: 0 for t <= 0, 1 for t >= 1; k-th derivative."""
    if not 0 <= k <= _MAX_ORDER:
        raise ValueError("derivative order must be in 0..4")
    funcs = _build_ramp_funcs()
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    # Derivatives decay faster than any power toward both endpoints, so a
    # small guard band avoids overflow in the 1/t factors at no cost.
    eps = 1e-4
    inside = (t > eps) & (t < 1.0 - eps)
    if np.any(inside):
        with np.errstate(over="ignore", under="ignore"):
            out[inside] = funcs[k](t[inside])
    if k == 0:
        out[t >= 1.0 - eps] = 1.0
        # below eps the ramp value is < 1e-4000, indistinguishable from 0
    if scalar:
        return float(out[0])
    return out


def ramp_between(s, s0, s1, k=0):
    """Ramp rescaled to rise over [s0, s1] (falling if s1 < s0)."""
    w = s1 - s0
    if w == 0:
        raise ValueError("degenerate ramp interval")
    return ramp((np.asarray(s, dtype=float) - s0) / w, k) / w ** k


def plateau(u, k=0):
    """Even cutoff: 1 on [-1/2, 1/2], 0 outside [-1, 1]; k-th derivative.

    Built as ramp(2(1 - |u|)) on the shoulders, so chain-rule factors are
    (-2 sign u)^k.
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    a = np.abs(u)
    out = np.zeros_like(u)
    if k == 0:
        out[a <= 0.5] = 1.0
    shoulder = (a > 0.5) & (a < 1.0)
    if np.any(shoulder):
        val = ramp(2.0 * (1.0 - a[shoulder]), k)
        out[shoulder] = val * (-2.0 * np.sign(u[shoulder])) ** k
    if scalar:
        return float(out[0])
    return out


def smoothstep4(u, k=0):
    """Polynomial step with triple-zero ends: B(u) = u^4(35-84u+70u^2-20u^3).

    B is C^3 across the clamped junctions; near u=0 it vanishes to order 4,
    near u=1 it approaches 1 to order 4.
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    c = np.clip(u, 0.0, 1.0)
    if k == 0:
        out = c ** 4 * (35.0 + c * (-84.0 + c * (70.0 - 20.0 * c)))
        out = np.where(u >= 1.0, 1.0, np.where(u <= 0.0, 0.0, out))
    else:
        # derivative of the quartic core, zero outside (0, 1)
        coeffs = {
            1: lambda v: 140.0 * v ** 3 * (1.0 - v) ** 3,
            2: lambda v: 420.0 * v ** 2 * (1.0 - v) ** 2 * (1.0 - 2.0 * v),
            3: lambda v: 840.0 * v * (1.0 - v) * (1.0 - 5.0 * v + 5.0 * v ** 2),
            4: lambda v: 840.0 * (1.0 - 12.0 * v + 30.0 * v ** 2 - 20.0 * v ** 3),
        }
        if k not in coeffs:
            raise ValueError("derivative order must be in 0..4")
        out = np.where((u > 0.0) & (u < 1.0), coeffs[k](c), 0.0)
    if scalar:
        return float(out[0])
    return out
