"""Heat-equation presets with known analytic solutions.

Forcing terms are derived symbolically from the analytic solution,
``f = y_t - Laplace(y) + c y^3``, and compiled to numpy with sympy.
"""
from functools import lru_cache

import numpy as np
import sympy as sym

from .fem import HeatProblem

__all__ = ["PRESETS", "make_problem", "from_solution", "oscillating", "rotating_fronts",
           "manufactured", "decaying_mode"]

_t, _x0, _x1 = sym.symbols("t x0 x1", real=True)


def _vectorize(expr, with_t=True):
    fn = sym.lambdify((_t, _x0, _x1), expr, modules="numpy")

    def call(*args):
        if with_t:
            t, x = args
        else:
            t, (x,) = 0.0, args
        x = np.asarray(x, dtype=float)
        out = fn(float(t), x[..., 0], x[..., 1])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    return call


@lru_cache(maxsize=None)
def _compiled(expr_str, c):
    y = sym.sympify(expr_str, locals={"t": _t, "x0": _x0, "x1": _x1})
    f = sym.diff(y, _t) - sym.diff(y, _x0, 2) - sym.diff(y, _x1, 2) + c * y ** 3
    g = y.subs(_t, 0)
    return _vectorize(f), _vectorize(g, with_t=False), _vectorize(y)


def from_solution(expr, c=0.0, name="custom"):
    """Problem whose exact solution is the sympy expression ``expr`` in ``t, x0, x1``.

    ``expr`` must vanish on the boundary of the unit square.
    """
    forcing, initial, analytic = _compiled(str(expr), float(c))
    return HeatProblem(c=float(c), forcing=forcing, initial=initial, analytic=analytic, name=name)


def oscillating(c=0.0):
    """``y = sin(pi x0) sin(pi x1) cos(2 pi t x0)`` on the unit square, T = 1."""
    y = sym.sin(sym.pi * _x0) * sym.sin(sym.pi * _x1) * sym.cos(2 * sym.pi * _t * _x0)
    return from_solution(y, c, name="example-6-3")


def rotating_fronts():
    """Two steep fronts circling the domain centre, T = 1.57, linear.

    ``y = r (s1 - s2)`` in rotated coordinates; a demanding test for
    mesh adaptation.
    """
    t, x0, x1 = _t, _x0, _x1
    u = sym.cos(t) * (x0 - 0.5) - sym.sin(t) * (x1 - 0.5)
    v = sym.sin(t) * (x0 - 0.5) + sym.cos(t) * (x1 - 0.5)
    r = (50000 * x0 * (1 - x0) * (0.5 + u) ** 4 / (t + 1) * (1 - (0.5 + u)) ** 4) / (1 + 1000 * u ** 2)
    core = 10000 * x1 * (1 - x1) * (0.5 + v) ** 2 * (0.5 - v) ** 2
    s1 = core / (1 + 100 * ((0.5 + v) - 0.25) ** 2)
    s2 = core / (1 + 100 * ((0.5 + v) - 0.75) ** 2)
    return from_solution(r * (s1 - s2), 0.0, name="heat-linear")


def manufactured(c=0.0):
    """Smooth manufactured solution ``y = (1 + t) sin(pi x0) sin(2 pi x1) + t x0(1-x0)x1(1-x1)``."""
    y = ((1 + _t) * sym.sin(sym.pi * _x0) * sym.sin(2 * sym.pi * _x1)
         + 4 * _t * _x0 * (1 - _x0) * _x1 * (1 - _x1))
    return from_solution(y, c, name="manufactured" if c == 0 else "heat-cubic")


def decaying_mode():
    """Separable solution ``exp(-2 pi^2 t) sin(pi x0) sin(pi x1)`` with zero forcing."""
    y = sym.exp(-2 * sym.pi ** 2 * _t) * sym.sin(sym.pi * _x0) * sym.sin(sym.pi * _x1)
    return from_solution(y, 0.0, name="decaying-mode")


PRESETS = {
    "heat-linear": (rotating_fronts, {"T": 1.57}),
    "heat-cubic": (lambda c=1.0: manufactured(c), {"T": 1.0}),
    "example-6-3": (oscillating, {"T": 1.0}),
    "manufactured": (manufactured, {"T": 1.0}),
}


def make_problem(name, c=None):
    """Look up a preset by name; ``c`` overrides the cubic coefficient where allowed."""
    try:
        factory, _ = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown problem preset {name!r}; choose from {sorted(PRESETS)}") from None
    if name == "heat-linear":
        if c not in (None, 0, 0.0):
            raise ValueError("heat-linear is a linear problem (c = 0)")
        return factory()
    return factory() if c is None else factory(c)
