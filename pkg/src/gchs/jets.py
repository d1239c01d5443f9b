"""Nestable forward-mode jets.

A :class:`Jet` is a first-order Taylor carrier ``(v, g)`` over ``n`` seed
directions: ``v`` has the batch shape ``B`` and ``g`` has shape ``B + (n,)``.
Both parts may themselves be jets, so a jet of depth ``k`` carries all partial
derivatives up to order ``k``.  Taking a partial derivative (:func:`partial`)
peels one level off, which is how composite quantities built from derivatives
(brackets, covariant derivatives, ...) remain differentiable.

Plain floats and ``numpy`` arrays act as depth-0 carriers.  Python scalars are
always treated as constants; arrays are treated as constants when mixed with
jets.  Binary operations on jets of different depth truncate to the shallower
one.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Jet",
    "depth",
    "lower",
    "lower_to",
    "strip",
    "partial",
    "variable",
    "constant",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "power",
]


def _bc(x):
    """Broadcast a per-point carrier over the trailing derivative axis."""
    if isinstance(x, (Jet, np.ndarray)):
        return x[..., None]
    return x


def depth(x) -> int:
    return x.depth if isinstance(x, Jet) else 0


def lower(x):
    """Drop the highest derivative order of ``x`` (depth k -> k-1)."""
    if not isinstance(x, Jet):
        return x
    if not isinstance(x.v, Jet):
        return x.v
    return Jet(lower(x.v), lower(x.g))


def lower_to(x, k: int):
    while depth(x) > k:
        x = lower(x)
    return x


def strip(x):
    """Return the plain value of a carrier, discarding every derivative."""
    while isinstance(x, Jet):
        x = x.v
    return x


def partial(x, a: int):
    """Partial derivative along seed direction ``a`` (depth drops by one)."""
    if isinstance(x, Jet):
        return x.g[..., a]
    if isinstance(x, (int, float)):
        return 0.0
    raise ValueError("jet depth exhausted: cannot differentiate a depth-0 array")


def constant(arr, n: int, k: int):
    """Depth-``k`` jet of a constant array with ``n`` seed directions."""
    arr = np.asarray(arr, dtype=float)
    if k == 0:
        return arr
    return Jet(constant(arr, n, k - 1), constant(np.zeros(arr.shape + (n,)), n, k - 1))


def variable(values, a: int, n: int, k: int):
    """Depth-``k`` jet seeding coordinate ``a``; ``values`` has shape ``B``."""
    values = np.asarray(values, dtype=float)
    if k == 0:
        return values
    seed = np.zeros(values.shape + (n,))
    seed[..., a] = 1.0
    return Jet(variable(values, a, n, k - 1), constant(seed, n, k - 1))


class Jet:
    __slots__ = ("v", "g", "depth")
    # numpy must defer to our reflected operators instead of broadcasting us
    __array_ufunc__ = None

    def __init__(self, v, g):
        self.v = v
        self.g = g
        self.depth = 1 + depth(v)

    # -- inspection -----------------------------------------------------
    @property
    def n(self) -> int:
        return strip(self.g).shape[-1]

    @property
    def value(self) -> np.ndarray:
        return strip(self)

    @property
    def first(self) -> np.ndarray:
        return strip(self.g)

    @property
    def second(self) -> np.ndarray:
        if self.depth < 2:
            raise ValueError("second derivatives need a depth >= 2 jet")
        return strip(self.g.g)

    @property
    def third(self) -> np.ndarray:
        if self.depth < 3:
            raise ValueError("third derivatives need a depth >= 3 jet")
        return strip(self.g.g.g)

    def __repr__(self) -> str:
        return f"Jet(depth={self.depth}, value={self.value!r})"

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.v[key], self.g[key + (slice(None),)])

    # -- arithmetic -----------------------------------------------------
    def _align(self, other):
        if isinstance(other, Jet) and other.depth != self.depth:
            k = min(self.depth, other.depth)
            return lower_to(self, k), lower_to(other, k)
        return self, other

    def __add__(self, other):
        a, b = self._align(other)
        if not isinstance(a, Jet):
            return a + b
        if isinstance(b, Jet):
            return Jet(a.v + b.v, a.g + b.g)
        return Jet(a.v + b, a.g)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.g)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._align(other)
        if not isinstance(a, Jet):
            return a * b
        if isinstance(b, Jet):
            return Jet(a.v * b.v, a.g * _bc(b.v) + _bc(a.v) * b.g)
        return Jet(a.v * b, a.g * _bc(b))

    __rmul__ = __mul__

    def reciprocal(self):
        r = 1.0 / self.v
        return Jet(r, -_bc(r * r) * self.g)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return other * self.reciprocal()

    def __pow__(self, c):
        return power(self, c)


def sin(x):
    if isinstance(x, Jet):
        return Jet(sin(x.v), _bc(cos(x.v)) * x.g)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        return Jet(cos(x.v), -_bc(sin(x.v)) * x.g)
    return np.cos(x)


def exp(x):
    if isinstance(x, Jet):
        e = exp(x.v)
        return Jet(e, _bc(e) * x.g)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        return Jet(log(x.v), _bc(1.0 / x.v) * x.g)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        s = sqrt(x.v)
        return Jet(s, _bc(0.5 / s) * x.g)
    return np.sqrt(x)


def tanh(x):
    if isinstance(x, Jet):
        t = tanh(x.v)
        return Jet(t, _bc(1.0 - t * t) * x.g)
    return np.tanh(x)


def power(x, c: float):
    """``x ** c`` for a constant real exponent ``c``."""
    c = float(c)
    if c == 0.0:
        return x * 0.0 + 1.0
    if c == 1.0:
        return x
    if isinstance(x, Jet):
        return Jet(power(x.v, c), _bc(c * power(x.v, c - 1.0)) * x.g)
    return np.power(x, c)
