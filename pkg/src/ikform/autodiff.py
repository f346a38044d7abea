"""Forward-mode automatic differentiation on numpy arrays.

A :class:`Dual` carries a value array of shape ``S`` together with the
partial derivatives of every entry with respect to ``k`` seeded variables,
stored as an array of shape ``S + (k,)``.  Scalars are simply duals with
``S == ()``.

The module-level functions (:func:`sin`, :func:`atan2`, :func:`stack`, ...)
accept plain floats / ndarrays as well as duals, so kinematics code written
against them runs unchanged with or without derivatives.
"""
from __future__ import annotations

import math

import numpy as np

ARCCOS_EPS = 1e-6
LOG_EPS = 1e-6


class Dual:
    """Value plus partial derivatives with respect to ``nvars`` variables."""

    __slots__ = ("val", "grad")
    __array_ufunc__ = None  # make ndarray <op> Dual defer to Dual

    def __init__(self, val, grad):
        self.val = np.asarray(val, dtype=float)
        self.grad = np.asarray(grad, dtype=float)

    @classmethod
    def variables(cls, x) -> "Dual":
        """Seed a vector of independent variables (identity Jacobian)."""
        x = np.asarray(x, dtype=float)
        return cls(x.copy(), np.eye(x.size).reshape(x.shape + (x.size,)))

    @classmethod
    def constant(cls, x, nvars: int) -> "Dual":
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros(x.shape + (nvars,)))

    # -- array protocol -------------------------------------------------
    @property
    def shape(self):
        return np.shape(self.val)

    @property
    def ndim(self):
        return np.ndim(self.val)

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    @property
    def T(self) -> "Dual":
        if self.ndim < 2:
            return self
        axes = tuple(range(self.ndim))[::-1] + (self.ndim,)
        return _new(self.val.T, self.grad.transpose(axes))

    def __len__(self):
        return len(self.val)

    def __iter__(self):
        for i in range(len(self.val)):
            yield self[i]

    def __getitem__(self, idx):
        if idx is Ellipsis or (type(idx) is tuple and Ellipsis in idx):
            raise IndexError("Dual does not support Ellipsis indexing")
        v = self.val[idx]
        if type(v) is np.float64:
            v = float(v)
        return _new(v, self.grad[idx])

    def __repr__(self):
        return f"Dual(val={self.val!r}, grad={self.grad!r})"

    def __float__(self):
        return float(self.val)

    def reshape(self, *shape) -> "Dual":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        val = np.reshape(self.val, shape)
        return _new(val, self.grad.reshape(val.shape + (self.nvars,)))

    def sum(self, axis=None) -> "Dual":
        if axis is None:
            return _new(np.sum(self.val), self.grad.reshape(-1, self.nvars).sum(axis=0))
        axis = axis % self.ndim
        return _new(self.val.sum(axis=axis), self.grad.sum(axis=axis))

    def cumsum(self, axis: int = 0) -> "Dual":
        axis = axis % self.ndim
        return _new(np.cumsum(self.val, axis=axis), np.cumsum(self.grad, axis=axis))

    # -- arithmetic -----------------------------------------------------
    def __neg__(self):
        return _new(-self.val, -self.grad)

    def __pos__(self):
        return self

    def __add__(self, other):
        if type(other) is Dual:
            val = self.val + other.val
            sg, og = self.grad, other.grad
            if sg.shape != og.shape:
                shape = np.shape(val)
                sg, og = _expand(sg, shape), _expand(og, shape)
            return _new(val, sg + og)
        val = self.val + other
        return _new(val, _expand(self.grad, np.shape(val)))

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) is Dual:
            val = self.val - other.val
            sg, og = self.grad, other.grad
            if sg.shape != og.shape:
                shape = np.shape(val)
                sg, og = _expand(sg, shape), _expand(og, shape)
            return _new(val, sg - og)
        val = self.val - other
        return _new(val, _expand(self.grad, np.shape(val)))

    def __rsub__(self, other):
        val = other - self.val
        return _new(val, _expand(-self.grad, np.shape(val)))

    def __mul__(self, other):
        if type(other) is Dual:
            sv, ov = self.val, other.val
            if type(sv) is float and type(ov) is float:
                return _new(sv * ov, self.grad * ov + other.grad * sv)
            return _new(sv * ov, self.grad * _col(ov) + other.grad * _col(sv))
        if isinstance(other, (float, int)):
            return _new(self.val * other, self.grad * other)
        return _new(self.val * other, self.grad * _col(np.asarray(other, dtype=float)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if type(other) is Dual:
            inv = _safe_reciprocal(other.val)
            val = self.val * inv
            return _new(val, (self.grad - other.grad * _col(val)) * _col(inv))
        if isinstance(other, (float, int)) and other != 0:
            inv = 1.0 / other
            return _new(self.val * inv, self.grad * inv)
        inv = _safe_reciprocal(np.asarray(other, dtype=float))
        return _new(self.val * inv, self.grad * _col(inv))

    def __rtruediv__(self, other):
        inv = _safe_reciprocal(self.val)
        val = other * inv
        return _new(val, -self.grad * _col(val * inv))

    def __pow__(self, power):
        if isinstance(power, Dual):
            return exp(power * log(self))
        power = float(power)
        if power == 2.0:
            return _new(self.val * self.val, self.grad * _col(2.0 * self.val))
        val = self.val**power
        return _new(val, self.grad * _col(power * self.val ** (power - 1.0)))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # comparisons act on values only (branch decisions, never differentiated)
    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)


DiffScalar = Dual


def _new(val, grad) -> Dual:
    d = object.__new__(Dual)
    d.val = val
    d.grad = grad
    return d


_SCALARS = (float, np.float64)


def _col(v):
    """Broadcast a value array against a gradient array (derivative axis last)."""
    if type(v) in _SCALARS or np.ndim(v) == 0:
        return v
    return v[..., None]


def _value(x):
    return x.val if isinstance(x, Dual) else x


def value(x) -> np.ndarray:
    """Strip derivatives; works on duals and plain numbers alike."""
    return np.asarray(x.val if isinstance(x, Dual) else x, dtype=float)


def partials(x, nvars: int) -> np.ndarray:
    """Partials of ``x`` (zeros when ``x`` is a constant)."""
    if isinstance(x, Dual):
        return x.grad
    return np.zeros(np.shape(x) + (nvars,))


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def _expand(grad, shape):
    if grad.shape[:-1] == shape:
        return grad
    return np.broadcast_to(grad, shape + grad.shape[-1:])


def _safe_reciprocal(v):
    # division by an exact zero poisons the result with NaN instead of inf
    if np.ndim(v) == 0:
        return np.float64(np.nan) if v == 0.0 else 1.0 / np.float64(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / v
    return np.where(v == 0.0, np.nan, inv)


def _unary(x, f, df):
    if type(x) is Dual:
        return _new(f(x.val), x.grad * _col(df(x.val)))
    return f(x)


def sin(x):
    if type(x) is Dual and type(x.val) in _SCALARS:
        v = x.val
        return _new(math.sin(v), x.grad * math.cos(v))
    return _unary(x, np.sin, np.cos)


def cos(x):
    if type(x) is Dual and type(x.val) in _SCALARS:
        v = x.val
        return _new(math.cos(v), x.grad * -math.sin(v))
    return _unary(x, np.cos, lambda v: -np.sin(v))


def exp(x):
    return _unary(x, np.exp, np.exp)


def log(x):
    """Natural log; non-positive arguments yield NaN (poisoned)."""
    v = _value(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.greater(v, 0), np.log(v), np.nan)
    if np.ndim(out) == 0:
        out = out[()]
    if type(x) is Dual:
        return _new(out, x.grad * _col(_safe_reciprocal(v)))
    return out


def sqrt(x):
    """Square root; negative arguments yield NaN, zero gives an infinite slope."""
    if type(x) is Dual and type(x.val) in _SCALARS and x.val > 0:
        val = math.sqrt(x.val)
        return _new(val, x.grad * (0.5 / val))
    with np.errstate(invalid="ignore", divide="ignore"):
        if type(x) is Dual:
            val = np.sqrt(x.val)
            return _new(val, x.grad * _col(0.5 / val))
        return np.sqrt(x)


def abs(x):  # noqa: A001 - mirrors numpy naming
    return _unary(x, np.abs, np.sign)


def atan2(y, x):
    """Two-argument arctangent, differentiable in both arguments."""
    yd, xd = type(y) is Dual, type(x) is Dual
    if not yd and not xd:
        return np.arctan2(y, x)
    yv = y.val if yd else y
    xv = x.val if xd else x
    if type(yv) in _SCALARS and type(xv) in _SCALARS:
        r2 = xv * xv + yv * yv
        if r2 == 0.0:
            gy = gx = math.nan
        else:
            gy, gx = xv / r2, -yv / r2
        if yd and xd:
            grad = y.grad * gy + x.grad * gx
        else:
            grad = y.grad * gy if yd else x.grad * gx
        return _new(math.atan2(yv, xv), grad)
    val = np.arctan2(yv, xv)
    r2 = xv * xv + yv * yv
    with np.errstate(divide="ignore", invalid="ignore"):
        gy, gx = xv / r2, -yv / r2
    if yd and xd:
        grad = y.grad * _col(gy) + x.grad * _col(gx)
    elif yd:
        grad = y.grad * _col(gy)
    else:
        grad = x.grad * _col(gx)
    return _new(val, _expand(grad, np.shape(val)))


def wrap_angle(x):
    """Map an angle to (-pi, pi] smoothly (unit derivative away from +-pi)."""
    if type(x) is Dual:
        return _new(np.arctan2(np.sin(x.val), np.cos(x.val)), x.grad)
    return np.arctan2(np.sin(x), np.cos(x))


def clip(x, lo, hi):
    """Clamp values; the derivative is zero wherever clamping is active."""
    if type(x) is Dual:
        v = np.clip(x.val, lo, hi)
        inside = np.logical_and(np.greater(x.val, lo), np.less(x.val, hi))
        return _new(v, x.grad * _col(inside.astype(float)))
    return np.clip(x, lo, hi)


def clipped_arccos(t, eps: float = ARCCOS_EPS):
    """``arccos`` of ``t`` clamped to ``[-1 + eps, 1 - eps]``.

    Never fails: out-of-domain inputs are pulled onto the clip interval and
    their derivative is dropped to zero.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    lo, hi = -1.0 + eps, 1.0 - eps
    if type(t) is Dual:
        tv = np.clip(t.val, lo, hi)
        inside = np.logical_and(np.greater(t.val, lo), np.less(t.val, hi))
        slope = np.where(inside, -1.0 / np.sqrt(1.0 - tv * tv), 0.0)
        return _new(np.arccos(tv), t.grad * _col(slope))
    return np.arccos(np.clip(t, lo, hi))


def safe_log(t, eps: float = LOG_EPS):
    """``log(max(t, eps))`` with zero derivative in the clipped region."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if type(t) is Dual:
        tv = np.maximum(t.val, eps)
        slope = np.where(np.greater(t.val, eps), 1.0 / tv, 0.0)
        return _new(np.log(tv), t.grad * _col(slope))
    return np.log(np.maximum(t, eps))


def maximum(a, b):
    """Elementwise max; ties take the derivative of ``a``."""
    if type(a) is not Dual and type(b) is not Dual:
        return np.maximum(a, b)
    av, bv = _value(a), _value(b)
    pick_a = np.greater_equal(av, bv)
    k = a.nvars if type(a) is Dual else b.nvars
    shape = np.broadcast_shapes(np.shape(av), np.shape(bv))
    ga = _expand(partials(a, k), shape)
    gb = _expand(partials(b, k), shape)
    return _new(np.where(pick_a, av, bv), np.where(np.asarray(pick_a)[..., None], ga, gb))


def minimum(a, b):
    """Elementwise min; ties take the derivative of ``a``."""
    return -maximum(-a if type(a) is Dual else -np.asarray(a, float),
                    -b if type(b) is Dual else -np.asarray(b, float))


def amax(x, axis: int = -1):
    """Hard max along an axis; ties resolved to the lowest index."""
    if type(x) is not Dual:
        return np.max(x, axis=axis)
    axis = axis % x.ndim
    idx = np.expand_dims(np.argmax(x.val, axis=axis), axis)
    val = np.take_along_axis(x.val, idx, axis=axis).squeeze(axis)
    grad = np.take_along_axis(x.grad, idx[..., None], axis=axis).squeeze(axis)
    return _new(val, grad)


def amin(x, axis: int = -1):
    """Hard min along an axis; ties resolved to the lowest index."""
    if type(x) is not Dual:
        return np.min(x, axis=axis)
    axis = axis % x.ndim
    idx = np.expand_dims(np.argmin(x.val, axis=axis), axis)
    val = np.take_along_axis(x.val, idx, axis=axis).squeeze(axis)
    grad = np.take_along_axis(x.grad, idx[..., None], axis=axis).squeeze(axis)
    return _new(val, grad)


def dot(a, b):
    """Inner product over the last axis."""
    prod = a * b
    return prod.sum(axis=-1) if type(prod) is Dual else np.sum(prod, axis=-1)


def norm(x):
    """Euclidean norm over the last axis."""
    return sqrt(dot(x, x))


def cross(a, b):
    """Cross product of two 3-vectors."""
    if type(a) is not Dual and type(b) is not Dual:
        return np.cross(a, b)
    a0, a1, a2 = a[0], a[1], a[2]
    b0, b1, b2 = b[0], b[1], b[2]
    return stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def matmul(a, b):
    """Matrix product supporting 1-D and 2-D operands, dual or not."""
    ad, bd = type(a) is Dual, type(b) is Dual
    if not ad and not bd:
        return np.asarray(a, float) @ np.asarray(b, float)
    av = a.val if ad else np.asarray(a, float)
    bv = b.val if bd else np.asarray(b, float)
    val = av @ bv
    grad = None
    if ad:
        ga = a.grad
        if ga.ndim == 2:  # vector @ (matrix | vector)
            grad = np.einsum("ik,i...->...k", ga, bv)
        elif bv.ndim == 1:
            grad = np.einsum("ijk,j->ik", ga, bv)
        else:
            grad = np.einsum("ijk,jl->ilk", ga, bv)
    if bd:
        gb = b.grad
        if gb.ndim == 2:
            term = np.einsum("...j,jk->...k", av, gb)
        else:
            term = np.einsum("...j,jlk->...lk", av, gb)
        grad = term if grad is None else grad + term
    return _new(val, grad)


def stack(items, axis: int = 0):
    """Stack scalars/arrays (any mix of duals and constants) along a new axis."""
    items = list(items)
    k = next((it.nvars for it in items if type(it) is Dual), None)
    if k is None:
        return np.stack([np.asarray(it, dtype=float) for it in items], axis=axis)
    vals = [_value(it) for it in items]
    shapes = {np.shape(v) for v in vals}
    if len(shapes) == 1:
        shape = shapes.pop()
        grads = [it.grad if type(it) is Dual else np.zeros(shape + (k,)) for it in items]
    else:
        shape = np.broadcast_shapes(*shapes)
        vals = [np.broadcast_to(v, shape) for v in vals]
        grads = [_expand(partials(it, k), shape) for it in items]
    ax = axis % (len(shape) + 1)
    return _new(np.stack(vals, axis=ax), np.stack(grads, axis=ax))


def concatenate(items):
    """Concatenate 1-D pieces (scalars allowed) into a single vector."""
    items = list(items)
    k = next((it.nvars for it in items if type(it) is Dual), None)
    if k is None:
        return np.concatenate([np.atleast_1d(np.asarray(it, dtype=float)) for it in items])
    vals, grads = [], []
    for it in items:
        v = np.atleast_1d(_value(it))
        g = partials(it, k)
        vals.append(v)
        grads.append(g.reshape(v.shape + (k,)))
    return _new(np.concatenate(vals), np.concatenate(grads))


def jacobian(fun, x) -> tuple[np.ndarray, np.ndarray]:
    """Value and Jacobian of ``fun`` at ``x`` via forward mode.

    ``fun`` maps a 1-D dual to a dual (scalar or 1-D).  Returns
    ``(value, J)`` where ``J`` has shape ``value.shape + (len(x),)``.
    """
    x = np.asarray(x, dtype=float)
    out = fun(Dual.variables(x))
    return value(out), partials(out, x.size)


def central_difference(fun, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a plain-float function (test oracle)."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    J = np.empty(f0.shape + (x.size,))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        J[..., i] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h)
    return J
