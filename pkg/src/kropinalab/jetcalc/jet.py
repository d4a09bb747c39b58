"""Truncated multivariate Taylor jets (forward mode).

A :class:`Jet` stores the Taylor coefficients of a (possibly tensor valued)
function around a base point, truncated to a downward closed set of
monomials described by a :class:`JetSpace`.  Variables are split into an
``x`` group and a ``y`` group so that the position and the tangent vector of
a Finsler computation can carry separate truncation orders.

Coefficients live on the last array axis; every leading axis is a tensor or
batch axis and broadcasts like numpy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class JetSpace:
    nx: int
    ny: int
    dx: int
    dy: int
    dtot: int

    @property
    def nvars(self) -> int:
        return self.nx + self.ny

    def admits(self, exps: tuple[int, ...]) -> bool:
        sx = sum(exps[: self.nx])
        sy = sum(exps[self.nx:])
        return sx <= self.dx and sy <= self.dy and sx + sy <= self.dtot

    @property
    def tables(self) -> "_Tables":
        return _tables(self)

    @property
    def size(self) -> int:
        return len(self.tables.monomials)

    def meet(self, other: "JetSpace") -> "JetSpace":
        if (self.nx, self.ny) != (other.nx, other.ny):
            raise ValueError(f"incompatible jet spaces {self} and {other}")
        if self == other:
            return self
        return make_space(self.nx, self.ny, min(self.dx, other.dx),
                          min(self.dy, other.dy), min(self.dtot, other.dtot))

    def derived(self, k: int) -> "JetSpace":
        """Space holding the derivative along variable ``k``."""
        if k < self.nx:
            return make_space(self.nx, self.ny, max(self.dx - 1, 0), self.dy,
                              max(self.dtot - 1, 0))
        return make_space(self.nx, self.ny, self.dx, max(self.dy - 1, 0),
                          max(self.dtot - 1, 0))


def make_space(nx: int, ny: int = 0, dx: int = 0, dy: int = 0,
               dtot: int | None = None) -> JetSpace:
    if ny == 0:
        dy = 0
    if nx == 0:
        dx = 0
    if dtot is None:
        dtot = dx + dy
    dx = min(dx, dtot)
    dy = min(dy, dtot)
    dtot = min(dtot, dx + dy)
    return JetSpace(nx, ny, dx, dy, dtot)


def x_space(n: int, order: int) -> JetSpace:
    return make_space(n, 0, order, 0, order)


class _Tables:
    def __init__(self, space: JetSpace):
        nv = space.nvars
        mons = []
        for deg in range(space.dtot + 1):
            for combo in itertools.combinations_with_replacement(range(nv), deg):
                e = [0] * nv
                for v in combo:
                    e[v] += 1
                e = tuple(e)
                if space.admits(e):
                    mons.append(e)
        self.monomials: list[tuple[int, ...]] = mons
        self.index = {m: i for i, m in enumerate(mons)}
        self.exps = np.array(mons, dtype=np.int64).reshape(len(mons), nv)
        self.degree = self.exps.sum(axis=1) if nv else np.zeros(1, dtype=np.int64)
        self.factorial = np.array(
            [math.prod(math.factorial(k) for k in m) for m in mons], dtype=float)

        # product table sorted by target, so reduceat can sum each target block
        ps, qs, ts = [], [], []
        for t, m in enumerate(mons):
            for p in itertools.product(*(range(k + 1) for k in m)):
                q = tuple(a - b for a, b in zip(m, p))
                ps.append(self.index[p])
                qs.append(self.index[q])
                ts.append(t)
        self.p = np.array(ps, dtype=np.int64)
        self.q = np.array(qs, dtype=np.int64)
        t = np.array(ts, dtype=np.int64)
        self.starts = np.flatnonzero(np.r_[True, t[1:] != t[:-1]])

    def reduce(self, prod: np.ndarray) -> np.ndarray:
        return np.add.reduceat(prod, self.starts, axis=-1)


@lru_cache(maxsize=None)
def _tables(space: JetSpace) -> _Tables:
    return _Tables(space)


@lru_cache(maxsize=None)
def _conversion(src: JetSpace, dst: JetSpace) -> tuple[np.ndarray, np.ndarray]:
    """Indices (dst_idx, src_idx) of monomials shared by two spaces."""
    st, dt = src.tables, dst.tables
    if src.nvars == dst.nvars:
        pad = lambda m: m  # noqa: E731
    elif src.ny == 0 and dst.nx == src.nx:
        pad = lambda m: m + (0,) * dst.ny  # noqa: E731
    else:
        raise ValueError(f"cannot convert {src} to {dst}")
    pairs = [(dt.index[pad(m)], i) for i, m in enumerate(st.monomials)
             if pad(m) in dt.index]
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


@lru_cache(maxsize=None)
def _derivative(space: JetSpace, k: int) -> tuple[JetSpace, np.ndarray, np.ndarray]:
    out = space.derived(k)
    st = space.tables
    src, fac = [], []
    for m in out.tables.monomials:
        up = list(m)
        up[k] += 1
        src.append(st.index.get(tuple(up), -1))
        fac.append(float(up[k]))
    src = np.array(src, dtype=np.int64)
    fac = np.array(fac)
    fac[src < 0] = 0.0
    return out, src, fac


class Jet:
    """Tensor of truncated Taylor polynomials sharing one :class:`JetSpace`."""

    __slots__ = ("space", "c")
    __array_priority__ = 100

    def __init__(self, space: JetSpace, c: np.ndarray):
        self.space = space
        self.c = c

    # construction -------------------------------------------------------

    @classmethod
    def constant(cls, space: JetSpace, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (space.size,))
        c[..., 0] = value
        return cls(space, c)

    @classmethod
    def variable(cls, space: JetSpace, k: int, value) -> "Jet":
        jet = cls.constant(space, value)
        e = [0] * space.nvars
        e[k] = 1
        idx = space.tables.index.get(tuple(e))
        if idx is not None:
            jet.c[..., idx] = 1.0
        return jet

    # basic accessors ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def partial(self, *variables: int) -> np.ndarray:
        """Partial derivative along the listed variable indices (repeats allowed)."""
        e = [0] * self.space.nvars
        for v in variables:
            e[v] += 1
        idx = self.space.tables.index.get(tuple(e))
        if idx is None:
            raise ValueError(f"partial {tuple(e)} is outside the jet truncation {self.space}")
        return self.c[..., idx] * self.space.tables.factorial[idx]

    def partials(self) -> dict[tuple[int, ...], np.ndarray]:
        t = self.space.tables
        return {m: self.c[..., i] * t.factorial[i] for i, m in enumerate(t.monomials)}

    def d(self, k: int) -> "Jet":
        out, src, fac = _derivative(self.space, k)
        return Jet(out, self.c[..., np.maximum(src, 0)] * fac)

    def to(self, space: JetSpace) -> "Jet":
        if space == self.space:
            return self
        di, si = _conversion(self.space, space)
        c = np.zeros(self.shape + (space.size,))
        c[..., di] = self.c[..., si]
        return Jet(space, c)

    def nilpotent(self) -> "Jet":
        c = self.c.copy()
        c[..., 0] = 0.0
        return Jet(self.space, c)

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            return Jet(self.space, self.c[idx + (slice(None),)])
        return Jet(self.space, self.c[idx + (Ellipsis, slice(None))])

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, space={self.space}, value={self.value!r})"

    # arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> tuple["Jet", "Jet"]:
        if isinstance(other, Jet):
            if other.space == self.space:
                return self, other
            s = self.space.meet(other.space)
            return self.to(s), other.to(s)
        return self, Jet.constant(self.space, other)

    def __add__(self, other) -> "Jet":
        a, b = self._coerce(other)
        return Jet(a.space, a.c + b.c)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(self.space, -self.c)

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.space, self.c * np.asarray(other, dtype=float)[..., None])
        a, b = self._coerce(other)
        t = a.space.tables
        return Jet(a.space, t.reduce(a.c[..., t.p] * b.c[..., t.q]))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * reciprocal(other)

    def __rtruediv__(self, other) -> "Jet":
        return reciprocal(self) * other

    def __pow__(self, k: int) -> "Jet":
        if int(k) != k:
            raise TypeError("jets support integer powers only")
        k = int(k)
        if k < 0:
            return reciprocal(self ** (-k))
        out = Jet.constant(self.space, np.ones(self.shape))
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out


# univariate composition -------------------------------------------------

def compose(a: Jet, coeffs: list[np.ndarray]) -> Jet:
    """Evaluate sum_k coeffs[k] * N**k where N is the nilpotent part of ``a``.

    ``coeffs[k]`` are the Taylor coefficients f^(k)(a0)/k! (arrays broadcasting
    against ``a.shape``).
    """
    n = a.nilpotent()
    deg = min(len(coeffs) - 1, a.space.dtot)
    out = Jet.constant(a.space, np.broadcast_to(coeffs[deg], a.shape))
    for k in range(deg - 1, -1, -1):
        out = out * n + coeffs[k]
    return out


def _series_reciprocal(s: np.ndarray, order: int) -> np.ndarray:
    """Univariate power series 1/s, coefficients along the first axis."""
    r = np.zeros((order + 1,) + s.shape[1:])
    r[0] = 1.0 / s[0]
    for k in range(1, order + 1):
        acc = sum(s[j] * r[k - j] for j in range(1, min(k, len(s) - 1) + 1))
        r[k] = -acc / s[0]
    return r


def reciprocal(a: Jet) -> Jet:
    a0 = a.value
    if np.any(a0 == 0.0):
        raise ZeroDivisionError("division by a jet with zero value")
    d = a.space.dtot
    inv = 1.0 / a0
    return compose(a, [inv * (-inv) ** k for k in range(d + 1)])


def exp(a: Jet) -> Jet:
    e = np.exp(a.value)
    return compose(a, [e / math.factorial(k) for k in range(a.space.dtot + 1)])


def log(a: Jet) -> Jet:
    a0 = a.value
    if np.any(a0 <= 0.0):
        raise ValueError("log of non-positive value")
    inv = 1.0 / a0
    cs = [np.log(a0)] + [(-1) ** (k + 1) / k * inv ** k for k in range(1, a.space.dtot + 1)]
    return compose(a, cs)


def sqrt(a: Jet) -> Jet:
    a0 = a.value
    if np.any(a0 <= 0.0):
        raise ValueError("sqrt of non-positive value")
    r = np.sqrt(a0)
    cs, binom = [], 1.0
    for k in range(a.space.dtot + 1):
        cs.append(binom * r / a0 ** k)
        binom *= (0.5 - k) / (k + 1)
    return compose(a, cs)


def sin(a: Jet) -> Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cyc = [s, c, -s, -c]
    return compose(a, [cyc[k % 4] / math.factorial(k) for k in range(a.space.dtot + 1)])


def cos(a: Jet) -> Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cyc = [c, -s, -c, s]
    return compose(a, [cyc[k % 4] / math.factorial(k) for k in range(a.space.dtot + 1)])


def tan(a: Jet) -> Jet:
    d = a.space.dtot
    t = np.zeros((d + 1,) + a.shape)
    t[0] = np.tan(a.value)
    # tan' = 1 + tan^2
    for k in range(d):
        sq = sum(t[j] * t[k - j] for j in range(k + 1))
        t[k + 1] = ((1.0 if k == 0 else 0.0) + sq) / (k + 1)
    return compose(a, list(t))


def atan(a: Jet) -> Jet:
    d = a.space.dtot
    a0 = a.value
    # atan' = 1/(1 + (a0 + s)^2), integrated term by term
    q = np.zeros((3,) + a.shape)
    q[0] = 1.0 + a0 ** 2
    q[1] = 2.0 * a0
    q[2] = 1.0
    r = _series_reciprocal(q, max(d - 1, 0))
    cs = [np.arctan(a0)] + [r[k - 1] / k for k in range(1, d + 1)]
    return compose(a, cs)


# tensor helpers ---------------------------------------------------------

def stack(jets, axis: int = 0) -> Jet:
    jets = list(jets)
    space = jets[0].space
    for j in jets[1:]:
        space = space.meet(j.space)
    cs = [j.to(space).c for j in jets]
    if axis < 0:
        axis -= 1
    return Jet(space, np.stack(cs, axis=axis))


def einsum(subscripts: str, a, b) -> Jet:
    """Two-operand contraction where either operand may be a plain array."""
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        raise TypeError("einsum needs at least one Jet operand")
    if not isinstance(b, Jet):
        return Jet(a.space, np.einsum(f"{sa}Z,{sb}->{out}Z", a.c, np.asarray(b, dtype=float)))
    if not isinstance(a, Jet):
        return Jet(b.space, np.einsum(f"{sa},{sb}Z->{out}Z", np.asarray(a, dtype=float), b.c))
    a, b = a._coerce(b)
    t = a.space.tables
    prod = np.einsum(f"{sa}Z,{sb}Z->{out}Z", a.c[..., t.p], b.c[..., t.q])
    return Jet(a.space, t.reduce(prod))


def jsum(a: Jet, axis) -> Jet:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax - 1 if ax < 0 else ax for ax in axes)
    return Jet(a.space, a.c.sum(axis=axes))


def transpose(a: Jet, axes) -> Jet:
    return Jet(a.space, a.c.transpose(tuple(axes) + (a.c.ndim - 1,)))


def inv(m: Jet) -> Jet:
    """Inverse of a (batched) square matrix of jets by a terminating Neumann series."""
    m0 = np.linalg.inv(m.value)
    a0 = Jet.constant(m.space, m0)
    step = -einsum("...ij,...jk->...ik", a0, m.nilpotent())
    out = a0
    for _ in range(m.space.dtot):
        out = a0 + einsum("...ij,...jk->...ik", step, out)
    return out
