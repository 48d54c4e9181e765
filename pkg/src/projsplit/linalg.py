"""Block vectors, linear maps with adjoints, and the weighted product-space geometry.

A problem couples a primal space H0 with block spaces H1..H_{n-1} through
linear maps G_i; the last block lives on H0 itself with the identity map.
Iterates are primal-dual points p = (z, w_1, ..., w_{n-1}) measured in the
gamma-weighted inner product

    <(z1, w1), (z2, w2)>_gamma = gamma*<z1, z2> + sum_i <w1_i, w2_i>.

Everything here is immutable and safe to share; all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class Space:
    """A finite-dimensional real space, identified by its dimension."""

    dim: int

    def __post_init__(self):
        if not isinstance(self.dim, int) or isinstance(self.dim, bool) or self.dim < 1:
            raise ShapeError(f"space dimension must be a positive integer, got {self.dim!r}")

    def vec(self, entries) -> "Vec":
        return Vec(self, entries)

    def zeros(self) -> "Vec":
        return Vec(self, np.zeros(self.dim))


class Vec:
    """Immutable element of a :class:`Space`, backed by a float64 array.

    Construction rejects NaN/Inf, so downstream arithmetic never has to
    defend against them. Supports +, -, scalar *, /, dot and norm.
    """

    __slots__ = ("space", "entries")

    def __init__(self, space: Space, entries):
        arr = np.asarray(entries, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim != 1 or arr.shape[0] != space.dim:
            raise ShapeError(f"expected {space.dim} entries, got array of shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("vector entries must be finite (no NaN/Inf)")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "entries", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Vec is immutable")

    def _check_same_space(self, other: "Vec"):
        if not isinstance(other, Vec):
            raise ShapeError(f"expected a Vec, got {type(other).__name__}")
        if other.space != self.space:
            raise ShapeError(f"space mismatch: dim {self.space.dim} vs {other.space.dim}")

    def __add__(self, other: "Vec") -> "Vec":
        self._check_same_space(other)
        return Vec(self.space, self.entries + other.entries)

    def __sub__(self, other: "Vec") -> "Vec":
        self._check_same_space(other)
        return Vec(self.space, self.entries - other.entries)

    def __neg__(self) -> "Vec":
        return Vec(self.space, -self.entries)

    def __mul__(self, scalar) -> "Vec":
        return Vec(self.space, self.entries * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "Vec":
        return Vec(self.space, self.entries / float(scalar))

    def dot(self, other: "Vec") -> float:
        self._check_same_space(other)
        return float(np.dot(self.entries, other.entries))

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def allclose(self, other: "Vec", atol=0.0, rtol=1e-12) -> bool:
        self._check_same_space(other)
        return bool(np.allclose(self.entries, other.entries, atol=atol, rtol=rtol))

    def __repr__(self):
        return f"Vec(dim={self.space.dim}, {self.entries!r})"


class LinearMap:
    """Bounded linear map G between two spaces, with an exact adjoint.

    Three representations: dense matrix, identity, and diagonal. Identity
    application returns its argument unchanged, which makes the implicit
    last-block map free.
    """

    __slots__ = ("domain", "codomain", "kind", "matrix")

    def __init__(self, matrix, domain: Space | None = None, codomain: Space | None = None):
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2:
            raise ShapeError(f"dense map needs a 2-d matrix, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ShapeError("map entries must be finite")
        domain = domain or Space(mat.shape[1])
        codomain = codomain or Space(mat.shape[0])
        if (codomain.dim, domain.dim) != mat.shape:
            raise ShapeError(f"matrix shape {mat.shape} inconsistent with spaces "
                             f"({codomain.dim}, {domain.dim})")
        mat = mat.copy()
        mat.setflags(write=False)
        self.domain = domain
        self.codomain = codomain
        self.kind = "dense"
        self.matrix = mat

    @classmethod
    def identity(cls, space: Space) -> "LinearMap":
        m = cls.__new__(cls)
        m.domain = m.codomain = space
        m.kind = "identity"
        m.matrix = None
        return m

    @classmethod
    def diagonal(cls, diag) -> "LinearMap":
        d = np.asarray(diag, dtype=float)
        if d.ndim != 1 or not np.all(np.isfinite(d)):
            raise ShapeError("diagonal map needs a finite 1-d array")
        m = cls.__new__(cls)
        m.domain = m.codomain = Space(d.shape[0])
        m.kind = "diagonal"
        d = d.copy()
        d.setflags(write=False)
        m.matrix = d
        return m

    def apply(self, x: Vec) -> Vec:
        """G x."""
        if x.space != self.domain:
            raise ShapeError(f"map domain dim {self.domain.dim}, argument dim {x.space.dim}")
        if self.kind == "identity":
            return x
        if self.kind == "diagonal":
            return Vec(self.codomain, self.matrix * x.entries)
        return Vec(self.codomain, self.matrix @ x.entries)

    def apply_adjoint(self, y: Vec) -> Vec:
        """G* y, realized through the transpose."""
        if y.space != self.codomain:
            raise ShapeError(f"map codomain dim {self.codomain.dim}, argument dim {y.space.dim}")
        if self.kind == "identity":
            return y
        if self.kind == "diagonal":
            return Vec(self.domain, self.matrix * y.entries)
        return Vec(self.domain, self.matrix.T @ y.entries)

    def __call__(self, x: Vec) -> Vec:
        return self.apply(x)

    def __repr__(self):
        return f"LinearMap({self.kind}, {self.codomain.dim}x{self.domain.dim})"


class PrimalDualPoint:
    """The iterate p = (z, w_1, ..., w_{n-1}).

    The final dual block w_n = -sum_i G_i* w_i is never stored; it is
    recomputed on demand via :func:`derived_wn` so it can never go stale.
    """

    __slots__ = ("z", "w")

    def __init__(self, z: Vec, w=()):
        if not isinstance(z, Vec):
            raise ShapeError("z must be a Vec")
        w = tuple(w)
        for wi in w:
            if not isinstance(wi, Vec):
                raise ShapeError("every dual block must be a Vec")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)

    def __setattr__(self, name, value):
        raise AttributeError("PrimalDualPoint is immutable")

    @property
    def n_duals(self) -> int:
        return len(self.w)

    def __repr__(self):
        return f"PrimalDualPoint(z dim={self.z.space.dim}, {len(self.w)} dual blocks)"


def derived_wn(p: PrimalDualPoint, maps) -> Vec:
    """The derived last dual block -sum_i G_i* w_i; zero vector when there are no duals."""
    maps = tuple(maps)
    if len(maps) != len(p.w):
        raise ShapeError(f"{len(p.w)} dual blocks but {len(maps)} maps")
    out = p.z.space.zeros()
    for g, wi in zip(maps, p.w):
        out = out - g.apply_adjoint(wi)
    return out


def gamma_inner(p: PrimalDualPoint, q: PrimalDualPoint, gamma: float) -> float:
    """gamma*<z1,z2> + sum_i <w1_i, w2_i>."""
    if gamma <= 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    if len(p.w) != len(q.w):
        raise ShapeError(f"dual block count mismatch: {len(p.w)} vs {len(q.w)}")
    total = gamma * p.z.dot(q.z)
    for wp, wq in zip(p.w, q.w):
        total += wp.dot(wq)
    return total


def gamma_norm(p: PrimalDualPoint, gamma: float) -> float:
    """Norm induced by :func:`gamma_inner`."""
    return float(np.sqrt(gamma_inner(p, p, gamma)))


def point_diff(p: PrimalDualPoint, q: PrimalDualPoint) -> PrimalDualPoint:
    if len(p.w) != len(q.w):
        raise ShapeError(f"dual block count mismatch: {len(p.w)} vs {len(q.w)}")
    return PrimalDualPoint(p.z - q.z, tuple(wp - wq for wp, wq in zip(p.w, q.w)))
