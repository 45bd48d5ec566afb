"""Exact sparse multivariate polynomials, polynomial vector fields, Lie brackets.

Polynomials are stored as ``{exponent_tuple: coefficient}`` dicts with zero
coefficients dropped, so equality of two polynomials is exact coefficient
equality.  All algebra here (sums, products, derivatives, brackets) is exact
for integer-valued coefficients within float64 range, which is what the
bracket-spanning checks rely on.

A vector field on R^m is a length-m tuple of polynomials.  The generator of
the diffusion dx = b dt + sigma dW acts on a test polynomial w as

    L w = sum_i b_i d_i w + 1/2 sum_ij a_ij d_i d_j w,       a = sigma sigma^T,

and the same operator factors through first-order fields as
``X0 + 1/2 sum_i X_i^2`` where X_i is the i-th column of sigma and X0 absorbs
the correction term ``-1/2 sum_{i,j} sigma_ji d_j(sigma_li)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MultiPoly",
    "PolyVectorField",
    "BracketEntry",
    "BracketReport",
    "apply_generator",
    "diffusion_matrix",
    "sigma_columns",
    "to_hormander_form",
    "check_parabolic_hormander",
    "check_hormander_fields",
]


class MultiPoly:
    """Sparse polynomial in ``dim`` variables with float64 coefficients."""

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms: dict | None = None):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        clean: dict[tuple[int, ...], float] = {}
        for expts, coeff in (terms or {}).items():
            expts = tuple(int(e) for e in expts)
            if len(expts) != dim:
                raise ValueError(f"exponent tuple {expts} has wrong length for dim={dim}")
            if any(e < 0 for e in expts):
                raise ValueError(f"negative exponent in {expts}")
            c = float(coeff)
            if c != 0.0:
                clean[expts] = clean.get(expts, 0.0) + c
                if clean[expts] == 0.0:
                    del clean[expts]
        self.terms = clean

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, dim: int) -> "MultiPoly":
        return cls(dim, {})

    @classmethod
    def const(cls, dim: int, c: float) -> "MultiPoly":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def coordinate(cls, dim: int, i: int) -> "MultiPoly":
        """The monomial x_i."""
        if not 0 <= i < dim:
            raise ValueError(f"coordinate index {i} out of range for dim={dim}")
        e = [0] * dim
        e[i] = 1
        return cls(dim, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, dim: int, expts: Sequence[int], coeff: float = 1.0) -> "MultiPoly":
        return cls(dim, {tuple(expts): coeff})

    # -- algebra ------------------------------------------------------

    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return other
        return MultiPoly.const(self.dim, float(other))

    def __add__(self, other) -> "MultiPoly":
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return MultiPoly(self.dim, out)

    __radd__ = __add__

    def __neg__(self) -> "MultiPoly":
        return MultiPoly(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "MultiPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "MultiPoly":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "MultiPoly":
        if not isinstance(other, MultiPoly):
            c = float(other)
            return MultiPoly(self.dim, {e: c * v for e, v in self.terms.items()})
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return MultiPoly(self.dim, out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "MultiPoly":
        if n < 0 or n != int(n):
            raise ValueError("only nonnegative integer powers")
        out = MultiPoly.const(self.dim, 1.0)
        for _ in range(int(n)):
            out = out * self
        return out

    def diff(self, i: int) -> "MultiPoly":
        """Partial derivative with respect to x_i."""
        if not 0 <= i < self.dim:
            raise ValueError(f"diff index {i} out of range")
        out: dict[tuple[int, ...], float] = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            ne = list(e)
            ne[i] -= 1
            key = tuple(ne)
            out[key] = out.get(key, 0.0) + c * e[i]
        return MultiPoly(self.dim, out)

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(e) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __call__(self, x):
        """Evaluate at a point (dim,) or a batch (n, dim) of points."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        if pts.shape[-1] != self.dim:
            raise ValueError(f"points have dim {pts.shape[-1]}, expected {self.dim}")
        acc = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            term = np.full(pts.shape[0], c)
            for i, p in enumerate(e):
                if p:
                    term = term * pts[:, i] ** p
            acc += term
        return float(acc[0]) if single else acc

    # -- structure ----------------------------------------------------

    def canonical(self) -> tuple:
        """Hashable exact-identity key (used for bracket deduplication)."""
        return (self.dim, tuple(sorted(self.terms.items())))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.dim == other.dim and self.terms == other.terms

    def __hash__(self):
        return hash(self.canonical())

    def to_jsonable(self) -> list:
        return [[list(e), c] for e, c in sorted(self.terms.items())]

    @classmethod
    def from_jsonable(cls, dim: int, data: Iterable) -> "MultiPoly":
        terms: dict[tuple[int, ...], float] = {}
        for item in data:
            if len(item) != 2:
                raise ValueError(f"bad polynomial term {item!r}, expected [exponents, coeff]")
            expts, coeff = item
            key = tuple(int(e) for e in expts)
            terms[key] = terms.get(key, 0.0) + float(coeff)
        return cls(dim, terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(
                f"x{i}" if p == 1 else f"x{i}^{p}" for i, p in enumerate(e) if p
            )
            if mono:
                parts.append(f"{c:g}*{mono}")
            else:
                parts.append(f"{c:g}")
        return " + ".join(parts).replace("+ -", "- ")


class PolyVectorField:
    """Vector field on R^dim with polynomial components (length-dim tuple)."""

    __slots__ = ("dim", "components")

    def __init__(self, components: Sequence[MultiPoly]):
        components = tuple(components)
        if not components:
            raise ValueError("empty vector field")
        dim = components[0].dim
        if len(components) != dim:
            raise ValueError(
                f"vector field needs {dim} components for dim={dim}, got {len(components)}"
            )
        if any(c.dim != dim for c in components):
            raise ValueError("component dimension mismatch")
        self.dim = dim
        self.components = components

    @classmethod
    def zero(cls, dim: int) -> "PolyVectorField":
        return cls(tuple(MultiPoly.zero(dim) for _ in range(dim)))

    @classmethod
    def from_jsonable(cls, dim: int, data: Iterable) -> "PolyVectorField":
        comps = [MultiPoly.from_jsonable(dim, item) for item in data]
        return cls(comps)

    def to_jsonable(self) -> list:
        return [c.to_jsonable() for c in self.components]

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        return PolyVectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        return PolyVectorField([a - b for a, b in zip(self.components, other.components)])

    def __mul__(self, c: float) -> "PolyVectorField":
        return PolyVectorField([p * c for p in self.components])

    __rmul__ = __mul__

    def __neg__(self) -> "PolyVectorField":
        return self * -1.0

    def apply_to(self, w: MultiPoly) -> MultiPoly:
        """First-order action X(w) = sum_i X^i d_i w."""
        out = MultiPoly.zero(self.dim)
        for i, comp in enumerate(self.components):
            out = out + comp * w.diff(i)
        return out

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def canonical(self) -> tuple:
        return tuple(c.canonical() for c in self.components)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.components == other.components

    def __hash__(self):
        return hash(self.canonical())

    def evaluate(self, x):
        """Evaluate all components at (dim,) or (n, dim) points."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        out = np.column_stack([np.atleast_1d(c(pts)) for c in self.components])
        return out[0] if single else out

    def __repr__(self) -> str:
        return "(" + ", ".join(repr(c) for c in self.components) + ")"


def lie_bracket(X: PolyVectorField, Y: PolyVectorField) -> PolyVectorField:
    """Commutator [X, Y]^j = sum_i (X^i d_i Y^j - Y^i d_i X^j)."""
    if X.dim != Y.dim:
        raise ValueError("dimension mismatch")
    comps = []
    for j in range(X.dim):
        acc = MultiPoly.zero(X.dim)
        for i in range(X.dim):
            acc = acc + X.components[i] * Y.components[j].diff(i)
            acc = acc - Y.components[i] * X.components[j].diff(i)
        comps.append(acc)
    return PolyVectorField(comps)


def sigma_columns(sigma: Sequence[Sequence[MultiPoly]]) -> list[PolyVectorField]:
    """Columns of the (dim_state x dim_noise) diffusion coefficient as fields."""
    m = len(sigma)
    r = len(sigma[0])
    if any(len(row) != r for row in sigma):
        raise ValueError("ragged sigma matrix")
    return [PolyVectorField([sigma[j][i] for j in range(m)]) for i in range(r)]


def diffusion_matrix(sigma: Sequence[Sequence[MultiPoly]]) -> list[list[MultiPoly]]:
    """a = sigma sigma^T as an exact polynomial matrix."""
    m = len(sigma)
    r = len(sigma[0])
    a = [[MultiPoly.zero(sigma[0][0].dim) for _ in range(m)] for _ in range(m)]
    for j in range(m):
        for l in range(m):
            acc = MultiPoly.zero(sigma[0][0].dim)
            for i in range(r):
                acc = acc + sigma[j][i] * sigma[l][i]
            a[j][l] = acc
    return a


def apply_generator(
    b: PolyVectorField, a: Sequence[Sequence[MultiPoly]], w: MultiPoly
) -> MultiPoly:
    """L w = sum_i b_i d_i w + 1/2 sum_ij a_ij d_i d_j w, exactly."""
    out = b.apply_to(w)
    m = b.dim
    for i in range(m):
        di = w.diff(i)
        for j in range(m):
            out = out + 0.5 * (a[i][j] * di.diff(j))
    return out


def to_hormander_form(
    b: PolyVectorField, sigma: Sequence[Sequence[MultiPoly]]
) -> tuple[PolyVectorField, list[PolyVectorField]]:
    """Split L into first-order fields: L = X0 + 1/2 sum_i X_i^2.

    X_i is column i of sigma; X0 is the drift minus the Ito-to-Stratonovich
    correction ``1/2 sum_{i,j} sigma_ji d_j(sigma_li)`` in component l.  The
    factor 1/2 is forced by the reconstruction identity
    ``(X0 + 1/2 sum X_i^2) w == L w``, which the test suite checks.
    """
    cols = sigma_columns(sigma)
    m = b.dim
    corr = []
    for l in range(m):
        acc = MultiPoly.zero(m)
        for Xi in cols:
            for j in range(m):
                acc = acc + Xi.components[j] * Xi.components[l].diff(j)
        corr.append(0.5 * acc)
    X0 = b - PolyVectorField(corr)
    return X0, cols


@dataclass(frozen=True)
class BracketEntry:
    """One generated field: its derivation label, bracket depth, and value."""

    label: str
    depth: int
    field: PolyVectorField


@dataclass(frozen=True)
class BracketReport:
    """Outcome of a bracket-spanning check over a finite set of points."""

    dim: int
    mode: str
    max_depth: int
    rank_tol: float
    points: np.ndarray           # (n_pts, dim)
    entries: tuple[BracketEntry, ...]
    ranks: np.ndarray            # (n_pts,) rank using all generated fields
    depth_achieved: np.ndarray   # (n_pts,) first depth with full rank, -1 if never

    @property
    def spans_everywhere(self) -> bool:
        return bool(np.all(self.ranks == self.dim))

    @property
    def depth_used(self) -> int:
        """Largest per-point depth needed; -1 when some point never spans."""
        if not self.spans_everywhere:
            return -1
        return int(self.depth_achieved.max())

    def find(self, label: str) -> PolyVectorField | None:
        for e in self.entries:
            if e.label == label:
                return e.field
        return None

    def to_jsonable(self) -> dict:
        return {
            "dim": self.dim,
            "mode": self.mode,
            "max_depth": self.max_depth,
            "rank_tol": self.rank_tol,
            "spans_everywhere": self.spans_everywhere,
            "points": self.points.tolist(),
            "ranks": self.ranks.tolist(),
            "depth_achieved": self.depth_achieved.tolist(),
            "fields": [
                {"label": e.label, "depth": e.depth, "components": e.field.to_jsonable()}
                for e in self.entries
            ],
        }

    def format_table(self) -> str:
        lines = [
            f"bracket span check (mode={self.mode}, max_depth={self.max_depth}, "
            f"rank_tol={self.rank_tol:g})",
            f"fields generated: {len(self.entries)}",
        ]
        for e in self.entries:
            lines.append(f"  depth {e.depth}: {e.label} = {e.field!r}")
        lines.append("point -> rank / depth_achieved")
        for p, r, d in zip(self.points, self.ranks, self.depth_achieved):
            coords = ", ".join(f"{v:g}" for v in p)
            lines.append(f"  ({coords}) -> {r} / {d}")
        lines.append(f"spans everywhere: {self.spans_everywhere}")
        return "\n".join(lines)


def _numeric_rank(mat: np.ndarray, rank_tol: float) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def check_hormander_fields(
    X0: PolyVectorField,
    Xs: Sequence[PolyVectorField],
    points,
    max_depth: int = 4,
    rank_tol: float = 1e-8,
    mode: str = "parabolic",
) -> BracketReport:
    """Iterated-bracket span check at the given points.

    mode="parabolic": depth-0 list is {X_1..X_r} (drift excluded from the
    spanning set but used for bracketing).  mode="full": X0 joins the depth-0
    list.  Each level brackets the previous level's fields against every basis
    field in both orders; duplicates (exact coefficient equality) and zero
    fields are dropped.  Generation stops early once every point has full
    rank.
    """
    if mode not in ("parabolic", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dim = X0.dim
    if pts.shape[1] != dim:
        raise ValueError("points dimension mismatch")

    basis = [("X0", X0)] + [(f"X{i + 1}", Xi) for i, Xi in enumerate(Xs)]
    entries: list[BracketEntry] = []
    seen: set = set()

    def _push(label: str, depth: int, F: PolyVectorField) -> bool:
        if F.is_zero():
            return False
        key = F.canonical()
        if key in seen:
            return False
        seen.add(key)
        entries.append(BracketEntry(label, depth, F))
        return True

    depth0 = basis if mode == "full" else basis[1:]
    level = []
    for lbl, f in depth0:
        if _push(lbl, 0, f):
            level.append(entries[-1])

    n_pts = pts.shape[0]
    depth_achieved = np.full(n_pts, -1, dtype=np.int64)
    ranks = np.zeros(n_pts, dtype=np.int64)

    def _update_ranks(depth: int):
        fields = [e.field for e in entries if e.depth <= depth]
        for k in range(n_pts):
            if depth_achieved[k] >= 0:
                continue
            mat = np.array([f.evaluate(pts[k]) for f in fields], dtype=np.float64)
            r = _numeric_rank(mat, rank_tol)
            ranks[k] = max(ranks[k], r)
            if r == dim:
                depth_achieved[k] = depth

    _update_ranks(0)
    depth = 0
    while depth < max_depth and np.any(depth_achieved < 0) and level:
        depth += 1
        new_level: list[BracketEntry] = []
        for prev in level:
            for lbl, B in basis:
                for X, Y, label in (
                    (B, prev.field, f"[{lbl}, {prev.label}]"),
                    (prev.field, B, f"[{prev.label}, {lbl}]"),
                ):
                    C = lie_bracket(X, Y)
                    if _push(label, depth, C):
                        new_level.append(entries[-1])
        level = new_level
        _update_ranks(depth)

    return BracketReport(
        dim=dim,
        mode=mode,
        max_depth=max_depth,
        rank_tol=rank_tol,
        points=pts,
        entries=tuple(entries),
        ranks=ranks,
        depth_achieved=depth_achieved,
    )


def check_parabolic_hormander(
    drift: PolyVectorField,
    sigma: Sequence[Sequence[MultiPoly]],
    points,
    max_depth: int = 4,
    rank_tol: float = 1e-8,
    mode: str = "parabolic",
) -> BracketReport:
    """Bracket span check for a diffusion given by drift and noise coefficients."""
    X0, Xs = to_hormander_form(drift, sigma)
    return check_hormander_fields(
        X0, Xs, points, max_depth=max_depth, rank_tol=rank_tol, mode=mode
    )
