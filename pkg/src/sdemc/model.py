"""Diffusion models, open domains with exact membership, exhaustions, JSON I/O.

A model is the pair (drift, sigma) of polynomial coefficient fields on R^m
driven by r Brownian components, together with an optional open state space.
Domains support an exact interior/boundary/exterior trichotomy: box, ball and
halfspace membership use plain arithmetic comparisons with no tolerance;
polynomial sublevel sets get a configurable boundary band since their values
are not exactly representable.

Model files are JSON with a versioned ``schema`` field; see ``load_model``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polyfield import (
    MultiPoly,
    PolyVectorField,
    apply_generator,
    diffusion_matrix,
)

__all__ = [
    "Domain",
    "DiffusionModel",
    "Exhaustion",
    "load_model",
    "model_from_dict",
    "boundary_sample",
    "INTERIOR",
    "BOUNDARY",
    "EXTERIOR",
    "MODEL_SCHEMA",
]

INTERIOR, BOUNDARY, EXTERIOR = -1, 0, 1

MODEL_SCHEMA = "diffusion-model/1"


@dataclass(frozen=True)
class Domain:
    """Open subset of R^dim from a fixed menu of shapes.

    kind is one of "full", "box", "ball", "outside_ball", "halfspace",
    "sublevel".  "outside_ball" is the complement of a closed ball (used for
    hitting-time probes).  The halfspace is {x : normal . x < offset} with the
    stored normal unit length.  The sublevel set is {x : p(x) < 0} with a
    relative tolerance band around p = 0 treated as boundary.
    """

    kind: str
    dim: int
    lo: tuple = ()
    hi: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    normal: tuple = ()
    offset: float = 0.0
    level_poly: MultiPoly | None = None
    boundary_tol: float = 1e-12

    # -- constructors ---------------------------------------------------

    @staticmethod
    def full(dim: int) -> "Domain":
        return Domain(kind="full", dim=dim)

    @staticmethod
    def box(lo: Sequence[float], hi: Sequence[float]) -> "Domain":
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != len(hi):
            raise ValueError("box lo/hi length mismatch")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("box needs lo < hi on every axis")
        return Domain(kind="box", dim=len(lo), lo=lo, hi=hi)

    @staticmethod
    def ball(center: Sequence[float], radius: float) -> "Domain":
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        c = tuple(float(v) for v in center)
        return Domain(kind="ball", dim=len(c), center=c, radius=float(radius))

    @staticmethod
    def outside_ball(center: Sequence[float], radius: float) -> "Domain":
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        c = tuple(float(v) for v in center)
        return Domain(kind="outside_ball", dim=len(c), center=c, radius=float(radius))

    @staticmethod
    def halfspace(normal: Sequence[float], offset: float) -> "Domain":
        n = np.asarray(normal, dtype=np.float64)
        norm = float(np.linalg.norm(n))
        if norm == 0.0:
            raise ValueError("halfspace normal must be nonzero")
        n = n / norm
        return Domain(
            kind="halfspace",
            dim=n.size,
            normal=tuple(n.tolist()),
            offset=float(offset) / norm,
        )

    @staticmethod
    def sublevel(p: MultiPoly, boundary_tol: float = 1e-12) -> "Domain":
        return Domain(kind="sublevel", dim=p.dim, level_poly=p, boundary_tol=boundary_tol)

    # -- membership -------------------------------------------------------

    def membership(self, x) -> np.ndarray:
        """Trichotomy per point: INTERIOR (-1), BOUNDARY (0), EXTERIOR (+1).

        Box/ball/halfspace comparisons are exact float comparisons.  Returns a
        scalar int for a single point, else an int8 array.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        if pts.shape[1] != self.dim:
            raise ValueError("point dimension mismatch")
        n = pts.shape[0]
        out = np.zeros(n, dtype=np.int8)
        if self.kind == "full":
            out[:] = INTERIOR
        elif self.kind == "box":
            lo = np.asarray(self.lo)
            hi = np.asarray(self.hi)
            inside = np.all((pts > lo) & (pts < hi), axis=1)
            outside = np.any((pts < lo) | (pts > hi), axis=1)
            out[inside] = INTERIOR
            out[outside] = EXTERIOR
        elif self.kind in ("ball", "outside_ball"):
            c = np.asarray(self.center)
            d2 = np.sum((pts - c) ** 2, axis=1)
            r2 = self.radius * self.radius
            if self.kind == "ball":
                out[d2 < r2] = INTERIOR
                out[d2 > r2] = EXTERIOR
            else:
                out[d2 > r2] = INTERIOR
                out[d2 < r2] = EXTERIOR
        elif self.kind == "halfspace":
            v = pts @ np.asarray(self.normal)
            out[v < self.offset] = INTERIOR
            out[v > self.offset] = EXTERIOR
        elif self.kind == "sublevel":
            vals = np.atleast_1d(self.level_poly(pts))
            scale = self.boundary_tol * (1.0 + np.abs(vals))
            out[vals < -scale] = INTERIOR
            out[vals > scale] = EXTERIOR
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        return int(out[0]) if single else out

    def contains(self, x) -> np.ndarray | bool:
        m = self.membership(x)
        if np.isscalar(m):
            return m == INTERIOR
        return m == INTERIOR

    def is_bounded(self) -> bool:
        return self.kind in ("box", "ball")

    def to_jsonable(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "box":
            d["lo"] = list(self.lo)
            d["hi"] = list(self.hi)
        elif self.kind in ("ball", "outside_ball"):
            d["center"] = list(self.center)
            d["radius"] = self.radius
        elif self.kind == "halfspace":
            d["normal"] = list(self.normal)
            d["offset"] = self.offset
        elif self.kind == "sublevel":
            d["poly"] = self.level_poly.to_jsonable()
            d["boundary_tol"] = self.boundary_tol
        if self.kind == "full":
            d["dim"] = self.dim
        return d

    @staticmethod
    def from_jsonable(d: dict, dim: int | None = None) -> "Domain":
        kind = d.get("kind")
        if kind == "full":
            return Domain.full(int(d.get("dim", dim)))
        if kind == "box":
            return Domain.box(d["lo"], d["hi"])
        if kind == "ball":
            return Domain.ball(d["center"], d["radius"])
        if kind == "outside_ball":
            return Domain.outside_ball(d["center"], d["radius"])
        if kind == "halfspace":
            return Domain.halfspace(d["normal"], d["offset"])
        if kind == "sublevel":
            if dim is None:
                raise ValueError("sublevel domain needs the ambient dimension")
            p = MultiPoly.from_jsonable(dim, d["poly"])
            return Domain.sublevel(p, d.get("boundary_tol", 1e-12))
        raise ValueError(f"unknown domain kind {kind!r}")


@dataclass(frozen=True)
class DiffusionModel:
    """SDE coefficients dx = b(x) dt + sigma(x) dW on R^dim_state.

    drift has polynomial components; sigma is a dim_state x dim_noise matrix
    of polynomials.  statespace defaults to all of R^m.
    """

    drift: PolyVectorField
    sigma: tuple  # tuple[tuple[MultiPoly, ...], ...], shape (dim_state, dim_noise)
    statespace: Domain | None = None
    name: str = ""

    def __post_init__(self):
        m = self.drift.dim
        if len(self.sigma) != m:
            raise ValueError("sigma row count must equal state dimension")
        r = len(self.sigma[0])
        if any(len(row) != r for row in self.sigma):
            raise ValueError("ragged sigma matrix")
        for row in self.sigma:
            for p in row:
                if p.dim != m:
                    raise ValueError("sigma entries must be polynomials in the state")
        if self.statespace is not None and self.statespace.dim != m:
            raise ValueError("statespace dimension mismatch")

    @property
    def dim_state(self) -> int:
        return self.drift.dim

    @property
    def dim_noise(self) -> int:
        return len(self.sigma[0])

    def diffusion(self) -> list:
        """a = sigma sigma^T as polynomials."""
        return diffusion_matrix(self.sigma)

    def generator(self, w: MultiPoly) -> MultiPoly:
        """Apply L = b . grad + 1/2 sum a_ij d_i d_j to a polynomial, exactly."""
        return apply_generator(self.drift, self.diffusion(), w)

    def drift_at(self, x) -> np.ndarray:
        return self.drift.evaluate(x)

    def sigma_at(self, x) -> np.ndarray:
        """sigma evaluated at one point, shape (dim_state, dim_noise)."""
        x = np.asarray(x, dtype=np.float64)
        return np.array([[p(x) for p in row] for row in self.sigma])

    def to_jsonable(self) -> dict:
        d = {
            "schema": MODEL_SCHEMA,
            "name": self.name,
            "dim_state": self.dim_state,
            "dim_noise": self.dim_noise,
            "drift": self.drift.to_jsonable(),
            "sigma": [[p.to_jsonable() for p in row] for row in self.sigma],
        }
        if self.statespace is not None:
            d["statespace"] = self.statespace.to_jsonable()
        return d


@dataclass(frozen=True)
class Exhaustion:
    """Increasing family of bounded open sets filling the state space.

    domain(n) is a ball (default) or box of scale ``scale * n`` around
    ``center``; monotonicity X_n subset X_{n+1} holds by construction.
    """

    dim: int
    kind: str = "balls"
    center: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("balls", "boxes"):
            raise ValueError(f"unknown exhaustion kind {self.kind!r}")
        if not self.center:
            object.__setattr__(self, "center", (0.0,) * self.dim)

    def domain(self, n: int) -> Domain:
        if n < 1:
            raise ValueError("exhaustion index must be >= 1")
        R = self.scale * n
        if self.kind == "balls":
            return Domain.ball(self.center, R)
        lo = [c - R for c in self.center]
        hi = [c + R for c in self.center]
        return Domain.box(lo, hi)

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "center": list(self.center),
            "scale": self.scale,
        }


def model_from_dict(spec: dict) -> tuple[DiffusionModel, Domain | None, Exhaustion, dict]:
    """Build (model, domain U, exhaustion, sim defaults) from a spec dict."""
    schema = spec.get("schema")
    if schema != MODEL_SCHEMA:
        raise ValueError(
            f"unsupported model schema {schema!r}; this build reads {MODEL_SCHEMA!r}"
        )
    m = int(spec["dim_state"])
    r = int(spec["dim_noise"])
    drift_data = spec["drift"]
    if len(drift_data) != m:
        raise ValueError("drift component count must equal dim_state")
    drift = PolyVectorField.from_jsonable(m, drift_data)
    sigma_data = spec["sigma"]
    if len(sigma_data) != m or any(len(row) != r for row in sigma_data):
        raise ValueError("sigma must be a dim_state x dim_noise matrix of term lists")
    sigma = tuple(
        tuple(MultiPoly.from_jsonable(m, entry) for entry in row) for row in sigma_data
    )
    statespace = None
    if "statespace" in spec:
        statespace = Domain.from_jsonable(spec["statespace"], dim=m)
    model = DiffusionModel(
        drift=drift, sigma=sigma, statespace=statespace, name=spec.get("name", "")
    )
    domain = None
    if "domain" in spec:
        domain = Domain.from_jsonable(spec["domain"], dim=m)
        if domain.dim != m:
            raise ValueError("domain dimension mismatch")
    exh_spec = spec.get("exhaustion", {})
    exhaustion = Exhaustion(
        dim=m,
        kind=exh_spec.get("kind", "balls"),
        center=tuple(exh_spec.get("center", ())) or (0.0,) * m,
        scale=float(exh_spec.get("scale", 1.0)),
    )
    sim_defaults = dict(spec.get("sim", {}))
    return model, domain, exhaustion, sim_defaults


def load_model(path) -> tuple[DiffusionModel, Domain | None, Exhaustion, dict]:
    """Read a model JSON file.  Raises ValueError on schema mismatch."""
    with open(path, "r") as fh:
        spec = json.load(fh)
    return model_from_dict(spec)


def model_file_sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def boundary_sample(domain: Domain, n: int, seed: int) -> np.ndarray:
    """n points distributed over the boundary of a bounded domain.

    Ball boundaries are sampled uniformly on the sphere (normalized
    gaussians); box boundaries pick a face with probability proportional to
    its area, then a uniform point on it.  Unbounded or implicit boundaries
    are rejected.
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    m = domain.dim
    if domain.kind in ("ball", "outside_ball"):
        g = rng.standard_normal((n, m))
        norms = np.linalg.norm(g, axis=1)
        # a fresh draw would be cleaner on degenerate zero rows; at float64 the
        # probability is far below anything observable
        norms[norms == 0.0] = 1.0
        pts = np.asarray(domain.center) + domain.radius * (g / norms[:, None])
        return pts
    if domain.kind == "box":
        lo = np.asarray(domain.lo)
        hi = np.asarray(domain.hi)
        edge = hi - lo
        if m == 1:
            side = rng.random(n) < 0.5
            return np.where(side, lo[0], hi[0])[:, None]
        areas = np.empty(2 * m)
        for k in range(m):
            face_area = np.prod(np.delete(edge, k))
            areas[2 * k] = face_area
            areas[2 * k + 1] = face_area
        probs = areas / areas.sum()
        faces = rng.choice(2 * m, size=n, p=probs)
        pts = lo + rng.random((n, m)) * edge
        for i in range(n):
            k, side = divmod(int(faces[i]), 2)
            pts[i, k] = hi[k] if side else lo[k]
        return pts
    raise ValueError(f"cannot sample the boundary of a {domain.kind!r} domain")
