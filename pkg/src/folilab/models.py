"""Built-in embedded foliated manifolds with periodic charts.

Every model is a single periodic chart ``x = (u_1..u_p, w_1..w_q)`` mapped
into R^N by an explicit embedding.  Leaves are the slices with fixed
transverse coordinates ``w``; leaf coordinates always come first.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParams, UnsupportedDrift

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ModelOracle:
    """Closed-form reference values, used only by tests and reports."""

    h_norm_sq: Optional[Callable] = None     # chart points -> ||H||^2
    kappa_norm: Optional[Callable] = None    # chart points -> ||kappa||
    lambda_sum: Optional[float] = None       # driftless exponent sum, if known


@dataclass(frozen=True, eq=False)
class FoliatedModel:
    name: str
    p: int                       # leaf dimension
    q: int                       # transverse dimension
    ambient_dim: int
    params: dict
    periods: np.ndarray          # per manifold coordinate (fundamental domain)
    embedding: Callable          # (..., d) -> (..., N)
    analytic_jacobian: Optional[Callable] = None
    oracle: Optional[ModelOracle] = None
    # Chart coords need not be global manifold coordinates (irrational-slope
    # foliations shear them; the chart is then periodic only along a skew
    # lattice); these convert to/from a coordinate system whose fundamental
    # domain covers the manifold once per period.
    chart_to_manifold: Optional[Callable] = None
    manifold_to_chart: Optional[Callable] = None
    # Per chart coordinate: is a shift by the period a true symmetry of the
    # embedding?  Coordinates where it is not are left unwrapped.
    wrap_mask: Optional[np.ndarray] = None
    # When chart -> manifold is linear, its matrix (manifold = x @ shear.T up
    # to wrapping); lets hot paths skip the generic conversion.
    chart_shear: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.p + self.q

    def embed(self, x):
        return self.embedding(np.asarray(x, dtype=float))

    def wrap(self, x):
        x = np.asarray(x, dtype=float)
        if self.wrap_mask is None:
            return np.mod(x, self.periods)
        return np.where(self.wrap_mask, np.mod(x, self.periods), x)

    def to_manifold(self, x):
        x = np.asarray(x, dtype=float)
        if self.chart_to_manifold is None:
            return np.mod(x, self.periods)
        return self.chart_to_manifold(x)

    def from_manifold(self, y):
        y = np.asarray(y, dtype=float)
        if self.manifold_to_chart is None:
            return np.mod(y, self.periods)
        return self.manifold_to_chart(y)


def _validate(model, grid_n=20, tol_periodic=1e-12, tol_rank=1e-8):
    d = model.dim
    axes = [np.linspace(0.0, per, grid_n, endpoint=False) for per in model.periods]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    base = model.embed(grid)
    mask = model.wrap_mask if model.wrap_mask is not None else np.ones(d, dtype=bool)
    for k in range(d):
        if not mask[k]:
            continue
        shifted = grid.copy()
        shifted[:, k] += model.periods[k]
        err = np.linalg.norm(model.embed(shifted) - base, axis=-1).max()
        if err > tol_periodic:
            raise InvalidParams(
                f"{model.name}: embedding not periodic in coordinate {k} (err={err:.2e})")
    jac = model.analytic_jacobian(grid)
    smin = np.linalg.svd(jac, compute_uv=False)[..., -1].min()
    if smin < tol_rank:
        raise InvalidParams(f"{model.name}: chart degenerates (min singular value {smin:.2e})")
    return model


def circle_model():
    """Unit circle in R^2, foliated by itself (p = 1, q = 0)."""

    def embed(x):
        th = x[..., 0]
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    def jac(x):
        th = x[..., 0]
        return np.stack([-np.sin(th), np.cos(th)], axis=-1)[..., None]

    oracle = ModelOracle(
        h_norm_sq=lambda x: np.ones(np.shape(x)[:-1]),
        kappa_norm=lambda x: np.zeros(np.shape(x)[:-1]),
        lambda_sum=-0.5,
    )
    return _validate(FoliatedModel(
        name="circle", p=1, q=0, ambient_dim=2, params={},
        periods=np.array([TWO_PI]), embedding=embed,
        analytic_jacobian=jac, oracle=oracle,
    ))


def clifford_torus(alpha):
    """Flat torus in R^4 foliated by slope-``alpha`` lines.

    Chart coordinates are (s, w) with torus angles (u, v) = (s, alpha*s + w),
    so leaves are exactly {w = const}.  Irrational ``alpha`` gives dense
    leaves.  The leaves are geodesics of the flat metric, hence kappa = 0,
    and each leaf curve has constant curvature
    ``||H||^2 = (1 + alpha^4) / (1 + alpha^2)^2``.
    """
    alpha = float(alpha)
    if not np.isfinite(alpha):
        raise InvalidParams("clifford_torus: alpha must be finite")

    def embed(x):
        s, w = x[..., 0], x[..., 1]
        v = alpha * s + w
        return np.stack([np.cos(s), np.sin(s), np.cos(v), np.sin(v)], axis=-1)

    def jac(x):
        s, w = x[..., 0], x[..., 1]
        v = alpha * s + w
        zero = np.zeros_like(s)
        d_s = np.stack([-np.sin(s), np.cos(s), -alpha * np.sin(v), alpha * np.cos(v)], axis=-1)
        d_w = np.stack([zero, zero, -np.sin(v), np.cos(v)], axis=-1)
        return np.stack([d_s, d_w], axis=-1)

    def to_manifold(x):
        u = np.mod(x[..., 0], TWO_PI)
        v = np.mod(alpha * x[..., 0] + x[..., 1], TWO_PI)
        return np.stack([u, v], axis=-1)

    def from_manifold(y):
        s = np.mod(y[..., 0], TWO_PI)
        w = np.mod(y[..., 1] - alpha * y[..., 0], TWO_PI)
        return np.stack([s, w], axis=-1)

    h2 = (1.0 + alpha ** 4) / (1.0 + alpha ** 2) ** 2
    oracle = ModelOracle(
        h_norm_sq=lambda x: np.full(np.shape(x)[:-1], h2),
        kappa_norm=lambda x: np.zeros(np.shape(x)[:-1]),
        lambda_sum=-0.5 * h2,
    )
    # Shifting s by 2*pi is a symmetry of the embedding only for integer
    # slopes; otherwise the chart is periodic only along the skew lattice
    # (2*pi, -2*pi*alpha) and the leaf coordinate is left unwrapped.
    s_wraps = abs(alpha - round(alpha)) < 1e-12
    return _validate(FoliatedModel(
        name="clifford", p=1, q=1, ambient_dim=4, params={"alpha": alpha},
        periods=np.array([TWO_PI, TWO_PI]), embedding=embed,
        analytic_jacobian=jac, oracle=oracle,
        chart_to_manifold=to_manifold, manifold_to_chart=from_manifold,
        wrap_mask=np.array([s_wraps, True]),
        chart_shear=np.array([[1.0, 0.0], [alpha, 1.0]]),
    ))


def torus_revolution(R, r):
    """Torus of revolution in R^3 foliated by meridian circles.

    Leaf coordinate is the meridian angle theta, transverse coordinate the
    revolution angle phi.  Meridians are planar circles of radius ``r``, so
    ``||H|| = 1/r``, while the transverse holonomy stretches leaves and gives
    the nonzero tension ``||kappa||(theta) = |sin theta| / (R + r cos theta)``.
    """
    R, r = float(R), float(r)
    if not (R > r > 0.0):
        raise InvalidParams(f"torus_revolution requires R > r > 0, got R={R}, r={r}")

    def embed(x):
        th, ph = x[..., 0], x[..., 1]
        ring = R + r * np.cos(th)
        return np.stack([ring * np.cos(ph), ring * np.sin(ph), r * np.sin(th)], axis=-1)

    def jac(x):
        th, ph = x[..., 0], x[..., 1]
        ring = R + r * np.cos(th)
        zero = np.zeros_like(th)
        d_th = np.stack([-r * np.sin(th) * np.cos(ph),
                         -r * np.sin(th) * np.sin(ph),
                         r * np.cos(th)], axis=-1)
        d_ph = np.stack([-ring * np.sin(ph), ring * np.cos(ph), zero], axis=-1)
        return np.stack([d_th, d_ph], axis=-1)

    oracle = ModelOracle(
        h_norm_sq=lambda x: np.full(np.shape(x)[:-1], 1.0 / r ** 2),
        kappa_norm=lambda x: np.abs(np.sin(x[..., 0])) / (R + r * np.cos(x[..., 0])),
    )
    return _validate(FoliatedModel(
        name="torus_revolution", p=1, q=1, ambient_dim=3, params={"R": R, "r": r},
        periods=np.array([TWO_PI, TWO_PI]), embedding=embed,
        analytic_jacobian=jac, oracle=oracle,
    ))


_BUILTINS = {
    "circle": (circle_model, ()),
    "clifford": (clifford_torus, ("alpha",)),
    "torus_revolution": (torus_revolution, ("R", "r")),
}


def get_model(name, params=None):
    """Construct a built-in model by name with named parameters."""
    if name not in _BUILTINS:
        raise InvalidParams(f"unknown model '{name}' (choose from {sorted(_BUILTINS)})")
    ctor, keys = _BUILTINS[name]
    params = dict(params or {})
    unknown = set(params) - set(keys)
    if unknown:
        raise InvalidParams(f"model '{name}' does not accept parameters {sorted(unknown)}")
    missing = set(keys) - set(params)
    if missing:
        raise InvalidParams(f"model '{name}' is missing parameters {sorted(missing)}")
    return ctor(**{k: params[k] for k in keys})


@dataclass(frozen=True)
class DriftSpec:
    kind: str = "none"
    c: float = 0.0


class DriftField:
    """Leafwise drift V; by construction a section of the leaf bundle E."""

    def __init__(self, model, spec):
        if spec.kind not in ("none", "leaf_constant"):
            raise UnsupportedDrift(f"drift kind '{spec.kind}' is not supported")
        self.model = model
        self.spec = spec

    @property
    def is_zero(self):
        return self.spec.kind == "none" or self.spec.c == 0.0

    def ambient(self, x):
        """V at chart points, as ambient vectors (..., N)."""
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros(x.shape[:-1] + (self.model.ambient_dim,))
        jac = self.model.analytic_jacobian(x)
        col = jac[..., :, 0]
        norm = np.linalg.norm(col, axis=-1, keepdims=True)
        return self.spec.c * col / norm

    def chart(self, x):
        """Chart coefficients of V on the leaf coordinates, (..., p)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.model.p,))
        if self.is_zero:
            return out
        jac = self.model.analytic_jacobian(x)
        norm = np.linalg.norm(jac[..., :, 0], axis=-1)
        out[..., 0] = self.spec.c / norm
        return out


def drift_field(model, spec):
    """Build the drift field for a spec: zero drift, or a unit leafwise
    direction (first leaf coordinate, normalized in g) scaled by ``c``."""
    if isinstance(spec, str):
        spec = DriftSpec(kind=spec)
    return DriftField(model, spec)


def test_function_set(model, name="trig"):
    """Named sets of smooth periodic scalar test functions on chart coords.

    Functions are defined in manifold coordinates so they are single valued
    on the manifold even when the chart is sheared.
    """
    if name != "trig":
        raise InvalidParams(f"unknown test function set '{name}'")
    d = model.dim
    if d == 1:
        specs = [("cos_u", lambda u: np.cos(u[..., 0])),
                 ("sin_u", lambda u: np.sin(u[..., 0])),
                 ("cos_2u", lambda u: np.cos(2 * u[..., 0])),
                 ("sin_2u", lambda u: np.sin(2 * u[..., 0])),
                 ("cos_3u", lambda u: np.cos(3 * u[..., 0]))]
    else:
        specs = [("cos_u", lambda y: np.cos(y[..., 0])),
                 ("sin_u", lambda y: np.sin(y[..., 0])),
                 ("cos_v", lambda y: np.cos(y[..., 1])),
                 ("sin_v", lambda y: np.sin(y[..., 1])),
                 ("cos_u_plus_v", lambda y: np.cos(y[..., 0] + y[..., 1]))]

    def on_chart(fn):
        return lambda x: fn(model.to_manifold(x))

    return [(label, on_chart(fn)) for label, fn in specs]
