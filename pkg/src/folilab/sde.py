"""Leafwise Brownian motion: Stratonovich integration and flow determinants.

The motion is integrated in chart coordinates through the pullback of the
gradient frame, so leaves are preserved exactly: transverse coordinates never
move.  The scheme is Heun predictor-corrector (Stratonovich); the
log-determinant of the derivative flow is accumulated stepwise as an Ito sum
over the same noise, and an independent variational oracle propagates the
flow Jacobian by bumping initial conditions through identical noise.

Noise arrays everywhere are standard normal draws of shape (n_steps, N);
integrators scale them by sqrt(dt) internally.
"""

from dataclasses import dataclass, replace, field as dc_field

import numpy as np

from . import geometry
from .errors import BumpTooLarge, FolilabError
from .interp import PeriodicSplineTable
from .models import DriftSpec, drift_field

try:                                    # optional accelerator
    from . import _kernels
except ImportError:                     # pragma: no cover
    _kernels = None


def default_table_grid(dim):
    return 2048 if dim == 1 else 192


@dataclass
class SimConfig:
    dt: float
    T: float
    n_paths: int
    seed: int
    drift: DriftSpec = dc_field(default_factory=DriftSpec)
    record_every: int = 1
    burn_in: float = 0.1
    scheme: str = "heun"
    coeff_mode: str = "table"      # table | exact
    table_grid: int = 0            # 0 -> per-dimension default

    def __post_init__(self):
        if not (self.dt > 0):
            raise FolilabError("dt must be positive")
        if not (self.T >= self.dt):
            raise FolilabError("T must be at least dt")
        if self.n_paths < 1:
            raise FolilabError("n_paths must be >= 1")
        if self.scheme != "heun":
            raise FolilabError("only the heun scheme is supported")
        if self.record_every < 1:
            raise FolilabError("record_every must be >= 1")
        if not (0.0 <= self.burn_in < 1.0):
            raise FolilabError("burn_in must lie in [0, 1)")


@dataclass
class PathState:
    x: np.ndarray          # chart coordinates (d,)
    t: float
    logdet_full: float     # ln|det phi_t*| accumulator (w.r.t. g)
    logdet_leaf: float     # ln det_E(phi_t*) accumulator
    rng_stream: int
    w0: np.ndarray         # initial transverse coordinates (q,)


def make_path_state(model, x0, rng_stream=0):
    x0 = np.asarray(x0, dtype=float)
    return PathState(x=x0.copy(), t=0.0, logdet_full=0.0, logdet_leaf=0.0,
                     rng_stream=rng_stream, w0=x0[model.p:].copy())


# --------------------------------------------------------------------------
# Coefficient sources: everything the integrator needs, as functions of the
# chart point.  The exact source differentiates the geometry on the fly; the
# table source samples the same quantities once and spline-interpolates.

class ExactCoefficients:
    def __init__(self, model, drift):
        self.model = model
        self.drift = drift

    def __call__(self, pts, full=True):
        model = self.model
        td = geometry.tangent_data(model, pts)
        A = td.chart_frame_leaf
        b = self.drift.chart(pts)
        if not full:
            return A, b, None, None, None, None, None, None
        div_leaf, div_full, _ = geometry._frame_divergences(model, pts, td=td)
        rate_full, rate_leaf = geometry.frame_divergence_rate(model, pts, td=td)
        if self.drift.is_zero:
            zero = np.zeros(pts.shape[0])
            div_v, div_v_leaf = zero, zero
        else:
            div_v = geometry.ambient_divergence(model, pts, self.drift.ambient)
            div_v_leaf = geometry.leaf_divergence(model, pts, self.drift.ambient)
        return A, b, div_full, div_leaf, rate_full, rate_leaf, div_v, div_v_leaf


class TableCoefficients:
    """All integrator fields sampled once, spline evaluated along paths.

    The grid lives in manifold coordinates (periodic in every direction even
    for sheared charts); every field is a function of the manifold point, so
    evaluation maps chart points through model.to_manifold first.
    """

    def __init__(self, model, drift, n_grid=0, block=16384):
        self.model = model
        self.drift = drift
        n = n_grid or default_table_grid(model.dim)
        p, N, d = model.p, model.ambient_dim, model.dim
        axes = [np.linspace(0.0, per, n, endpoint=False) for per in model.periods]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        chart_pts = model.from_manifold(grid)
        exact = ExactCoefficients(model, drift)
        n_fields = p * N + p + 2 * N + 4
        vals = np.empty((grid.shape[0], n_fields))
        for start in range(0, grid.shape[0], block):
            pts = chart_pts[start:start + block]
            A, b, divF, divE, s2, s2e, dv, dve = exact(pts, full=True)
            vals[start:start + block] = np.concatenate([
                A.reshape(pts.shape[0], p * N), b,
                divF, divE, s2[:, None], s2e[:, None], dv[:, None], dve[:, None],
            ], axis=1)
        shape = (n,) * d
        self.table = PeriodicSplineTable(vals.T.reshape((n_fields,) + shape), model.periods)
        self._pn = p * N
        self._drift_sel = slice(0, p * N + p)
        self._splits = np.cumsum([p * N, p, N, N, 1, 1, 1])
        # The spline table wraps indices itself, so only a shear (if any) is
        # needed to express chart points in manifold coordinates.
        self._shear_t = None if model.chart_shear is None else model.chart_shear.T.copy()

    def _to_grid_coords(self, pts):
        if self._shear_t is None:
            return pts
        return pts @ self._shear_t

    def __call__(self, pts, full=True):
        p, N = self.model.p, self.model.ambient_dim
        y = self._to_grid_coords(np.asarray(pts, dtype=float))
        if not full:
            out = self.table(y, sel=self._drift_sel)
            A = out[..., : self._pn].reshape(out.shape[:-1] + (p, N))
            return A, out[..., self._pn:], None, None, None, None, None, None
        out = self.table(y)
        A, b, divF, divE, s2, s2e, dv, dve = np.split(out, self._splits, axis=-1)
        return (A.reshape(out.shape[:-1] + (p, N)), b, divF, divE,
                s2[..., 0], s2e[..., 0], dv[..., 0], dve[..., 0])


_COEFF_CACHE = {}


def get_coefficients(model, drift_spec=None, coeff_mode="table", table_grid=0):
    drift_spec = drift_spec or DriftSpec()
    drift = drift_field(model, drift_spec)
    if coeff_mode == "exact":
        return ExactCoefficients(model, drift)
    if coeff_mode != "table":
        raise FolilabError(f"unknown coefficient mode '{coeff_mode}'")
    key = (model.name, tuple(sorted(model.params.items())),
           drift_spec.kind, float(drift_spec.c),
           table_grid or default_table_grid(model.dim))
    if key not in _COEFF_CACHE:
        _COEFF_CACHE[key] = TableCoefficients(model, drift, n_grid=table_grid)
    return _COEFF_CACHE[key]


# --------------------------------------------------------------------------
# Pointwise operations.

def pullback_fields(model, x, drift=None):
    """Chart representation of the SDE fields at x.

    Returns (b, A): drift coefficients (..., p) and frame coefficients
    (..., p, N) with column i solving J_E a = X_i (exact for leafwise
    fields; only leaf coordinates carry motion).
    """
    td = geometry.tangent_data(model, x)
    x = np.asarray(x, dtype=float)
    if drift is None:
        b = np.zeros(x.shape[:-1] + (model.p,))
    else:
        b = drift.chart(x)
    return b, td.chart_frame_leaf


def step_stratonovich(model, state, dt, noise, drift=None):
    """One Heun predictor-corrector step of the leaf motion.

    ``noise`` is an (N,) standard normal draw; increments are scaled by
    sqrt(dt) here.  Transverse coordinates are copied bit-identically and
    leaf coordinates are wrapped by the chart periods.
    """
    p = model.p
    dB = np.sqrt(dt) * np.asarray(noise, dtype=float)
    b0, A0 = pullback_fields(model, state.x, drift)
    du0 = b0 * dt + A0 @ dB
    x_pred = state.x.copy()
    x_pred[:p] += du0
    b1, A1 = pullback_fields(model, x_pred, drift)
    du1 = b1 * dt + A1 @ dB
    x_new = state.x.copy()
    x_new[:p] += 0.5 * (du0 + du1)
    # Wrapping is a symmetry only where the mask allows it (sheared charts
    # keep the leaf coordinate unwrapped); transverse entries are untouched.
    return replace(state, x=model.wrap(x_new), t=state.t + dt)


def logdet_increment(model, state, dt, noise, drift=None):
    """Advance the log-determinant accumulators by one Ito increment.

    Evaluated at the pre-step point with the same noise as the accompanying
    step; the stochastic integral uses left-point (Ito) evaluation and the
    nested-difference rates supply the drift part.
    """
    pts = state.x[None]
    dB = np.sqrt(dt) * np.asarray(noise, dtype=float)
    div_leaf, div_full, td = geometry._frame_divergences(model, pts)
    rate_full, rate_leaf = geometry.frame_divergence_rate(model, pts, td=td)
    if drift is None or drift.is_zero:
        div_v = div_v_leaf = 0.0
    else:
        div_v = float(geometry.ambient_divergence(model, pts, drift.ambient)[0])
        div_v_leaf = float(geometry.leaf_divergence(model, pts, drift.ambient)[0])
    d_full = float(div_full[0] @ dB) + (div_v + 0.5 * float(rate_full[0])) * dt
    d_leaf = float(div_leaf[0] @ dB) + (div_v_leaf + 0.5 * float(rate_leaf[0])) * dt
    return replace(state,
                   logdet_full=state.logdet_full + d_full,
                   logdet_leaf=state.logdet_leaf + d_leaf)


# --------------------------------------------------------------------------
# Ensembles.

@dataclass
class Ensemble:
    model: object
    config: SimConfig
    t_record: np.ndarray       # (n_rec,)
    coords: np.ndarray         # (n_rec, n_paths, d), wrapped
    logdet_full: np.ndarray    # (n_rec, n_paths)
    logdet_leaf: np.ndarray    # (n_rec, n_paths)
    t_final: float
    logdet_full_final: np.ndarray   # (n_paths,)
    logdet_leaf_final: np.ndarray

    @property
    def n_paths(self):
        return self.coords.shape[1]


def path_rng(seed, stream):
    """Counter-based per-path generator: independent of every other stream."""
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=seed, spawn_key=(stream,))))


def initial_points(model, config, rngs):
    """Leaf coordinates drawn from each path's stream; transverse coordinates
    stratified across paths for even leaf coverage."""
    p, d = model.p, model.dim
    x0 = np.zeros((config.n_paths, d))
    for k, rng in enumerate(rngs):
        x0[k, :p] = rng.uniform(0.0, model.periods[:p])
    for j in range(p, d):
        x0[:, j] = (np.arange(config.n_paths) + 0.5) / config.n_paths * model.periods[j]
    return x0


def simulate_ensemble(model, config):
    """Integrate n_paths independent paths with per-path noise streams.

    Fully reproducible: streams derive from (seed, path index) only, so the
    same config yields bit-identical output regardless of chunking.
    """
    p, d, N = model.p, model.dim, model.ambient_dim
    coeffs = get_coefficients(model, config.drift, config.coeff_mode, config.table_grid)
    n_steps = int(round(config.T / config.dt))
    n_steps = max(n_steps, 1)
    dt = config.dt
    sqdt = np.sqrt(dt)

    rngs = [path_rng(config.seed, k) for k in range(config.n_paths)]
    x = initial_points(model, config, rngs)

    ldf = np.zeros(config.n_paths)
    ldl = np.zeros(config.n_paths)
    n_rec = n_steps // config.record_every + 1
    t_record = np.empty(n_rec)
    coords = np.empty((n_rec, config.n_paths, d))
    rec_ldf = np.empty((n_rec, config.n_paths))
    rec_ldl = np.empty((n_rec, config.n_paths))
    t_record[0] = 0.0
    coords[0] = model.wrap(x)
    rec_ldf[0] = ldf
    rec_ldl[0] = ldl

    kernel = _kernel_for(model, coeffs)
    rec_i = 1
    done = 0
    chunk = max(1, min(4096, n_steps))
    while done < n_steps:
        m = min(chunk, n_steps - done)
        noise = np.stack([rng.standard_normal((m, N)) for rng in rngs], axis=1)
        noise *= sqdt
        off = 0
        while off < m:
            to_record = config.record_every - done % config.record_every
            span = min(to_record, m - off)
            if kernel is not None:
                kernel(x, ldf, ldl, noise[off:off + span], dt)
            else:
                _heun_span(model, coeffs, x, ldf, ldl, noise[off:off + span], dt)
            done += span
            off += span
            if done % config.record_every == 0:
                t_record[rec_i] = done * dt
                coords[rec_i] = model.wrap(x)
                rec_ldf[rec_i] = ldf
                rec_ldl[rec_i] = ldl
                rec_i += 1

    return Ensemble(
        model=model, config=config,
        t_record=t_record[:rec_i], coords=coords[:rec_i],
        logdet_full=rec_ldf[:rec_i], logdet_leaf=rec_ldl[:rec_i],
        t_final=n_steps * dt,
        logdet_full_final=ldf, logdet_leaf_final=ldl,
    )


def _heun_span(model, coeffs, x, ldf, ldl, noise, dt):
    """Reference chunk loop (in-place), used when the kernels are absent."""
    p = model.p
    for j in range(noise.shape[0]):
        dB = noise[j]
        A, b, divF, divE, s2, s2e, dv, dve = coeffs(x, full=True)
        ldf += np.einsum("kn,kn->k", divF, dB) + (dv + 0.5 * s2) * dt
        ldl += np.einsum("kn,kn->k", divE, dB) + (dve + 0.5 * s2e) * dt
        du0 = b * dt + (A @ dB[..., None])[..., 0]
        x_pred = x.copy()
        x_pred[:, :p] += du0
        A1, b1 = coeffs(x_pred, full=False)[:2]
        du1 = b1 * dt + (A1 @ dB[..., None])[..., 0]
        x[:, :p] += 0.5 * (du0 + du1)


def _kernel_for(model, coeffs):
    """Bind the numba chunk kernel to a coefficient table, when possible."""
    if _kernels is None or not isinstance(coeffs, TableCoefficients):
        return None
    table = coeffs.table
    coeff = table.coeffs
    scale = table._scale
    p, n_amb = model.p, model.ambient_dim
    if model.dim == 1:
        def kernel(x, ldf, ldl, noise, dt):
            _kernels.heun_chunk_1d(x, ldf, ldl, noise, dt, coeff, scale, p, n_amb)
        return kernel
    if model.dim == 2:
        shear = np.eye(2) if model.chart_shear is None else model.chart_shear
        shear_t = np.ascontiguousarray(shear.T)

        def kernel(x, ldf, ldl, noise, dt):
            _kernels.heun_chunk_2d(x, ldf, ldl, noise, dt, coeff, scale,
                                   shear_t, p, n_amb)
        return kernel
    return None


# --------------------------------------------------------------------------
# Shared-noise transport and variational oracles.

def _heun_batch(model, x, dB, dt, coeffs):
    """One Heun step of a batch (B, d) under one shared increment dB (N,)."""
    p = model.p
    A, b = coeffs(x, full=False)[:2]
    du0 = b * dt + A @ dB
    x_pred = x.copy()
    x_pred[:, :p] += du0
    A1, b1 = coeffs(x_pred, full=False)[:2]
    du1 = b1 * dt + A1 @ dB
    out = x.copy()
    out[:, :p] += 0.5 * (du0 + du1)
    return out


def _transport_kernel_for(model, coeffs):
    if _kernels is None or not isinstance(coeffs, TableCoefficients):
        return None
    table = coeffs.table
    coeff = table.coeffs[coeffs._drift_sel]
    scale = table._scale
    p, n_amb = model.p, model.ambient_dim
    if model.dim == 1:
        return lambda x, noise, dt: _kernels.heun_transport_1d(
            x, noise, dt, coeff, scale, p, n_amb)
    if model.dim == 2:
        shear = np.eye(2) if model.chart_shear is None else model.chart_shear
        shear_t = np.ascontiguousarray(shear.T)
        return lambda x, noise, dt: _kernels.heun_transport_2d(
            x, noise, dt, coeff, scale, shear_t, p, n_amb)
    return None


def _transport_span(model, coeffs, x, noise_scaled, dt, kernel=None):
    """Advance a batch in place over a span of pre-scaled shared increments."""
    if kernel is not None and len(noise_scaled):
        kernel(x, np.ascontiguousarray(noise_scaled), dt)
        return x
    for inc in noise_scaled:
        x[:] = _heun_batch(model, x, inc, dt, coeffs)
    return x


def transport_points(model, x0, noise, dt, drift_spec=None, coeffs=None,
                     coeff_mode="table", table_grid=0):
    """Transport a batch of points by the flow of one noise realization."""
    if coeffs is None:
        coeffs = get_coefficients(model, drift_spec, coeff_mode, table_grid)
    x = np.array(x0, dtype=float)
    kernel = _transport_kernel_for(model, coeffs)
    return _transport_span(model, coeffs, x, np.sqrt(dt) * np.asarray(noise),
                           dt, kernel)


def simulate_path(model, x0, noise, dt, drift_spec=None, coeff_mode="table",
                  table_grid=0):
    """Single path driven by an explicit noise array (replay support).

    Returns (x_final, logdet_full, logdet_leaf); the log-determinants follow
    the same Ito accumulation as the ensemble runner.
    """
    drift_spec = drift_spec or DriftSpec()
    coeffs = get_coefficients(model, drift_spec, coeff_mode, table_grid)
    x = np.array(x0, dtype=float)[None]
    ldf = np.zeros(1)
    ldl = np.zeros(1)
    scaled = np.sqrt(dt) * np.asarray(noise, dtype=float)[:, None, :]
    kernel = _kernel_for(model, coeffs)
    if kernel is not None:
        kernel(x, ldf, ldl, np.ascontiguousarray(scaled), dt)
    else:
        _heun_span(model, coeffs, x, ldf, ldl, scaled, dt)
    return x[0], float(ldf[0]), float(ldl[0])


_BUMP_LIMIT = 1e-2


@dataclass
class FlowOracleResult:
    jacobian: np.ndarray     # d x d (or p x p for the leaf oracle)
    logdet: float            # ln|det| w.r.t. the metric determinant
    x_final: np.ndarray


def jacobian_flow_oracle(model, x0, noise, dt, drift_spec=None, bump=1e-6,
                         renorm_every=1.0, coeff_mode="table", table_grid=0):
    """Propagate the full d x d chart Jacobian of the flow by central bumping
    of initial coordinates through identical noise.

    Bumps are renormalized every ``renorm_every`` time units (determinants
    compose multiplicatively across windows).  The returned logdet includes
    the metric volume correction 0.5 ln(det G(x_T)/det G(x_0)).
    """
    drift_spec = drift_spec or DriftSpec()
    coeffs = get_coefficients(model, drift_spec, coeff_mode, table_grid)
    kernel = _transport_kernel_for(model, coeffs)
    d = model.dim
    x0 = np.asarray(x0, dtype=float)
    eye = np.eye(d)
    cloud = np.concatenate([x0[None], x0 + bump * eye, x0 - bump * eye], axis=0)
    n_steps = len(noise)
    renorm_steps = max(1, int(round(renorm_every / dt)))
    logdet = 0.0
    d_total = np.eye(d)
    scaled = np.sqrt(dt) * np.asarray(noise, dtype=float)
    for start in range(0, n_steps, renorm_steps):
        _transport_span(model, coeffs, cloud, scaled[start:start + renorm_steps],
                        dt, kernel)
        delta = cloud[1:] - cloud[0]
        if np.abs(delta).max() > _BUMP_LIMIT:
            raise BumpTooLarge("bumped paths left the linear regime; "
                               "shorten renorm_every or reduce bump")
        window = (cloud[1:1 + d] - cloud[1 + d:]).T / (2 * bump)
        logdet += np.log(np.abs(np.linalg.det(window)))
        d_total = window @ d_total
        cloud[1:1 + d] = cloud[0] + bump * eye
        cloud[1 + d:] = cloud[0] - bump * eye
    det_g0 = geometry.metric_determinants(model, x0[None])[0][0]
    det_gt = geometry.metric_determinants(model, cloud[0][None])[0][0]
    return FlowOracleResult(jacobian=d_total,
                            logdet=logdet + 0.5 * (np.log(det_gt) - np.log(det_g0)),
                            x_final=cloud[0])


def _leaf_det_batch(model, x0, noise, dt, drift_spec=None, bump=1e-6,
                    renorm_every=1.0, coeffs=None, coeff_mode="table",
                    table_grid=0):
    """det_E(phi_t*) for a batch of starting points under one shared noise
    realization.  Returns (final centers (B, d), det_E (B,))."""
    drift_spec = drift_spec or DriftSpec()
    if coeffs is None:
        coeffs = get_coefficients(model, drift_spec, coeff_mode, table_grid)
    kernel = _transport_kernel_for(model, coeffs)
    p, d = model.p, model.dim
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    B = x0.shape[0]
    cloud = np.concatenate([x0] + [x0 + bump * np.eye(d)[k] for k in range(p)]
                           + [x0 - bump * np.eye(d)[k] for k in range(p)], axis=0)
    n_steps = len(noise)
    renorm_steps = max(1, int(round(renorm_every / dt)))
    det = np.ones(B)
    scaled = np.sqrt(dt) * np.asarray(noise, dtype=float)
    for start in range(0, n_steps, renorm_steps):
        _transport_span(model, coeffs, cloud, scaled[start:start + renorm_steps],
                        dt, kernel)
        center = cloud[:B]
        if np.abs(cloud[B:] - np.tile(center, (2 * p, 1))).max() > _BUMP_LIMIT:
            raise BumpTooLarge("leaf bumps left the linear regime")
        if p == 1:
            det *= (cloud[B:2 * B, 0] - cloud[2 * B:, 0]) / (2 * bump)
        else:
            mats = np.empty((B, p, p))
            for i in range(p):
                hi = cloud[B * (1 + i):B * (2 + i), :p]
                lo = cloud[B * (1 + p + i):B * (2 + p + i), :p]
                mats[:, :, i] = (hi - lo) / (2 * bump)
            det *= np.linalg.det(mats)
        for i in range(p):
            cloud[B * (1 + i):B * (2 + i)] = center + bump * np.eye(d)[i]
            cloud[B * (1 + p + i):B * (2 + p + i)] = center - bump * np.eye(d)[i]
    det_e0 = geometry.metric_determinants(model, x0)[1]
    det_et = geometry.metric_determinants(model, cloud[:B])[1]
    return cloud[:B], det * np.sqrt(det_et / det_e0)


def leaf_det(model, x0, noise, dt, **kw):
    """Leafwise determinant det_E(phi_t*) at a single starting point."""
    centers, det = _leaf_det_batch(model, np.asarray(x0, dtype=float)[None],
                                   noise, dt, **kw)
    return float(det[0])


def sample_noise(seed, n_steps, n_dims):
    """Standard normal noise array from a counter-based stream."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return rng.standard_normal((n_steps, n_dims))


def save_noise(path, noise):
    """Persist a noise array; .npy for binary, anything else as CSV."""
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, noise)
    else:
        np.savetxt(path, noise, delimiter=",", fmt="%.17g")


def load_noise(path):
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path)
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
