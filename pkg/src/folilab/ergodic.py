"""Occupation measures, Lyapunov-sum estimators, and invariance diagnostics.

Three routes to the exponent sum are implemented: the pathwise limit of the
accumulated log-determinant, the ergodic-average quadrature of
div(V) + (1/2) sum_i X_i div(X_i), and the curvature form
-(1/2) (||H||^2 - div_E(2V - kappa) + 2 g(kappa, V)) integrated against the
occupation estimate.  Histograms live on the manifold's fundamental domain
(sheared charts are mapped to single-valued manifold coordinates first).
"""

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import geometry, sde
from .errors import EmptyEnsemble, WeightDegeneracy
from .models import DriftSpec, drift_field, test_function_set


@dataclass
class OccupationHistogram:
    grid_dims: tuple
    edges: list                   # per-dimension bin edges (manifold coords)
    counts: np.ndarray            # raw (possibly weighted) cell counts
    total_weight: float
    mass: np.ndarray              # normalized to sum 1

    def centers(self):
        """Cell centers as (n_cells, d) manifold coordinates."""
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @property
    def n_cells(self):
        return int(np.prod(self.grid_dims))


def _manifold_edges(model, grid_dims):
    # The chart may shear coordinates; the manifold fundamental domain still
    # has the same periods for all built-ins.
    return [np.linspace(0.0, per, n + 1) for per, n in zip(model.periods, grid_dims)]


def histogram_from_points(model, pts_chart, grid_dims, weights=None):
    """Histogram chart points on the manifold's fundamental domain."""
    pts = np.asarray(pts_chart, dtype=float).reshape(-1, model.dim)
    y = model.to_manifold(pts)
    edges = _manifold_edges(model, grid_dims)
    counts, _ = np.histogramdd(y, bins=edges, weights=weights)
    total = counts.sum()
    if total <= 0:
        raise EmptyEnsemble("histogram received no weight")
    return OccupationHistogram(grid_dims=tuple(grid_dims), edges=edges,
                               counts=counts, total_weight=float(total),
                               mass=counts / total)


def _burned_samples(ensemble, burn_in=None):
    burn = ensemble.config.burn_in if burn_in is None else burn_in
    keep = ensemble.t_record > burn * ensemble.t_final
    samples = ensemble.coords[keep]
    if samples.size == 0:
        raise EmptyEnsemble("no recorded samples after burn-in")
    return samples


def occupation_measure(ensemble, grid_dims, burn_in=None):
    """Pooled cell-frequency histogram of post-burn-in samples."""
    samples = _burned_samples(ensemble, burn_in)
    return histogram_from_points(ensemble.model, samples.reshape(-1, ensemble.model.dim),
                                 grid_dims)


def per_path_cell_counts(ensemble, grid_dims, burn_in=None):
    """Per-path cell counts (n_paths, n_cells), for path bootstraps."""
    model = ensemble.model
    samples = _burned_samples(ensemble, burn_in)      # (n_keep, n_paths, d)
    n_keep, n_paths, d = samples.shape
    y = model.to_manifold(samples.reshape(-1, d))
    dims = tuple(grid_dims)
    idx = []
    for k, (per, n) in enumerate(zip(model.periods, dims)):
        i = np.floor(y[:, k] / per * n).astype(np.int64)
        idx.append(np.clip(i, 0, n - 1))
    flat = np.ravel_multi_index(idx, dims).reshape(n_keep, n_paths)
    n_cells = int(np.prod(dims))
    counts = np.zeros((n_paths, n_cells))
    for kp in range(n_paths):
        counts[kp] = np.bincount(flat[:, kp], minlength=n_cells)
    return counts


def uniform_mass(grid_dims):
    n = int(np.prod(grid_dims))
    return np.full(grid_dims, 1.0 / n)


def tv_distance(a, b):
    """Total variation distance between two normalized histograms."""
    ma = a.mass if isinstance(a, OccupationHistogram) else np.asarray(a)
    mb = b.mass if isinstance(b, OccupationHistogram) else np.asarray(b)
    return 0.5 * float(np.abs(ma - mb).sum())


def _neighbor_variation(values, grid_dims):
    """Max absolute difference between adjacent cells (periodic)."""
    g = np.asarray(values).reshape(grid_dims)
    worst = 0.0
    for ax in range(g.ndim):
        worst = max(worst, float(np.abs(g - np.roll(g, 1, axis=ax)).max()))
    return worst


def lyapunov_pathwise(ensemble):
    """Mean and across-path stderr of logdet_full(T)/T."""
    lam = ensemble.logdet_full_final / ensemble.t_final
    mean = float(lam.mean())
    if lam.size > 1:
        stderr = float(lam.std(ddof=1) / np.sqrt(lam.size))
    else:
        stderr = 0.0
    return {"mean": mean, "stderr": stderr}


def _centers_chart(model, hist):
    return model.from_manifold(hist.centers())


def lyapunov_baxendale(model, hist, drift_spec=None):
    """Cell-center quadrature of div(V) + (1/2) sum_i X_i div(X_i)."""
    drift = drift_field(model, drift_spec or DriftSpec())
    pts = _centers_chart(model, hist)
    rate_full, _ = geometry.frame_divergence_rate(model, pts)
    if drift.is_zero:
        div_v = np.zeros(pts.shape[0])
    else:
        div_v = geometry.ambient_divergence(model, pts, drift.ambient)
    integrand = div_v + 0.5 * rate_full
    value = float(np.dot(hist.mass.ravel(), integrand))
    return {"value": value, "quad_error": _neighbor_variation(integrand, hist.grid_dims)}


def lyapunov_geometric(model, hist, drift_spec=None):
    """Cell-center quadrature of the curvature form
    -(1/2)(||H||^2 - div_E(2V - kappa) + 2 g(kappa, V))."""
    drift = drift_field(model, drift_spec or DriftSpec())
    pts = _centers_chart(model, hist)
    h_vec = geometry.mean_curvature(model, pts)
    h_sq = np.einsum("bm,bm->b", h_vec, h_vec)
    kap = geometry.tension(model, pts)

    def field(y):
        lead = np.asarray(y).shape[:-1]
        flat = np.asarray(y, dtype=float).reshape(-1, model.dim)
        out = 2.0 * drift.ambient(flat) - geometry.tension(model, flat)
        return out.reshape(lead + (model.ambient_dim,))

    div_term = geometry.leaf_divergence(model, pts, field)
    cross = 2.0 * np.einsum("bm,bm->b", kap, drift.ambient(pts))
    integrand = -0.5 * (h_sq - div_term + cross)
    value = float(np.dot(hist.mass.ravel(), integrand))
    return {"value": value, "quad_error": _neighbor_variation(integrand, hist.grid_dims)}


def generator_values(model, pts, f, drift, step=geometry.STEP_FIRST):
    """(V + (1/2) Delta_E) f at chart points, with Delta_E = sum_i X_i^2."""
    lap = geometry.frame_laplacian(model, pts, f)
    if drift.is_zero:
        vf = np.zeros(np.shape(pts)[:-1])
    else:
        b = drift.chart(pts)
        disp = np.zeros(np.shape(pts))
        disp[..., : model.p] = b
        vf = (np.asarray(f(pts + step * disp)) - np.asarray(f(pts - step * disp))) / (2 * step)
    return vf + 0.5 * lap


def harmonic_residual(model, hist, drift_spec, test_functions, ensemble=None,
                      n_boot=200, boot_seed=0, burn_in=None):
    """Quadrature of the generator against the occupation estimate.

    For a harmonic measure every residual vanishes; each one is reported with
    a bootstrap-over-paths stderr as the Monte Carlo scale (requires the
    ensemble; the histogram under test may differ from its pooled histogram,
    e.g. for negative controls).
    """
    drift = drift_field(model, drift_spec or DriftSpec())
    pts = _centers_chart(model, hist)
    boot_mass = None
    if ensemble is not None:
        counts = per_path_cell_counts(ensemble, hist.grid_dims, burn_in)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(boot_seed)))
        n_paths = counts.shape[0]
        boot_mass = np.empty((n_boot, counts.shape[1]))
        for bidx in range(n_boot):
            pick = rng.integers(0, n_paths, n_paths)
            pooled = counts[pick].sum(axis=0)
            boot_mass[bidx] = pooled / pooled.sum()
    out = []
    for name, f in test_functions:
        values = generator_values(model, pts, f, drift)
        residual = float(np.dot(hist.mass.ravel(), values))
        stderr = float("nan")
        if boot_mass is not None:
            stderr = float(np.std(boot_mass @ values, ddof=1))
        out.append({"name": name, "residual": residual, "stderr": stderr})
    return out


# --------------------------------------------------------------------------
# Totally invariant measures: the det_E-weighted pushforward action.

@dataclass
class MeasureActionResult:
    hist_initial: OccupationHistogram
    hist_pushforward: OccupationHistogram
    tv_fixed_point: float
    cocycle_defect: float
    ess: float                    # effective sample size fraction at time t
    weight_range: tuple
    mass_ratio: float             # total pushforward weight / initial weight


def measure_action_test(model, particles, weights, t, seed, dt=0.01,
                        grid_dims=(32, 32), drift_spec=None, bump=1e-6,
                        compute_cocycle=True):
    """Transport a candidate measure by phi_t and reweight by det_E(phi_t*).

    One shared noise realization drives every particle (the action is
    per-realization).  The cocycle defect compares transporting over [0, 2t]
    in one window against restarting the action at t from the time-t
    particle cloud, using consecutive segments of the same realization.
    """
    particles = np.asarray(particles, dtype=float).reshape(-1, model.dim)
    n = particles.shape[0]
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    drift_spec = drift_spec or DriftSpec()
    coeffs = sde.get_coefficients(model, drift_spec)
    n_steps = int(round(t / dt))
    noise = sde.sample_noise(seed, 2 * n_steps, model.ambient_dim)

    hist0 = histogram_from_points(model, particles, grid_dims, weights=weights)
    if n_steps == 0:
        return MeasureActionResult(hist0, hist0, 0.0, 0.0, ess=1.0,
                                   weight_range=(1.0, 1.0), mass_ratio=1.0)

    pos_t, det1 = sde._leaf_det_batch(model, particles, noise[:n_steps], dt,
                                      drift_spec=drift_spec, coeffs=coeffs, bump=bump)
    w_t = weights * det1
    if np.any(w_t <= 0):
        raise WeightDegeneracy("nonpositive det_E weights (flow left linear regime)")
    ess = float(w_t.sum() ** 2 / (w_t ** 2).sum() / n)
    if ess < 0.1:
        raise WeightDegeneracy(f"effective sample size {ess:.3f} below 10%")
    hist_t = histogram_from_points(model, pos_t, grid_dims, weights=w_t)
    tv = tv_distance(hist0, hist_t)

    defect = float("nan")
    if compute_cocycle:
        # One long window vs composing at t, same realization.
        pos_a, det_a = sde._leaf_det_batch(model, particles, noise, dt,
                                           drift_spec=drift_spec, coeffs=coeffs,
                                           bump=bump, renorm_every=4.0 * t)
        pos_b, det2 = sde._leaf_det_batch(model, pos_t, noise[n_steps:], dt,
                                          drift_spec=drift_spec, coeffs=coeffs, bump=bump)
        hist_a = histogram_from_points(model, pos_a, grid_dims, weights=weights * det_a)
        hist_b = histogram_from_points(model, pos_b, grid_dims, weights=w_t * det2)
        defect = tv_distance(hist_a, hist_b)

    return MeasureActionResult(
        hist_initial=hist0, hist_pushforward=hist_t,
        tv_fixed_point=tv, cocycle_defect=defect, ess=ess,
        weight_range=(float(det1.min()), float(det1.max())),
        mass_ratio=float(w_t.sum() / weights.sum()),
    )


def lebesgue_particles(model, n_target):
    """Stratified lattice sample of the normalized volume measure."""
    d = model.dim
    side = max(1, int(round(n_target ** (1.0 / d))))
    axes = [(np.arange(side) + 0.5) / side * per for per in model.periods]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return model.from_manifold(pts)


def bump_particles(model, n, seed, center=None, sigma=0.2):
    """Wrapped-Gaussian bump sample (a deliberately non-invariant measure)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(
        entropy=seed, spawn_key=(0xB,))))
    center = np.asarray(center if center is not None else model.periods / 2.0)
    pts = center + sigma * rng.standard_normal((n, model.dim))
    return np.mod(pts, model.periods)


# --------------------------------------------------------------------------
# Reports.

@dataclass
class EstimatorReport:
    model: str
    params: dict
    dt: float
    T: float
    n_paths: int
    seed: int
    drift: dict
    grid_dims: tuple
    lambda_pathwise: dict
    lambda_baxendale: dict
    lambda_geometric: dict
    harmonic_residuals: list
    tv_fixed_point: Optional[float] = None
    cocycle_defect: Optional[float] = None

    def to_dict(self):
        return {
            "model": self.model,
            "params": self.params,
            "dt": self.dt,
            "T": self.T,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "drift": self.drift,
            "grid_dims": list(self.grid_dims),
            "lambda_pathwise": self.lambda_pathwise,
            "lambda_baxendale": self.lambda_baxendale,
            "lambda_geometric": self.lambda_geometric,
            "harmonic_residuals": self.harmonic_residuals,
            "tv_fixed_point": self.tv_fixed_point,
            "cocycle_defect": self.cocycle_defect,
        }


def estimator_report(model, config, grid_dims, ensemble=None, tf_name="trig",
                     n_boot=200):
    """Run (or reuse) an ensemble and assemble the three-estimator report."""
    if ensemble is None:
        ensemble = sde.simulate_ensemble(model, config)
    hist = occupation_measure(ensemble, grid_dims)
    tfs = test_function_set(model, tf_name)
    report = EstimatorReport(
        model=model.name, params=dict(model.params),
        dt=config.dt, T=ensemble.t_final, n_paths=config.n_paths, seed=config.seed,
        drift={"kind": config.drift.kind, "c": config.drift.c},
        grid_dims=tuple(grid_dims),
        lambda_pathwise=lyapunov_pathwise(ensemble),
        lambda_baxendale=lyapunov_baxendale(model, hist, config.drift),
        lambda_geometric=lyapunov_geometric(model, hist, config.drift),
        harmonic_residuals=harmonic_residual(model, hist, config.drift, tfs,
                                             ensemble=ensemble, n_boot=n_boot),
    )
    return report, ensemble, hist


def concordance_gaps(report):
    """Pairwise |difference| / (3 combined stderr) for the three estimators.

    Quadrature error estimates stand in for the stderr of the integral
    estimators.  Values <= 1 mean the estimators agree within tolerance.
    """
    se_p = report.lambda_pathwise["stderr"]
    qe_b = report.lambda_baxendale["quad_error"]
    qe_g = report.lambda_geometric["quad_error"]
    vp = report.lambda_pathwise["mean"]
    vb = report.lambda_baxendale["value"]
    vg = report.lambda_geometric["value"]
    floor = 1e-12

    def gap(x, y, sx, sy):
        return abs(x - y) / max(3.0 * np.hypot(sx, sy), floor)

    return {
        "pathwise_baxendale": gap(vp, vb, se_p, qe_b),
        "pathwise_geometric": gap(vp, vg, se_p, qe_g),
        "baxendale_geometric": gap(vb, vg, qe_b, qe_g),
    }
