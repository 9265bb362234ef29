"""Pointwise differential geometry of an embedded foliated chart.

Everything is derived from the embedding map alone: Jacobians, orthogonal
projectors onto the tangent and leaf bundles, the gradient frame, leafwise
and ambient divergences, mean curvature and tension.  Derivatives of fields
are central finite differences taken along chart displacements; projector
identities make all traces expressible through the frame.

All operations accept a single chart point ``(d,)`` or any batch ``(..., d)``
and are pure functions of (model, point): safe to call concurrently against
a shared model.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned, NonImmersion, NotTangent

# Central-difference steps: first derivatives, and the coarser step used for
# nested (second-derivative) quantities where roundoff amplifies.
STEP_FIRST = 1e-5
STEP_NESTED = 1e-4

_RANK_TOL = 1e-8
_COND_TOL = 1e8


def _flatten(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"expected chart points with last axis {d}, got {x.shape}")
    lead = x.shape[:-1]
    return x.reshape(-1, d), lead


# Charts here have d <= 2, so Gram-matrix algebra is done in closed form;
# batched LAPACK calls would dominate the runtime otherwise.

def _gram_eig_range(g):
    k = g.shape[-1]
    if k == 1:
        e = g[..., 0, 0]
        return e, e
    if k == 2:
        a, b, c = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
        half = 0.5 * np.sqrt(np.maximum((a - c) ** 2 + 4 * b * b, 0.0))
        mid = 0.5 * (a + c)
        return mid - half, mid + half
    e = np.linalg.eigvalsh(g)
    return e[..., 0], e[..., -1]


def _gram_inv(g):
    k = g.shape[-1]
    if k == 1:
        return 1.0 / g
    if k == 2:
        a, b, c = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
        det = a * c - b * b
        inv = np.empty_like(g)
        inv[..., 0, 0] = c / det
        inv[..., 1, 1] = a / det
        inv[..., 0, 1] = -b / det
        inv[..., 1, 0] = -b / det
        return inv
    return np.linalg.inv(g)


def _gram_det(g):
    k = g.shape[-1]
    if k == 1:
        return g[..., 0, 0]
    if k == 2:
        return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    return np.linalg.det(g)


def jacobian(model, x, mode="analytic", step=STEP_FIRST):
    """N x d Jacobian of the embedding at chart points.

    ``mode`` selects the model's analytic Jacobian or central finite
    differences of the embedding (step ``step``).  Raises NonImmersion if the
    smallest singular value drops below 1e-8.
    """
    pts, lead = _flatten(x, model.dim)
    if mode == "analytic" and model.analytic_jacobian is not None:
        jac = model.analytic_jacobian(pts)
    elif mode in ("analytic", "finite_difference"):
        cols = []
        for k in range(model.dim):
            e = np.zeros(model.dim)
            e[k] = step
            cols.append((model.embed(pts + e) - model.embed(pts - e)) / (2 * step))
        jac = np.stack(cols, axis=-1)
    else:
        raise ValueError(f"unknown jacobian mode '{mode}'")
    gram = np.swapaxes(jac, -1, -2) @ jac
    emin, _ = _gram_eig_range(gram)
    if np.any(emin < _RANK_TOL ** 2):
        worst = pts[np.argmin(emin)]
        raise NonImmersion(
            f"degenerate chart point {worst} (sigma_min={np.sqrt(max(emin.min(), 0.0)):.2e})")
    return jac.reshape(lead + jac.shape[-2:])


def projections(jac, p):
    """Orthogonal projectors (P onto T_mM, P-tilde onto E_m) from a Jacobian.

    P = J (J^T J)^-1 J^T and the leaf version uses the first ``p`` columns.
    Raises IllConditioned when cond(J^T J) exceeds 1e8.
    """
    jac = np.asarray(jac, dtype=float)
    gram = np.swapaxes(jac, -1, -2) @ jac
    emin, emax = _gram_eig_range(gram)
    if np.any(emin <= 0) or np.any(emax / emin > _COND_TOL):
        raise IllConditioned("Gram matrix of the Jacobian is ill conditioned")
    proj = jac @ _gram_inv(gram) @ np.swapaxes(jac, -1, -2)
    jac_leaf = jac[..., :p]
    gram_leaf = gram[..., :p, :p]
    proj_leaf = jac_leaf @ _gram_inv(gram_leaf) @ np.swapaxes(jac_leaf, -1, -2)
    return proj, proj_leaf


def gradient_frame(proj_leaf):
    """Gradient frame X_i = P-tilde e_i, indexed as frame[..., i, :]."""
    return np.swapaxes(np.asarray(proj_leaf, dtype=float), -1, -2)


@dataclass
class TangentData:
    """Per-point tangent data (batched; leading axes follow the input)."""

    point_coords: np.ndarray    # (..., d)
    ambient_point: np.ndarray   # (..., N)
    jac: np.ndarray             # (..., N, d)
    jac_leaf: np.ndarray        # (..., N, p)
    proj_tangent: np.ndarray    # (..., N, N)
    proj_leaf: np.ndarray       # (..., N, N)
    frame: np.ndarray           # (..., N, N), frame[..., i, :] = X_i
    gram: np.ndarray            # (..., d, d)
    gram_leaf: np.ndarray       # (..., p, p)
    chart_frame_leaf: np.ndarray    # (..., p, N), column i solves J_E a = X_i
    chart_frame_full: np.ndarray    # (..., d, N), column i solves J a = P e_i


def tangent_data(model, x, mode="analytic"):
    pts = np.asarray(x, dtype=float)
    jac = jacobian(model, pts, mode=mode)
    p = model.p
    gram = np.swapaxes(jac, -1, -2) @ jac
    emin, emax = _gram_eig_range(gram)
    if np.any(emax / emin > _COND_TOL):
        raise IllConditioned("Gram matrix of the Jacobian is ill conditioned")
    chart_full = _gram_inv(gram) @ np.swapaxes(jac, -1, -2)
    proj = jac @ chart_full
    jac_leaf = jac[..., :p]
    gram_leaf = gram[..., :p, :p]
    chart_leaf = _gram_inv(gram_leaf) @ np.swapaxes(jac_leaf, -1, -2)
    proj_leaf = jac_leaf @ chart_leaf
    return TangentData(
        point_coords=pts, ambient_point=model.embed(pts),
        jac=jac, jac_leaf=jac_leaf,
        proj_tangent=proj, proj_leaf=proj_leaf,
        frame=gradient_frame(proj_leaf),
        gram=gram, gram_leaf=gram_leaf,
        chart_frame_leaf=chart_leaf, chart_frame_full=chart_full,
    )


def _leaf_proj_at(model, pts, mode="analytic"):
    # Hot path: skips the rank check (base points are checked by callers).
    if mode == "analytic" and model.analytic_jacobian is not None:
        jac = model.analytic_jacobian(pts)
    else:
        jac = jacobian(model, pts, mode=mode)
    jac_leaf = jac[..., : model.p]
    gram_leaf = np.swapaxes(jac_leaf, -1, -2) @ jac_leaf
    return jac_leaf @ _gram_inv(gram_leaf) @ np.swapaxes(jac_leaf, -1, -2)


def _d_leaf_proj(model, pts, disp, step, mode="analytic"):
    """Directional derivatives of the leaf projector field.

    pts: (B, d), disp: (B, K, d) chart displacements -> (B, K, N, N).
    """
    hi = _leaf_proj_at(model, pts[:, None, :] + step * disp, mode=mode)
    lo = _leaf_proj_at(model, pts[:, None, :] - step * disp, mode=mode)
    return (hi - lo) / (2 * step)


def _leaf_disp(td):
    """Chart displacements of the leaf frame fields, (B, N, d)."""
    B, p, N = td.chart_frame_leaf.shape
    disp = np.zeros((B, N, td.point_coords.shape[-1]))
    disp[:, :, :p] = np.swapaxes(td.chart_frame_leaf, -1, -2)
    return disp


def _full_disp(td):
    """Chart displacements of the full gradient frame fields, (B, N, d)."""
    return np.swapaxes(td.chart_frame_full, -1, -2)


def directional_derivative(model, x, field, v, step=STEP_FIRST, mode="analytic"):
    """Raw ambient derivative dF(v) of an ambient-vector field along a
    tangent vector, by central differences along the chart displacement
    solving J a = v.  Raises NotTangent if v is not tangent at x."""
    pts, lead = _flatten(x, model.dim)
    v = np.asarray(v, dtype=float).reshape(pts.shape[0], model.ambient_dim)
    td = tangent_data(model, pts, mode=mode)
    resid = v - np.einsum("bmn,bn->bm", td.proj_tangent, v)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(np.linalg.norm(resid, axis=-1) > _RANK_TOL * np.maximum(norm, 1.0)):
        raise NotTangent("direction is not tangent to the manifold at x")
    a = np.einsum("bdn,bn->bd", td.chart_frame_full, v)
    out = (np.asarray(field(pts + step * a), dtype=float)
           - np.asarray(field(pts - step * a), dtype=float)) / (2 * step)
    return out.reshape(lead + (model.ambient_dim,))


def _field_derivs(model, pts, field, disp, step):
    """dF along chart displacements: pts (B, d), disp (B, K, d) -> (B, K, N)."""
    hi = np.asarray(field(pts[:, None, :] + step * disp), dtype=float)
    lo = np.asarray(field(pts[:, None, :] - step * disp), dtype=float)
    return (hi - lo) / (2 * step)


def _check_section(proj, values, label, tol=1e-6):
    resid = values - np.einsum("bmn,bn->bm", proj, values)
    norm = np.linalg.norm(values, axis=-1)
    if np.any(np.linalg.norm(resid, axis=-1) > tol * (1.0 + norm)):
        raise NotTangent(f"field values are not a section of {label}")


def leaf_divergence(model, x, field, step=STEP_FIRST, mode="analytic"):
    """div_E of a leafwise field: sum_i <P-tilde dF(X_i), X_i>."""
    pts, lead = _flatten(x, model.dim)
    td = tangent_data(model, pts, mode=mode)
    _check_section(td.proj_leaf, np.asarray(field(pts), dtype=float), "E")
    dF = _field_derivs(model, pts, field, _leaf_disp(td), step)
    return np.einsum("bmn,bin,bim->b", td.proj_leaf, dF, td.frame).reshape(lead)


def ambient_divergence(model, x, field, step=STEP_FIRST, mode="analytic"):
    """Full divergence on M via the tangent frame: sum_i <P dF(X~_i), X~_i>."""
    pts, lead = _flatten(x, model.dim)
    td = tangent_data(model, pts, mode=mode)
    _check_section(td.proj_tangent, np.asarray(field(pts), dtype=float), "TM")
    dF = _field_derivs(model, pts, field, _full_disp(td), step)
    frame_full = np.swapaxes(td.proj_tangent, -1, -2)
    return np.einsum("bmn,bin,bim->b", td.proj_tangent, dF, frame_full).reshape(lead)


def _frame_divergences(model, pts, step=STEP_FIRST, mode="analytic", td=None,
                       which="both"):
    """div_E(X_i) and/or div(X_i) for all frame fields at once.

    Returns (div_leaf, div_full, td) with (B, N) vectors (None when not
    requested).  Uses div_E(X_i) = sum_j [dP~(X_j) X_j]_i and the
    tangent-frame analogue for the full divergence.
    """
    if td is None:
        td = tangent_data(model, pts, mode=mode)
    div_leaf = div_full = None
    if which in ("both", "leaf"):
        dP = _d_leaf_proj(model, pts, _leaf_disp(td), step, mode=mode)
        div_leaf = np.einsum("bjmn,bjn->bm", dP, td.frame)
    if which in ("both", "full"):
        frame_full = np.swapaxes(td.proj_tangent, -1, -2)
        dP = _d_leaf_proj(model, pts, _full_disp(td), step, mode=mode)
        div_full = np.einsum("bjmn,bjn->bm", dP, frame_full)
    return div_leaf, div_full, td


def mean_curvature(model, x, step=STEP_FIRST, mode="analytic"):
    """Mean curvature H of the leaves in R^N: <H, e_i> = -div_E(X_i)."""
    pts, lead = _flatten(x, model.dim)
    div_leaf, _, _ = _frame_divergences(model, pts, step=step, mode=mode, which="leaf")
    return (-div_leaf).reshape(lead + (model.ambient_dim,))


def tension(model, x, step=STEP_FIRST, mode="analytic"):
    """Tension kappa = sum_i (div_E(X_i) - div(X_i)) X_i, a section of E."""
    pts, lead = _flatten(x, model.dim)
    div_leaf, div_full, td = _frame_divergences(model, pts, step=step, mode=mode)
    kap = np.einsum("bmn,bn->bm", td.proj_leaf, div_leaf - div_full)
    return kap.reshape(lead + (model.ambient_dim,))


def frame_apply(model, x, f, step=STEP_FIRST, mode="analytic", td=None):
    """X_i f for every frame field: scalar chart function -> (..., N)."""
    pts, lead = _flatten(x, model.dim)
    if td is None:
        td = tangent_data(model, pts, mode=mode)
    p = model.p
    duf = np.empty((pts.shape[0], p))
    for k in range(p):
        e = np.zeros(model.dim)
        e[k] = step
        duf[:, k] = (np.asarray(f(pts + e)) - np.asarray(f(pts - e))) / (2 * step)
    return np.einsum("bki,bk->bi", td.chart_frame_leaf, duf).reshape(lead + (model.ambient_dim,))


def frame_laplacian(model, x, f, step=STEP_FIRST, step2=STEP_NESTED, mode="analytic"):
    """Leafwise Laplacian as the frame sum sum_i X_i(X_i f)."""
    pts, lead = _flatten(x, model.dim)
    td = tangent_data(model, pts, mode=mode)
    disp = _leaf_disp(td)
    B, N, d = disp.shape
    hi = frame_apply(model, (pts[:, None, :] + step2 * disp).reshape(-1, d),
                     f, step=step, mode=mode).reshape(B, N, N)
    lo = frame_apply(model, (pts[:, None, :] - step2 * disp).reshape(-1, d),
                     f, step=step, mode=mode).reshape(B, N, N)
    idx = np.arange(N)
    rates = (hi[:, idx, idx] - lo[:, idx, idx]) / (2 * step2)
    return rates.sum(axis=-1).reshape(lead)


def leaf_gradient_field(model, f, step=STEP_FIRST, mode="analytic"):
    """grad_E f as an ambient field: J_E (J_E^T J_E)^-1 (df/du)."""

    def field(x):
        pts, lead = _flatten(x, model.dim)
        td = tangent_data(model, pts, mode=mode)
        duf = np.empty((pts.shape[0], model.p))
        for k in range(model.p):
            e = np.zeros(model.dim)
            e[k] = step
            duf[:, k] = (np.asarray(f(pts + e)) - np.asarray(f(pts - e))) / (2 * step)
        grad = td.jac_leaf @ (_gram_inv(td.gram_leaf) @ duf[..., None])
        return grad[..., 0].reshape(lead + (model.ambient_dim,))

    return field


def unit_transverse_field(model, mode="analytic"):
    """Unit section of TM orthogonal to E (codimension-one models only)."""
    if model.q != 1:
        raise ValueError("unit transverse field requires q = 1")

    def field(x):
        pts, lead = _flatten(x, model.dim)
        td = tangent_data(model, pts, mode=mode)
        raw = td.jac[..., :, model.p]
        n = raw - np.einsum("bmn,bn->bm", td.proj_leaf, raw)
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        return n.reshape(lead + (model.ambient_dim,))

    return field


def frame_divergence_rate(model, x, step=STEP_FIRST, step2=STEP_NESTED,
                          mode="analytic", td=None):
    """Nested-difference rates sum_i X_i div(X_i) and sum_i X_i div_E(X_i)."""
    pts, lead = _flatten(x, model.dim)
    if td is None:
        td = tangent_data(model, pts, mode=mode)
    disp = _leaf_disp(td)
    B, N, d = disp.shape
    hi_pts = (pts[:, None, :] + step2 * disp).reshape(-1, d)
    lo_pts = (pts[:, None, :] - step2 * disp).reshape(-1, d)
    divE_hi, div_hi, _ = _frame_divergences(model, hi_pts, step=step, mode=mode)
    divE_lo, div_lo, _ = _frame_divergences(model, lo_pts, step=step, mode=mode)
    idx = np.arange(N)
    rate_full = ((div_hi.reshape(B, N, N) - div_lo.reshape(B, N, N))[:, idx, idx]
                 / (2 * step2)).sum(axis=-1)
    rate_leaf = ((divE_hi.reshape(B, N, N) - divE_lo.reshape(B, N, N))[:, idx, idx]
                 / (2 * step2)).sum(axis=-1)
    return rate_full.reshape(lead), rate_leaf.reshape(lead)


@dataclass
class GeometryReport:
    mean_curvature: np.ndarray      # (..., N)
    tension: np.ndarray             # (..., N)
    divE_frame: np.ndarray          # (..., N)
    div_frame: np.ndarray           # (..., N)
    residuals: dict                 # name -> (...) arrays

    def max_residuals(self):
        return {k: float(np.max(v)) for k, v in self.residuals.items()}


def geometry_identities(model, x, test_functions=None, step=STEP_FIRST,
                        step2=STEP_NESTED, mode="analytic"):
    """Evaluate the frame/curvature identities and return their residuals.

    r1: || sum_i div_E(X_i) X_i ||          (vanishing frame contraction)
    r2: | ||H||^2 + sum_i X_i div_E(X_i) |  (curvature vs nested divergence)
    r3: || sum_i (nabla^E_{X_i} X_i) ||     (vanishing frame self-derivative)
    r4: || kappa - nabla_N N ||             (codimension-one cross-check)
    r5: max_f |div_E(grad_E f) - sum_i X_i(X_i f)|
    """
    pts, lead = _flatten(x, model.dim)
    N = model.ambient_dim
    div_leaf, div_full, td = _frame_divergences(model, pts, step=step, mode=mode)
    H = -div_leaf
    kap = np.einsum("bmn,bn->bm", td.proj_leaf, div_leaf - div_full)

    residuals = {}
    r1_vec = np.einsum("bmn,bn->bm", td.proj_leaf, div_leaf)
    residuals["r1"] = np.linalg.norm(r1_vec, axis=-1).reshape(lead)

    # r2: nested derivative of the div_E(X_i) scalar fields along X_i.
    disp = _leaf_disp(td)
    B = pts.shape[0]
    hi, _, _ = _frame_divergences(model, (pts[:, None, :] + step2 * disp).reshape(-1, model.dim),
                                  step=step, mode=mode, which="leaf")
    lo, _, _ = _frame_divergences(model, (pts[:, None, :] - step2 * disp).reshape(-1, model.dim),
                                  step=step, mode=mode, which="leaf")
    idx = np.arange(N)
    nested = ((hi.reshape(B, N, N) - lo.reshape(B, N, N))[:, idx, idx] / (2 * step2)).sum(axis=-1)
    h_sq = np.einsum("bm,bm->b", H, H)
    residuals["r2"] = np.abs(h_sq + nested).reshape(lead)

    # r3: sum_i P~ dP~(X_i) e_i.
    dP_leaf = _d_leaf_proj(model, pts, disp, step, mode=mode)
    cols = dP_leaf[:, idx, :, idx]                     # (N, B, N): dP~(X_i) e_i
    r3_vec = np.einsum("bmn,ibn->bm", td.proj_leaf, cols)
    residuals["r3"] = np.linalg.norm(r3_vec, axis=-1).reshape(lead)

    if model.q == 1:
        # kappa equals the self-derivative of the unit transverse field:
        # div(X) - div_E(X) = g(nabla_N X, N) = -g(X, nabla_N N) for X in E,
        # so with g(kappa, X) = div_E(X) - div(X) one gets kappa = nabla_N N.
        n_field = unit_transverse_field(model, mode=mode)
        n_here = n_field(pts)
        a = np.einsum("bdn,bn->bd", td.chart_frame_full, n_here)
        dN = (n_field(pts + step * a) - n_field(pts - step * a)) / (2 * step)
        nabla_n = np.einsum("bmn,bn->bm", td.proj_tangent, dN)
        residuals["r4"] = np.linalg.norm(kap - nabla_n, axis=-1).reshape(lead)

    if test_functions:
        worst = np.zeros(B)
        for _, f in test_functions:
            lap_div = leaf_divergence(model, pts,
                                      leaf_gradient_field(model, f, step=step, mode=mode),
                                      step=step, mode=mode)
            lap_frame = frame_laplacian(model, pts, f, step=step, step2=step2, mode=mode)
            worst = np.maximum(worst, np.abs(lap_div - lap_frame))
        residuals["r5"] = worst.reshape(lead)

    return GeometryReport(
        mean_curvature=H.reshape(lead + (N,)),
        tension=kap.reshape(lead + (N,)),
        divE_frame=div_leaf.reshape(lead + (N,)),
        div_frame=div_full.reshape(lead + (N,)),
        residuals=residuals,
    )


def metric_determinants(model, x, mode="analytic"):
    """(det G, det G_E) of the chart metric and its leaf block."""
    pts, lead = _flatten(x, model.dim)
    jac = jacobian(model, pts, mode=mode)
    gram = np.swapaxes(jac, -1, -2) @ jac
    det_full = _gram_det(gram)
    det_leaf = _gram_det(gram[..., : model.p, : model.p])
    return det_full.reshape(lead), det_leaf.reshape(lead)
