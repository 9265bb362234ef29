"""Matplotlib figure rendering for the report paths (file output only)."""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

# Strip the autogenerated Software tag so repeated runs are byte identical.
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)


def _heatmap(ax, hist, title):
    per_x = hist.edges[0][-1]
    per_y = hist.edges[1][-1]
    im = ax.imshow(hist.mass.T, origin="lower", extent=[0, per_x, 0, per_y],
                   aspect="auto", cmap="viridis")
    ax.set_title(title)
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    return im


def occupation_figure(hist, path, title="occupation measure"):
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    if len(hist.grid_dims) == 1:
        centers = 0.5 * (hist.edges[0][1:] + hist.edges[0][:-1])
        ax.step(centers, hist.mass, where="mid")
        ax.axhline(1.0 / hist.n_cells, color="k", ls="--", lw=0.8, label="uniform")
        ax.set_xlabel("u")
        ax.set_ylabel("cell mass")
        ax.legend(frameon=False)
        ax.set_title(title)
    else:
        im = _heatmap(ax, hist, title)
        fig.colorbar(im, ax=ax, label="cell mass")
    fig.tight_layout()
    _save(fig, path)


def path_figure(ensemble, path, max_paths=6):
    fig, axes = plt.subplots(2, 1, figsize=(6.0, 5.4), sharex=True)
    t = ensemble.t_record
    k = min(max_paths, ensemble.n_paths)
    for j in range(k):
        axes[0].plot(t, ensemble.coords[:, j, 0], lw=0.7)
        axes[1].plot(t, ensemble.logdet_full[:, j], lw=0.7)
    axes[0].set_ylabel("leaf coordinate")
    axes[1].set_ylabel(r"$\ln|\det$ flow$|$")
    axes[1].set_xlabel("t")
    axes[0].set_title(f"{ensemble.model.name}: sample paths")
    fig.tight_layout()
    _save(fig, path)


def lyapunov_figure(ensemble, report, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    t = ensemble.t_record
    pos = t > 0
    for j in range(min(16, ensemble.n_paths)):
        ax.plot(t[pos], ensemble.logdet_full[pos, j] / t[pos], lw=0.6, alpha=0.6)
    ax.axhline(report.lambda_pathwise["mean"], color="k", lw=1.4,
               label=f"pathwise {report.lambda_pathwise['mean']:.4f}")
    ax.axhline(report.lambda_baxendale["value"], color="tab:red", ls="--", lw=1.2,
               label=f"ergodic average {report.lambda_baxendale['value']:.4f}")
    ax.axhline(report.lambda_geometric["value"], color="tab:blue", ls=":", lw=1.6,
               label=f"curvature form {report.lambda_geometric['value']:.4f}")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\ln|\det \varphi_{t*}| / t$")
    ax.set_title(f"{report.model}: exponent-sum estimators")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def geometry_figure(model, axes_pts, residuals, path):
    """Residual maps over the chart grid (lines for d=1, heatmaps for d=2)."""
    names = sorted(residuals)
    n = len(names)
    if model.dim == 1:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for name in names:
            ax.semilogy(axes_pts[0], np.maximum(residuals[name], 1e-18), label=name)
        ax.set_xlabel("u")
        ax.set_ylabel("residual")
        ax.legend(frameon=False, fontsize=8)
        ax.set_title(f"{model.name}: identity residuals")
    else:
        ncol = min(3, n)
        nrow = (n + ncol - 1) // ncol
        fig, grid = plt.subplots(nrow, ncol, figsize=(3.4 * ncol, 2.9 * nrow),
                                 squeeze=False)
        for k, name in enumerate(names):
            ax = grid[k // ncol][k % ncol]
            im = ax.imshow(residuals[name].T, origin="lower",
                           extent=[axes_pts[0][0], axes_pts[0][-1],
                                   axes_pts[1][0], axes_pts[1][-1]],
                           aspect="auto", cmap="magma")
            ax.set_title(name, fontsize=9)
            fig.colorbar(im, ax=ax, shrink=0.85)
        for k in range(n, nrow * ncol):
            grid[k // ncol][k % ncol].set_axis_off()
        fig.suptitle(f"{model.name}: identity residuals", fontsize=11)
    fig.tight_layout()
    _save(fig, path)


def measure_action_figure(result, path):
    if len(result.hist_initial.grid_dims) == 1:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        c = 0.5 * (result.hist_initial.edges[0][1:] + result.hist_initial.edges[0][:-1])
        ax.step(c, result.hist_initial.mass, where="mid", label="candidate")
        ax.step(c, result.hist_pushforward.mass, where="mid", label="pushforward")
        ax.legend(frameon=False)
    else:
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8))
        _heatmap(axes[0], result.hist_initial, "candidate measure")
        im = _heatmap(axes[1], result.hist_pushforward,
                      f"det-weighted pushforward (TV={result.tv_fixed_point:.3f})")
        fig.colorbar(im, ax=axes.tolist(), shrink=0.8)
        _save(fig, path)
        return
    fig.suptitle(f"TV={result.tv_fixed_point:.3f}, cocycle defect="
                 f"{result.cocycle_defect:.3f}", fontsize=10)
    fig.tight_layout()
    _save(fig, path)
