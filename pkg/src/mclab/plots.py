"""Static SVG line charts of sweep tables (log-log error vs noise level)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_LABELS = {
    "convex": "convex",
    "convex_rank_r": "convex, rank-r",
    "nonconvex_spectral": "nonconvex",
    "nonconvex_oracle": "nonconvex (oracle init)",
    "constrained": "constrained convex",
    "usvt": "one-shot SVT",
}


def _chart(path, sigma, curves, ylabel, title):
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for label, y in curves:
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(y) & (y > 0)
        if ok.any():
            ax.loglog(np.asarray(sigma)[ok], y[ok], marker="o", label=label)
    ax.set_xlabel("noise level sigma")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_figures(result, out_dir):
    """Write whichever of ``fig1.svg``-``fig3.svg`` the estimator set supports."""
    cfg = result.config
    sigma = list(cfg.sigma_grid)
    ests = set(cfg.estimators)
    written = []
    if "convex" in ests and ests & {"nonconvex_spectral", "nonconvex_oracle"}:
        ncvx = "nonconvex_spectral" if "nonconvex_spectral" in ests else "nonconvex_oracle"
        curves = [("convex", result.series("convex", "rel_fro")),
                  (_LABELS[ncvx], result.series(ncvx, "rel_fro")),
                  ("distance convex vs nonconvex", result.series("convex", "pair_dist"))]
        _chart(out_dir / "fig1.svg", sigma, curves, "relative Frobenius error", "convex vs nonconvex")
        written.append("fig1.svg")
    if "convex" in ests:
        curves = [("entrywise", result.series("convex", "rel_inf")),
                  ("spectral", result.series("convex", "rel_spec"))]
        _chart(out_dir / "fig2.svg", sigma, curves, "relative error of convex estimate", "entrywise / spectral")
        written.append("fig2.svg")
    if ests & {"usvt", "constrained"}:
        for key, tag in (("rel_fro", "a"), ("rel_inf", "b")):
            curves = [(_LABELS[e], result.series(e, key)) for e in ("usvt", "constrained", "convex") if e in ests]
            _chart(out_dir / f"fig3{tag}.svg", sigma, curves, f"relative error ({key})", "estimator comparison")
            written.append(f"fig3{tag}.svg")
    return written
