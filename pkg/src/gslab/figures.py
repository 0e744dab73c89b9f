"""Figure rendering for scenario reports.

Each scenario gets a small set of PNGs next to its CSV files: the
ground-state/potential profiles, the heat-bound profile, the supremum
iteration trace, and the large-time decay table.  Everything draws on the
Agg backend so runs stay headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (6.0, 3.8),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 140,
    "savefig.bbox": "tight",
})


def _save(fig, outdir, name):
    path = outdir / f"{name}.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def comparison_profile(art, outdir):
    if art.phi0 is None:
        return None
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.2, 3.4))
    if art.dim == 1:
        x = art.coords[:, 0]
        ax1.plot(x, art.phi0, label=r"ground state $\varphi_0$")
        scale = np.max(art.phi0) / np.max(art.xi)
        ax1.plot(x, art.xi * scale, "--", label=r"$\xi$ (rescaled)")
        ax1.set_xlabel("x")
        ax1.legend()
        ax2.plot(x, art.ratio)
        ax2.set_xlabel("x")
        ax2.set_ylabel(r"$\varphi_0/\xi$")
    else:
        sc = ax1.scatter(art.coords[:, 0], art.coords[:, 1], c=art.phi0, s=8)
        fig.colorbar(sc, ax=ax1, label=r"$\varphi_0$")
        sc2 = ax2.scatter(art.coords[:, 0], art.coords[:, 1], c=art.ratio, s=8)
        fig.colorbar(sc2, ax=ax2, label=r"$\varphi_0/\xi$")
        for ax in (ax1, ax2):
            ax.set_aspect("equal")
    fig.suptitle(f"{art.name}: ground state vs potential")
    return _save(fig, outdir, "comparison_profile")


def beta_profile(art, outdir):
    if not art.beta_table:
        return None
    t, closed, numeric = map(np.array, zip(*art.beta_table))
    fig, ax = plt.subplots()
    ax.loglog(t, closed, label="closed form")
    ax.loglog(t, numeric, "x", label="quadrature")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\beta(t)$")
    ax.legend()
    ax.set_title(f"{art.name}: heat-bound profile")
    return _save(fig, outdir, "beta_profile")


def moser_trace(art, outdir):
    if not art.moser_rows:
        return None
    _, j, theta = map(np.array, zip(*art.moser_rows))
    fig, ax = plt.subplots()
    ax.semilogx(j, theta, "o-", label=r"$\Theta_k$")
    if art.ratio is not None:
        ax.axhline(float(np.max(1.0 / art.ratio)), color="k", ls="--", lw=0.8,
                   label=r"max $\xi/\varphi_0$")
    ax.set_xlabel(r"exponent $j_k$")
    ax.set_ylabel(r"$\Theta_k$")
    ax.legend()
    ax.set_title(f"{art.name}: supremum iteration trace")
    return _save(fig, outdir, "moser_trace")


def heat_decay(art, outdir):
    if not art.heat_rows:
        return None
    t = np.array([r[0] for r in art.heat_rows])
    big_r = np.array([r[1] for r in art.heat_rows])
    fig, ax = plt.subplots()
    ax.semilogy(t, big_r, "o-")
    ax.set_xlabel("t")
    ax.set_ylabel("max relative kernel deviation R(t)")
    ax.set_title(f"{art.name}: large-time decay")
    return _save(fig, outdir, "heat_decay")


def ladder(art, outdir):
    if not art.ladder_rows:
        return None
    ks = np.array([r["k"] for r in art.ladder_rows], dtype=float)
    fig, ax = plt.subplots()
    if "resolvent_gap" in art.ladder_rows[0]:
        gaps = np.array([r["resolvent_gap"] for r in art.ladder_rows])
        ax.loglog(ks, gaps, "o-")
        ax.set_ylabel("resolvent gap")
    else:
        lam = np.array([r["lambda0"] for r in art.ladder_rows])
        ax.plot(1.0 / ks, lam, "o-")
        ax.set_xlabel("1/k")
        ax.set_ylabel(r"$\lambda_0^{(k)}$")
        ax.set_title(f"{art.name}: ladder extrapolation")
        return _save(fig, outdir, "ladder")
    ax.set_xlabel("k")
    ax.set_title(f"{art.name}: ladder convergence")
    return _save(fig, outdir, "ladder")


def render_all(art, outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    made = []
    for fn in (comparison_profile, beta_profile, moser_trace, heat_decay, ladder):
        path = fn(art, outdir)
        if path is not None:
            made.append(path.name)
    return made
