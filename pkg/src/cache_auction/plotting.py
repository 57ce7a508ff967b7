"""Figure rendering for experiment reports.

Every report CSV gets a sibling PNG so a sweep can be eyeballed without
loading the data elsewhere.  Rendering is headless (Agg) and intentionally
plain: one axes per quantity, one-sigma error bars where available.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_user_metrics_figure(users, payments, utilities, fractions, path, title) -> Path:
    """Grouped per-user bars of payment, utility and cached-interest fraction."""
    fig, (ax_money, ax_frac) = plt.subplots(1, 2, figsize=(9, 3.4))
    x = list(users)
    width = 0.38
    ax_money.bar([u - width / 2 for u in x], payments, width, label="payment")
    ax_money.bar([u + width / 2 for u in x], utilities, width, label="utility")
    ax_money.set_xlabel("user")
    ax_money.set_ylabel("expected value")
    ax_money.legend()
    ax_frac.bar(x, fractions, 0.6, color="gray")
    ax_frac.set_xlabel("user")
    ax_frac.set_ylabel("expected fraction")
    ax_frac.set_ylim(0, 1.05)
    fig.suptitle(title)
    return _finish(fig, path)


def save_sweep_figure(xlabel, values, er, er_se, utility, utility_se, path, title) -> Path:
    """Expected revenue and average user utility against a swept parameter."""
    fig, (ax_er, ax_u) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax_er.errorbar(values, er, yerr=er_se, marker="o", capsize=2)
    ax_er.set_xlabel(xlabel)
    ax_er.set_ylabel("expected revenue")
    if utility is not None:
        ax_u.errorbar(values, utility, yerr=utility_se, marker="s", color="darkred", capsize=2)
        ax_u.set_ylabel("avg user utility")
    ax_u.set_xlabel(xlabel)
    fig.suptitle(title)
    return _finish(fig, path)
