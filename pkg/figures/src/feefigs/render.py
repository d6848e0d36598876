"""Render publication figures from fee-competition CSV artifacts.

Every figure id maps to the CSV files the solver/simulator CLI emits, the
columns it needs, and a renderer producing one vector (PDF) file per
panel.  Line styling follows the source captions: solid lines are sell
fees, dashed lines are buy fees; market structures are colored blue
(single pool), red (two pools), green (three pools).
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SELL_STYLE = dict(linestyle="-")
BUY_STYLE = dict(linestyle="--")
STRUCTURE_COLORS = {1: "tab:blue", 2: "tab:red", 3: "tab:green"}
STRUCTURE_LABELS = {1: "one pool", 2: "two pools", 3: "three pools"}


class RenderError(RuntimeError):
    """Raised when inputs are missing or malformed; message names them."""


@dataclass(frozen=True)
class FigureSpecEntry:
    figure_id: str
    inputs: tuple
    columns: tuple
    xlabel: str
    ylabel: str


def load_csv(path: str, required: tuple) -> np.ndarray:
    if not os.path.exists(path):
        raise RenderError(f"missing input file: {path}")
    with open(path) as fh:
        head = fh.readline()
        if not head.startswith("# manifest_hash="):
            raise RenderError(f"{path}: missing manifest header")
        lines = [line for line in fh if not line.startswith("#")]
    data = np.genfromtxt(io.StringIO("".join(lines)), delimiter=",", names=True,
                         dtype=None, encoding=None)
    missing = [c for c in required if c not in (data.dtype.names or ())]
    if missing:
        raise RenderError(f"{path}: missing columns {missing}")
    return np.atleast_1d(data)


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    # Drop the creation timestamp so identical inputs give identical bytes.
    fig.savefig(path, format="pdf", bbox_inches="tight",
                metadata={"CreationDate": None})
    plt.close(fig)
    return path


def _fee_lines(ax, x, sell, buy, color=None, alpha=1.0):
    ax.plot(x, sell, color=color, alpha=alpha, **SELL_STYLE)
    ax.plot(x, buy, color=color, alpha=alpha, **BUY_STYLE)


def render_fees_vs_inventory(entry, data_dir, out_dir):
    out = []
    for name in entry.inputs:
        data = load_csv(os.path.join(data_dir, name), entry.columns)
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        _fee_lines(ax, data["own_y"], data["sell_fee"], data["buy_fee"],
                   color="tab:blue")
        ax.set_xlabel(entry.xlabel)
        ax.set_ylabel(entry.ylabel)
        ax.legend(["sell fee", "buy fee"], frameon=False)
        label = name.replace("fees_vs_inventory_", "").replace(".csv", "")
        ax.set_title(f"opponent at {label}")
        out.append(_save(fig, out_dir, name.replace(".csv", ".pdf")))
    return out


def render_fees_3d(entry, data_dir, out_dir):
    data = load_csv(os.path.join(data_dir, entry.inputs[0]), entry.columns)
    own = np.unique(data["own_j"])
    opp = np.unique(data["opp_j"])
    out = []
    for column, label in (("buy_fee", "buy fee"), ("sell_fee", "sell fee")):
        grid = np.full((own.size, opp.size), np.nan)
        oi = np.searchsorted(own, data["own_j"])
        pi = np.searchsorted(opp, data["opp_j"])
        grid[oi, pi] = data[column]
        fig = plt.figure(figsize=(4.8, 3.8))
        ax = fig.add_subplot(projection="3d")
        o_mesh, p_mesh = np.meshgrid(own, opp, indexing="ij")
        masked = np.ma.masked_invalid(grid)
        ax.plot_surface(o_mesh, p_mesh, masked, cmap="viridis",
                        linewidth=0.1, antialiased=True)
        ax.set_xlabel("own inventory index")
        ax.set_ylabel("opponent inventory index")
        ax.set_zlabel(label)
        out.append(_save(fig, out_dir, f"fees_3d_{column.replace('_fee', '')}.pdf"))
    return out


def _render_colorbar_family(entry, data_dir, out_dir, x_col, group_col="opp_level"):
    data = load_csv(os.path.join(data_dir, entry.inputs[0]), entry.columns)
    levels = np.unique(data[group_col])
    out = []
    for level in levels:
        sub = data[data[group_col] == level]
        own_values = np.unique(sub["own_j"])
        cmap = plt.get_cmap("viridis")
        norm = plt.Normalize(own_values.min(), own_values.max())
        fig, ax = plt.subplots(figsize=(4.6, 3.4))
        for j in own_values:
            rows = sub[sub["own_j"] == j]
            order = np.argsort(rows[x_col])
            finite = np.isfinite(rows["sell_fee"][order]) | np.isfinite(rows["buy_fee"][order])
            if not np.any(finite):
                continue
            _fee_lines(ax, rows[x_col][order], rows["sell_fee"][order],
                       rows["buy_fee"][order], color=cmap(norm(j)), alpha=0.8)
        sm = plt.cm.ScalarMappable(cmap=cmap, norm=norm)
        fig.colorbar(sm, ax=ax, label="own inventory index")
        ax.set_xlabel(entry.xlabel)
        ax.set_ylabel(entry.ylabel)
        level_tag = str(level).replace(".", "p")
        out.append(_save(fig, out_dir,
                         f"{entry.figure_id.replace('-', '_')}_opp{level_tag}.pdf"))
    return out


def render_fees_vs_time(entry, data_dir, out_dir):
    return _render_colorbar_family(entry, data_dir, out_dir, x_col="t")


def render_fees_vs_oracle(entry, data_dir, out_dir):
    return _render_colorbar_family(entry, data_dir, out_dir, x_col="s")


def _render_scan(entry, data_dir, out_dir, y_col, se_col=None):
    data = load_csv(os.path.join(data_dir, entry.inputs[0]), entry.columns)
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    for m in np.unique(data["structure"]).astype(int):
        sub = data[data["structure"] == m]
        order = np.argsort(sub["volume"])
        color = STRUCTURE_COLORS.get(m, None)
        if se_col and se_col in data.dtype.names:
            ax.errorbar(sub["volume"][order], sub[y_col][order],
                        yerr=sub[se_col][order], color=color,
                        label=STRUCTURE_LABELS.get(m, f"{m} pools"), capsize=2)
        else:
            ax.plot(sub["volume"][order], sub[y_col][order], color=color,
                    marker="o", label=STRUCTURE_LABELS.get(m, f"{m} pools"))
    ax.set_xlabel(entry.xlabel)
    ax.set_ylabel(entry.ylabel)
    ax.legend(frameon=False)
    return [_save(fig, out_dir, f"{entry.figure_id.replace('-', '_')}.pdf")]


def render_bid_ask(entry, data_dir, out_dir):
    return _render_scan(entry, data_dir, out_dir, "strategic_spread")


def render_slippage(entry, data_dir, out_dir):
    return _render_scan(entry, data_dir, out_dir, "slippage", se_col="slippage_se")


def render_venue_revenue(entry, data_dir, out_dir):
    return _render_scan(entry, data_dir, out_dir, "venue_revenue",
                        se_col="venue_revenue_se")


def render_revenue_per_player(entry, data_dir, out_dir):
    return _render_scan(entry, data_dir, out_dir, "per_lp_revenue",
                        se_col="per_lp_revenue_se")


FIGURES = {
    "fees-vs-inventory": (FigureSpecEntry(
        "fees-vs-inventory",
        ("fees_vs_inventory_yb500.csv", "fees_vs_inventory_yb502.csv",
         "fees_vs_inventory_yb497.csv"),
        ("own_j", "own_y", "buy_fee", "sell_fee"),
        "own inventory (Y)", "fee"), render_fees_vs_inventory),
    "fees-3d": (FigureSpecEntry(
        "fees-3d", ("fees_3d.csv",),
        ("own_j", "opp_j", "buy_fee", "sell_fee"),
        "own inventory index", "fee"), render_fees_3d),
    "fees-vs-time": (FigureSpecEntry(
        "fees-vs-time", ("fees_vs_time.csv",),
        ("t", "opp_level", "own_j", "buy_fee", "sell_fee"),
        "time", "fee"), render_fees_vs_time),
    "fees-vs-oracle": (FigureSpecEntry(
        "fees-vs-oracle", ("fees_vs_oracle.csv",),
        ("s", "opp_level", "own_j", "buy_fee", "sell_fee"),
        "oracle price", "fee"), render_fees_vs_oracle),
    "bid-ask-vs-volume": (FigureSpecEntry(
        "bid-ask-vs-volume", ("bid_ask_vs_volume.csv",),
        ("structure", "volume", "strategic_spread"),
        "total traded volume (X)", "strategic bid-ask spread"), render_bid_ask),
    "slippage-vs-volume": (FigureSpecEntry(
        "slippage-vs-volume", ("slippage_vs_volume.csv",),
        ("structure", "volume", "slippage"),
        "total traded volume (X)", "average slippage"), render_slippage),
    "venue-revenue": (FigureSpecEntry(
        "venue-revenue", ("venue_revenue.csv",),
        ("structure", "volume", "venue_revenue"),
        "total traded volume (X)", "venue revenue"), render_venue_revenue),
    "revenue-per-player": (FigureSpecEntry(
        "revenue-per-player", ("revenue_per_player.csv",),
        ("structure", "volume", "per_lp_revenue"),
        "total traded volume (X)", "revenue per provider"), render_revenue_per_player),
}


def render(figure_id: str, data_dir: str, out_dir: str) -> list:
    """Render one figure id; returns the written file paths."""
    if figure_id not in FIGURES:
        raise RenderError(
            f"unknown figure id {figure_id!r}; valid: {', '.join(sorted(FIGURES))}"
        )
    entry, renderer = FIGURES[figure_id]
    missing = [name for name in entry.inputs
               if not os.path.exists(os.path.join(data_dir, name))]
    if missing:
        raise RenderError(
            f"figure {figure_id}: missing input file(s) {missing} in {data_dir}"
        )
    os.makedirs(out_dir, exist_ok=True)
    return renderer(entry, data_dir, out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="feefigs", description="Render figures from experiment CSVs")
    parser.add_argument("figures", nargs="+",
                        help="figure id(s), or 'all'")
    parser.add_argument("--data-dir", required=True)
    parser.add_argument("--out-dir", required=True)
    args = parser.parse_args(argv)
    ids = sorted(FIGURES) if args.figures == ["all"] else args.figures
    try:
        for figure_id in ids:
            for path in render(figure_id, args.data_dir, args.out_dir):
                print(f"wrote {path}")
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
