import os

import numpy as np
import pytest

from feefigs.render import FIGURES, RenderError, load_csv, main, render


def _write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write("# manifest_hash=deadbeef\n# experiment=synthetic\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


@pytest.fixture()
def data_dir(tmp_path):
    d = tmp_path / "data"
    d.mkdir()
    js = np.arange(-3, 4)
    for label in ("500", "502", "497"):
        rows = [[j, 500 + 0.25 * j, 100 - 0.1 * j,
                 0.01 + 1e-4 * j if j > -3 else float("nan"),
                 0.01 - 1e-4 * j if j < 3 else float("nan")] for j in js]
        _write_csv(d / f"fees_vs_inventory_yb{label}.csv",
                   ["own_j", "own_y", "own_z", "buy_fee", "sell_fee"], rows)
    rows = [[a, 500 + 0.25 * a, b, 500 + 0.25 * b, 0.01 + 1e-4 * (a - b), 0.01]
            for a in js for b in js]
    _write_csv(d / "fees_3d.csv",
               ["own_j", "own_y", "opp_j", "opp_y", "buy_fee", "sell_fee"], rows)
    rows = [[t, level, j, 0.01 + 1e-3 * t, 0.011 - 1e-3 * t]
            for t in (0.0, 0.5, 1.0) for level in (500, 497) for j in js]
    _write_csv(d / "fees_vs_time.csv",
               ["t", "opp_level", "own_j", "buy_fee", "sell_fee"], rows)
    rows = [[s, level, j, 0.01 + 1e-4 * (s - 100), 0.01 - 1e-4 * (s - 100)]
            for s in (95.0, 100.0, 105.0) for level in (500,) for j in js]
    _write_csv(d / "fees_vs_oracle.csv",
               ["s", "opp_level", "own_j", "buy_fee", "sell_fee"], rows)
    scan = [[m, 25.0 * 2 ** i, 900.0 * 2 ** i * m ** 0.1, 1.0, 1.05 - 0.01 * i, 0.002,
             2.1 - 0.02 * i - 0.01 * m, 2.0, 0.1]
            for m in (1, 2, 3) for i in range(4)]
    _write_csv(d / "slippage_vs_volume.csv",
               ["structure", "lambda", "volume", "volume_se", "slippage",
                "slippage_se"],
               [[r[0], r[1], r[2], r[3], r[4], r[5]] for r in scan])
    _write_csv(d / "bid_ask_vs_volume.csv",
               ["structure", "lambda", "volume", "strategic_buy_rate",
                "strategic_sell_rate", "strategic_spread"],
               [[r[0], r[1], r[2], 101.0, 99.0, r[6]] for r in scan])
    _write_csv(d / "venue_revenue.csv",
               ["structure", "lambda", "volume", "venue_revenue", "venue_revenue_se"],
               [[r[0], r[1], r[2], 3.5, 0.05] for r in scan])
    _write_csv(d / "revenue_per_player.csv",
               ["structure", "lambda", "volume", "per_lp_revenue", "per_lp_revenue_se"],
               [[r[0], r[1], r[2], 35.0 / r[0], 0.1] for r in scan])
    return d


def test_render_all_ids(data_dir, tmp_path):
    out = tmp_path / "figs"
    written = []
    for figure_id in FIGURES:
        paths = render(figure_id, str(data_dir), str(out))
        assert paths, figure_id
        written.extend(paths)
    for path in written:
        assert os.path.exists(path)
        assert path.endswith(".pdf")
        with open(path, "rb") as fh:
            assert fh.read(5) == b"%PDF-"
    # One file per panel: 3 inventory panels, 2 surfaces, 2 time panels,
    # 1 oracle panel, 4 scan figures.
    assert len(written) == 3 + 2 + 2 + 1 + 4


def test_missing_input_named(data_dir, tmp_path):
    os.remove(data_dir / "fees_3d.csv")
    with pytest.raises(RenderError, match="fees_3d.csv"):
        render("fees-3d", str(data_dir), str(tmp_path / "o"))


def test_empty_data_dir_lists_expected(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(RenderError, match="fees_vs_inventory_yb500.csv"):
        render("fees-vs-inventory", str(empty), str(tmp_path / "o"))


def test_missing_column_named(data_dir, tmp_path):
    path = data_dir / "venue_revenue.csv"
    _write_csv(path, ["structure", "lambda", "volume"], [[1, 25.0, 900.0]])
    with pytest.raises(RenderError, match="venue_revenue"):
        render("venue-revenue", str(data_dir), str(tmp_path / "o"))


def test_manifest_header_required(tmp_path):
    path = tmp_path / "no_header.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(RenderError, match="manifest"):
        load_csv(str(path), ("a", "b"))


def test_unknown_figure_id():
    with pytest.raises(RenderError, match="valid"):
        render("fees-vs-nothing", ".", ".")


def test_cli_exit_codes(data_dir, tmp_path, capsys):
    assert main(["slippage-vs-volume", "--data-dir", str(data_dir),
                 "--out-dir", str(tmp_path / "o")]) == 0
    assert main(["slippage-vs-volume", "--data-dir", str(tmp_path / "nowhere"),
                 "--out-dir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "slippage_vs_volume.csv" in err


def test_rerender_identical_bytes(data_dir, tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    p1 = render("bid-ask-vs-volume", str(data_dir), str(out1))[0]
    p2 = render("bid-ask-vs-volume", str(data_dir), str(out2))[0]
    assert open(p1, "rb").read() == open(p2, "rb").read()
