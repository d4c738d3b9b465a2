import pytest

from mmnlse import tables


@pytest.fixture(scope="module")
def cells():
    return {(c.table, c.row, c.column): c for c in tables.all_cells()}


@pytest.mark.parametrize("row,column,printed,tol", [
    ("E=10 nJ, L=5 m", "k1 db0", -3009, 0.01),
    ("E=0.1 nJ, L=100 m", "k1 db0", -60182, 0.01),
    ("E=10 nJ, L=5 m", "k1 c/k2^2", -4.8e-6, 0.05),
    ("E=0.1 nJ, L=100 m", "k1 db1/k2", 2.5e-4, 0.05),
    ("E=10 nJ, L=5 m", "L_NL", 0.09, 0.10),
    ("E=0.1 nJ, L=100 m", "L_NL", 9.28, 0.10),
    ("E=10 nJ, L=5 m", "k1 d", 53.85, 0.10),
    ("E=10 nJ, L=5 m", "P0", 9393, 0.001),
])
def test_table2_cells(cells, row, column, printed, tol):
    c = cells[("2", row, column)]
    assert c.printed == printed
    assert c.computed == pytest.approx(printed, rel=tol)


def test_xpm_column_is_twice_spm(cells):
    for key, c in cells.items():
        if key[2] == "k1 d gC/gS":
            assert c.computed == pytest.approx(2 * cells[(key[0], key[1], "k1 d")].computed)


def test_erratum_flagged(cells):
    c = cells[("2", "E=1e-06 nJ, L=1000 m", "P0")]
    assert c.erratum == pytest.approx(9.39e-4)
    assert abs(c.computed - c.printed) / c.printed > 0.5  # the printed digit is off by 10x
    assert c.ok


def test_fitted_window_for_long_rows(cells):
    c = cells[("2", "E=0.001 nJ, L=1000 m", "k1 c/k2^2")]
    assert "T_max fitted" in c.note
    assert 290 < float(c.note.split(":")[1].split()[0]) < 320


def test_table3_period_slack(cells):
    c = cells[("3", "p=2, L=100 m", "scaled db0")]
    assert "one-period" in c.note and c.ok
    assert cells[("3", "p=3, L=100 m", "scaled db0")].computed == pytest.approx(-0.00365,
                                                                                abs=5e-6)


def test_report_lists_every_cell():
    cells = tables.all_cells()
    text = tables.format_report(cells)
    assert len(text.splitlines()) == len(cells) + 3
    assert text.endswith(f"{len(cells)}/{len(cells)} cells within tolerance")


def test_failing_cell_reported():
    bad = tables.Cell("2", "r", "c", 2.0, 1.0, 0.1)
    assert not bad.ok and "FAIL" in tables.format_report([bad])
