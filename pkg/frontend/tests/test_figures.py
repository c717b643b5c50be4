"""Plot tool: schema handling, curve properties, rendering."""
import pathlib

import pytest

from cdfplot import (
    FigureSpec,
    SchemaError,
    extract_curves,
    load_cdf_rows,
    render_cdf_figure,
)
from cdfplot.cli import main

DATA = pathlib.Path(__file__).parent / "data"
EXPERIMENT_FIXTURES = ("cdf_onoff.csv", "cdf_subband.csv", "cdf_beamforming.csv")


def write_csv(path, rows):
    lines = ["mode,algorithm,quantity,value,cdf"]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def single_point_csv(tmp_path):
    path = tmp_path / "single.csv"
    write_csv(path, [("onoff", "solo", "link-rate", 7.5, 1.0)])
    return path


@pytest.fixture
def dominance_csv(tmp_path):
    # algorithm "better" stochastically dominates "worse"
    path = tmp_path / "dom.csv"
    rows = []
    for k, v in enumerate([1.0, 2.0, 3.0, 4.0]):
        rows.append(("onoff", "worse", "link-rate", v, (k + 1) / 4))
        rows.append(("onoff", "better", "link-rate", v * 2.5, (k + 1) / 4))
    write_csv(path, rows)
    return path


class TestLoading:
    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("mode,algorithm,value,cdf\nonoff,a,1.0,1.0\n")
        with pytest.raises(SchemaError) as err:
            load_cdf_rows(str(path))
        assert "quantity" in str(err.value)

    def test_bad_number_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("mode,algorithm,quantity,value,cdf\nonoff,a,link-rate,oops,1\n")
        with pytest.raises(SchemaError):
            load_cdf_rows(str(path))

    def test_unknown_quantity_rejected(self, tmp_path):
        with pytest.raises(SchemaError):
            FigureSpec(input_path="x", quantity="latency", output_path="y")


class TestCurves:
    def test_single_point_single_step(self, single_point_csv, tmp_path):
        curves = render_cdf_figure(FigureSpec(
            input_path=str(single_point_csv), quantity="link-rate",
            output_path=str(tmp_path / "fig.png")))
        assert curves == {"solo": ([7.5], [1.0])}
        assert (tmp_path / "fig.png").stat().st_size > 0

    def test_dominance_preserved(self, dominance_csv, tmp_path):
        curves = render_cdf_figure(FigureSpec(
            input_path=str(dominance_csv), quantity="link-rate",
            output_path=str(tmp_path / "fig.png")))
        worse, better = curves["worse"], curves["better"]
        assert worse[1] == better[1]  # same probability grid
        # the dominating curve lies right of the other at every level
        assert all(b > w for w, b in zip(worse[0], better[0]))

    @pytest.mark.parametrize("fixture", EXPERIMENT_FIXTURES)
    @pytest.mark.parametrize("quantity", ("link-rate", "system-utility"))
    def test_experiment_curves_monotone_and_complete(self, fixture, quantity,
                                                     tmp_path):
        curves = render_cdf_figure(FigureSpec(
            input_path=str(DATA / fixture), quantity=quantity,
            output_path=str(tmp_path / f"{fixture}.{quantity}.png")))
        assert len(curves) == 4
        for values, probs in curves.values():
            assert values == sorted(values)
            assert all(b >= a for a, b in zip(probs, probs[1:]))
            assert probs[-1] == pytest.approx(1.0)

    def test_missing_algorithm_label_rejected(self, single_point_csv, tmp_path):
        with pytest.raises(SchemaError):
            render_cdf_figure(FigureSpec(
                input_path=str(single_point_csv), quantity="link-rate",
                output_path=str(tmp_path / "fig.png"),
                labels={"ghost": "Ghost"}))


class TestRendering:
    def test_idempotent_bytes(self, dominance_csv, tmp_path):
        paths = []
        for run in range(2):
            out = tmp_path / f"fig{run}.png"
            render_cdf_figure(FigureSpec(
                input_path=str(dominance_csv), quantity="link-rate",
                output_path=str(out)))
            paths.append(out.read_bytes())
        assert paths[0] == paths[1]

    def test_cli_renders(self, tmp_path):
        out = tmp_path / "fig.png"
        code = main(["--in", str(DATA / "cdf_onoff.csv"), "--quantity",
                     "link-rate", "--out", str(out), "--title", "on-off"])
        assert code == 0
        assert out.stat().st_size > 0

    def test_cli_failure_is_single_line(self, tmp_path, capsys):
        code = main(["--in", str(tmp_path / "missing.csv"),
                     "--out", str(tmp_path / "fig.png")])
        assert code == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("error:")
