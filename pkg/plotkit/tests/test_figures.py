import csv

import pytest

from plotkit import FigureSpec, SchemaError, build_figure, render


def write_csv(path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


@pytest.fixture
def runlog_csv(tmp_path):
    rows = [[s, 100.0 / (s + 1), 1e-3 / (s + 1), 0.2, 25.0, 0.5, 1e-6] for s in range(20)]
    return write_csv(
        tmp_path / "runlog.csv",
        ["s", "C_lambda", "grad_norm_sq", "eta_bar", "cost_0", "rho_0", "inner_residual_0"],
        rows,
    )


@pytest.fixture
def adaptation_csv(tmp_path):
    rows = [[n, 50.0 - n, 0.9 + 0.02 * n, "memlqr", 0] for n in range(10)]
    return write_csv(
        tmp_path / "adaptation.csv", ["n", "cost", "accuracy", "init_label", "seed"], rows
    )


class TestConvergence:
    def test_series_equals_csv_column(self, runlog_csv, tmp_path):
        spec = FigureSpec("convergence", (runlog_csv,), tmp_path / "c.png")
        fig = build_figure(spec)
        ydata = list(fig.axes[0].lines[0].get_ydata())
        assert ydata == [100.0 / (s + 1) for s in range(20)]
        assert fig.axes[0].get_yscale() == "log"

    def test_renders_file(self, runlog_csv, tmp_path):
        out = render(FigureSpec("convergence", (runlog_csv,), tmp_path / "c.png"))
        assert out.exists() and out.stat().st_size > 0

    def test_missing_column_names_it(self, tmp_path):
        bad = write_csv(tmp_path / "bad.csv", ["s", "objective"], [[0, 1.0]])
        with pytest.raises(SchemaError, match="C_lambda"):
            build_figure(FigureSpec("convergence", (bad,), tmp_path / "c.png"))

    def test_header_only_csv_renders_empty_axes(self, tmp_path):
        empty = write_csv(
            tmp_path / "empty.csv",
            ["s", "C_lambda", "grad_norm_sq", "eta_bar"],
            [],
        )
        out = render(FigureSpec("convergence", (empty,), tmp_path / "c.png"))
        assert out.exists()


class TestAccuracy:
    def test_displayed_values_clamped_to_unit_interval(self, tmp_path):
        rows = [[0, 60.0, -0.2, "x", 0], [1, 55.0, 0.5, "x", 0], [2, 50.0, 1.0, "x", 0]]
        path = write_csv(
            tmp_path / "a.csv", ["n", "cost", "accuracy", "init_label", "seed"], rows
        )
        fig = build_figure(FigureSpec("accuracy", (path,), tmp_path / "a.png"))
        assert list(fig.axes[0].lines[0].get_ydata()) == [0.0, 0.5, 1.0]
        # raw file untouched
        assert path.read_text().splitlines()[1].split(",")[2] == "-0.2"

    def test_label_from_csv(self, adaptation_csv, tmp_path):
        fig = build_figure(FigureSpec("accuracy", (adaptation_csv,), tmp_path / "a.png"))
        assert fig.axes[0].lines[0].get_label() == "memlqr"

    def test_one_curve_per_input(self, adaptation_csv, tmp_path):
        second = write_csv(
            tmp_path / "a2.csv",
            ["n", "cost", "accuracy", "init_label", "seed"],
            [[n, 60.0 - n, 0.8 + 0.02 * n, "average", 0] for n in range(10)],
        )
        fig = build_figure(
            FigureSpec(
                "accuracy", (adaptation_csv, second), tmp_path / "a.png"
            )
        )
        assert len(fig.axes[0].lines) == 2


class TestTrajectory:
    def test_two_panels_with_input_gap(self, tmp_path):
        header = ["t", "x_0", "x_1", "u_0", "stage_cost"]
        rows = [[0, 1.0, -1.0, 0.3, 2.0], [1, 0.5, -0.5, 0.1, 1.0], [2, 0.2, -0.2, "", ""]]
        path = write_csv(tmp_path / "t.csv", header, rows)
        fig = build_figure(FigureSpec("trajectory", (path,), tmp_path / "t.png"))
        states_ax, inputs_ax = fig.axes
        assert len(states_ax.lines) == 2
        assert len(inputs_ax.lines) == 1
        assert len(inputs_ax.lines[0].get_ydata()) == 2  # final row has no input

    def test_missing_state_columns(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["t", "u_0"], [[0, 1.0]])
        with pytest.raises(SchemaError, match="x_0"):
            build_figure(FigureSpec("trajectory", (path,), tmp_path / "t.png"))


class TestComparison:
    def test_one_panel_per_holdout(self, tmp_path):
        paths = []
        for h in range(3):
            paths.append(
                write_csv(
                    tmp_path / f"cmp_{h}.csv",
                    ["n", "cost_memlqr_init", "cost_fomaml_init"],
                    [[n, 500.0 - n, 600.0 - n] for n in range(5)],
                )
            )
        fig = build_figure(
            FigureSpec("comparison", tuple(paths), tmp_path / "cmp.png")
        )
        assert len(fig.axes) == 3
        assert all(len(ax.lines) == 2 for ax in fig.axes)

    def test_infinite_cost_parses(self, tmp_path):
        path = write_csv(
            tmp_path / "cmp.csv",
            ["n", "cost_memlqr_init"],
            [[0, "inf"], [1, 500.0]],
        )
        fig = build_figure(FigureSpec("comparison", (path,), tmp_path / "c.png"))
        ydata = fig.axes[0].lines[0].get_ydata()
        assert ydata[0] == float("inf") and ydata[1] == 500.0


class TestSpecValidation:
    def test_unknown_kind(self, tmp_path):
        with pytest.raises(SchemaError):
            FigureSpec("heatmap", (tmp_path / "x.csv",), tmp_path / "x.png")

    def test_no_inputs(self, tmp_path):
        with pytest.raises(SchemaError):
            FigureSpec("accuracy", (), tmp_path / "x.png")

    def test_deterministic_series(self, runlog_csv, tmp_path):
        spec = FigureSpec("convergence", (runlog_csv,), tmp_path / "c.png")
        first = list(build_figure(spec).axes[0].lines[0].get_ydata())
        second = list(build_figure(spec).axes[0].lines[0].get_ydata())
        assert first == second


class TestCli:
    def test_end_to_end(self, runlog_csv, tmp_path):
        from plotkit.cli import main

        out = tmp_path / "fig.png"
        assert main(
            ["convergence", "--in", str(runlog_csv), "--labels", "run", "--out", str(out)]
        ) == 0
        assert out.exists()

    def test_schema_error_exit_code(self, tmp_path):
        from plotkit.cli import main

        bad = write_csv(tmp_path / "bad.csv", ["s"], [[1]])
        assert main(
            ["convergence", "--in", str(bad), "--out", str(tmp_path / "f.png")]
        ) == 1
