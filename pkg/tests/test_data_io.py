import numpy as np
import pytest

from dfsvm.data_io import (
    Panel,
    Quarter,
    TransformCode,
    apply_transform,
    destandardize_panel,
    invert_transform,
    load_csv_panel,
    plan_expanding_windows,
    standardize_panel,
    transform_panel,
    write_csv_panel,
)
from dfsvm.errors import (
    ConstantSeries,
    MissingSeries,
    NonPositiveValue,
    OriginOutOfRange,
    RaggedPanel,
    UnparseableDate,
)


def make_panel(values, start=Quarter(1960, 1), codes=None):
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    return Panel(
        names=[f"s{j}" for j in range(p)],
        times=[start + t for t in range(n)],
        values=values,
        transform=codes or [TransformCode.NONE] * p,
    )


class TestQuarter:
    def test_parse_and_str(self):
        q = Quarter.parse("1999Q4")
        assert (q.year, q.quarter) == (1999, 4)
        assert str(q) == "1999Q4"

    def test_arithmetic(self):
        assert Quarter(1999, 4) + 1 == Quarter(2000, 1)
        assert Quarter(2000, 1) + (-1) == Quarter(1999, 4)
        assert Quarter(2024, 3) - Quarter(1960, 1) == 258

    def test_bad_parse(self):
        with pytest.raises(UnparseableDate):
            Quarter.parse("1999M4")


class TestLoadCsv:
    def test_roundtrip_and_order(self, tmp_path):
        panel = make_panel(np.arange(12.0).reshape(4, 3) + 1.0)
        path = tmp_path / "panel.csv"
        write_csv_panel(panel, path)
        # request a sub-panel in a different order
        spec = [("s2", TransformCode.NONE), ("s0", TransformCode.LOG)]
        got = load_csv_panel(path, spec)
        assert got.names == ["s2", "s0"]
        assert got.transform == [TransformCode.NONE, TransformCode.LOG]
        np.testing.assert_allclose(got.values[:, 0], panel.values[:, 2])

    def test_empty_spec_rejected(self, tmp_path):
        panel = make_panel(np.ones((4, 1)))
        path = tmp_path / "panel.csv"
        write_csv_panel(panel, path)
        with pytest.raises(MissingSeries):
            load_csv_panel(path, [])

    def test_single_series(self, tmp_path):
        panel = make_panel(np.arange(4.0)[:, None] + 1.0)
        path = tmp_path / "p.csv"
        write_csv_panel(panel, path)
        got = load_csv_panel(path, [("s0", TransformCode.NONE)])
        assert got.values.shape == (4, 1)

    def test_missing_series(self, tmp_path):
        panel = make_panel(np.ones((4, 2)))
        path = tmp_path / "p.csv"
        write_csv_panel(panel, path)
        with pytest.raises(MissingSeries):
            load_csv_panel(path, [("nope", TransformCode.NONE)])

    def test_edge_nans_trimmed_interior_rejected(self, tmp_path):
        values = np.ones((6, 2))
        panel = make_panel(values)
        path = tmp_path / "p.csv"
        write_csv_panel(panel, path)
        text = path.read_text().splitlines()
        text[1] = text[1].replace("1.0", "", 1)  # leading NaN row
        path.write_text("\n".join(text) + "\n")
        got = load_csv_panel(path, [("s0", TransformCode.NONE), ("s1", TransformCode.NONE)])
        assert got.n == 5 and got.times[0] == Quarter(1960, 2)
        text[3] = text[3].replace("1.0", "", 1)  # interior NaN
        path.write_text("\n".join(text) + "\n")
        with pytest.raises(RaggedPanel):
            load_csv_panel(path, [("s0", TransformCode.NONE), ("s1", TransformCode.NONE)])


class TestApplyTransform:
    def test_none_identity(self):
        x = np.array([3.0, 1.0, 2.0])
        np.testing.assert_array_equal(apply_transform(x, TransformCode.NONE), x)

    def test_difflog_equal_levels(self):
        np.testing.assert_allclose(
            apply_transform(np.array([100.0, 100.0]), TransformCode.DIFF_LOG_100), [0.0]
        )

    def test_difflog_value(self):
        # oracle: direct high-precision evaluation of 100*ln(102/100)
        expected = 100.0 * (np.log(102.0) - np.log(100.0))
        got = apply_transform(np.array([100.0, 102.0]), TransformCode.DIFF_LOG_100)
        np.testing.assert_allclose(got, [expected], rtol=1e-14)
        assert abs(got[0] - 1.9802627296179712) < 1e-12

    def test_log_identities(self):
        got = apply_transform(np.array([1.0, np.e]), TransformCode.LOG)
        np.testing.assert_allclose(got, [0.0, 1.0], atol=1e-15)

    def test_positivity_required(self):
        with pytest.raises(NonPositiveValue):
            apply_transform(np.array([1.0, 0.0]), TransformCode.LOG)
        with pytest.raises(NonPositiveValue):
            apply_transform(np.array([1.0, -2.0]), TransformCode.DIFF_LOG_100)

    def test_difflog_shortens_by_one(self):
        rng = np.random.default_rng(0)
        x = np.exp(rng.standard_normal(17))
        assert apply_transform(x, TransformCode.DIFF_LOG_100).shape == (16,)

    def test_difflog_inverse_reconstructs_levels(self):
        rng = np.random.default_rng(1)
        x = np.exp(rng.standard_normal(40) * 0.1).cumsum() + 5.0
        z = apply_transform(x, TransformCode.DIFF_LOG_100)
        back = invert_transform(z, TransformCode.DIFF_LOG_100, anchor=x[0])
        np.testing.assert_allclose(back, x[1:], rtol=1e-9)


class TestTransformPanel:
    def test_rebalances_on_difflog(self):
        panel = make_panel(
            np.column_stack([np.exp(np.arange(5.0) / 10), np.arange(5.0)]),
            codes=[TransformCode.DIFF_LOG_100, TransformCode.NONE],
        )
        out = transform_panel(panel)
        assert out.n == 4
        assert out.times[0] == panel.times[1]
        np.testing.assert_allclose(out.values[:, 0], 10.0, rtol=1e-12)
        np.testing.assert_allclose(out.values[:, 1], [1, 2, 3, 4])


class TestStandardize:
    def test_basic_column(self):
        panel = make_panel(np.array([[1.0], [2.0], [3.0]]))
        out = standardize_panel(panel)
        np.testing.assert_allclose(out.values[:, 0], [-1.0, 0.0, 1.0])
        means, sds = out.standardization
        assert means[0] == 2.0 and sds[0] == 1.0

    def test_idempotent_on_standardized(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(50)
        x = (x - x.mean()) / x.std(ddof=1)
        out = standardize_panel(make_panel(x[:, None]))
        np.testing.assert_allclose(out.values[:, 0], x, atol=1e-12)
        means, sds = out.standardization
        assert abs(means[0]) < 1e-12 and abs(sds[0] - 1.0) < 1e-12

    def test_constant_series(self):
        with pytest.raises(ConstantSeries):
            standardize_panel(make_panel(np.full((4, 1), 5.0)))

    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        panel = make_panel(rng.standard_normal((30, 4)) * 3.0 + 1.0)
        back = destandardize_panel(standardize_panel(panel))
        np.testing.assert_allclose(back.values, panel.values, atol=1e-12)


class TestWindowPlan:
    def test_paper_layout(self):
        n = Quarter(2024, 3) - Quarter(1960, 1) + 1
        panel = make_panel(np.random.default_rng(0).standard_normal((n, 1)))
        plan = plan_expanding_windows(panel, Quarter(1999, 4), 4)
        assert plan.origins[0] == Quarter(1999, 4)
        # first window forecasts 2000Q1..2000Q4
        targets = [plan.origins[0] + h for h in plan.horizons_for(plan.origins[0])]
        assert targets == [Quarter(2000, 1), Quarter(2000, 2), Quarter(2000, 3), Quarter(2000, 4)]
        assert plan.origins[-1] == Quarter(2024, 2)
        assert plan.horizons_for(plan.origins[-1]) == [1]

    def test_single_window_boundary(self):
        panel = make_panel(np.arange(8.0)[:, None])
        plan = plan_expanding_windows(panel, panel.times[-2], 1)
        assert len(plan.origins) == 1

    def test_origin_out_of_range(self):
        panel = make_panel(np.arange(8.0)[:, None])
        with pytest.raises(OriginOutOfRange):
            plan_expanding_windows(panel, panel.times[-1] + 1, 1)
        with pytest.raises(OriginOutOfRange):
            plan_expanding_windows(panel, panel.times[-1], 1)

    def test_origins_increasing_and_nested(self):
        panel = make_panel(np.arange(20.0)[:, None])
        plan = plan_expanding_windows(panel, panel.times[5], 3)
        diffs = [plan.origins[i + 1] - plan.origins[i] for i in range(len(plan.origins) - 1)]
        assert all(d == 1 for d in diffs)
        assert plan.start == panel.times[0]
        # every (origin, horizon) pair has a realized target
        for o in plan.origins:
            for h in plan.horizons_for(o):
                assert (o + h) - panel.times[-1] <= 0
