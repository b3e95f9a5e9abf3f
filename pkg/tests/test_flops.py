import pytest

from fdsic.cancelers import CancelerSpec, build_layout
from fdsic.errors import ConfigError
from fdsic.flops import (
    METHODOLOGY_NOTE,
    POLY_REFERENCE_FLOPS,
    ComplexOpCount,
    activation_cost,
    closed_form,
    count_grid_complex_ops,
    grid_param_count,
    linear_stage_cost,
    poly_flop_count,
    poly_param_count,
    report_table,
    spec_report,
    table1_specs,
    to_real_flops,
    write_report_csv,
)


class TestCounts:
    def test_lwgs_9_13(self):
        c = count_grid_complex_ops(build_layout("lwgs", 9, 13))
        assert c == ComplexOpCount(cm=58, ca=58)

    def test_mwgs_12_5_13(self):
        c = count_grid_complex_ops(build_layout("mwgs", 12, 13, 5))
        assert c == ComplexOpCount(cm=80, ca=80)

    def test_ffnn_7_13(self):
        c = count_grid_complex_ops(build_layout("ffnn", 7, 13))
        assert c == ComplexOpCount(cm=98, ca=98)

    def test_enumeration_equals_closed_form_exhaustive(self):
        # every valid layout up to M = 16, including clamped mwgs windows
        for m in range(1, 17):
            for n in range(1, m + 1):
                assert count_grid_complex_ops(build_layout("lwgs", n, m)) == closed_form("lwgs", n, m)
            for n in range(1, m + 4):
                assert count_grid_complex_ops(build_layout("ffnn", n, m)) == closed_form("ffnn", n, m)
                if n == 1:
                    assert count_grid_complex_ops(build_layout("mwgs", 1, m, 1 if m > 1 else None)) == closed_form("mwgs", 1, m)
                else:
                    for w in range(1, m):
                        assert count_grid_complex_ops(build_layout("mwgs", n, m, w)) == closed_form("mwgs", n, m, w)

    def test_ca_equals_cm_for_all_layouts(self):
        for m in range(1, 17):
            for n in range(1, m + 1):
                c = count_grid_complex_ops(build_layout("lwgs", n, m))
                assert c.ca == c.cm

    def test_closed_form_values(self):
        assert closed_form("lwgs", 10, 13).cm == 68
        assert closed_form("mwgs", 1, 13).cm == 14
        assert closed_form("ffnn", 1, 1).cm == 2

    def test_flops_monotone_in_n(self):
        for kind, w in (("lwgs", None), ("mwgs", 5), ("ffnn", None)):
            prev = -1
            for n in range(1, 13):
                spec = CancelerSpec(kind=kind, N=n, W=w, M=13)
                total = spec_report(spec).flops_total
                assert total > prev
                prev = total


class TestConversions:
    def test_single_complex_multiply(self):
        assert to_real_flops(ComplexOpCount(cm=1, ca=0)) == (3, 5)

    def test_single_complex_add(self):
        assert to_real_flops(ComplexOpCount(cm=0, ca=1)) == (0, 2)

    def test_lwgs9_conversion(self):
        assert to_real_flops(ComplexOpCount(cm=58, ca=58)) == (174, 406)

    @pytest.mark.parametrize("n,expected", [(0, (0, 0)), (9, (18, 54)), (12, (24, 72))])
    def test_activation(self, n, expected):
        assert activation_cost(n) == expected

    @pytest.mark.parametrize("m,expected", [(1, (3, 5)), (2, (6, 12)), (13, (39, 89))])
    def test_linear_stage(self, m, expected):
        assert linear_stage_cost(m) == expected

    def test_linear_stage_13_totals_128(self):
        rm, ra = linear_stage_cost(13)
        assert rm + ra == 128


class TestParamCounts:
    def test_lwgs9(self):
        assert grid_param_count(build_layout("lwgs", 9, 13), 13) == 162

    def test_ffnn7(self):
        assert grid_param_count(build_layout("ffnn", 7, 13), 13) == 238

    def test_lwgs10(self):
        assert grid_param_count(build_layout("lwgs", 10, 13), 13) == 184

    def test_mwgs12_5(self):
        assert grid_param_count(build_layout("mwgs", 12, 13, 5), 13) == 212

    def test_poly(self):
        assert poly_param_count(5, 13) == 312


class TestReportTable:
    def test_default_rows_reproduce_reference_table(self):
        rows = report_table(table1_specs(), baseline="Polynomial (P=5)")
        by_name = {r.name: r for r in rows}
        assert by_name["Polynomial (P=5)"].params_real == 312
        assert by_name["CV-FFNN (7)"].flops_total == 1164
        assert by_name["LWGS (9)"].flops_total == 780
        assert by_name["LWGS (10)"].flops_total == 888
        assert by_name["MWGS (12,5)"].flops_total == 1024
        assert round(by_name["LWGS (9)"].pct_flop_reduction, 2) == -49.87
        assert round(by_name["MWGS (12,5)"].pct_flop_reduction, 2) == -34.19
        assert round(by_name["CV-FFNN (7)"].pct_flop_reduction, 2) == -25.19
        assert round(by_name["LWGS (9)"].pct_param_reduction, 2) == -48.08

    def test_poly_reference_reported_alongside(self):
        row = spec_report(CancelerSpec(kind="poly", P=5, M=13))
        assert row.flops_reference == POLY_REFERENCE_FLOPS
        assert row.flops_total == 1556  # this convention lands on it exactly
        assert row.note == METHODOLOGY_NOTE

    def test_poly_flop_convention(self):
        rm, ra = poly_flop_count(5, 13)
        assert (rm, ra) == (3 * 156, 5 * 156 + 2 * 154)
        assert rm + ra == 1556

    def test_empty_specs(self):
        assert report_table([]) == []

    def test_unknown_baseline(self):
        with pytest.raises(ConfigError):
            report_table(table1_specs(), baseline="nope")

    def test_no_baseline_no_percentages(self):
        rows = report_table([CancelerSpec(kind="lwgs", N=9, M=13)])
        assert rows[0].pct_flop_reduction is None

    def test_csv_export(self, tmp_path):
        path = tmp_path / "report.csv"
        write_report_csv(report_table(table1_specs(), baseline="Polynomial (P=5)"), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("name,params,real_mults")
        assert len(lines) == 6
        assert "LWGS (9),162,231,549,780,-48.08,-49.87" in lines
