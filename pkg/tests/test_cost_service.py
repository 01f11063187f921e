"""
Tests for the closed-form cost model, instantiated counts and cost tables.
"""

from decimal import Decimal
from fractions import Fraction

import pytest

from errors import ConfigurationError
from models.gram import gram_new
from models.oam import oab_new, stack_new
from models.ots_model import FlattenLinear, MaxAvgPool
from models.relation_blocks import nonlocal_new, relation_stack_new, self_attention_new
from services.cost_service import (combine, cost_fc, cost_gram, cost_nonlocal, cost_oab, cost_oab_chain, cost_pool,
                                   cost_self_attention, count_instantiated, reference_preset)
from services.report_service import ReportService
from utils.format_utils import format_millions, round_millions


def rounded(report):
    return (str(report.params_m), str(report.flops_m))


class TestClosedForms:
    def test_object_attention_block_with_biases(self):
        report = cost_oab(1024, 1, 150, bias=True)
        assert report.params == 1_050_112
        assert report.flops == 180_326_400
        assert rounded(report) == ("1.1", "180.3")

    def test_object_attention_block_without_biases(self):
        report = cost_oab(1024, 1, 150)
        assert report.params == 1_048_576
        assert report.flops == 180_326_400

    @pytest.mark.parametrize("bias", [False, True])
    def test_compressed_block_and_chain(self, bias):
        assert rounded(cost_oab(1024, 2, 150, bias=bias)) == ("0.4", "70.5")
        chain = cost_oab_chain(1024, (Fraction(2), Fraction(1, 2)), 150, bias=bias)
        assert rounded(chain) == ("1.2", "211.5")

    def test_sum_fusion_single_block(self):
        assert rounded(cost_oab(1024, 2, 150, fusion="sum", bias=True)) == ("0.4", "70.5")

    def test_self_attention(self):
        report = cost_self_attention(1024, 128, 512, 1024, 150, bias=True)
        assert rounded(report) == ("1.3", "211.0")
        assert rounded(combine("x2", [report, report])) == ("2.6", "422.0")

    def test_self_attention_by_hand(self):
        report = cost_self_attention(1, 1, 1, 1, 1)
        assert (report.params, report.flops) == (4, 6)

    def test_nonlocal(self):
        report = cost_nonlocal(1024, 512, 1024, 150, bias=True)
        assert rounded(report) == ("2.1", "337.6")
        assert rounded(combine("x2", [report, report])) == ("4.2", "675.2")

    def test_nonlocal_by_hand(self):
        report = cost_nonlocal(2, 1, 2, 1)
        assert (report.params, report.flops) == (8, 10)

    def test_aggregators(self):
        assert rounded(cost_gram(1024, 150, 2048)) == ("2.3", "2.3")
        assert rounded(cost_fc(1024, 150, 2048)) == ("314.6", "314.6")
        assert rounded(cost_pool(1024, 150)) == ("0.0", "0.3")

    def test_non_integral_width(self):
        with pytest.raises(ConfigurationError):
            cost_oab(1024, 3, 150)

    def test_reference_block_pins_the_object_count(self):
        matches = [n for n in range(100, 201) if cost_oab(1024, 1, n, bias=True).flops_m == Decimal("180.3")]
        assert matches == [150]

    def test_costs_grow_with_every_dimension(self):
        def increasing(values):
            return all(a < b for a, b in zip(values, values[1:]))

        ns = (1, 10, 150, 300)
        assert increasing([cost_oab(1024, 1, n).flops for n in ns])
        assert increasing([cost_oab(c, 1, 150).params for c in (256, 512, 1024)])
        assert increasing([cost_oab(1024, a, 150).flops for a in (4, 2, 1, Fraction(1, 2))])
        assert increasing([cost_self_attention(1024, 128, 512, 1024, n).flops for n in ns])
        assert increasing([cost_self_attention(1024, q, 512, 1024, 150).flops for q in (64, 128, 256)])
        assert increasing([cost_self_attention(1024, 128, v, 1024, 150).params for v in (256, 512)])
        assert increasing([cost_nonlocal(1024, c, 1024, 150).flops for c in (256, 512, 1024)])
        assert increasing([cost_nonlocal(1024, 512, 1024, n).flops for n in ns])
        assert increasing([cost_gram(c, 150, 2048).params for c in (256, 1024)])
        assert increasing([cost_gram(1024, n, 2048).params for n in ns])
        assert increasing([cost_gram(1024, 150, o).flops for o in (512, 2048)])
        assert increasing([cost_fc(1024, n, 2048).flops for n in ns])
        assert increasing([cost_pool(1024, n).flops for n in ns])

    def test_rounding_is_half_up(self):
        assert round_millions(1_050_000) == Decimal("1.1")
        assert round_millions(1_049_999) == Decimal("1.0")
        assert format_millions(0) == "0.0"


class TestReferencePreset:
    def test_every_reference_row(self):
        rows = {(r.table, r.name): rounded(r) for r in reference_preset()}
        assert rows[("attention blocks", "Self-attention")] == ("1.3", "211.0")
        assert rows[("attention blocks", "Non-local")] == ("2.1", "337.6")
        assert rows[("attention blocks", "Object Attention Block")] == ("1.1", "180.3")
        assert rows[("block count", "OAB x1")] == ("0.4", "70.5")
        assert rows[("block count", "OAB x2")] == ("1.2", "211.5")
        assert rows[("attention ablation", "Non-Local x2")] == ("4.2", "675.2")
        assert rows[("attention ablation", "Self-Attention x2")] == ("2.6", "422.0")
        assert rows[("attention ablation", "Object Attention Block")] == ("1.2", "211.5")
        assert rows[("attention ablation", "Object Attention Block (S)")] == ("0.4", "70.5")
        assert rows[("aggregator", "FC")] == ("314.6", "314.6")
        assert rows[("aggregator", "Max & Avg. Pooling")] == ("0.0", "0.3")
        assert rows[("aggregator", "GRAM")] == ("2.3", "2.3")

    def test_order_is_stable(self):
        assert [r.name for r in reference_preset()] == [r.name for r in reference_preset()]


class TestInstantiatedCounts:
    @pytest.mark.parametrize("bias", [False, True])
    def test_attention_blocks(self, bias):
        for alpha in (1, 2):
            block = oab_new(1024, alpha, rng_seed=0, use_bias=bias)
            assert count_instantiated(block) == cost_oab(1024, alpha, 150, bias=bias).params

    @pytest.mark.parametrize("bias", [False, True])
    def test_default_chain(self, bias):
        stack = stack_new(1024, (Fraction(2), Fraction(1, 2)), seed=0, use_bias=bias)
        assert count_instantiated(stack) == cost_oab_chain(1024, (2, Fraction(1, 2)), 150, bias=bias).params

    @pytest.mark.parametrize("bias", [False, True])
    def test_gram(self, bias):
        layer = gram_new(1024, 150, 2048, rng_seed=0, use_bias=bias)
        assert count_instantiated(layer) == cost_gram(1024, 150, 2048, bias=bias).params

    @pytest.mark.parametrize("bias", [False, True])
    def test_fc_at_reduced_width(self, bias):
        # the full 1024x150 -> 2048 map holds 314.6M float64 values; the closed form is checked above
        layer = FlattenLinear(64, 15, 32, rng_seed=0, use_bias=bias)
        assert count_instantiated(layer) == cost_fc(64, 15, 32, bias=bias).params

    @pytest.mark.parametrize("bias", [False, True])
    def test_self_attention(self, bias):
        block = self_attention_new(1024, rng_seed=0, use_bias=bias)
        assert count_instantiated(block) == cost_self_attention(1024, 128, 512, 1024, 150, bias=bias).params

    @pytest.mark.parametrize("bias", [False, True])
    def test_nonlocal(self, bias):
        block = nonlocal_new(1024, rng_seed=0, use_bias=bias)
        assert count_instantiated(block) == cost_nonlocal(1024, 512, 1024, 150, bias=bias).params

    def test_relation_stacks(self):
        pair = relation_stack_new("nonlocal", 1024, 2, seed=0, use_bias=True)
        single = cost_nonlocal(1024, 512, 1024, 150, bias=True)
        assert count_instantiated(pair) == combine("x2", [single, single]).params

    def test_pool(self):
        assert count_instantiated(MaxAvgPool(1024, 150)) == cost_pool(1024, 150).params == 0


class TestCostTables:
    def test_attention_trio(self):
        reports = reference_preset()[:3]
        text = ReportService().render_table(reports)
        lines = text.strip().splitlines()
        assert len(lines) == 4
        for expected in (("1.3", "211.0"), ("2.1", "337.6"), ("1.1", "180.3")):
            assert any(expected[0] in line and expected[1] in line for line in lines[1:])

    def test_single_report(self):
        text = ReportService().render_table([cost_gram(1, 1, 1)], exact=False)
        assert len(text.strip().splitlines()) == 2

    def test_delimited(self):
        text = ReportService(delimiter="\t").render_delimited([cost_oab(1024, 2, 150)])
        header, row = text.strip().splitlines()
        assert header.split("\t") == ["Table", "Layer", "Params", "FLOPs", "Parm. (M)", "FLOPs (M)"]
        assert row.split("\t")[2:] == ["393216", "70502400", "0.4", "70.5"]
