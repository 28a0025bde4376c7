"""
Unit tests for the run configuration, report serialization and the
ComputationRunner.
"""

import json
import warnings
from fractions import Fraction

import pytest

from crysdr.core.config import settings
from crysdr.core.exceptions import (
    ConfigError,
    NotACocycle,
    NotEisenstein,
    VerificationFailure,
    WindowTooWide,
    get_exit_code,
)
from crysdr.schemas.reports import Report, RunConfig, to_jsonable
from crysdr.services import period
from crysdr.services.base_arith import Valuation
from crysdr.services.runner import ComputationRunner, parse_polynomial, run


class TestRunConfig:
    """Validation of CLI options."""

    @pytest.mark.parametrize("options", [
        {"p": 4},
        {"n": 0},
        {"D": -1},
        {"vars": ["y", "y"]},
        {"vars": ["2y"]},
        {"unknown": 1},
    ])
    def test_invalid_options(self, options):
        with pytest.raises(ConfigError, match="invalid configuration"):
            RunConfig.build(**options)

    def test_none_means_default(self):
        config = RunConfig.build(p=3, n=None)
        assert config.p == 3
        assert config.n == settings.DEFAULT_N

    def test_period_precision_bound(self):
        config = RunConfig.build(p=2, n=3, k=1, op="theta")
        with pytest.raises(ConfigError, match="n <= k \\+ 1"):
            config.check_for("period")
        config.check_for("cartier-check")

    def test_period_needs_op(self):
        with pytest.raises(ConfigError, match="--op"):
            RunConfig.build(n=1, k=1).check_for("period")

    def test_generator_in_both_lists(self):
        with pytest.raises(ConfigError):
            RunConfig.build(vars=["x"], monoid_vars=["x"]).check_for("cartier-check")

    def test_echo_leaves_out_format(self):
        assert "format" not in RunConfig.build(format="csv").echo()


class TestReport:
    """Deterministic JSON and CSV output."""

    def test_jsonable(self):
        assert to_jsonable(Fraction(1, 2)) == "1/2"
        assert to_jsonable({(0, 1): [Fraction(3)]}) == {"0,1": ["3/1"]}
        assert to_jsonable({"a": {1, 0}}) == {"a": [0, 1]}

    def test_csv_stacks_tables(self):
        report = Report(
            command="demo",
            tables={"b": [{"dim": 2}], "a": [{"dim": 1, "level": 0}]},
            passed=True,
        )
        lines = report.to_csv().splitlines()
        assert lines[0] == "table,dim,level"
        assert lines[1] == "a,1,0"
        assert lines[2] == "b,2,"

    def test_csv_fills_gaps_without_warnings(self):
        report = Report(
            command="demo",
            tables={"b": [{"dim": 2, "ok": True}], "a": [{"dim": 1, "level": 0}]},
            passed=True,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            lines = report.to_csv().splitlines()
        assert lines == ["table,dim,level,ok", "a,1,0,", "b,2,,True"]

    def test_csv_without_tables(self):
        report = Report(command="demo", passed=False)
        assert report.to_csv().splitlines() == ["table,passed", "verdict,False"]


class TestParsePolynomial:
    """Polynomials given on the command line."""

    def test_parse(self):
        f = parse_polynomial("x^2 + 3*y", 3, 2)
        assert list(f.ring.variables) == ["x", "y"]
        assert f.coefficient((2, 0)) == 1
        assert f.coefficient((0, 1)) == 3

    @pytest.mark.parametrize("text", ["x +", "x/2", "7", "sin(x)"])
    def test_bad_polynomials(self, text):
        with pytest.raises(ConfigError):
            parse_polynomial(text, 2, 1)


class TestComputationRunner:
    """End-to-end runs of single commands."""

    def test_cartier_example(self):
        report = run("cartier-check", RunConfig.build(p=2, vars=["y"], D=8))
        assert report.passed
        assert report.results["h_dims"] == {"0": 5, "1": 4}
        assert report.flags["stable"]

    def test_output_is_byte_identical(self):
        config = RunConfig.build(p=3, n=1, k=1)
        first = run("fontaine-val", config).to_json()
        second = ComputationRunner().run("fontaine-val", config).to_json()
        assert first == second
        payload = json.loads(first)
        assert payload["results"]["valuation"] == "1/2"
        assert payload["schema_version"] == settings.REPORT_SCHEMA_VERSION
        assert payload["flags"]["precision_sufficient"] is True

    def test_capped_valuation_is_flagged(self, monkeypatch):
        monkeypatch.setattr(period, "valuation", lambda x: Valuation(Fraction(1), capped=True))
        report = run("fontaine-val", RunConfig.build(p=3, n=1, k=1))
        assert report.flags["precision_sufficient"] is False
        assert not report.passed

    def test_period_dispatch(self):
        report = run("period", RunConfig.build(p=3, n=1, k=1, op="fontaine-val"))
        assert report.command == "period"
        assert report.passed

    def test_derived_dr_comp_generator(self):
        report = run("derived-dr", RunConfig.build(p=2, f="x", s_max=3, D=6))
        comp = report.results["comp"]
        assert comp["unit"]["is_one"]
        assert comp["generator"]["matches"]

    def test_memory_guard_is_restored(self):
        before = settings.MEMORY_GUARD
        with pytest.raises(WindowTooWide):
            run("derived-dr", RunConfig.build(p=2, f="x", s_max=2, D=6, memory_guard=1))
        assert settings.MEMORY_GUARD == before

    def test_unknown_command(self):
        with pytest.raises(ConfigError, match="unknown command"):
            run("not-a-command", RunConfig.build())


class TestExitCodes:
    """Configuration errors exit 2, failed verifications exit 1."""

    @pytest.mark.parametrize("exc,code", [
        (ConfigError("bad"), 2),
        (WindowTooWide("big"), 2),
        (NotEisenstein("E"), 2),
        (NotACocycle("c"), 1),
        (VerificationFailure("v"), 1),
    ])
    def test_exit_code(self, exc, code):
        assert get_exit_code(exc) == code
