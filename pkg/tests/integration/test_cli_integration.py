"""
Test suite for the crysdr command line.
"""

import json

import pytest
from typer.testing import CliRunner

from cli import app


class TestCLIIntegration:
    """End-to-end runs through the typer app."""

    def setup_method(self):
        self.runner = CliRunner()

    def invoke(self, *args):
        return self.runner.invoke(app, list(args))

    def test_cartier_check_example(self):
        result = self.invoke("cartier-check", "--p", "2", "--vars", "y", "--degcap", "8")
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert payload["command"] == "cartier-check"
        assert payload["results"]["h_dims"] == {"0": 5, "1": 4}
        assert payload["truncation"]["D"] == 8
        assert payload["passed"] is True

    def test_fontaine_val(self):
        result = self.invoke("fontaine-val", "--p", "3", "--k", "1")
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["results"]["valuation"] == "1/2"

    def test_period_op_fontaine_val(self):
        result = self.invoke("period", "--p", "3", "--n", "2", "--k", "1", "--op", "fontaine-val")
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert payload["command"] == "period"
        assert payload["results"]["valuation"] == "1/2"

    def test_derived_dr_comp_generator(self):
        result = self.invoke("derived-dr", "--p", "2", "--f", "x", "--smax", "3", "--degcap", "6")
        assert result.exit_code == 0, result.output
        comp = json.loads(result.stdout)["results"]["comp"]
        assert comp["unit"]["is_one"] is True
        assert comp["generator"]["matches"] is True

    def test_reports_are_reproducible(self):
        args = ("witt-test", "--p", "2", "--n", "2", "--cases", "5", "--seed", "11")
        assert self.invoke(*args).stdout == self.invoke(*args).stdout

    def test_csv_format(self):
        result = self.invoke("cartier-check", "--p", "2", "--vars", "y", "--degcap", "6", "--format", "csv")
        assert result.exit_code == 0, result.output
        lines = result.stdout.splitlines()
        assert lines[0].startswith("table,")
        assert all(line.startswith("cartier,") for line in lines[1:])

    def test_table_format(self):
        result = self.invoke("fontaine-val", "--p", "3", "--format", "table")
        assert result.exit_code == 0, result.output
        assert "PASS" in result.stdout

    @pytest.mark.parametrize("args", [
        ("cartier-check", "--p", "4"),
        ("period", "--p", "2", "--n", "3", "--k", "1", "--op", "theta"),
        ("derived-dr", "--p", "2", "--f", "x +"),
        ("period", "--p", "2", "--n", "1", "--k", "1", "--op", "beta", "--eisenstein", "1,1"),
    ])
    def test_configuration_errors_exit_2(self, args):
        result = self.invoke(*args)
        assert result.exit_code == 2

    def test_help_documents_truncation(self):
        result = self.invoke("derived-dr", "--help")
        assert result.exit_code == 0
        assert "Truncation" in result.output
