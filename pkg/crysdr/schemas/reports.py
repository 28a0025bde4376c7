"""
Run configuration and report models.

Reports are serialized with sorted keys and carry no timestamps, so the
same (command, config, seed) always produces the same bytes.
"""

import io
import json
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional

import pandas as pd
import sympy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from crysdr.core.config import settings
from crysdr.core.exceptions import ConfigError

PERIOD_COMMANDS = frozenset({"period", "fontaine-val", "ast-check"})
PERIOD_OPS = ("theta", "beta", "st-cocycle", "ast-check", "fontaine-val")


def to_jsonable(value: Any) -> Any:
    """Exact values become strings, tuples become lists, keys become strings."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        # no float ever reaches a report as a number
        return repr(value)
    if isinstance(value, dict):
        return {str(k) if not isinstance(k, tuple) else ",".join(map(str, k)): to_jsonable(v)
                for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [to_jsonable(v) for v in items]
    if hasattr(value, "to_json"):
        return to_jsonable(value.to_json())
    return str(value)


class RunConfig(BaseModel):
    """Parameters for one CLI run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    p: int = Field(default=settings.DEFAULT_P, description="Residue characteristic")
    n: int = Field(default=settings.DEFAULT_N, description="Precision exponent, coefficients in Z/p^n")
    k: int = Field(default=settings.DEFAULT_K, description="Root depth of the O-model")
    m: int = Field(default=settings.DEFAULT_PD_CAP, description="pd-weight cap")
    D: int = Field(default=settings.DEFAULT_DEGREE_CAP, description="Polynomial degree cap")
    s_max: int = Field(default=settings.DEFAULT_SMAX, description="Simplicial truncation level")
    memory_guard: Optional[int] = Field(None, description="Override for the basis-size guard")
    format: Literal["json", "csv", "table"] = Field(default="json", description="Output format")
    seed: int = Field(default=settings.DEFAULT_SEED, description="Seed for randomized suites")
    cases: Optional[int] = Field(None, description="Cases per randomized property check")
    vars: List[str] = Field(default_factory=lambda: ["y"], description="Polynomial generators")
    monoid_vars: List[str] = Field(default_factory=list, description="Log (monoid) generators")
    root_depth: int = Field(default=0, description="Monoid exponents lie in (1/p^k)N")
    f: str = Field(default="x", description="Polynomial cut out by the quotient or envelope")
    eisenstein: Optional[List[int]] = Field(None, description="Eisenstein coefficients, constant term first")
    op: Optional[Literal["theta", "beta", "st-cocycle", "ast-check", "fontaine-val"]] = Field(
        None, description="Operation for the period command"
    )
    c: int = Field(default=1, description="Galois element: σ(ζ) = ζ^c")
    a: int = Field(default=0, description="Galois element: σ(π^(1/p^k)) = ζ^a π^(1/p^k)")

    @field_validator("p")
    @classmethod
    def validate_prime(cls, v: int) -> int:
        if not sympy.isprime(v):
            raise ValueError(f"p = {v} is not prime")
        return v

    @field_validator("n", "k", "m", "D", "s_max")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("caps and precisions must be positive")
        return v

    @field_validator("memory_guard", "cases")
    @classmethod
    def validate_optional_positive(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("must be positive")
        return v

    @field_validator("root_depth")
    @classmethod
    def validate_depth(cls, v: int) -> int:
        if v < 0:
            raise ValueError("root depth cannot be negative")
        return v

    @field_validator("vars", "monoid_vars")
    @classmethod
    def validate_names(cls, v: List[str]) -> List[str]:
        names = [name.strip() for name in v if name.strip()]
        if len(set(names)) != len(names):
            raise ValueError("duplicate generator names")
        for name in names:
            if not name.isidentifier():
                raise ValueError(f"bad generator name {name!r}")
        return names

    @classmethod
    def build(cls, **options: Any) -> "RunConfig":
        """Validate options, turning pydantic errors into ConfigError."""
        clean = {key: value for key, value in options.items() if value is not None}
        try:
            return cls(**clean)
        except ValidationError as e:
            messages = "; ".join(
                f"{'.'.join(str(x) for x in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"invalid configuration: {messages}",
                              context={"errors": len(e.errors())}) from e

    def check_for(self, command: str) -> None:
        """Command-specific constraints that pydantic cannot see."""
        if command in PERIOD_COMMANDS and self.n > self.k + 1:
            raise ConfigError(
                f"period commands need n <= k + 1 (got n={self.n}, k={self.k})",
                context={"n": self.n, "k": self.k},
            )
        if command == "period" and self.op is None:
            raise ConfigError("period needs --op", context={"choices": list(PERIOD_OPS)})
        if set(self.vars) & set(self.monoid_vars):
            raise ConfigError("a generator cannot be both polynomial and monoid")

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(exclude={"format"})


class Report(BaseModel):
    """Machine-readable result of one run."""

    command: str = Field(..., description="Subcommand that produced the report")
    schema_version: str = Field(default=settings.REPORT_SCHEMA_VERSION, description="Report schema version")
    config: Dict[str, Any] = Field(default_factory=dict, description="Echo of the run configuration")
    truncation: Dict[str, Any] = Field(default_factory=dict, description="Truncation parameters of every number")
    results: Dict[str, Any] = Field(default_factory=dict, description="Tables, coordinates and valuations")
    tables: Dict[str, List[Dict[str, Any]]] = Field(default_factory=dict, description="Dimension tables")
    flags: Dict[str, bool] = Field(default_factory=dict, description="Stability and precision flags")
    passed: bool = Field(..., description="Overall verdict")

    def payload(self) -> Dict[str, Any]:
        return to_jsonable(self.model_dump())

    def to_json(self) -> str:
        return json.dumps(self.payload(), sort_keys=True, indent=2, ensure_ascii=False)

    def to_csv(self) -> str:
        """All dimension tables stacked, one ``table`` column naming the source."""
        frames = [
            pd.DataFrame(to_jsonable(rows), dtype=object).assign(table=name)
            for name, rows in sorted(self.tables.items()) if rows
        ]
        if not frames:
            frames = [pd.DataFrame([{"table": "verdict", "passed": self.passed}])]
        frame = pd.concat(frames, ignore_index=True)
        frame = frame[["table"] + sorted(c for c in frame.columns if c != "table")]
        buffer = io.StringIO()
        frame.to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()
