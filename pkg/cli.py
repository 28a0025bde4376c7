#!/usr/bin/env python3
"""
CLI for crysdr

Exact finite-precision computations in divided powers, de Rham and derived
de Rham cohomology, Witt vectors and the period rings A_inf, A_crys, A_st.
Every number in a report is computed inside an explicit truncation, and the
report echoes it.

Usage:
    python cli.py cartier-check --p 2 --vars y --degcap 8
    python cli.py derived-dr --p 2 --f x --smax 3 --degcap 6
    python cli.py period --p 3 --n 2 --k 1 --op fontaine-val
"""

from typing import Any, List, Optional

import typer
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from crysdr.core.config import settings
from crysdr.core.exceptions import CrysDRException, get_exit_code
from crysdr.schemas.reports import Report, RunConfig
from crysdr.services.runner import ComputationRunner

# Initialize CLI app and consoles
app = typer.Typer(
    name="crysdr",
    help="Exact p-adic derived de Rham and crystalline computations at finite precision.",
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)


# shared options

def _p_option() -> Any:
    return typer.Option(settings.DEFAULT_P, "--p", help="Residue characteristic (prime)")


def _n_option(default: int = settings.DEFAULT_N) -> Any:
    return typer.Option(default, "--n", help="Precision: coefficients live in Z/p^n")


def _format_option() -> Any:
    return typer.Option("json", "--format", help="Output format: json, csv or table")


def _seed_option() -> Any:
    return typer.Option(settings.DEFAULT_SEED, "--seed", help="Seed for randomized property suites")


def _guard_option() -> Any:
    return typer.Option(
        None, "--memory-guard",
        help="Refuse truncations with more basis elements than this (env: CRYSDR_MEMORY_GUARD)",
    )


def _verbose_option() -> Any:
    return typer.Option(False, "--verbose", "-v", help="Log step timings to stderr")


def _split(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [part.strip() for part in value.split(",") if part.strip()]


def _split_ints(value: Optional[str]) -> Optional[List[int]]:
    parts = _split(value)
    if parts is None:
        return None
    try:
        return [int(part) for part in parts]
    except ValueError:
        err_console.print(f"❌ Expected comma-separated integers, got {value!r}", style="bold red")
        raise typer.Exit(2)


def print_report_table(report: Report) -> None:
    """Human-readable rendering of a report."""
    status = "[bold green]PASS[/bold green]" if report.passed else "[bold red]FAIL[/bold red]"
    truncation = ", ".join(f"{k}={v}" for k, v in sorted(report.truncation.items()))
    console.print(Panel(f"{status}  {report.command}\n[dim]truncation: {truncation}[/dim]",
                        title="crysdr", expand=False))
    for name, rows in sorted(report.tables.items()):
        if not rows:
            continue
        table = Table(title=name, show_header=True, header_style="bold magenta")
        columns = sorted({key for row in rows for key in row})
        for column in columns:
            table.add_column(str(column))
        for row in rows:
            table.add_row(*[str(row.get(column, "")) for column in columns])
        console.print(table)
    if report.flags:
        flags = Table(title="flags", show_header=True, header_style="bold cyan")
        flags.add_column("flag")
        flags.add_column("value")
        for key, value in sorted(report.flags.items()):
            flags.add_row(key, "✅" if value else "❌")
        console.print(flags)


def emit(report: Report, fmt: str) -> None:
    if fmt == "table":
        print_report_table(report)
    elif fmt == "csv":
        typer.echo(report.to_csv(), nl=False)
    else:
        typer.echo(report.to_json())


def execute(command: str, fmt: str = "json", verbose: bool = False, **options: Any) -> None:
    """Build the config, run the command, print the report and exit with its code."""
    try:
        config = RunConfig.build(format=fmt, **options)
        report = ComputationRunner(verbose=verbose).run(command, config)
    except CrysDRException as e:
        err_console.print(f"❌ {e.__class__.__name__}: {e.message}", style="bold red")
        if verbose and e.context:
            err_console.print(e.context)
        raise typer.Exit(get_exit_code(e))
    emit(report, config.format)
    if not report.passed:
        raise typer.Exit(1)


@app.command("cartier-check")
def cartier_check(
    p: int = _p_option(),
    vars: str = typer.Option("y", "--vars", help="Comma-separated polynomial generators"),
    monoid_vars: Optional[str] = typer.Option(None, "--monoid-vars", help="Comma-separated log generators"),
    root_depth: int = typer.Option(0, "--root-depth", help="Monoid exponents in (1/p^k)N"),
    degcap: int = typer.Option(settings.DEFAULT_DEGREE_CAP, "--degcap", help="Weight cap D"),
    fmt: str = _format_option(),
    memory_guard: Optional[int] = _guard_option(),
    verbose: bool = _verbose_option(),
):
    """
    Cartier isomorphism C^{-1}: Ω^i of the Frobenius twist -> H^i(Ω•) mod p.

    Truncation: forms of weight <= D (variables and dlog weigh by exponent,
    dy weighs 1). Twist forms of weight <= D/p are mapped. Dimensions are
    re-computed at D + p and reported as stable only if unchanged.
    """
    execute("cartier-check", fmt, verbose, p=p, n=1, vars=_split(vars), monoid_vars=_split(monoid_vars),
            root_depth=root_depth, D=degcap, memory_guard=memory_guard)


@app.command("pd-envelope")
def pd_envelope_command(
    p: int = _p_option(),
    n: int = _n_option(1),
    f: str = typer.Option("x", "--f", help="Polynomial with integer coefficients, e.g. 'x^2-2'"),
    m: int = typer.Option(settings.DEFAULT_PD_CAP, "--m", help="pd-weight cap"),
    fmt: str = _format_option(),
    memory_guard: Optional[int] = _guard_option(),
    verbose: bool = _verbose_option(),
):
    """
    Divided-power envelope D_A(f) over Z/p^n.

    Truncation: divided powers γ_j(f) with j <= m. Dimension and conjugate
    tables are mod p; Hodge graded pieces (Eisenstein f) are over Z/p^n.
    """
    execute("pd-envelope", fmt, verbose, p=p, n=n, f=f, m=m, memory_guard=memory_guard)


@app.command("derived-dr")
def derived_dr_command(
    p: int = _p_option(),
    f: str = typer.Option("x", "--f", help="Generator of the principal quotient A/(f)"),
    smax: int = typer.Option(settings.DEFAULT_SMAX, "--smax", help="Simplicial truncation level"),
    degcap: int = typer.Option(settings.DEFAULT_DEGREE_CAP, "--degcap", help="Polynomial weight cap"),
    m: int = typer.Option(settings.DEFAULT_PD_CAP, "--m", help="pd-weight cap for Comp images"),
    fmt: str = _format_option(),
    memory_guard: Optional[int] = _guard_option(),
    verbose: bool = _verbose_option(),
):
    """
    H^0 of derived de Rham of A/(f) mod p with its conjugate filtration.

    Truncation: bar levels s <= smax, form weights <= degcap, total degrees
    -1..1. A graded dimension is certified only if it is unchanged at
    smax + 1 and degcap + p. Comp images are computed in D_A(f) up to
    pd-weight max(m, 2p).
    """
    execute("derived-dr", fmt, verbose, p=p, n=1, f=f, s_max=smax, D=degcap, m=m, memory_guard=memory_guard)


@app.command("conjugate-ss")
def conjugate_ss_command(
    p: int = _p_option(),
    f: str = typer.Option("x", "--f", help="Generator of the principal quotient A/(f)"),
    smax: int = typer.Option(settings.DEFAULT_SMAX, "--smax", help="Simplicial truncation level"),
    degcap: int = typer.Option(settings.DEFAULT_DEGREE_CAP, "--degcap", help="Polynomial weight cap"),
    fmt: str = _format_option(),
    memory_guard: Optional[int] = _guard_option(),
    verbose: bool = _verbose_option(),
):
    """
    E_1 of the conjugate spectral sequence against brute-force gr dimensions.

    Truncation: entries E_1^{i,-i} with i < smax and (i + 1)·p·deg f - 1 <= degcap;
    entries outside that range are reported as null.
    """
    execute("conjugate-ss", fmt, verbose, p=p, n=1, f=f, s_max=smax, D=degcap, memory_guard=memory_guard)


@app.command("comp-map")
def comp_map_command(
    p: int = _p_option(),
    f: str = typer.Option("x", "--f", help="Generator of the principal quotient A/(f)"),
    smax: int = typer.Option(2, "--smax", help="Highest generator level mapped (at most 2)"),
    m: int = typer.Option(settings.DEFAULT_PD_CAP, "--m", help="pd-weight cap of the envelope"),
    fmt: str = _format_option(),
    memory_guard: Optional[int] = _guard_option(),
    verbose: bool = _verbose_option(),
):
    """
    Comparison map from derived de Rham to the pd-envelope on generators.

    Truncation: envelope truncated at pd-weight max(m, 2p); the splitting
    class comes from the Frobenius lift over Z/p^2.
    """
    execute("comp-map", fmt, verbose, p=p, n=1, f=f, s_max=smax, m=m, memory_guard=memory_guard)


@app.command("witt-test")
def witt_test_command(
    p: int = _p_option(),
    n: int = typer.Option(3, "--n", help="Witt vector length"),
    cases: Optional[int] = typer.Option(None, "--cases", help="Random cases (default from settings)"),
    seed: int = _seed_option(),
    fmt: str = _format_option(),
    verbose: bool = _verbose_option(),
):
    """
    Randomized Witt identities: ghost homomorphism, F∘V = p, V(a)V(b) = pV(ab).

    Truncation: length-n Witt vectors; ghost checks over Z/p^6, Frobenius and
    Verschiebung checks over F_p[t]/(t^4).
    """
    execute("witt-test", fmt, verbose, p=p, n=n, cases=cases, seed=seed)


@app.command("period")
def period_command(
    p: int = _p_option(),
    n: int = _n_option(),
    k: int = typer.Option(settings.DEFAULT_K, "--k", help="Root depth: ζ_{p^k} and π^(1/p^k) are in O"),
    m: int = typer.Option(settings.DEFAULT_PD_CAP, "--m", help="pd-weight cap of A_crys / A_st"),
    op: str = typer.Option(..., "--op", help="theta, beta, st-cocycle, ast-check or fontaine-val"),
    eisenstein: Optional[str] = typer.Option(None, "--eisenstein", help="Coefficients of E, constant first, e.g. '-2,0,1'"),
    c: int = typer.Option(1, "--c", help="Galois element: σ(ζ) = ζ^c"),
    a: int = typer.Option(1, "--a", help="Galois element: σ(π^(1/p^k)) = ζ^a π^(1/p^k)"),
    cases: Optional[int] = typer.Option(None, "--cases", help="Random cases for property checks"),
    seed: int = _seed_option(),
    fmt: str = _format_option(),
    memory_guard: Optional[int] = _guard_option(),
    verbose: bool = _verbose_option(),
):
    """
    Period ring computations on the finite model O = Z/p^n[ζ_{p^k}, π^(1/p^k)].

    Truncation: A_inf = W_n of the depth-k tilt, needs n <= k + 1; A_crys and
    A_st truncated at pd-weight m. Galois identities are compared with Witt
    coefficients of length min(n, k).
    """
    execute("period", fmt, verbose, p=p, n=n, k=k, m=m, op=op, eisenstein=_split_ints(eisenstein),
            c=c, a=a, cases=cases, seed=seed, memory_guard=memory_guard)


@app.command("fontaine-val")
def fontaine_val_command(
    p: int = _p_option(),
    k: int = typer.Option(1, "--k", help="Level of the root of unity ζ_{p^k}"),
    fmt: str = _format_option(),
    verbose: bool = _verbose_option(),
):
    """
    Valuation of g'(ζ_{p^k}) for the cyclotomic minimal polynomial g.

    Truncation: Z/p^N[ζ] with N large enough to see the norm of g'(ζ).
    """
    execute("fontaine-val", fmt, verbose, p=p, n=1, k=k)


@app.command("ast-check")
def ast_check_command(
    p: int = _p_option(),
    n: int = _n_option(),
    k: int = typer.Option(settings.DEFAULT_K, "--k", help="Root depth"),
    m: int = typer.Option(settings.DEFAULT_PD_CAP, "--m", help="pd-weight cap"),
    eisenstein: Optional[str] = typer.Option(None, "--eisenstein", help="Coefficients of E, constant first"),
    cases: Optional[int] = typer.Option(None, "--cases", help="Random cases"),
    seed: int = _seed_option(),
    fmt: str = _format_option(),
    memory_guard: Optional[int] = _guard_option(),
    verbose: bool = _verbose_option(),
):
    """
    N∘φ = p·φ∘N on A_st = A_crys<X>.

    Truncation: pd-weight <= m, identities compared below weight m.
    """
    execute("ast-check", fmt, verbose, p=p, n=n, k=k, m=m, eisenstein=_split_ints(eisenstein),
            cases=cases, seed=seed, memory_guard=memory_guard)


@app.command()
def selftest(
    seed: int = _seed_option(),
    fmt: str = _format_option(),
    verbose: bool = _verbose_option(),
):
    """
    Run a small fixed battery across every module.

    Truncation: each check uses its own small parameters, echoed in the report.
    """
    execute("selftest", fmt, verbose, seed=seed)


if __name__ == "__main__":
    app()
