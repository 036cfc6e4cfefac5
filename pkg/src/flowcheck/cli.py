from __future__ import annotations

from enum import StrEnum
from pathlib import Path
from typing import Annotated, Literal

import typer
from pydantic import BaseModel, Field, TypeAdapter, ValidationError
from rich.console import Console
from rich.table import Table

from flowcheck.attackers import (
    Attacker,
    AttackerFile,
    PerfectRecall,
    enumerate_attackers,
)
from flowcheck.checker import ComplianceReport, TypingCache, check_compliance
from flowcheck.errors import FlowcheckError, PolicyFileError
from flowcheck.explain import explain_point
from flowcheck.lang import ChannelPoint, Command, channels, parse_program, points
from flowcheck.logging import console as err_console
from flowcheck.logging import get_logger
from flowcheck.oracle import (
    CrosscheckReport,
    SemanticOracle,
    Verdict,
    VerdictKind,
    combine,
    theorem1_crosscheck,
    two_run_pi_check,
    typing_soundness_check,
)
from flowcheck.policy import (
    DynamicPolicySpec,
    PolicyApprox,
    PolicyFile,
    approximate_policy,
    universe_for,
)
from flowcheck.semantics import Store, Universe
from flowcheck.settings import settings
from flowcheck.typesystem import DepEnv, TypingReport, infer

logger = get_logger(__name__)

app = typer.Typer(
    name="flowcheck",
    help="Dependency typing and dynamic-policy checks for a while-language.",
    no_args_is_help=True,
)
out = Console()

VERDICT_EXIT = {
    VerdictKind.SECURE: 0,
    VerdictKind.INSECURE: 1,
    VerdictKind.BOUNDED: 3,
}
UniverseAdapter = TypeAdapter(dict[str, list[int]])


class OracleCheck(StrEnum):
    TWO_RUN = "two-run"
    SOUNDNESS = "soundness"
    KB = "kb"
    ACPI = "acpi"
    PI = "pi"
    THEOREM1 = "theorem1"


class RunConfig(BaseModel):
    """Resolved options of one invocation."""

    subcommand: str
    source: Path
    policy: Path | None = None
    fuel: int = Field(default_factory=lambda: settings.fuel, gt=0)
    universe: Path | None = None
    mode: Literal["syntactic", "exact"] = Field(default_factory=lambda: settings.mode)
    attacker: Path | None = None
    output_format: Literal["json", "text"] = Field(
        default_factory=lambda: settings.output_format
    )
    cache_dir: Path | None = None

    def program(self) -> Command:
        return parse_program(self.source.read_text())

    def policy_file(self) -> PolicyFile | None:
        return PolicyFile.load(self.policy) if self.policy is not None else None

    def universe_override(self) -> dict[str, list[int]] | None:
        if self.universe is None:
            return None
        try:
            return UniverseAdapter.validate_json(self.universe.read_bytes())
        except (OSError, ValidationError) as exc:
            raise PolicyFileError(
                f"invalid universe file {self.universe}: {exc}"
            ) from exc

    def build_universe(self, c: Command, policy_file: PolicyFile | None) -> Universe:
        return universe_for(
            c, policy_file, self.universe_override(), settings.default_domain
        )

    def typing(self, c: Command) -> DepEnv:
        if self.cache_dir is None:
            return infer(c)
        return TypingCache(self.cache_dir).typing(c)


def _config(**kwargs) -> RunConfig:
    try:
        return RunConfig(**{k: v for k, v in kwargs.items() if v is not None})
    except ValidationError as exc:
        raise typer.BadParameter(str(exc)) from exc


def _emit_json(model: BaseModel | list[BaseModel]) -> None:
    if isinstance(model, list):
        text = "[\n" + ",\n".join(m.model_dump_json(indent=2) for m in model) + "\n]"
    else:
        text = model.model_dump_json(indent=2)
    typer.echo(text)


def _fail(exc: FlowcheckError) -> typer.Exit:
    err_console.print(f"[bold red]error:[/] {exc}")
    return typer.Exit(2)


# shared options
Fuel = Annotated[int | None, typer.Option("--fuel", help="Step budget per run")]
UniverseOpt = Annotated[
    Path | None, typer.Option("--universe", help="JSON file of variable domains")
]
Format = Annotated[
    str | None, typer.Option("--format", help="Output format: json or text")
]
Cache = Annotated[
    Path | None, typer.Option("--cache", help="Directory of cached typings")
]
Source = Annotated[Path, typer.Argument(exists=True, dir_okay=False)]


@app.command()
def typecheck(
    source: Source,
    full: Annotated[
        bool, typer.Option("--full", help="Keep channel and pc dependencies")
    ] = False,
    output_format: Format = None,
    cache: Cache = None,
) -> None:
    """Infer the principal dependency typing of a program."""
    config = _config(
        subcommand="typecheck",
        source=source,
        output_format=output_format,
        cache_dir=cache,
    )
    try:
        c = config.program()
        report = TypingReport.from_env(config.typing(c), c, restricted=not full)
    except FlowcheckError as exc:
        raise _fail(exc) from exc
    if config.output_format == "json":
        _emit_json(report)
        return
    table = Table("variable", "depends on")
    for section in (report.variables, report.channels, report.points):
        for name, deps in section.items():
            table.add_row(name, ", ".join(deps) or "-")
    out.print(table)


def _print_compliance(report: ComplianceReport) -> None:
    table = Table("point", "dependencies", "allowed", "check", "verdict")
    for entry in report.entries:
        table.add_row(
            entry.point,
            ", ".join(entry.dependencies) or "-",
            ", ".join(entry.approximation) or "-",
            entry.check,
            entry.verdict,
        )
    out.print(table)
    for entry in report.violations():
        if entry.witness:
            first, second = entry.witness
            out.print(f"{entry.point}: {first} and {second} are allowed to look alike")
        if entry.oracle is not None:
            out.print(f"{entry.point}: two-run oracle says {entry.oracle.kind}")
    out.print(f"overall: [bold]{report.verdict}[/]")


@app.command()
def check(
    source: Source,
    policy: Annotated[Path, typer.Argument(exists=True, dir_okay=False)],
    mode: Annotated[
        str | None, typer.Option("--mode", help="syntactic or exact")
    ] = None,
    fuel: Fuel = None,
    universe: UniverseOpt = None,
    output_format: Format = None,
    cache: Cache = None,
) -> None:
    """Check a program's typing against the approximation of a dynamic policy."""
    config = _config(
        subcommand="check",
        source=source,
        policy=policy,
        mode=mode,
        fuel=fuel,
        universe=universe,
        output_format=output_format,
        cache_dir=cache,
    )
    try:
        c = config.program()
        policy_file = config.policy_file()
        assert policy_file is not None
        spec = policy_file.spec()
        approx = approximate_policy(c, spec).with_overrides(policy_file.overrides())
        report = check_compliance(
            config.typing(c),
            approx,
            config.mode,
            config.build_universe(c, policy_file),
            program=c,
            policy=spec,
            fuel=config.fuel,
        )
    except FlowcheckError as exc:
        raise _fail(exc) from exc
    if config.output_format == "json":
        _emit_json(report)
    else:
        _print_compliance(report)
    raise typer.Exit(report.exit_code)


def _parse_store(text: str) -> Store:
    values = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        name, sep, value = item.partition("=")
        if not sep:
            raise typer.BadParameter(f"expected name=value, got {item!r}")
        try:
            values[name.strip()] = int(value)
        except ValueError:
            raise typer.BadParameter(f"{value!r} is not an integer") from None
    return Store(values)


def _load_attacker(config: RunConfig) -> Attacker:
    if config.attacker is None:
        return PerfectRecall()
    return AttackerFile.load(config.attacker)


def _run_oracle(
    check: OracleCheck,
    config: RunConfig,
    channel: str | None,
    store: Store | None,
    max_states: int,
) -> Verdict | list[CrosscheckReport]:
    c = config.program()
    policy_file = config.policy_file()
    spec = policy_file.spec() if policy_file else DynamicPolicySpec()
    universe = config.build_universe(c, policy_file)
    oracle = SemanticOracle(c, universe, spec, config.fuel)
    selected = [channel] if channel else sorted(channels(c))
    stores = [store] if store is not None else list(universe)

    match check:
        case OracleCheck.SOUNDNESS:
            return typing_soundness_check(c, config.typing(c), universe, oracle=oracle)
        case OracleCheck.TWO_RUN:
            if store is not None:
                verdicts = [oracle.two_run_check(a, store) for a in selected]
            else:
                verdicts = [
                    two_run_pi_check(c, spec, a, universe, oracle=oracle)
                    for a in selected
                ]
            return combine("two-run", oracle.fuel, verdicts)
        case OracleCheck.THEOREM1:
            attackers = list(enumerate_attackers(settings.attacker_alphabet, max_states))
            if config.attacker is not None:
                attackers.append(_load_attacker(config))
            return [
                theorem1_crosscheck(c, spec, a, universe, attackers, config.fuel)
                for a in selected
            ]
    attacker = _load_attacker(config)
    progress = {OracleCheck.KB: "none", OracleCheck.ACPI: "ac", OracleCheck.PI: "full"}
    return combine(
        check.value,
        oracle.fuel,
        (
            oracle.knowledge_check(attacker, a, s, progress[check])  # type: ignore[arg-type]
            for a in selected
            for s in stores
        ),
    )


@app.command("oracle")
def oracle_command(
    source: Source,
    policy: Annotated[
        Path | None, typer.Argument(exists=True, dir_okay=False)
    ] = None,
    check: Annotated[
        OracleCheck, typer.Option("--check", help="Semantic condition to decide")
    ] = OracleCheck.TWO_RUN,
    channel: Annotated[str | None, typer.Option("--channel")] = None,
    store: Annotated[
        str | None, typer.Option("--store", help="Initial store, e.g. x=1,y=0")
    ] = None,
    attacker: Annotated[
        Path | None, typer.Option("--attacker", exists=True, dir_okay=False)
    ] = None,
    max_states: Annotated[
        int | None, typer.Option("--max-states", help="Largest enumerated attacker")
    ] = None,
    fuel: Fuel = None,
    universe: UniverseOpt = None,
    output_format: Format = None,
    cache: Cache = None,
) -> None:
    """Decide a semantic security condition by brute force over the universe."""
    config = _config(
        subcommand="oracle",
        source=source,
        policy=policy,
        fuel=fuel,
        universe=universe,
        attacker=attacker,
        output_format=output_format,
        cache_dir=cache,
    )
    initial = _parse_store(store) if store else None
    if initial is not None and check in (OracleCheck.SOUNDNESS, OracleCheck.THEOREM1):
        raise typer.BadParameter(
            f"--store does not apply to the {check.value} check", param_hint="--store"
        )
    try:
        result = _run_oracle(
            check, config, channel, initial, max_states or settings.max_attacker_states
        )
    except FlowcheckError as exc:
        raise _fail(exc) from exc

    if isinstance(result, list):
        if config.output_format == "json":
            _emit_json(result)
        else:
            for report in result:
                verdict = "agree" if report.agrees else "DISAGREE"
                out.print(
                    f"{report.channel}: {verdict} over {report.stores} stores and "
                    f"{report.attackers} attackers ({report.skipped} skipped)"
                )
        raise typer.Exit(0 if all(r.agrees for r in result) else 1)

    if config.output_format == "json":
        _emit_json(result)
    else:
        out.print(f"{result.check}: [bold]{result.kind}[/]")
        if result.detail:
            out.print(result.detail)
        if (cex := result.counterexample) is not None:
            out.print(
                f"on {cex.channel} at output {cex.index} ({cex.point}): sigma {cex.sigma}"
                f" outputs {cex.value}" + (f", rho {cex.rho}" if cex.rho else "")
            )
    raise typer.Exit(VERDICT_EXIT[result.kind])


@app.command()
def explain(
    source: Source,
    point: Annotated[str, typer.Argument(help="Channel point such as a@p1")],
    policy: Annotated[
        Path | None, typer.Argument(exists=True, dir_okay=False)
    ] = None,
    output_format: Format = None,
) -> None:
    """Show which statements make an output point depend on each variable."""
    config = _config(
        subcommand="explain", source=source, policy=policy, output_format=output_format
    )
    try:
        c = config.program()
        target = ChannelPoint.parse(point)
        if target not in points(c):
            raise typer.BadParameter(f"{point} is not an output point of {source}")
        approx: PolicyApprox | None = None
        if (policy_file := config.policy_file()) is not None:
            approx = approximate_policy(c, policy_file.spec()).with_overrides(
                policy_file.overrides()
            )
        explanation = explain_point(c, target, approx[target] if approx else None)
    except FlowcheckError as exc:
        raise _fail(exc) from exc
    if config.output_format == "json":
        _emit_json(explanation)
    else:
        out.print(explanation.render(), highlight=False)


@app.command()
def campaign(
    name: Annotated[
        str, typer.Argument(help="soundness, bridge, theorem1, lemmas or complexity")
    ],
    programs: Annotated[int | None, typer.Option("--programs")] = None,
    seed: Annotated[int, typer.Option("--seed")] = 0,
) -> None:
    """Run one cross-validation campaign as a prefect flow."""
    from flowcheck.campaigns import CAMPAIGNS

    if name not in CAMPAIGNS:
        raise typer.BadParameter(
            f"unknown campaign {name!r}; pick one of {sorted(CAMPAIGNS)}"
        )
    if name == "complexity":
        summary = CAMPAIGNS[name]()
    else:
        options = {"seed": seed}
        if programs is not None:
            options["programs"] = programs
        summary = CAMPAIGNS[name](**options)
    out.print(summary.markdown(), highlight=False)
    raise typer.Exit(0 if summary.passed else 1)


if __name__ == "__main__":
    app()
