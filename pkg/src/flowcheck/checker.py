"""Static compliance: is every output point's typing at least as strict as the
policy approximation there?

A compliant report, together with soundness of the inferred typing, means the
program is two-run PI secure for the policy on every channel.
"""

from __future__ import annotations

import os
import tempfile
from enum import StrEnum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ValidationError

from flowcheck.errors import ApproximationError, CacheMissError, StaleCacheError
from flowcheck.lang import ChannelPoint, Command, points, program_digest
from flowcheck.logging import get_logger
from flowcheck.oracle import SemanticOracle, Verdict, two_run_pi_check
from flowcheck.policy import (
    DynamicPolicySpec,
    EquivSpec,
    PolicyApprox,
    coarseness_witness,
    coarser_syntactic,
)
from flowcheck.semantics import Universe
from flowcheck.settings import settings
from flowcheck.typesystem import DepEnv, PVarView, TypingReport, infer

logger = get_logger(__name__)

Mode = Literal["syntactic", "exact"]


class PointVerdict(StrEnum):
    COMPLIANT = "compliant"
    VIOLATION = "violation"
    UNKNOWN = "unknown"


EXIT_CODES = {
    PointVerdict.COMPLIANT: 0,
    PointVerdict.VIOLATION: 1,
    PointVerdict.UNKNOWN: 3,
}


class PointEntry(BaseModel):
    point: str
    dependencies: list[str]
    approximation: list[str]
    check: Mode
    verdict: PointVerdict
    witness: list[dict[str, int]] | None = None
    oracle: Verdict | None = None


class ComplianceReport(BaseModel):
    verdict: PointVerdict
    mode: Mode
    digest: str | None = None
    entries: list[PointEntry]

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]

    def violations(self) -> list[PointEntry]:
        return [e for e in self.entries if e.verdict is PointVerdict.VIOLATION]


def _overall(entries: list[PointEntry]) -> PointVerdict:
    verdicts = {entry.verdict for entry in entries}
    for verdict in (PointVerdict.VIOLATION, PointVerdict.UNKNOWN):
        if verdict in verdicts:
            return verdict
    return PointVerdict.COMPLIANT


def check_compliance(
    g: DepEnv,
    approx: PolicyApprox,
    mode: Mode = "syntactic",
    universe: Universe | None = None,
    program: Command | None = None,
    policy: DynamicPolicySpec | None = None,
    fuel: int | None = None,
) -> ComplianceReport:
    """Check every output point of the typing against the approximation.

    In exact mode a failed syntactic check is settled over `universe`. Given
    the program and its policy, violating points also carry the oracle's
    two-run verdict for their channel.
    """
    if mode == "exact" and universe is None:
        raise ValueError("exact mode requires a universe")
    typed = {var for var in g.keys() if isinstance(var, ChannelPoint)}
    if program is not None:
        typed |= points(program)
    if missing := sorted(typed - set(approx.points)):
        raise ApproximationError(
            f"approximation has no entry for {', '.join(map(str, missing))}"
        )

    view = PVarView(g)
    oracle = (
        SemanticOracle(program, universe, policy, fuel)
        if mode == "exact" and program is not None and universe is not None
        else None
    )
    two_run: dict[str, Verdict] = {}
    entries: list[PointEntry] = []
    for point in sorted(typed | set(approx.points)):
        deps, target = view(point), approx[point]
        entry = PointEntry(
            point=str(point),
            dependencies=sorted(deps),
            approximation=target.to_json(),
            check="syntactic",
            verdict=PointVerdict.COMPLIANT,
        )
        if not coarser_syntactic(deps, target):
            if mode == "syntactic":
                entry.verdict = (
                    PointVerdict.VIOLATION
                    if target.is_variable_only
                    else PointVerdict.UNKNOWN
                )
            else:
                assert universe is not None
                entry.check = "exact"
                witness = coarseness_witness(
                    EquivSpec.of_variables(deps), target, universe
                )
                if witness is not None:
                    entry.verdict = PointVerdict.VIOLATION
                    entry.witness = [dict(store) for store in witness]
                    if oracle is not None:
                        if point.channel not in two_run:
                            two_run[point.channel] = two_run_pi_check(
                                oracle.program,
                                oracle.policy,
                                point.channel,
                                oracle.universe,
                                oracle=oracle,
                            )
                        entry.oracle = two_run[point.channel]
        logger.debug(f"{point}: {entry.verdict} ({entry.check})")
        entries.append(entry)

    return ComplianceReport(
        verdict=_overall(entries),
        mode=mode,
        digest=program_digest(program) if program is not None else None,
        entries=entries,
    )


class TypingCache:
    """A directory of typings named by the digest of the program's canonical print.

    Writes go through a temporary file and an atomic rename, so concurrent
    readers never see a partial file.
    """

    def __init__(self, directory: Path | None = None) -> None:
        self.directory = Path(directory or settings.cache_dir).expanduser()

    def path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def store(self, c: Command, g: DepEnv) -> Path:
        digest = program_digest(c)
        report = TypingReport.from_env(g, c, restricted=False, digest=digest)
        self.directory.mkdir(parents=True, exist_ok=True)
        target = self.path(digest)
        with tempfile.NamedTemporaryFile(
            "wb", dir=self.directory, suffix=".tmp", delete=False
        ) as handle:
            handle.write(report.model_dump_json(indent=2).encode())
        os.replace(handle.name, target)
        logger.info(f"Cached typing {digest[:12]}")
        return target

    def load(self, digest: str) -> DepEnv:
        path = self.path(digest)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise CacheMissError(f"no cached typing for {digest[:12]}") from None
        try:
            report = TypingReport.model_validate_json(data)
        except ValidationError as exc:
            raise StaleCacheError(f"unreadable cached typing {path}: {exc}") from exc
        if report.digest != digest or report.restricted:
            raise StaleCacheError(f"cached typing {path} belongs to another program")
        logger.info(f"Loaded cached typing {digest[:12]}")
        return report.to_env()

    def typing(self, c: Command) -> DepEnv:
        """The cached typing of `c`, inferring and storing it on a miss."""
        try:
            return self.load(program_digest(c))
        except CacheMissError:
            logger.info("Typing cache miss")
        g = infer(c)
        self.store(c, g)
        return g


def cache_typing(c: Command, g: DepEnv, directory: Path | None = None) -> Path:
    return TypingCache(directory).store(c, g)


def load_typing(digest: str, directory: Path | None = None) -> DepEnv:
    return TypingCache(directory).load(digest)
