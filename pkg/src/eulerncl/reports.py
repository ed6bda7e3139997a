import time
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Iterable

from eulerncl.kernel import ZERO_EXPR, Expr


class Status(StrEnum):
    VERIFIED = "verified"
    FAILED = "failed"
    VERIFIED_WITH_ASSUMPTIONS = "verified-with-assumptions"


@dataclass
class VerificationReport:
    """Outcome of one check.

    verified => residual is 0 and there are no assumptions;
    verified-with-assumptions => residual is 0 and some expressions were assumed nonzero.
    """

    claim_id: str
    status: Status
    residual: Expr = field(default_factory=lambda: ZERO_EXPR)
    assumptions: list[Expr] = field(default_factory=list)
    elapsed_ms: int = 0
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.status is not Status.FAILED and not self.residual.is_zero():
            raise ValueError(f"{self.claim_id}: a {self.status} report must have a zero residual")
        if self.status is Status.VERIFIED and self.assumptions:
            raise ValueError(f"{self.claim_id}: a verified report cannot carry assumptions")
        if self.status is Status.VERIFIED_WITH_ASSUMPTIONS and not self.assumptions:
            raise ValueError(f"{self.claim_id}: verified-with-assumptions needs at least one assumption")

    @classmethod
    def from_residual(
        cls,
        claim_id: str,
        residual: Expr,
        assumptions: Iterable[Expr] = (),
        started: float | None = None,
        notes: Iterable[str] = (),
    ) -> "VerificationReport":
        assumptions = dedupe(assumptions)
        if not residual.is_zero():
            status = Status.FAILED
        elif assumptions:
            status = Status.VERIFIED_WITH_ASSUMPTIONS
        else:
            status = Status.VERIFIED
        return cls(
            claim_id=claim_id,
            status=status,
            residual=residual,
            assumptions=assumptions,
            elapsed_ms=elapsed_ms(started),
            notes=list(notes),
        )

    @classmethod
    def from_flag(
        cls,
        claim_id: str,
        ok: bool,
        started: float | None = None,
        notes: Iterable[str] = (),
        residual: Expr | None = None,
    ) -> "VerificationReport":
        """Report for checks whose outcome is not a single residual (fixture diffs, property sweeps)."""
        if ok:
            residual = ZERO_EXPR
        elif residual is None or residual.is_zero():
            residual = Expr.constant(1)
        return cls(
            claim_id=claim_id,
            status=Status.VERIFIED if ok else Status.FAILED,
            residual=residual,
            elapsed_ms=elapsed_ms(started),
            notes=list(notes),
        )

    @property
    def ok(self) -> bool:
        return self.status is not Status.FAILED

    def to_dict(self, full_residual: bool = False, residual_terms: int = 20) -> dict[str, Any]:
        from eulerncl.exprlang import to_json_terms

        residual = to_json_terms(self.residual)
        total = len(residual["num"])
        if not full_residual and total > residual_terms:
            residual["num"] = residual["num"][:residual_terms]
        return {
            "claim_id": self.claim_id,
            "status": str(self.status),
            "residual": residual,
            "residual_term_count": total,
            "assumptions": [to_json_terms(a) for a in self.assumptions],
            "elapsed_ms": self.elapsed_ms,
            "notes": list(self.notes),
        }


def elapsed_ms(started: float | None) -> int:
    if started is None:
        return 0
    return int((time.perf_counter() - started) * 1000)


def dedupe(expressions: Iterable[Expr]) -> list[Expr]:
    out: list[Expr] = []
    for e in expressions:
        if not any(e == seen for seen in out):
            out.append(e)
    return out


def expect_failure(claim_id: str, report: VerificationReport, notes: list[str] | None = None) -> VerificationReport:
    """A control: verified when the wrapped check fails. Extra notes follow the outcome line."""
    failed = report.status is Status.FAILED
    note = (
        f"{report.claim_id} failed as expected, {len(report.residual.num)} residual terms"
        if failed
        else f"{report.claim_id} unexpectedly passed"
    )
    return VerificationReport(
        claim_id=claim_id,
        status=Status.VERIFIED if failed else Status.FAILED,
        residual=ZERO_EXPR if failed else Expr.constant(1),
        elapsed_ms=report.elapsed_ms,
        notes=[note, *(notes or [])],
    )
