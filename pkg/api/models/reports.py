"""Verification report models."""

from typing import Any, Optional
from pydantic import BaseModel, Field


class CheckResult(BaseModel):
    """One verified claim with its measured quantity."""
    name: str
    passed: bool
    measured: Any = None
    expected: Any = None
    tolerance: Optional[float] = None
    margin: Any = None
    detail: Optional[str] = None


class VerificationReport(BaseModel):
    """Structured pass/fail record."""
    title: str
    seed: Optional[int] = None
    checks: list[CheckResult] = Field(default_factory=list)
    sections: dict[str, Any] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, **fields: Any) -> CheckResult:
        check = CheckResult(name=name, passed=bool(passed), **fields)
        self.checks.append(check)
        return check

    def extend(self, other: "VerificationReport", prefix: Optional[str] = None) -> None:
        for c in other.checks:
            name = f"{prefix}.{c.name}" if prefix else c.name
            self.checks.append(c.model_copy(update={"name": name}))
        if other.sections:
            self.sections[prefix or other.title] = other.sections

    def to_dict(self) -> dict:
        data = self.model_dump()
        data["passed"] = self.passed
        data["n_checks"] = len(self.checks)
        data["n_failures"] = len(self.failures)
        return data
