"""Pass/fail report containers shared by the potential and claim checkers."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class ClaimEntry:
    """Outcome of one monitored claim.

    ``worst_margin`` is the largest observed violation of the claim's
    inequality: the claim passes iff the margin does not exceed the
    tolerance that was used. ``worst_time`` is the time (or iteration
    index scaled by the step) at which the worst margin occurred, or
    ``nan`` when the claim has no time axis.
    """

    claim_id: str
    status: str
    worst_margin: float = math.nan
    worst_time: float = math.nan
    tolerance_used: float = math.nan

    def as_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "status": self.status,
            "worst_margin": _json_float(self.worst_margin),
            "worst_time": _json_float(self.worst_time),
            "tolerance_used": _json_float(self.tolerance_used),
        }


def entry_from_margin(claim_id: str, margin: float, tol: float,
                      worst_time: float = math.nan) -> ClaimEntry:
    status = PASS if margin <= tol else FAIL
    return ClaimEntry(claim_id, status, margin, worst_time, tol)


def not_applicable(claim_id: str) -> ClaimEntry:
    return ClaimEntry(claim_id, NOT_APPLICABLE)


@dataclass
class CertificateReport:
    """Collection of claim entries plus provenance of the checked inputs."""

    entries: list[ClaimEntry] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, *entries: ClaimEntry) -> None:
        self.entries.extend(entries)

    def entry(self, claim_id: str) -> ClaimEntry:
        for e in self.entries:
            if e.claim_id == claim_id:
                return e
        raise KeyError(claim_id)

    @property
    def all_pass(self) -> bool:
        return all(e.status != FAIL for e in self.entries)

    @property
    def failed_ids(self) -> list[str]:
        return [e.claim_id for e in self.entries if e.status == FAIL]

    def as_dict(self) -> dict:
        return {
            "entries": [e.as_dict() for e in self.entries],
            "provenance": dict(sorted(self.provenance.items())),
            "all_pass": self.all_pass,
        }

    def to_json(self) -> str:
        """Deterministic serialization: sorted keys, no whitespace drift."""
        return json.dumps(self.as_dict(), sort_keys=True, indent=2,
                          allow_nan=False) + "\n"


def _json_float(x: float) -> float | str:
    # Strict JSON has no inf/nan literals; encode them as strings.
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def array_digest(*arrays) -> str:
    """Stable hex id for a tuple of float arrays (provenance tagging)."""
    h = hashlib.sha256()
    for a in arrays:
        h.update(str(getattr(a, "shape", len(a))).encode())
        h.update(a.tobytes() if hasattr(a, "tobytes") else bytes(a))
    return h.hexdigest()[:16]
