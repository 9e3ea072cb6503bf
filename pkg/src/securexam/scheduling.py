"""Sitting plans for large candidate populations, plus the e-exam policy rule.

Candidates are grouped by intended course, stable-sorted, and packed into
consecutive capacity-limited sittings spread round-robin across the slots of
each available day.  Planning is deliberately greedy and deterministic: the
same roster always yields byte-identical schedules, which keeps multi-day
exercises auditable.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, Iterable, Sequence

from .errors import SecurexamError

ROSTER_HEADER = ["reg_no", "identity_no", "full_name", "course_code",
                 "eligibility_score"]

VENUE_PROFILES = ("lan-center", "byod-distributed")

# Table-1 LAN-center hall size; byod sites are usually far smaller.
DEFAULT_CAPACITY = 500


class SchedulingError(SecurexamError):
    pass


class BadRoster(SchedulingError):
    pass


class DuplicateCandidate(SchedulingError):
    pass


class InsufficientCapacity(SchedulingError):
    def __init__(self, msg: str, minimal_days: int):
        super().__init__(msg)
        self.minimal_days = minimal_days


@dataclass(frozen=True)
class CandidateRecord:
    reg_no: str
    identity_no: str
    full_name: str
    course_code: str
    eligibility_score: int
    enrollment_token: bytes = b""  # opaque placeholder for a biometric record


@dataclass
class Sitting:
    sitting_id: str
    exam_id: str
    course_code: str
    day_index: int
    start_time: datetime
    capacity: int
    assigned: list[str] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "sitting_id": self.sitting_id,
            "exam_id": self.exam_id,
            "course_code": self.course_code,
            "day_index": self.day_index,
            "start_time": self.start_time.isoformat(),
            "capacity": self.capacity,
            "assigned": list(self.assigned),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Sitting":
        return cls(
            sitting_id=data["sitting_id"],
            exam_id=data["exam_id"],
            course_code=data["course_code"],
            day_index=data["day_index"],
            start_time=datetime.fromisoformat(data["start_time"]),
            capacity=data["capacity"],
            assigned=list(data["assigned"]),
        )


@dataclass
class Schedule:
    sittings: list[Sitting]
    venue_profile: str = "lan-center"

    def sitting(self, sitting_id: str) -> Sitting:
        for s in self.sittings:
            if s.sitting_id == sitting_id:
                return s
        raise KeyError(sitting_id)

    def sitting_of(self, reg_no: str) -> Sitting | None:
        for s in self.sittings:
            if reg_no in s.assigned:
                return s
        return None

    def to_json(self) -> dict[str, Any]:
        return {"venue_profile": self.venue_profile,
                "sittings": [s.to_json() for s in self.sittings]}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Schedule":
        return cls(sittings=[Sitting.from_json(s) for s in data["sittings"]],
                   venue_profile=data["venue_profile"])


@dataclass(frozen=True)
class ExamModePolicy:
    course_level: int  # 100, 200 or anything else
    enrolment: int
    lecturer_preference: str  # "electronic" | "paper"


# ---------------------------------------------------------------------------
# Roster ingestion
# ---------------------------------------------------------------------------

def load_roster(csv_text: str) -> list[CandidateRecord]:
    """Parse the roster CSV and check the (reg_no, identity_no) uniqueness rule.

    Each record is assigned a fresh opaque enrollment token standing in for
    the biometric record held by the candidate store.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise BadRoster("roster file is empty")
    if [h.strip() for h in header] != ROSTER_HEADER:
        raise BadRoster(f"roster header must be {','.join(ROSTER_HEADER)}")

    records: list[CandidateRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(ROSTER_HEADER):
            raise BadRoster(f"line {lineno}: expected {len(ROSTER_HEADER)} fields")
        reg_no, identity_no, full_name, course_code, score = \
            (cell.strip() for cell in row)
        try:
            score_int = int(score)
        except ValueError:
            raise BadRoster(f"line {lineno}: eligibility_score must be an integer")
        pair = (reg_no, identity_no)
        if pair in seen:
            raise DuplicateCandidate(
                f"line {lineno}: duplicate (reg_no, identity_no) pair {pair}")
        seen.add(pair)
        records.append(CandidateRecord(
            reg_no=reg_no, identity_no=identity_no, full_name=full_name,
            course_code=course_code, eligibility_score=score_int,
            enrollment_token=os.urandom(32)))
    return records


def roster_to_csv(records: Iterable[CandidateRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(ROSTER_HEADER)
    for r in records:
        writer.writerow([r.reg_no, r.identity_no, r.full_name, r.course_code,
                         r.eligibility_score])
    return out.getvalue()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def filter_eligible(roster: Sequence[CandidateRecord],
                    cutoff: int) -> list[CandidateRecord]:
    """Candidates meeting the minimum score, original order preserved."""
    return [c for c in roster if c.eligibility_score >= cutoff]


def plan_sittings(eligible: Sequence[CandidateRecord], exam_id: str,
                  capacity: int, days_available: int, sittings_per_day: int,
                  *, first_start: datetime,
                  slot_interval_minutes: int = 60,
                  venue_profile: str = "lan-center") -> Schedule:
    """Pack eligible candidates into course-grouped, capacity-limited sittings.

    Deterministic: candidates are stable-sorted by (course_code, reg_no) and
    packed greedily; sitting k lands on day k // sittings_per_day, slot
    k % sittings_per_day, starting at ``first_start`` plus the day/slot
    offsets.  Raises :class:`InsufficientCapacity` carrying the minimal
    days_available that would suffice.
    """
    if capacity <= 0:
        raise SchedulingError("capacity must be positive")
    if days_available <= 0 or sittings_per_day <= 0:
        raise SchedulingError("days_available and sittings_per_day must be positive")
    if venue_profile not in VENUE_PROFILES:
        raise SchedulingError(f"venue_profile must be one of {VENUE_PROFILES}")

    ordered = sorted(eligible, key=lambda c: (c.course_code, c.reg_no))
    groups: dict[str, list[CandidateRecord]] = {}
    for c in ordered:
        groups.setdefault(c.course_code, []).append(c)

    total_sittings = sum(math.ceil(len(g) / capacity) for g in groups.values())
    slots = days_available * sittings_per_day
    if total_sittings > slots:
        minimal = math.ceil(total_sittings / sittings_per_day)
        raise InsufficientCapacity(
            f"{total_sittings} sittings needed but only {slots} slots "
            f"available; {minimal} days would suffice", minimal_days=minimal)

    sittings: list[Sitting] = []
    k = 0
    for course_code in sorted(groups):
        members = groups[course_code]
        for chunk_start in range(0, len(members), capacity):
            chunk = members[chunk_start:chunk_start + capacity]
            day = k // sittings_per_day
            slot = k % sittings_per_day
            sittings.append(Sitting(
                sitting_id=f"{exam_id}-s{k:03d}",
                exam_id=exam_id,
                course_code=course_code,
                day_index=day,
                start_time=first_start + timedelta(days=day,
                                                   minutes=slot * slot_interval_minutes),
                capacity=capacity,
                assigned=[c.reg_no for c in chunk],
            ))
            k += 1
    return Schedule(sittings=sittings, venue_profile=venue_profile)


def exam_mode(policy: ExamModePolicy) -> str:
    """Electronic-vs-paper decision for one course.

    First- and second-year courses are electronic unless the lecturer opts
    out, and opting out is only honoured for manageable enrolments (at most
    100).  Courses at other levels simply follow the lecturer's preference.
    """
    if policy.lecturer_preference not in ("electronic", "paper"):
        raise SchedulingError("lecturer_preference must be electronic or paper")
    if policy.course_level in (100, 200):
        if policy.enrolment > 100:
            return "electronic"
        return policy.lecturer_preference
    return policy.lecturer_preference
