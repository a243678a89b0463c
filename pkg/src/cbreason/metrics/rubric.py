"""Reviewer rubric scores: level-set validation, import, and aggregation.

The three per-case scores are: concept interpretation (a ratio of correctly
interpreted to predicted concepts), concept integration (four discrete levels),
and category assignment (three discrete levels, where the middle level credits
a wrong category with the correct benign/malignant implication).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

CIGS_LEVELS = (0.0, 0.25, 0.75, 1.0)
BAS_LEVELS = (0.0, 0.8, 1.0)
_LEVEL_TOL = 1e-9

SCORE_COLUMNS = ("case_id", "reviewer_id", "cints", "cigs", "bas")


class RubricSchemaError(ValueError):
    pass


def _check_level(value: float, levels: tuple[float, ...], field: str) -> float:
    if not any(abs(value - level) <= _LEVEL_TOL for level in levels):
        raise RubricSchemaError(f"field '{field}': value {value} is not one of the levels {list(levels)}")
    return min(levels, key=lambda level: abs(value - level))


@dataclass(frozen=True)
class RubricScore:
    case_id: str
    cints: float
    cigs: float
    bas: float
    reviewer_id: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.cints <= 1.0:
            raise RubricSchemaError(f"field 'cints': value {self.cints} outside [0, 1]")
        object.__setattr__(self, "cigs", _check_level(self.cigs, CIGS_LEVELS, "cigs"))
        object.__setattr__(self, "bas", _check_level(self.bas, BAS_LEVELS, "bas"))


def aggregate_rubric(scores: Sequence[RubricScore]) -> dict[str, float]:
    """Arithmetic means of the three scores, as percentages."""
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    n = len(scores)
    return {
        "mean_cints": 100.0 * sum(s.cints for s in scores) / n,
        "mean_cigs": 100.0 * sum(s.cigs for s in scores) / n,
        "mean_bas": 100.0 * sum(s.bas for s in scores) / n,
    }


def _parse_ratio(raw: str, field: str, lineno: int) -> float:
    raw = raw.strip()
    try:
        if "/" in raw:
            return float(Fraction(raw))
        return float(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise RubricSchemaError(f"row {lineno}: field '{field}': cannot parse '{raw}'") from exc


def import_rubric_scores(path: Path | str) -> list[RubricScore]:
    """Read a reviewer score file, enforcing level sets and ranges per row."""
    path = Path(path)
    if not path.exists():
        raise RubricSchemaError(f"score file not found: {path}")
    scores: list[RubricScore] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RubricSchemaError(f"{path}: empty score file") from None
        if tuple(header) != SCORE_COLUMNS:
            raise RubricSchemaError(f"{path}: header must be {','.join(SCORE_COLUMNS)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SCORE_COLUMNS):
                raise RubricSchemaError(f"row {lineno}: expected {len(SCORE_COLUMNS)} columns, got {len(row)}")
            case_id, reviewer_id, cints_raw, cigs_raw, bas_raw = row
            if not case_id:
                raise RubricSchemaError(f"row {lineno}: field 'case_id': must be non-empty")
            cints = _parse_ratio(cints_raw, "cints", lineno)
            cigs = _parse_ratio(cigs_raw, "cigs", lineno)
            bas = _parse_ratio(bas_raw, "bas", lineno)
            try:
                scores.append(
                    RubricScore(case_id=case_id, reviewer_id=reviewer_id, cints=cints, cigs=cigs, bas=bas)
                )
            except RubricSchemaError as exc:
                raise RubricSchemaError(f"row {lineno}: {exc}") from None
    return scores
