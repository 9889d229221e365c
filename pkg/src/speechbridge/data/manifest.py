"""ASR manifest ingestion: tab-separated audio_path, transcript, duration_s."""

import warnings
from dataclasses import dataclass

from ..errors import FormatError


@dataclass(frozen=True)
class AsrRecord:
    audio_path: str
    transcript: str
    duration_s: float


def load_manifest(path):
    """Returns (records, error report: list of (line_no, line, reason)).

    Malformed lines are collected, valid lines kept; duplicates of
    audio_path are kept with a warning. No valid lines at all is an error.
    """
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    records, errors, seen = [], [], set()
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            errors.append((i, line, f"expected 3 tab-separated fields, got {len(parts)}"))
            continue
        audio_path, transcript, dur = parts
        if not transcript.strip():
            errors.append((i, line, "empty transcript"))
            continue
        try:
            duration = float(dur)
        except ValueError:
            errors.append((i, line, f"bad duration {dur!r}"))
            continue
        if duration <= 0:
            errors.append((i, line, f"non-positive duration {duration}"))
            continue
        if audio_path in seen:
            warnings.warn(f"{path}:{i}: duplicate audio_path {audio_path!r}")
        seen.add(audio_path)
        records.append(AsrRecord(audio_path, transcript, duration))
    if not records:
        raise FormatError(f"{path}: no valid manifest records")
    return records, errors


def write_manifest(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(f"{r.audio_path}\t{r.transcript}\t{r.duration_s}\n")
