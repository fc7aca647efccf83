"""
Run Logger: JSON audit trail of CLI runs.

Every command writes one RunRecord (tool version, command, merged config,
output files, summary). The SHA-256 digest covers everything except the
timestamp, so two runs of the same config carry the same digest.
"""

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger(__name__)


@dataclass
class RunRecord:
    """A single command run."""
    version: str
    command: str  # e.g. "simulate", "check"
    config: Dict[str, Any]  # merged RunConfig
    outputs: List[str]  # files written
    summary: Dict[str, Any]  # headline numbers
    timestamp: float = field(default_factory=time.time)

    def deterministic_part(self) -> Dict[str, Any]:
        data = asdict(self)
        del data["timestamp"]
        return data


def record_digest(record: Union[RunRecord, Dict[str, Any]]) -> str:
    """SHA-256 of the record without its timestamp."""
    if isinstance(record, RunRecord):
        data = record.deterministic_part()
    else:
        data = {k: v for k, v in record.items() if k not in ("timestamp", "digest")}
    payload = json.dumps(data, indent=2, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


class RunLogger:
    """
    Stores RunRecords as JSON files under log_dir.

    Files are named {session_id}_{sequence}.json; each holds the record and
    its digest.
    """

    def __init__(self, log_dir: Union[str, Path] = "./runs"):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.session_id = hashlib.sha256(f"{time.time_ns()}".encode()).hexdigest()[:16]
        self._sequence = 0

    def log_run(
        self,
        version: str,
        command: str,
        config: Dict[str, Any],
        outputs: List[str],
        summary: Optional[Dict[str, Any]] = None,
    ) -> str:
        """
        Log one run.

        Returns:
            Digest of the deterministic part of the record
        """
        record = RunRecord(
            version=version,
            command=command,
            config=config,
            outputs=list(outputs),
            summary=summary or {},
        )
        digest = record_digest(record)
        data = asdict(record)
        data["digest"] = digest
        self._sequence += 1
        log_file = self.log_dir / f"{self.session_id}_{self._sequence:04d}.json"
        log_file.write_text(json.dumps(data, indent=2, sort_keys=True))
        logger.debug("logged %s run to %s", command, log_file)
        return digest

    def verify_record(self, record: Union[RunRecord, Dict[str, Any]], claimed: str) -> bool:
        """True when the record's digest matches the claimed one."""
        return record_digest(record) == claimed

    def get_run_history(self, command: Optional[str] = None, limit: int = 100) -> List[RunRecord]:
        """
        Past records, newest first.

        Args:
            command: Keep only runs of this command
            limit: Maximum number of records returned
        """
        records = []
        for log_file in sorted(self.log_dir.glob("*.json"), key=lambda p: p.stat().st_mtime_ns,
                               reverse=True):
            try:
                data = json.loads(log_file.read_text())
                data.pop("digest", None)
                record = RunRecord(**data)
            except (ValueError, TypeError) as exc:
                logger.warning("skipping %s: %s", log_file, exc)
                continue
            if command and record.command != command:
                continue
            records.append(record)
            if len(records) >= limit:
                break
        return records

    def generate_run_report(self, output_file: Optional[str] = None) -> Dict[str, Any]:
        """
        Counts of runs per command and of distinct configs.

        Args:
            output_file: Optional file name under log_dir for the report
        """
        records = self.get_run_history(limit=10_000)
        command_counts: Dict[str, int] = {}
        digests = set()
        for record in records:
            command_counts[record.command] = command_counts.get(record.command, 0) + 1
            digests.add(record_digest(record))
        report = {
            "session_id": self.session_id,
            "total_runs": len(records),
            "command_counts": command_counts,
            "distinct_runs": len(digests),
            "versions": sorted({r.version for r in records}),
        }
        if output_file:
            (self.log_dir / output_file).write_text(json.dumps(report, indent=2, sort_keys=True))
        return report
