"""File-backed job-state store with lease-based claiming.

Claiming creates a lease file with O_EXCL, so two concurrent claimers (threads
or processes) can never hold the same session; record updates go through
write-to-temp + atomic rename. A crashed worker leaves its lease behind until
heal_stale() returns the session to the pool. The same interface can be backed
by a transactional database without touching callers.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import StoreCorrupt

STAGE_ORDER = (
    "pending",
    "downloading",
    "downloaded",
    "segmented",
    "transcribed",
    "aligned",
    "selected",
    "emitted",
)
STATE_FAILED = "failed"

# stage name -> states a session may be in to be claimed for that stage
STAGE_SOURCES: dict[str, tuple[str, ...]] = {
    "fetch": ("pending", "downloading"),
    "segment": ("downloaded",),
    "transcribe": ("segmented",),
    "align": ("transcribed",),
    "select": ("aligned",),
    "emit": ("selected",),
}
# stage name -> state recorded on failure
STAGE_FAIL_LABEL: dict[str, str] = {
    "fetch": "downloading",
    "segment": "segmented",
    "transcribe": "transcribed",
    "align": "aligned",
    "select": "selected",
    "emit": "emitted",
}


@dataclass
class JobState:
    state: str = "pending"
    failed_stage: str | None = None
    reason: str | None = None
    attempts: int = 0
    retry_after: float = 0.0

    def to_dict(self) -> dict:
        return {
            "state": self.state,
            "failed_stage": self.failed_stage,
            "reason": self.reason,
            "attempts": self.attempts,
            "retry_after": self.retry_after,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobState":
        return cls(
            state=d.get("state", "pending"),
            failed_stage=d.get("failed_stage"),
            reason=d.get("reason"),
            attempts=int(d.get("attempts", 0)),
            retry_after=float(d.get("retry_after", 0.0)),
        )


@dataclass
class SessionRecord:
    """One session: media reference, candidate transcripts, job state."""

    session_id: str
    video_id: str
    media_url: str
    language: str
    transcripts: list[dict] = field(default_factory=list)  # {transcript_id,url,format}
    job: JobState = field(default_factory=JobState)
    artifacts: dict[str, str] = field(default_factory=dict)  # name -> checksum/path

    @property
    def transcript_ids(self) -> list[str]:
        return [t["transcript_id"] for t in self.transcripts]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "video_id": self.video_id,
            "media_url": self.media_url,
            "language": self.language,
            "transcripts": self.transcripts,
            "job": self.job.to_dict(),
            "artifacts": self.artifacts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionRecord":
        try:
            return cls(
                session_id=d["session_id"],
                video_id=d.get("video_id", ""),
                media_url=d["media_url"],
                language=d.get("language", "und"),
                transcripts=list(d.get("transcripts", [])),
                job=JobState.from_dict(d.get("job", {})),
                artifacts=dict(d.get("artifacts", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreCorrupt(f"bad session record: {exc}") from exc


class JobStore:
    """Embedded store rooted at a directory.

    Layout: sessions/<sid>.json for records, leases/<sid>.lease for claims,
    artifacts/<sid>/ for stage outputs.
    """

    def __init__(self, root: str | Path, *, max_retries: int = 3, lease_timeout_s: float = 600.0):
        self.root = Path(root)
        self.max_retries = max_retries
        self.lease_timeout_s = lease_timeout_s
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "leases").mkdir(parents=True, exist_ok=True)
        (self.root / "artifacts").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # -- paths ---------------------------------------------------------------

    def _record_path(self, sid: str) -> Path:
        return self.root / "sessions" / f"{sid}.json"

    def _lease_path(self, sid: str) -> Path:
        return self.root / "leases" / f"{sid}.lease"

    def artifact_dir(self, sid: str) -> Path:
        d = self.root / "artifacts" / sid
        d.mkdir(parents=True, exist_ok=True)
        return d

    # -- record I/O ------------------------------------------------------------

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "sessions").glob("*.json"))

    def get(self, sid: str) -> SessionRecord:
        path = self._record_path(sid)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise KeyError(sid) from None
        except (OSError, json.JSONDecodeError) as exc:
            raise StoreCorrupt(f"{path}: {exc}") from exc
        return SessionRecord.from_dict(data)

    def put(self, record: SessionRecord) -> None:
        path = self._record_path(record.session_id)
        tmp = path.with_name(path.name + f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(
            json.dumps(record.to_dict(), ensure_ascii=False, indent=2, sort_keys=True),
            encoding="utf-8",
        )
        os.replace(tmp, path)

    def add_session(self, record: SessionRecord, *, overwrite: bool = False) -> bool:
        """Register a session; returns False when it already exists."""
        if not overwrite and self._record_path(record.session_id).exists():
            return False
        self.put(record)
        return True

    # -- claiming ---------------------------------------------------------------

    def _eligible(self, record: SessionRecord, stage: str, now: float) -> bool:
        sources = STAGE_SOURCES[stage]
        job = record.job
        if job.state in sources:
            return True
        if (
            job.state == STATE_FAILED
            and job.failed_stage == STAGE_FAIL_LABEL[stage]
            and job.attempts < self.max_retries
            and now >= job.retry_after
        ):
            return True
        return False

    def claim_next(self, stage: str, *, session_filter: set[str] | None = None) -> SessionRecord | None:
        """Claim at most one eligible session for the stage, or None.

        Exclusivity comes from O_EXCL lease creation; after winning the lease
        the record is re-read to confirm it is still eligible.
        """
        if stage not in STAGE_SOURCES:
            raise ValueError(f"unknown stage {stage!r}")
        now = time.time()
        for sid in self.session_ids():
            if session_filter is not None and sid not in session_filter:
                continue
            try:
                record = self.get(sid)
            except KeyError:
                continue
            if not self._eligible(record, stage, now):
                continue
            lease = self._lease_path(sid)
            try:
                fd = os.open(lease, os.O_WRONLY | os.O_CREAT | os.O_EXCL)
            except FileExistsError:
                continue
            with os.fdopen(fd, "w") as fh:
                json.dump(
                    {"stage": stage, "ts": time.time(),
                     "owner": f"{os.getpid()}:{threading.get_ident()}"},
                    fh,
                )
            # Re-check under the lease: the record may have advanced between
            # the scan and the claim.
            record = self.get(sid)
            if not self._eligible(record, stage, time.time()):
                self.release(sid)
                continue
            return record
        return None

    def release(self, sid: str) -> None:
        try:
            os.unlink(self._lease_path(sid))
        except FileNotFoundError:
            pass

    def heal_stale(self, lease_timeout_s: float | None = None) -> list[str]:
        """Remove leases older than the timeout; returns healed session ids."""
        timeout = self.lease_timeout_s if lease_timeout_s is None else lease_timeout_s
        healed = []
        now = time.time()
        for lease in (self.root / "leases").glob("*.lease"):
            try:
                ts = json.loads(lease.read_text(encoding="utf-8")).get("ts", 0.0)
            except (OSError, json.JSONDecodeError):
                ts = 0.0
            if now - ts > timeout:
                try:
                    os.unlink(lease)
                    healed.append(lease.stem)
                except FileNotFoundError:
                    pass
        return healed

    # -- state transitions --------------------------------------------------------

    def mark(self, sid: str, state: str, *, release: bool = True) -> SessionRecord:
        """Record a successful transition and (by default) release the lease."""
        if state not in STAGE_ORDER:
            raise ValueError(f"unknown state {state!r}")
        record = self.get(sid)
        record.job.state = state
        record.job.failed_stage = None
        record.job.reason = None
        self.put(record)
        if release:
            self.release(sid)
        return record

    def mark_attempt(self, sid: str) -> SessionRecord:
        """Count a try as started.

        Retries (state failed, or a crash-orphaned mid-fetch "downloading")
        increment; the first try at a new stage resets the count.
        """
        record = self.get(sid)
        if record.job.state in (STATE_FAILED, "downloading"):
            record.job.attempts += 1
        else:
            record.job.attempts = 1
        self.put(record)
        return record

    def mark_failed(
        self, sid: str, stage: str, reason: str, *, backoff_base_s: float = 1.0
    ) -> SessionRecord:
        record = self.get(sid)
        record.job.state = STATE_FAILED
        record.job.failed_stage = STAGE_FAIL_LABEL[stage]
        record.job.reason = reason
        record.job.retry_after = time.time() + backoff_base_s * (
            2 ** max(0, record.job.attempts - 1)
        )
        self.put(record)
        self.release(sid)
        return record

    # -- queries -----------------------------------------------------------------

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for sid in self.session_ids():
            state = self.get(sid).job.state
            out[state] = out.get(state, 0) + 1
        return out

    def sessions_in_state(self, state: str) -> list[str]:
        return [sid for sid in self.session_ids() if self.get(sid).job.state == state]

    def count_eligible(self, stage: str, session_filter: set[str] | None = None) -> int:
        now = time.time()
        total = 0
        for sid in self.session_ids():
            if session_filter is not None and sid not in session_filter:
                continue
            try:
                if self._eligible(self.get(sid), stage, now):
                    total += 1
            except KeyError:
                continue
        return total
