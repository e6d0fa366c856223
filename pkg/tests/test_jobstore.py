import threading
import time

import pytest

from alignpipe.errors import StoreCorrupt
from alignpipe.jobstore import JobState, JobStore, SessionRecord


def _record(sid: str, state: str = "pending") -> SessionRecord:
    return SessionRecord(
        session_id=sid,
        video_id="v",
        media_url="http://x/m.wav",
        language="de",
        transcripts=[{"transcript_id": "t1", "url": "http://x/t.txt", "format": "txt"}],
        job=JobState(state=state),
    )


@pytest.fixture
def store(tmp_path) -> JobStore:
    return JobStore(tmp_path / "store", max_retries=3, lease_timeout_s=60.0)


def test_claim_returns_none_on_empty_queue(store):
    assert store.claim_next("fetch") is None


def test_claim_and_mark_cycle(store):
    store.add_session(_record("s1"))
    rec = store.claim_next("fetch")
    assert rec.session_id == "s1"
    # while leased, nobody else can claim it
    assert store.claim_next("fetch") is None
    store.mark("s1", "downloaded")
    assert store.get("s1").job.state == "downloaded"
    # next stage can claim now
    assert store.claim_next("segment").session_id == "s1"


def test_two_workers_never_share_a_job(store):
    for i in range(3):
        store.add_session(_record(f"s{i}"))
    claimed: list[str] = []
    lock = threading.Lock()

    def worker():
        while True:
            rec = store.claim_next("fetch")
            if rec is None:
                return
            with lock:
                claimed.append(rec.session_id)
            time.sleep(0.01)
            store.mark(rec.session_id, "downloaded")

    threads = [threading.Thread(target=worker) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(claimed) == ["s0", "s1", "s2"]  # each exactly once


def test_heal_stale_makes_job_reclaimable(store):
    store.add_session(_record("s1"))
    assert store.claim_next("fetch") is not None
    assert store.claim_next("fetch") is None  # lease held
    healed = store.heal_stale(lease_timeout_s=0.0)
    assert healed == ["s1"]
    assert store.claim_next("fetch") is not None


def test_failed_job_retries_until_max(store):
    store.add_session(_record("s1"))
    for attempt in range(1, 4):
        rec = store.claim_next("fetch")
        assert rec is not None, f"attempt {attempt}"
        store.mark_attempt("s1")
        store.mark_failed("s1", "fetch", "boom", backoff_base_s=0.0)
        assert store.get("s1").job.attempts == attempt
    # attempts == max_retries: no more claims
    assert store.claim_next("fetch") is None
    job = store.get("s1").job
    assert job.state == "failed" and job.reason == "boom"


def test_retry_backoff_delays_eligibility(store):
    store.add_session(_record("s1"))
    store.claim_next("fetch")
    store.mark_attempt("s1")
    store.mark_failed("s1", "fetch", "boom", backoff_base_s=0.2)
    assert store.claim_next("fetch") is None  # still backing off
    time.sleep(0.25)
    assert store.claim_next("fetch") is not None


def test_attempts_reset_on_new_stage(store):
    store.add_session(_record("s1"))
    store.claim_next("fetch")
    store.mark_attempt("s1")
    store.mark_failed("s1", "fetch", "boom", backoff_base_s=0.0)
    store.claim_next("fetch")
    store.mark_attempt("s1")
    store.mark("s1", "downloaded")
    assert store.get("s1").job.attempts == 2
    store.claim_next("segment")
    store.mark_attempt("s1")
    assert store.get("s1").job.attempts == 1  # fresh stage, fresh count


def test_downloading_orphan_is_reclaimable(store):
    # fetch crash between mark(downloading) and completion: lease healed,
    # state "downloading" must still be eligible for fetch.
    store.add_session(_record("s1", state="downloading"))
    rec = store.claim_next("fetch")
    assert rec is not None


def test_corrupt_record_fails_closed(store):
    store.add_session(_record("s1"))
    (store.root / "sessions" / "s1.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(StoreCorrupt):
        store.get("s1")


def test_counts_and_state_queries(store):
    store.add_session(_record("s1"))
    store.add_session(_record("s2", state="downloaded"))
    assert store.counts() == {"pending": 1, "downloaded": 1}
    assert store.sessions_in_state("downloaded") == ["s2"]
    assert store.count_eligible("fetch") == 1
    assert store.count_eligible("segment") == 1
    assert store.count_eligible("align") == 0
