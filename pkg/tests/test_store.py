import threading

import pytest

from sitstand import wire
from sitstand.base import ConflictingResubmission, ModeMismatch, SchemaViolation, UnknownTrial
from sitstand.store import TrialStore

from conftest import make_packet


def envelope(**kwargs):
    return wire.envelope_dict(make_packet(**kwargs))


class TestIngest:
    def test_create_then_idempotent_replay(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        env = envelope()
        stored, created = store.ingest(env, "train")
        assert created and stored.revision == 1
        again, created2 = store.ingest(env, "train")
        assert not created2
        assert store.count() == 1
        assert again.submitted_bytes == stored.submitted_bytes

    def test_conflicting_resubmission(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        env = envelope()
        store.ingest(env, "train")
        env2 = {**env, "payload": {**env["payload"], "user_id": "U9"}}
        with pytest.raises(ConflictingResubmission):
            store.ingest(env2, "train")

    def test_mode_mismatch(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        with pytest.raises(ModeMismatch):
            store.ingest(envelope(mode="train"), "test")

    def test_schema_violation_propagates(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        env = envelope()
        del env["payload"]["channels"]["rear_left"]
        with pytest.raises(SchemaViolation):
            store.ingest(env, "train")


class TestLabeling:
    def test_label_bumps_revision(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        stored, _ = store.ingest(envelope(label=None), "train")
        assert stored.status == "unlabeled"
        updated = store.set_label(stored.trial_id, "weak")
        assert updated.revision == 2 and updated.label == "weak" and updated.status == "labeled"
        updated = store.set_label(stored.trial_id, "moderate")
        assert updated.revision == 3 and updated.label == "moderate"

    def test_label_on_test_trial_rejected(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        stored, _ = store.ingest(envelope(mode="test"), "test")
        with pytest.raises(ModeMismatch):
            store.set_label(stored.trial_id, "weak")

    def test_unknown_trial(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        with pytest.raises(UnknownTrial):
            store.set_label("00000000-0000-0000-0000-000000000000", "weak")

    def test_empty_label_rejected(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        stored, _ = store.ingest(envelope(label=None), "train")
        with pytest.raises(SchemaViolation):
            store.set_label(stored.trial_id, "")


class TestDurability:
    def test_reopen_preserves_trials_and_labels(self, tmp_path):
        path = tmp_path / "t.wal"
        store = TrialStore(path)
        a, _ = store.ingest(envelope(label=None), "train")
        b, _ = store.ingest(envelope(mode="test"), "test")
        store.set_label(a.trial_id, "strong")
        # no close(): simulate a crash by abandoning the handle
        reopened = TrialStore(path)
        assert reopened.count() == 2
        got = reopened.get(a.trial_id)
        assert got.label == "strong" and got.revision == 2
        assert reopened.get(b.trial_id).mode == "test"

    def test_torn_tail_is_dropped(self, tmp_path):
        path = tmp_path / "t.wal"
        store = TrialStore(path)
        stored, _ = store.ingest(envelope(), "train")
        store.close()
        with open(path, "ab") as fh:
            fh.write(b'{"rec": "trial", "received_at": "2026-')  # crash mid-append
        reopened = TrialStore(path)
        assert reopened.count() == 1
        assert reopened.get(stored.trial_id).trial_id == stored.trial_id

    def test_corrupt_interior_line_raises(self, tmp_path):
        path = tmp_path / "t.wal"
        store = TrialStore(path)
        store.ingest(envelope(), "train")
        store.close()
        raw = path.read_bytes()
        path.write_bytes(b"garbage\n" + raw)
        with pytest.raises(Exception):
            TrialStore(path)


class TestQuery:
    def _store(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        for user in ("U1", "U2"):
            for k in range(3):
                store.ingest(envelope(user_id=user, label="weak" if k == 0 else None), "train")
        store.ingest(envelope(mode="test", user_id="U1"), "test")
        return store

    def test_filters_are_conjunctive(self, tmp_path):
        store = self._store(tmp_path)
        assert len(store.query("train")) == 6
        assert len(store.query("train", user_id="U2")) == 3
        assert len(store.query("train", user_id="U2", label="weak")) == 1
        assert len(store.query("test")) == 1
        assert len(store.query("train", status="unlabeled")) == 4

    def test_order_and_pagination(self, tmp_path):
        store = self._store(tmp_path)
        rows = store.query("train")
        keys = [(t.received_at, t.trial_id) for t in rows]
        assert keys == sorted(keys)
        page1 = store.query("train", limit=4)
        page2 = store.query("train", limit=4, offset=4)
        assert [t.trial_id for t in page1 + page2] == [t.trial_id for t in rows]

    def test_after_filter(self, tmp_path):
        store = self._store(tmp_path)
        rows = store.query("train")
        cutoff = rows[2].received_at
        later = store.query("train", after=cutoff)
        assert [t.trial_id for t in later] == [t.trial_id for t in rows[3:]]

    def test_malformed_after_raises(self, tmp_path):
        store = self._store(tmp_path)
        with pytest.raises(ValueError):
            store.query("train", after="not-a-time")

    def test_negative_limit_raises(self, tmp_path):
        store = self._store(tmp_path)
        with pytest.raises(ValueError):
            store.query("train", limit=-1)


class TestConcurrency:
    def test_concurrent_distinct_submissions_all_persist(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        envs = [envelope() for _ in range(16)]
        errors = []

        def submit(env):
            try:
                store.ingest(env, "train")
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=submit, args=(e,)) for e in envs]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert store.count() == 16
        reopened = TrialStore(tmp_path / "t.wal")
        assert reopened.count() == 16

    def test_concurrent_identical_submissions_store_once(self, tmp_path):
        store = TrialStore(tmp_path / "t.wal")
        env = envelope()
        results = []

        def submit():
            results.append(store.ingest(env, "train")[1])

        threads = [threading.Thread(target=submit) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert store.count() == 1
        assert sum(results) == 1  # exactly one creation
