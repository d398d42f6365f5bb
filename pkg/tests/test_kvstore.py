import json
import random

import pytest

from agentaccel.kvstore import (
    IntegrityError,
    KVStore,
    ModelGeometry,
    StoreError,
    kv_size,
    prefix_blob,
)

TINY = ModelGeometry(name="tiny", layers=1, kv_heads=1, head_dim=2, bytes_per_element=2, params_bytes=64)


@pytest.fixture()
def store(tmp_path):
    return KVStore(tmp_path / "cache")


class TestSizing:
    def test_zero_tokens(self):
        assert kv_size(0, TINY) == 0

    def test_single_token_7b_geometry(self):
        geom = ModelGeometry("7b-class", layers=32, kv_heads=8, head_dim=128, bytes_per_element=2, params_bytes=14_000_000_000)
        # Direct product: 32 layers * (K and V) * 8 heads * 128 dims * 2 bytes.
        assert kv_size(1, geom) == 32 * 2 * 8 * 128 * 2 == 131072

    def test_hundred_tools_within_ten_percent_of_budget_claim(self):
        # 100 tools at 120 tokens of description each, under the 7B-class
        # geometry, must land within 10% of the documented 1.4 GiB figure.
        geom = ModelGeometry("7b-class", layers=32, kv_heads=8, head_dim=128, bytes_per_element=2, params_bytes=14_000_000_000)
        total = kv_size(100 * 120, geom)
        target = 1.4 * 2**30
        assert abs(total - target) <= 0.10 * target

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError):
            ModelGeometry("bad", layers=0, kv_heads=1, head_dim=1, bytes_per_element=2, params_bytes=1)
        with pytest.raises(ValueError):
            ModelGeometry("bad", layers=1, kv_heads=1, head_dim=1, bytes_per_element=3, params_bytes=1)


class TestBlobs:
    def test_blob_size_matches_accounting(self):
        blob = prefix_blob([5, 6, 7], TINY)
        assert len(blob) == kv_size(3, TINY)

    def test_prefix_of_blob_is_blob_of_prefix(self):
        long = prefix_blob([5, 6, 7, 8], TINY)
        short = prefix_blob([5, 6], TINY)
        assert long[: len(short)] == short

    def test_blob_depends_on_position_and_token(self):
        assert prefix_blob([5, 6], TINY) != prefix_blob([6, 5], TINY)
        assert prefix_blob([5], TINY) != prefix_blob([6], TINY)


class TestPrecompute:
    def test_duplicates_collapse(self, store):
        entries = store.precompute([[1, 2], [1, 2], [1, 2, 3]], TINY)
        assert len(entries) == 2
        assert len(store.entries) == 2

    def test_empty_list_rejected(self, store):
        with pytest.raises(ValueError):
            store.precompute([], TINY)

    def test_empty_prefix_rejected(self, store):
        with pytest.raises(ValueError):
            store.precompute([[]], TINY)

    def test_extension_blob_startswith_prefix_blob(self, store):
        store.precompute([[1, 2], [1, 2, 3, 4]], TINY)
        short = next(e for e in store.entries.values() if e.token_count == 2)
        long = next(e for e in store.entries.values() if e.token_count == 4)
        short_bytes = store.load_blob(short)
        long_bytes = store.load_blob(long)
        assert long_bytes[: len(short_bytes)] == short_bytes

    def test_idempotent_rerun_produces_identical_manifest(self, store):
        store.precompute([[1, 2, 3]], TINY)
        first = store.manifest_path.read_bytes()
        store.precompute([[1, 2, 3]], TINY)
        assert store.manifest_path.read_bytes() == first

    def test_geometry_conflict_rejected(self, store):
        store.precompute([[1]], TINY)
        other = ModelGeometry("other", layers=2, kv_heads=1, head_dim=2, bytes_per_element=2, params_bytes=64)
        with pytest.raises(StoreError):
            store.precompute([[2]], other)

    def test_write_failure_leaves_manifest_unchanged(self, store, monkeypatch):
        store.precompute([[1, 2]], TINY)
        before = store.manifest_path.read_bytes()
        before_entries = dict(store.entries)

        import agentaccel.kvstore as kvmod

        def boom(tmp, dst):
            raise OSError("disk full")

        monkeypatch.setattr(kvmod.os, "replace", boom)
        with pytest.raises(OSError):
            store.precompute([[9, 9, 9]], TINY)
        monkeypatch.undo()
        reopened = KVStore(store.root)
        assert store.manifest_path.read_bytes() == before
        assert set(reopened.entries) == set(before_entries)

    def test_byte_accounting_sums(self, store):
        store.precompute([[1], [1, 2], [3, 4, 5]], TINY)
        assert store.total_bytes == sum(e.byte_size for e in store.entries.values())
        assert store.total_bytes == kv_size(1, TINY) + kv_size(2, TINY) + kv_size(3, TINY)


def _oracle_longest(entries, prompt):
    best_len = 0
    for entry in entries:
        common = 0
        for a, b in zip(entry.key, prompt):
            if a != b:
                break
            common += 1
        best_len = max(best_len, common)
    return best_len


class TestLongestPrefix:
    def test_empty_store(self, store):
        assert store.longest_cached_prefix([1, 2, 3]) == (None, 0)

    def test_early_mismatch_limits_reuse(self, store):
        # Two prompts sharing a long middle section but differing early on:
        # reuse halts at the first mismatch even though later tokens align.
        cached = [1, 2, 3, 4, 5, 6, 7, 8]
        store.precompute([cached], TINY)
        prompt = [1, 2, 99, 4, 5, 6, 7, 8]
        entry, match = store.longest_cached_prefix(prompt)
        assert match == 2
        assert entry is not None

    def test_tail_truncation_serves_matching_head(self, store):
        store.precompute([[1, 2, 3, 4, 5]], TINY)
        entry, match = store.longest_cached_prefix([1, 2, 3])
        assert match == 3
        assert entry.token_count == 5

    def test_exact_and_longer_entries(self, store):
        store.precompute([[1, 2], [1, 2, 3, 4]], TINY)
        entry, match = store.longest_cached_prefix([1, 2, 3, 9])
        assert match == 3
        entry2, match2 = store.longest_cached_prefix([1, 2])
        assert match2 == 2
        assert entry2.token_count == 2  # prefers the shortest covering entry

    def test_randomized_against_bruteforce(self, store):
        rng = random.Random(61)
        keys = []
        for _ in range(120):
            base = [rng.randint(1, 9) for _ in range(rng.randint(1, 40))]
            keys.append(base)
            if rng.random() < 0.4:
                keys.append(base[: rng.randint(1, len(base))])
        store.precompute(keys, TINY)
        entries = list(store.entries.values())
        for _ in range(300):
            if rng.random() < 0.6:
                src = rng.choice(entries).key
                prompt = list(src[: rng.randint(0, len(src))])
                prompt += [rng.randint(1, 9) for _ in range(rng.randint(0, 30))]
            else:
                prompt = [rng.randint(1, 9) for _ in range(rng.randint(0, 60))]
            _, match = store.longest_cached_prefix(prompt)
            assert match == _oracle_longest(entries, prompt)


class TestLoad:
    def test_round_trip_is_byte_identical(self, store):
        entries = store.precompute([[4, 5, 6]], TINY)
        assert store.load_blob(entries[0]) == prefix_blob([4, 5, 6], TINY)

    def test_corrupted_blob_detected(self, store):
        entries = store.precompute([[7, 8]], TINY)
        path = store.blob_dir / entries[0].blob_name
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            store.load_blob(entries[0])

    def test_missing_blob_detected(self, store):
        entries = store.precompute([[7, 8]], TINY)
        (store.blob_dir / entries[0].blob_name).unlink()
        with pytest.raises(IntegrityError):
            store.load_blob(entries[0])

    def test_account_arithmetic(self, store):
        entries = store.precompute([[1, 2, 3, 4]], TINY)
        byte_size, latency = store.account(entries[0], ssd_bandwidth=100.0)
        assert byte_size == kv_size(4, TINY)
        assert latency == pytest.approx(byte_size / 100.0)

    def test_account_rejects_foreign_entry(self, store, tmp_path):
        store.precompute([[1]], TINY)
        other = KVStore(tmp_path / "other")
        foreign = other.precompute([[9, 9]], TINY)[0]
        from agentaccel.kvstore import StoreError

        with pytest.raises(StoreError):
            store.account(foreign, ssd_bandwidth=1.0)

    def test_manifest_round_trip_reload(self, store):
        store.precompute([[1, 2], [3]], TINY)
        reopened = KVStore(store.root)
        assert set(reopened.entries) == set(store.entries)
        entry = next(iter(reopened.entries.values()))
        assert reopened.load_blob(entry) == prefix_blob(entry.key, TINY)

    def test_manifest_carries_required_fields(self, store):
        store.precompute([[1, 2]], TINY)
        doc = json.loads(store.manifest_path.read_text())
        entry = doc["entries"][0]
        for field in ("key_hash", "token_count", "byte_size", "tag", "blob", "checksum"):
            assert field in entry

    def test_reader_snapshot_survives_concurrent_precompute(self, store):
        # A reader opened before a writer publishes keeps serving its
        # consistent snapshot; a reader opened after sees the new state.
        first = store.precompute([[1, 2, 3]], TINY)[0]
        reader = KVStore(store.root)
        store.precompute([[4, 5]], TINY)
        assert reader.longest_cached_prefix([1, 2, 3]) == (first, 3)
        assert reader.load_blob(first) == prefix_blob([1, 2, 3], TINY)
        fresh = KVStore(store.root)
        assert len(fresh.entries) == 2
