import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevo.curriculum import (
    CurriculumStore,
    Problem,
    Zone,
    classify_zone,
    load_seed_manifest,
    problem_id,
)
from coevo.errors import (
    InvalidArgumentError,
    NotFoundError,
    SchemaError,
    SnapshotCorruptionError,
    SnapshotVersionError,
)


def make_problem(statement, answer="7", **kwargs):
    return Problem.make(statement=statement, reference_answer=answer, **kwargs)


def fresh_store(problems=(), seed=0):
    store = CurriculumStore(rng_seed=seed)
    store.add_problems(list(problems), iteration=0)
    return store


class TestProblem:
    def test_id_is_content_hash(self):
        a = make_problem("What is 3+4?")
        b = make_problem("What is 3+4?")
        assert a.id == b.id == problem_id("What is 3+4?", "7")

    def test_different_answer_different_id(self):
        assert make_problem("q", "1").id != make_problem("q", "2").id

    def test_seed_cannot_have_parent(self):
        with pytest.raises(InvalidArgumentError):
            Problem.make("q", "1", origin="seed", parent_id="abc")

    def test_teacher_needs_parent(self):
        with pytest.raises(InvalidArgumentError):
            Problem.make("q", "1", origin="teacher")

    def test_empty_statement_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Problem.make("   ", "1")


class TestAddProblems:
    def test_dedupe_by_identity(self):
        store = fresh_store()
        batch = [make_problem("a"), make_problem("b"), make_problem("a")]
        report = store.add_problems(batch, iteration=0)
        assert report.inserted == 2
        assert len(store.entries) == 2

    def test_duplicate_of_existing_skipped(self):
        store = fresh_store([make_problem("a")])
        report = store.add_problems([make_problem("a"), make_problem("c")], iteration=1)
        assert report.inserted == 1

    def test_refined_problem_keeps_lineage(self):
        parent = make_problem("original")
        child = Problem.make(
            "refined", "9", origin="teacher", parent_id=parent.id, created_iteration=1
        )
        store = fresh_store([parent])
        store.add_problems([child], iteration=1)
        entry = store.entries[child.id]
        assert entry.problem.origin == "teacher"
        assert entry.problem.parent_id == parent.id

    def test_empty_batch_is_noop(self, tmp_path):
        store = fresh_store([make_problem("a")])
        before = store.snapshot(tmp_path / "a.json").read_bytes()
        assert store.add_problems([], iteration=3).inserted == 0
        after = store.snapshot(tmp_path / "b.json").read_bytes()
        assert before == after

    def test_malformed_rejected_per_item_not_atomic(self):
        store = fresh_store()
        bad = Problem(id="x", statement="", reference_solution="", reference_answer="1")
        report = store.add_problems([bad, make_problem("ok")], iteration=0)
        assert report.inserted == 1
        assert report.rejected == ((0, "empty statement"),)

    def test_new_entries_default_state(self):
        store = fresh_store([make_problem("a")])
        entry = next(iter(store.entries.values()))
        assert entry.zone is Zone.LEARNING
        assert entry.attempts == 0
        assert entry.status == "active"


class TestClassifyZone:
    def test_endpoints(self):
        assert classify_zone(1.0) is Zone.MASTERED
        assert classify_zone(0.0) is Zone.TOO_DIFFICULT
        assert classify_zone(0.125) is Zone.LEARNING

    def test_out_of_range(self):
        for bad in (-0.1, 1.1, float("nan")):
            with pytest.raises(InvalidArgumentError):
                classify_zone(bad)

    @settings(max_examples=500)
    @given(st.fractions(min_value=0, max_value=1))
    def test_three_way_mapping_property(self, rate):
        zone = classify_zone(float(rate))
        if rate == 1:
            assert zone is Zone.MASTERED
        elif rate == 0:
            assert zone is Zone.TOO_DIFFICULT
        else:
            assert zone is Zone.LEARNING


class TestUpdateStats:
    def test_half_success_is_learning(self):
        store = fresh_store([make_problem("a")])
        pid = next(iter(store.entries))
        entry = store.update_stats(pid, [True] * 4 + [False] * 4)
        assert entry.success_rate == 0.5
        assert entry.zone is Zone.LEARNING

    def test_all_true_is_mastered(self):
        store = fresh_store([make_problem("a")])
        pid = next(iter(store.entries))
        entry = store.update_stats(pid, [True] * 8)
        assert entry.success_rate == 1.0
        assert entry.zone is Zone.MASTERED
        assert not entry.needs_quality_check

    def test_all_false_flags_quality_check(self):
        store = fresh_store([make_problem("a")])
        pid = next(iter(store.entries))
        entry = store.update_stats(pid, [False] * 8)
        assert entry.success_rate == 0.0
        assert entry.zone is Zone.TOO_DIFFICULT
        assert entry.needs_quality_check

    def test_unknown_id(self):
        with pytest.raises(NotFoundError):
            fresh_store().update_stats("nope", [True])

    def test_empty_verdicts(self):
        store = fresh_store([make_problem("a")])
        with pytest.raises(InvalidArgumentError):
            store.update_stats(next(iter(store.entries)), [])

    def test_first_evaluation_not_logged_as_transition(self):
        store = fresh_store([make_problem("a")])
        store.update_stats(next(iter(store.entries)), [False] * 8)
        assert store.transition_log == []


class TestRecategorize:
    def test_named_transitions(self):
        store = fresh_store([make_problem("a"), make_problem("b")])
        ids = sorted(store.entries)
        store.update_stats(ids[0], [False] * 8)  # TooDifficult
        store.update_stats(ids[1], [True] * 6 + [False] * 2)  # Learning
        report = store.recategorize_all(
            {ids[0]: [True] * 2 + [False] * 6, ids[1]: [True] * 8}
        )
        assert report.difficult_to_learning == 1
        assert report.learning_to_mastered == 1
        assert len(report.transitions) == 2

    def test_no_change_empty_report(self):
        store = fresh_store([make_problem("a")])
        pid = next(iter(store.entries))
        store.update_stats(pid, [True] * 4 + [False] * 4)
        report = store.recategorize_all({pid: [True] * 5 + [False] * 3})
        assert report.transitions == []

    def test_entries_without_verdicts_keep_zone(self):
        store = fresh_store([make_problem("a"), make_problem("b")])
        ids = sorted(store.entries)
        store.update_stats(ids[0], [True] * 8)
        store.recategorize_all({})
        assert store.entries[ids[0]].zone is Zone.MASTERED


class TestSampleTrainingBatch:
    def _store_with_history(self, n_new=40, n_old=200, seed=1):
        store = CurriculumStore(rng_seed=seed)
        store.add_problems([make_problem(f"old-{i}") for i in range(n_old)], iteration=0)
        store.iteration = 3
        store.add_problems([make_problem(f"new-{i}") for i in range(n_new)], iteration=3)
        return store

    def test_replay_sizing(self):
        store = self._store_with_history()
        batch = store.sample_training_batch(replay_ratio=0.25)
        assert len(batch) == 40 + round(0.25 * 40)

    def test_replay_capped_by_availability(self):
        store = self._store_with_history(n_new=40, n_old=5)
        assert len(store.sample_training_batch(replay_ratio=0.25)) == 45

    def test_zero_ratio_returns_new_only(self):
        store = self._store_with_history()
        batch = store.sample_training_batch(replay_ratio=0.0)
        assert len(batch) == 40
        assert all(e.problem.created_iteration == 3 for e in batch)

    def test_no_duplicates_and_disjoint(self):
        store = self._store_with_history()
        batch = store.sample_training_batch(replay_ratio=0.5)
        ids = [e.problem.id for e in batch]
        assert len(ids) == len(set(ids))
        new = {e.problem.id for e in batch if e.problem.created_iteration == 3}
        replay = {e.problem.id for e in batch if e.problem.created_iteration < 3}
        assert new.isdisjoint(replay)

    def test_quarantined_never_sampled(self):
        store = self._store_with_history(n_new=10, n_old=10)
        victim = sorted(
            pid for pid, e in store.entries.items() if e.problem.created_iteration == 0
        )[0]
        store.quarantine(victim, "reference_mismatch")
        for _ in range(20):
            assert victim not in {e.problem.id for e in store.sample_training_batch(replay_ratio=1.0)}

    def test_deterministic_given_seed(self):
        a = self._store_with_history(seed=99).sample_training_batch(replay_ratio=0.25)
        b = self._store_with_history(seed=99).sample_training_batch(replay_ratio=0.25)
        assert [e.problem.id for e in a] == [e.problem.id for e in b]

    def test_bad_ratio(self):
        with pytest.raises(InvalidArgumentError):
            fresh_store().sample_training_batch(replay_ratio=1.5)

    def test_empty_store_empty_batch(self):
        assert fresh_store().sample_training_batch() == []


class TestSnapshot:
    def test_round_trip_byte_identical(self, tmp_path):
        store = self_store = fresh_store([make_problem(f"p{i}") for i in range(5)], seed=42)
        store.update_stats(sorted(store.entries)[0], [True, False] * 4)
        store.sample_training_batch(replay_ratio=0.25)  # advance rng
        first = store.snapshot(tmp_path / "one.json")
        loaded = CurriculumStore.load(first)
        second = loaded.snapshot(tmp_path / "two.json")
        assert first.read_bytes() == second.read_bytes()

    def test_round_trip_preserves_rng_stream(self, tmp_path):
        store = fresh_store([make_problem(f"p{i}") for i in range(30)], seed=7)
        store.iteration = 1
        store.add_problems([make_problem(f"q{i}") for i in range(10)], iteration=1)
        path = store.snapshot(tmp_path / "s.json")
        loaded = CurriculumStore.load(path)
        a = [e.problem.id for e in store.sample_training_batch(replay_ratio=1.0)]
        b = [e.problem.id for e in loaded.sample_training_batch(replay_ratio=1.0)]
        assert a == b

    def test_unknown_version_fails_closed(self, tmp_path):
        store = fresh_store([make_problem("a")])
        path = store.snapshot(tmp_path / "s.json")
        data = json.loads(path.read_text())
        data["format_version"] = 99
        path.write_text(json.dumps(data))
        with pytest.raises(SnapshotVersionError):
            CurriculumStore.load(path)

    def test_partial_file_is_corruption(self, tmp_path):
        store = fresh_store([make_problem("a")])
        path = store.snapshot(tmp_path / "s.json")
        path.write_bytes(path.read_bytes()[: len(path.read_bytes()) // 2])
        with pytest.raises(SnapshotCorruptionError):
            CurriculumStore.load(path)

    def test_quarantine_retained_in_snapshot(self, tmp_path):
        store = fresh_store([make_problem("a")])
        pid = next(iter(store.entries))
        store.quarantine(pid, "ambiguous_statement")
        loaded = CurriculumStore.load(store.snapshot(tmp_path / "s.json"))
        assert loaded.entries[pid].status == "quarantined"
        assert loaded.entries[pid].quarantine_reason == "ambiguous_statement"


class TestMonotoneGrowth:
    def test_id_sets_grow(self):
        store = fresh_store([make_problem(f"p{i}") for i in range(3)])
        previous = set(store.entries)
        for t in range(1, 5):
            store.iteration = t
            store.add_problems([make_problem(f"gen{t}-{i}") for i in range(2)], iteration=t)
            current = set(store.entries)
            assert previous <= current
            previous = current


class TestSeedManifest:
    def test_load_valid(self, tmp_path):
        path = tmp_path / "seeds.jsonl"
        rows = [
            {"statement": "1+1?", "reference_answer": "2", "domain_tag": "algebra"},
            {"statement": "2+2?", "reference_answer": "4", "difficulty_hint": 2},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows))
        problems = load_seed_manifest(path)
        assert len(problems) == 2
        assert problems[0].origin == "seed"
        assert problems[0].domain_tag == "algebra"

    def test_bad_lines_reported_with_numbers(self, tmp_path):
        path = tmp_path / "seeds.jsonl"
        path.write_text('{"statement": "ok", "reference_answer": "1"}\nnot json\n{"statement": ""}\n')
        with pytest.raises(SchemaError) as exc_info:
            load_seed_manifest(path)
        details = "\n".join(exc_info.value.details)
        assert "line 2" in details and "line 3" in details
