from __future__ import annotations

import pytest

from leveldrop.ingest import GameLog, LearnerProfile, LevelPlayRecord


def make_record(learner_id: str, level: int, completed: bool, **values) -> LevelPlayRecord:
    return LevelPlayRecord(learner_id=learner_id, level=level, completed=completed, **values)


def make_log(records, profiles=None) -> GameLog:
    """Build a canonical GameLog from (learner, level, completed, values) tuples."""
    recs = []
    learners = set()
    for spec in records:
        learner_id, level, completed = spec[0], spec[1], spec[2]
        values = spec[3] if len(spec) > 3 else {}
        learners.add(learner_id)
        recs.append(make_record(learner_id, level, completed, **values))
    if profiles is None:
        profiles = {lid: 0 for lid in learners}
    profs = [LearnerProfile(learner_id=lid, activated=act) for lid, act in profiles.items()]
    recs.sort(key=lambda r: (r.learner_id, r.level))
    profs.sort(key=lambda p: p.learner_id)
    return GameLog(records=tuple(recs), profiles=tuple(profs))


@pytest.fixture
def ladder_log() -> GameLog:
    """Three learners: A completes 1-3, B completes 1 and attempts 2, C completes 1-2."""
    return make_log(
        [
            ("A", 1, True, {"total_dur": 100.0, "n_step": 3}),
            ("A", 2, True, {"total_dur": 200.0, "n_step": 5}),
            ("A", 3, True, {"total_dur": 300.0, "n_step": 1}),
            ("B", 1, True, {"total_dur": 50.0, "n_step": 2}),
            ("B", 2, False, {"total_dur": 10.0, "n_step": 1}),
            ("C", 1, True, {"total_dur": 80.0, "n_step": 4}),
            ("C", 2, True, {"total_dur": 90.0, "n_step": 6}),
        ],
        profiles={"A": 1, "B": 0, "C": 1},
    )
