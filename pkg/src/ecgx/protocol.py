"""Seeded pair generation for verification and splits for identification.

Every generator works on a segment *inventory*: ``{subject: {session: {kind:
count}}}`` as returned by :meth:`ArrayStore.inventory`, so pair sets can be
built (and counted) without touching any arrays. Pairs reference segments by
:class:`SegmentRef`; :func:`pairs_to_arrays` resolves them against a feature
store.

Subjects are visited in sorted order and a single ``numpy`` generator seeded
with ``seed`` drives every draw, so the same inventory and seed always give
the same pairs in the same order.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    EmptyAfterExclusion,
    InsufficientSummaries,
    InvalidParams,
    ManifestInvalid,
    MissingSession,
    NoSummaries,
    TooFewSubjects,
)

Inventory = Dict[str, Dict[int, Dict[str, int]]]

IMPOSTOR_RATIO = 5
MIN_SUBJECTS = IMPOSTOR_RATIO + 1
SINGLE, SUMMARY, TEMPLATE = "single", "summary", "template"


class Scenario(str, enum.Enum):
    TRAINING = "training"
    SINGLE_SESSION = "single-session"
    MULTI_SESSION = "multi-session"
    FINETUNE = "finetune"
    IDENT_SINGLE = "ident-single"
    IDENT_MULTI = "ident-multi"
    IDENT_MIXED = "ident-mixed"


VERIFICATION_SCENARIOS = (Scenario.TRAINING, Scenario.SINGLE_SESSION, Scenario.MULTI_SESSION, Scenario.FINETUNE)


class PairLabel(enum.IntEnum):
    IMPOSTOR = 0
    GENUINE = 1


@dataclass(frozen=True, order=True)
class SegmentRef:
    subject_id: str
    session_index: int
    kind: str
    index: int

    @property
    def ref(self) -> str:
        """Subject-relative reference, e.g. ``s2/summary/4``."""
        return f"s{self.session_index}/{self.kind}/{self.index}"

    @classmethod
    def parse(cls, subject_id: str, ref: str) -> "SegmentRef":
        try:
            session, kind, index = ref.split("/")
            if not session.startswith("s"):
                raise ValueError
            return cls(subject_id, int(session[1:]), kind, int(index))
        except ValueError:
            raise ManifestInvalid(f"malformed segment reference {ref!r}") from None


@dataclass(frozen=True)
class ComparisonPair:
    enrol: SegmentRef
    probe: SegmentRef
    label: PairLabel

    @property
    def enrol_subject(self) -> str:
        return self.enrol.subject_id

    @property
    def probe_subject(self) -> str:
        return self.probe.subject_id

    @property
    def enrol_kind(self) -> str:
        return self.enrol.kind

    @property
    def probe_kind(self) -> str:
        return self.probe.kind

    @property
    def is_genuine(self) -> bool:
        return self.label == PairLabel.GENUINE


@dataclass
class ProtocolConfig:
    scenario: Scenario
    genuine_per_subject: int
    impostor_per_subject: int
    seed: int = 0
    split_ratios: Tuple[float, ...] = ()

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        self.validate()

    def validate(self) -> None:
        if self.scenario in VERIFICATION_SCENARIOS:
            if self.genuine_per_subject < 1:
                raise InvalidParams("genuine_per_subject must be at least 1")
            if self.impostor_per_subject != IMPOSTOR_RATIO * self.genuine_per_subject:
                raise InvalidParams(
                    f"impostor_per_subject must be {IMPOSTOR_RATIO} x genuine_per_subject "
                    f"({IMPOSTOR_RATIO * self.genuine_per_subject}), got {self.impostor_per_subject}"
                )
        if self.split_ratios and (min(self.split_ratios) <= 0 or abs(sum(self.split_ratios) - 1) > 1e-9):
            raise InvalidParams(f"split ratios must be positive and sum to 1, got {self.split_ratios}")

    @classmethod
    def for_scenario(cls, scenario, seed: int = 0) -> "ProtocolConfig":
        scenario = Scenario(scenario)
        genuine = {Scenario.TRAINING: 3, Scenario.SINGLE_SESSION: 3, Scenario.MULTI_SESSION: 1,
                   Scenario.FINETUNE: 50}.get(scenario, 0)
        ratios = {Scenario.FINETUNE: (0.8, 0.2), Scenario.IDENT_SINGLE: (0.7, 0.1, 0.2),
                  Scenario.IDENT_MIXED: (0.7, 0.1, 0.2), Scenario.IDENT_MULTI: (0.8, 0.2)}.get(scenario, ())
        return cls(scenario, genuine, IMPOSTOR_RATIO * genuine, seed, ratios)


# ------------------------------------------------------------------ helpers

def as_inventory(source) -> Inventory:
    return source.inventory() if hasattr(source, "inventory") else source


def _refs(inv: Inventory, subject: str, sessions: Iterable[int], kind: str) -> List[SegmentRef]:
    out = []
    for session in sessions:
        count = inv[subject].get(session, {}).get(kind, 0)
        out.extend(SegmentRef(subject, session, kind, i) for i in range(count))
    return out


def _sessions(inv: Inventory, subject: str) -> List[int]:
    return sorted(inv[subject])


def _require_subjects(subjects: Sequence[str], what: str, minimum: int = MIN_SUBJECTS) -> None:
    if len(subjects) < minimum:
        raise TooFewSubjects(
            f"{what} needs at least {minimum} subjects to draw impostors from distinct subjects, got {len(subjects)}"
        )


def _draw_impostors(
    rng: np.random.Generator,
    subject: str,
    subjects: Sequence[str],
    position: int,
    n: int,
    enrol: Callable[[], SegmentRef],
    candidates: Callable[[str], List[SegmentRef]],
) -> List[ComparisonPair]:
    """``n`` impostor pairs against other subjects, one subject per draw.

    Subjects are drawn without replacement; when ``n`` exceeds the number of
    other subjects the draw restarts and repeated subjects contribute a
    not-yet-used segment, so probes within the block stay distinct.
    """
    n_others = len(subjects) - 1
    used: Dict[str, set] = {}
    exhausted = 0
    pairs: List[ComparisonPair] = []
    while len(pairs) < n:
        if exhausted >= n_others:
            raise TooFewSubjects(f"not enough impostor segments for subject {subject}")
        k = min(n - len(pairs), n_others)
        for j in rng.choice(n_others, size=k, replace=False):
            other = subjects[j if j < position else j + 1]
            pool = candidates(other)
            taken = used.setdefault(other, set())
            free = [i for i in range(len(pool)) if i not in taken]
            if not free:
                continue
            pick = free[int(rng.integers(len(free)))]
            taken.add(pick)
            if len(taken) == len(pool):
                exhausted += 1
            pairs.append(ComparisonPair(enrol(), pool[pick], PairLabel.IMPOSTOR))
            if len(pairs) == n:
                break
    return pairs


def _choose_combinations(rng, n_items: int, k: int) -> List[Tuple[int, int]]:
    combos = list(combinations(range(n_items), 2))
    picked = rng.choice(len(combos), size=min(k, len(combos)), replace=False)
    return [combos[i] for i in sorted(picked)]


def _check_ratio(pairs: List[ComparisonPair]) -> List[ComparisonPair]:
    genuine = sum(p.is_genuine for p in pairs)
    assert IMPOSTOR_RATIO * genuine == len(pairs) - genuine
    return pairs


# ------------------------------------------------------------------ verification

def make_training_pairs(dataset, seed: int = 0, genuine_per_subject: int = 3) -> List[ComparisonPair]:
    """Template of the first session against singles of the later sessions.

    Each subject contributes up to ``genuine_per_subject`` genuine pairs and
    five impostor pairs per genuine one. Subjects without a second session,
    a first-session template or any later single are skipped.
    """
    inv = as_inventory(dataset)
    eligible = []
    for subject in sorted(inv):
        sessions = _sessions(inv, subject)
        if len(sessions) >= 2 and inv[subject][sessions[0]].get(TEMPLATE, 0) >= 1 \
                and _refs(inv, subject, sessions[1:], SINGLE):
            eligible.append(subject)
    _require_subjects(eligible, "training pair generation")
    later = {s: _refs(inv, s, _sessions(inv, s)[1:], SINGLE) for s in eligible}

    rng = np.random.default_rng(seed)
    pairs: List[ComparisonPair] = []
    for pos, subject in enumerate(eligible):
        template = SegmentRef(subject, _sessions(inv, subject)[0], TEMPLATE, 0)
        probes = later[subject]
        g = min(genuine_per_subject, len(probes))
        for i in sorted(rng.choice(len(probes), size=g, replace=False)):
            pairs.append(ComparisonPair(template, probes[i], PairLabel.GENUINE))
        pairs += _draw_impostors(rng, subject, eligible, pos, IMPOSTOR_RATIO * g,
                                 lambda: template, later.__getitem__)
    return _check_ratio(pairs)


def evaluation_session(inv: Inventory, subject: str) -> int:
    """Session used for single-session evaluation: the second one, or the only one."""
    sessions = _sessions(inv, subject)
    return sessions[1] if len(sessions) >= 2 else sessions[0]


def make_single_session_pairs(dataset, seed: int = 0, genuine_per_subject: int = 3) -> List[ComparisonPair]:
    """Summary against summary, both from each subject's evaluation session."""
    inv = as_inventory(dataset)
    subjects = sorted(inv)
    _require_subjects(subjects, "single-session evaluation")
    summaries = {s: _refs(inv, s, [evaluation_session(inv, s)], SUMMARY) for s in subjects}
    needed = 2
    while needed * (needed - 1) // 2 < genuine_per_subject:
        needed += 1
    for s in subjects:
        if len(summaries[s]) < needed:
            raise InsufficientSummaries(
                f"subject {s} has {len(summaries[s])} summaries in session {evaluation_session(inv, s)}; "
                f"{needed} are needed for {genuine_per_subject} distinct genuine pairs"
            )

    rng = np.random.default_rng(seed)
    pairs: List[ComparisonPair] = []
    for pos, subject in enumerate(subjects):
        own = summaries[subject]
        for i, j in _choose_combinations(rng, len(own), genuine_per_subject):
            pairs.append(ComparisonPair(own[i], own[j], PairLabel.GENUINE))
        pairs += _draw_impostors(rng, subject, subjects, pos, IMPOSTOR_RATIO * genuine_per_subject,
                                 lambda: own[int(rng.integers(len(own)))], summaries.__getitem__)
    return _check_ratio(pairs)


def make_multi_session_pairs(dataset, seed: int = 0) -> List[ComparisonPair]:
    """First-session template against second-session templates."""
    inv = as_inventory(dataset)
    subjects = sorted(inv)
    _require_subjects(subjects, "multi-session evaluation")
    second = {}
    for s in subjects:
        sessions = _sessions(inv, s)
        if len(sessions) < 2:
            raise MissingSession(f"subject {s} has a single session; multi-session evaluation needs two")
        for session in sessions[:2]:
            if inv[s][session].get(TEMPLATE, 0) < 1:
                raise NoSummaries(f"subject {s} has no template in session {session}")
        second[s] = [SegmentRef(s, sessions[1], TEMPLATE, 0)]

    rng = np.random.default_rng(seed)
    pairs: List[ComparisonPair] = []
    for pos, subject in enumerate(subjects):
        enrol = SegmentRef(subject, _sessions(inv, subject)[0], TEMPLATE, 0)
        pairs.append(ComparisonPair(enrol, second[subject][0], PairLabel.GENUINE))
        pairs += _draw_impostors(rng, subject, subjects, pos, IMPOSTOR_RATIO, lambda: enrol, second.__getitem__)
    return _check_ratio(pairs)


def split_subjects(subjects: Sequence[str], ratios: Sequence[float], seed: int = 0) -> List[List[str]]:
    """Shuffle ``subjects`` and cut them by ``ratios``; each part is returned sorted."""
    subjects = sorted(subjects)
    order = np.random.default_rng(seed).permutation(len(subjects))
    bounds = np.round(np.cumsum(ratios)[:-1] * len(subjects)).astype(int)
    return [sorted(subjects[i] for i in part) for part in np.split(order, bounds)]


def make_finetune_pairs(dataset, exclusion_list: Iterable[str] = (), seed: int = 0,
                        genuine_per_subject: int = 50,
                        ratios: Tuple[float, float] = (0.8, 0.2)) -> Tuple[List[ComparisonPair], List[ComparisonPair]]:
    """Single-vs-single pairs on the subjects left after exclusion, split 80:20 by subject."""
    inv = as_inventory(dataset)
    excluded = set(exclusion_list)
    remaining = sorted(s for s in inv if s not in excluded)
    if not remaining:
        raise EmptyAfterExclusion(f"all {len(inv)} subjects are excluded")
    rng = np.random.default_rng(seed)
    train_subjects, val_subjects = split_subjects(remaining, ratios, seed)
    return (_finetune_block(inv, train_subjects, genuine_per_subject, rng, "fine-tune training"),
            _finetune_block(inv, val_subjects, genuine_per_subject, rng, "fine-tune validation"))


def _finetune_block(inv, subjects, genuine_per_subject, rng, what) -> List[ComparisonPair]:
    _require_subjects(subjects, what, minimum=2)
    singles = {s: _refs(inv, s, _sessions(inv, s), SINGLE) for s in subjects}
    pairs: List[ComparisonPair] = []
    for pos, subject in enumerate(subjects):
        own = singles[subject]
        genuine = _choose_combinations(rng, len(own), genuine_per_subject) if len(own) >= 2 else []
        for i, j in genuine:
            pairs.append(ComparisonPair(own[i], own[j], PairLabel.GENUINE))
        pairs += _draw_impostors(rng, subject, subjects, pos, IMPOSTOR_RATIO * len(genuine),
                                 lambda: own[int(rng.integers(len(own)))], singles.__getitem__)
    return _check_ratio(pairs)


def generate_pairs(dataset, config: ProtocolConfig, exclusion_list: Iterable[str] = ()):
    """Dispatch on ``config.scenario`` (fine-tuning returns a ``(train, val)`` tuple)."""
    scenario = config.scenario
    if scenario == Scenario.TRAINING:
        return make_training_pairs(dataset, config.seed, config.genuine_per_subject)
    if scenario == Scenario.SINGLE_SESSION:
        return make_single_session_pairs(dataset, config.seed, config.genuine_per_subject)
    if scenario == Scenario.MULTI_SESSION:
        if config.genuine_per_subject != 1:
            raise InvalidParams("multi-session evaluation has exactly one genuine pair per subject")
        return make_multi_session_pairs(dataset, config.seed)
    if scenario == Scenario.FINETUNE:
        return make_finetune_pairs(dataset, exclusion_list, config.seed, config.genuine_per_subject,
                                   tuple(config.split_ratios or (0.8, 0.2)))
    raise InvalidParams(f"{scenario.value} is not a verification scenario")


# ------------------------------------------------------------------ identification

class LabelledRefs(NamedTuple):
    refs: List[SegmentRef]
    labels: np.ndarray


@dataclass
class IdentificationSplit:
    train: LabelledRefs
    val: LabelledRefs
    test: LabelledRefs
    classes: List[str] = field(default_factory=list)
    quota: int = 0


def _labelled(items: List[SegmentRef]) -> LabelledRefs:
    return LabelledRefs(items, np.array([r.subject_id for r in items], dtype=object))


def _equalize(rng, refs: List[SegmentRef], quota: int) -> List[SegmentRef]:
    """Subsample without replacement above ``quota``; top up with replacement below it."""
    if len(refs) >= quota:
        return [refs[i] for i in sorted(rng.choice(len(refs), size=quota, replace=False))]
    extra = rng.choice(len(refs), size=quota - len(refs), replace=True)
    return refs + [refs[i] for i in extra]


def split_identification(dataset, scenario, seed: int = 0, quota: Optional[int] = None,
                         ratios: Optional[Sequence[float]] = None) -> IdentificationSplit:
    """Per-subject summary splits for closed-set identification.

    * ``ident-single``: first-session summaries, split 70:10:20.
    * ``ident-mixed``: summaries of the first two sessions pooled, split 70:10:20.
    * ``ident-multi``: all but the last session split 80:20 into train/val; the
      last session is the test set.

    Unique summaries are split first; the training part of every subject is
    then resampled to ``quota`` (default: the largest per-subject training
    count) and the validation part to the proportional quota. Test sets are
    never resampled.
    """
    scenario = Scenario(scenario)
    inv = as_inventory(dataset)
    if scenario not in (Scenario.IDENT_SINGLE, Scenario.IDENT_MIXED, Scenario.IDENT_MULTI):
        raise InvalidParams(f"{scenario.value} is not an identification scenario")
    ratios = tuple(ratios or ProtocolConfig.for_scenario(scenario).split_ratios)
    rng = np.random.default_rng(seed)
    subjects = sorted(inv)
    if not subjects:
        raise NoSummaries("no subjects to identify")

    parts: Dict[str, Tuple[List[SegmentRef], List[SegmentRef], List[SegmentRef]]] = {}
    for s in subjects:
        sessions = _sessions(inv, s)
        if scenario == Scenario.IDENT_MULTI:
            if len(sessions) < 2:
                raise MissingSession(f"subject {s} needs at least two sessions for multi-session identification")
            pool, test = _refs(inv, s, sessions[:-1], SUMMARY), _refs(inv, s, sessions[-1:], SUMMARY)
            if len(pool) < 2 or not test:
                raise NoSummaries(
                    f"subject {s} needs 2 summaries before its last session and 1 in it "
                    f"(has {len(pool)} and {len(test)})"
                )
            order = rng.permutation(len(pool))
            n_val = max(1, int(round(ratios[1] * len(pool))))
            n_val = min(n_val, len(pool) - 1)
            parts[s] = ([pool[i] for i in sorted(order[n_val:])], [pool[i] for i in sorted(order[:n_val])], test)
        else:
            chosen = sessions[:1] if scenario == Scenario.IDENT_SINGLE else sessions[:2]
            pool = _refs(inv, s, chosen, SUMMARY)
            if len(pool) < 3:
                raise NoSummaries(f"subject {s} has {len(pool)} summaries; identification needs at least 3")
            order = rng.permutation(len(pool))
            n_test = max(1, int(round(ratios[2] * len(pool))))
            n_val = max(1, int(round(ratios[1] * len(pool))))
            if n_test + n_val >= len(pool):
                n_test, n_val = 1, 1
            test_idx, val_idx, train_idx = order[:n_test], order[n_test:n_test + n_val], order[n_test + n_val:]
            parts[s] = tuple([pool[i] for i in sorted(idx)] for idx in (train_idx, val_idx, test_idx))

    if quota is None:
        quota = max(len(p[0]) for p in parts.values())
    if quota < 1:
        raise InvalidParams(f"quota must be positive, got {quota}")
    val_quota = max(1, int(round(quota * ratios[1] / ratios[0])))
    train, val, test = [], [], []
    for s in subjects:
        tr, va, te = parts[s]
        train += _equalize(rng, tr, quota)
        val += _equalize(rng, va, val_quota)
        test += te
    return IdentificationSplit(_labelled(train), _labelled(val), _labelled(test), subjects, quota)


# ------------------------------------------------------------------ manifests & arrays

MANIFEST_HEADER = "label,enrol_subject,enrol_ref,probe_subject,probe_ref"


def format_pair_manifest(pairs: Iterable[ComparisonPair]) -> str:
    buf = io.StringIO()
    buf.write(MANIFEST_HEADER + "\n")
    for p in pairs:
        label = "genuine" if p.is_genuine else "impostor"
        buf.write(f"{label},{p.enrol_subject},{p.enrol.ref},{p.probe_subject},{p.probe.ref}\n")
    return buf.getvalue()


def write_pair_manifest(pairs: Iterable[ComparisonPair], path) -> None:
    Path(path).write_text(format_pair_manifest(pairs), encoding="utf-8")


def read_pair_manifest(path) -> List[ComparisonPair]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise ManifestInvalid(f"{path}: missing header {MANIFEST_HEADER!r}")
    pairs = []
    for n, line in enumerate(lines[1:], start=2):
        fields = line.strip().split(",")
        if len(fields) != 5 or fields[0] not in ("genuine", "impostor"):
            raise ManifestInvalid(f"{path}:{n}: malformed pair record {line!r}")
        label = PairLabel.GENUINE if fields[0] == "genuine" else PairLabel.IMPOSTOR
        pairs.append(ComparisonPair(SegmentRef.parse(fields[1], fields[2]),
                                    SegmentRef.parse(fields[3], fields[4]), label))
    return pairs


def pairs_to_arrays(pairs: Sequence[ComparisonPair], store):
    """Resolve pairs against a feature store into a lazy pair array and 0/1 labels."""
    from .models.pairs import PairArray

    index: Dict[SegmentRef, int] = {}
    left, right = [], []
    for p in pairs:
        left.append(index.setdefault(p.enrol, len(index)))
        right.append(index.setdefault(p.probe, len(index)))
    if not index:
        raise InvalidParams("no pairs to resolve")
    pool = store.gather(index)
    labels = np.array([int(p.label) for p in pairs], dtype=np.int64)
    return PairArray(pool, left, right), labels


def pair_summary(pairs: Sequence[ComparisonPair]) -> Dict[str, int]:
    genuine = sum(p.is_genuine for p in pairs)
    return {"genuine": genuine, "impostor": len(pairs) - genuine}
