"""Tokenization, ASAP-format ingestion, splits, batching, synthetic data.

The vocabulary is self-trained: frequent whole words first, then frequent
character n-grams (length 2 to 6) stored as continuation parts with a
"##" prefix. Out-of-vocabulary words are decomposed by greedy longest
match over those parts, so rare words keep partial meaning instead of
mapping straight to the unknown id.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TypeVar

import numpy as np

from .errors import DataError
from .metrics import rescale_and_round

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PART_PREFIX = "##"
MIN_PART_LEN = 2
MAX_PART_LEN = 6

_WORD_RE = re.compile(r"[a-z0-9']+|[^\sa-z0-9']")

T = TypeVar("T")


@dataclass(frozen=True)
class PromptSpec:
    """Integer score range of one ASAP prompt."""

    prompt_id: int
    min_score: int
    max_score: int

    def __post_init__(self):
        if not 1 <= self.prompt_id <= 8:
            raise ValueError(f"prompt_id must be in 1..8, got {self.prompt_id}")
        if self.max_score <= self.min_score:
            raise ValueError(f"empty score range [{self.min_score}, {self.max_score}]")

    def normalize(self, score: int) -> float:
        return (score - self.min_score) / (self.max_score - self.min_score)

    def denormalize(self, value: float) -> int:
        return rescale_and_round(value, self.min_score, self.max_score)


ASAP_PROMPTS = {
    1: PromptSpec(1, 2, 12),
    2: PromptSpec(2, 1, 6),
    3: PromptSpec(3, 0, 3),
    4: PromptSpec(4, 0, 3),
    5: PromptSpec(5, 0, 4),
    6: PromptSpec(6, 0, 4),
    7: PromptSpec(7, 0, 30),
    8: PromptSpec(8, 0, 60),
}


def prompt_spec(prompt_id: int) -> PromptSpec:
    try:
        return ASAP_PROMPTS[prompt_id]
    except KeyError:
        raise DataError(f"unknown prompt id {prompt_id}, expected 1..8") from None


@dataclass
class Sample:
    """Tokenized essay with its normalized target."""

    token_ids: list[int]
    target: float
    score: int
    prompt_id: int


@dataclass
class EssayRow:
    """One validated TSV row before tokenization."""

    essay_id: int
    text: str
    score: int
    target: float
    prompt_id: int


class Vocabulary:
    """token -> id map with reserved padding/unknown ids and word parts."""

    def __init__(self, tokens: Sequence[str], max_size: int):
        self.max_size = max_size
        self.tokens = list(tokens)
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the reserved pad/unk tokens")
        self.token_to_id = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup_word(self, word: str) -> int | None:
        return self.token_to_id.get(word)

    def lookup_part(self, fragment: str) -> int | None:
        # whole-word entries double as parts; dedicated parts carry "##"
        wid = self.token_to_id.get(fragment)
        if wid is not None:
            return wid
        return self.token_to_id.get(PART_PREFIX + fragment)

    def to_json(self) -> str:
        return json.dumps({"version": 1, "max_size": self.max_size, "tokens": self.tokens})

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        payload = json.loads(text)
        if payload.get("version") != 1:
            raise DataError(f"unsupported vocabulary version {payload.get('version')!r}")
        return cls(payload["tokens"], payload["max_size"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        p = Path(path)
        if not p.exists():
            raise DataError(f"vocabulary file not found: {p}")
        return cls.from_json(p.read_text(encoding="utf-8"))


def split_words(text: str) -> list[str]:
    """Lowercased whitespace/punctuation split; punctuation marks are tokens."""
    return _WORD_RE.findall(text.lower())


def build_vocab(corpus: Iterable[str], max_size: int, min_freq: int = 1) -> Vocabulary:
    """Fit a word + word-part vocabulary on a corpus.

    Whole words above min_freq enter first by descending frequency, then
    the remaining budget is filled with frequent character n-grams marked
    as continuation parts. Ties break lexicographically, so the result is
    a deterministic function of the corpus.
    """
    if max_size < 2:
        raise ValueError(f"max_size {max_size} is smaller than the {2} reserved tokens")
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")

    word_counts: Counter[str] = Counter()
    corpus = list(corpus)
    if not corpus:
        raise ValueError("build_vocab on empty corpus")
    for doc in corpus:
        word_counts.update(split_words(doc))

    ranked_words = sorted(
        (w for w, c in word_counts.items() if c >= min_freq),
        key=lambda w: (-word_counts[w], w),
    )
    tokens = [PAD_TOKEN, UNK_TOKEN]
    tokens.extend(ranked_words[: max_size - len(tokens)])

    budget = max_size - len(tokens)
    if budget > 0:
        part_counts: Counter[str] = Counter()
        for word, count in word_counts.items():
            for length in range(MIN_PART_LEN, MAX_PART_LEN + 1):
                for start in range(0, len(word) - length + 1):
                    part_counts[word[start:start + length]] += count
        ranked_parts = sorted(
            (p for p, c in part_counts.items() if c >= min_freq),
            key=lambda p: (-part_counts[p], p),
        )
        tokens.extend(PART_PREFIX + p for p in ranked_parts[:budget])

    return Vocabulary(tokens, max_size)


def encode(vocab: Vocabulary, text: str) -> list[int]:
    """Encode text to ids: whole words, then greedy longest-match parts.

    The unknown id appears only when no part of a word matches; non-empty
    text never encodes to an empty sequence.
    """
    ids: list[int] = []
    for word in split_words(text):
        wid = vocab.lookup_word(word)
        if wid is not None:
            ids.append(wid)
            continue
        ids.extend(_decompose(vocab, word))
    return ids


def _decompose(vocab: Vocabulary, word: str) -> list[int]:
    ids: list[int] = []
    pos = 0
    while pos < len(word):
        matched = False
        for length in range(min(MAX_PART_LEN, len(word) - pos), MIN_PART_LEN - 1, -1):
            pid = vocab.lookup_part(word[pos:pos + length])
            if pid is not None:
                ids.append(pid)
                pos += length
                matched = True
                break
        if not matched:
            pos += 1  # unmatched character, skip it
    return ids if ids else [UNK_ID]


ASAP_COLUMNS = ("essay_id", "essay_set", "essay", "domain1_score")


def read_asap_rows(path: str | Path, prompt: PromptSpec) -> tuple[list[EssayRow], list[tuple[int, str]]]:
    """Read, filter, and validate one prompt's rows from an ASAP-style TSV.

    Returns (rows, skipped) where skipped pairs a 1-based line number with
    the reason the row was dropped. A missing column rejects the file.
    """
    p = Path(path)
    if not p.exists():
        raise DataError(f"data file not found: {p}")
    rows: list[EssayRow] = []
    skipped: list[tuple[int, str]] = []
    with p.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None:
            raise DataError(f"{p}: empty file, expected a header row")
        missing = [c for c in ASAP_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{p}: missing required columns {missing}")
        for line_no, record in enumerate(reader, start=2):
            try:
                essay_set = int(record["essay_set"])
            except (TypeError, ValueError):
                skipped.append((line_no, f"bad essay_set {record.get('essay_set')!r}"))
                continue
            if essay_set != prompt.prompt_id:
                continue
            try:
                essay_id = int(record["essay_id"])
                score = int(record["domain1_score"])
            except (TypeError, ValueError):
                skipped.append((line_no, "non-integer essay_id or domain1_score"))
                continue
            text = record["essay"] or ""
            if not text.strip():
                skipped.append((line_no, "empty essay text"))
                continue
            if not prompt.min_score <= score <= prompt.max_score:
                skipped.append((
                    line_no,
                    f"score {score} outside [{prompt.min_score}, {prompt.max_score}]",
                ))
                continue
            rows.append(EssayRow(essay_id, text, score, prompt.normalize(score), prompt.prompt_id))
    return rows, skipped


def rows_to_samples(vocab: Vocabulary, rows: Iterable[EssayRow]) -> list[Sample]:
    return [
        Sample(encode(vocab, r.text), r.target, r.score, r.prompt_id)
        for r in rows
    ]


def load_asap_tsv(path: str | Path, prompt: PromptSpec, vocab: Vocabulary) -> tuple[list[Sample], list[tuple[int, str]]]:
    """read_asap_rows followed by tokenization with an existing vocabulary."""
    rows, skipped = read_asap_rows(path, prompt)
    return rows_to_samples(vocab, rows), skipped


def write_asap_tsv(path: str | Path, rows: Iterable[EssayRow]) -> None:
    """Export rows in the same tab-separated layout the loader reads."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(ASAP_COLUMNS)
        for r in rows:
            writer.writerow([r.essay_id, r.prompt_id, r.text, r.score])


def read_score_pairs(path: str | Path, truth_col: str = "truth",
                     pred_col: str = "pred") -> tuple[list[int], list[int]]:
    """Two integer score columns from a comma-separated file with a header."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"score file not found: {p}")
    truth: list[int] = []
    pred: list[int] = []
    with p.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or truth_col not in reader.fieldnames or pred_col not in reader.fieldnames:
            raise DataError(f"{p}: expected columns {truth_col!r} and {pred_col!r}, got {reader.fieldnames}")
        for line_no, record in enumerate(reader, start=2):
            try:
                truth.append(int(record[truth_col]))
                pred.append(int(record[pred_col]))
            except (TypeError, ValueError):
                raise DataError(f"{p}: non-integer score on line {line_no}") from None
    if not truth:
        raise DataError(f"{p}: no score rows")
    return truth, pred


def split(items: Sequence[T], train_frac: float, seed: int) -> tuple[list[T], list[T]]:
    """Seeded shuffle then disjoint, exhaustive split; |train| = floor(n * frac)."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    if len(items) < 2:
        raise ValueError(f"split needs at least 2 items, got {len(items)}")
    order = np.random.default_rng(seed).permutation(len(items))
    cut = int(len(items) * train_frac)
    return [items[i] for i in order[:cut]], [items[i] for i in order[cut:]]


def batches(samples: Sequence[T], batch_size: int, seed: int, epoch: int = 0,
            drop_undersized: bool = False) -> list[list[T]]:
    """Per-epoch reshuffled batches; every batch has at least 2 items.

    A trailing singleton is merged into the previous batch by default, or
    dropped when drop_undersized is set.
    """
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2 (sample std undefined below), got {batch_size}")
    order = np.random.default_rng((seed, epoch)).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    out = [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]
    if out and len(out[-1]) < 2:
        tail = out.pop()
        if not drop_undersized:
            if not out:
                raise ValueError("cannot form a batch of >= 2 samples")
            out[-1].extend(tail)
    if not out:
        raise ValueError("cannot form a batch of >= 2 samples")
    return out


# ---------------------------------------------------------------------------
# Synthetic imbalanced-regression benchmark
# ---------------------------------------------------------------------------

SYNTH_PROMPT = ASAP_PROMPTS[1]
_FILLERS = ("the", "a", "and", "of", "to", "in", "is", "it", "was", "for")
UP_TOKEN = "up"
DOWN_TOKEN = "dn"
MAX_FILLERS = 3


@dataclass(frozen=True)
class SynthSpec:
    """Moment targets for the synthetic score distribution (normalized space)."""

    n: int
    mean: float = 0.45
    std: float = 0.17
    skew: float = 0.5
    seed: int = 0
    signal_frac: float = 1.0
    min_len: int = 12
    max_len: int = 20

    def __post_init__(self):
        if self.n < 10:
            raise ValueError(f"synthetic n must be >= 10, got {self.n}")
        if not 0.0 < self.std < 0.5:
            raise ValueError(f"synthetic std must be in (0, 0.5), got {self.std}")
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError(f"synthetic mean must be in [0, 1], got {self.mean}")
        if self.std ** 2 >= self.mean * (1.0 - self.mean):
            raise ValueError(
                f"moment spec unreachable on [0, 1]: std {self.std} too large for mean {self.mean}"
            )
        if abs(self.skew) > 2.0:
            raise ValueError(f"synthetic |skew| must be <= 2, got {self.skew}")
        if not 0.0 <= self.signal_frac <= 1.0:
            raise ValueError(f"signal_frac must be in [0, 1], got {self.signal_frac}")
        if not 4 <= self.min_len <= self.max_len:
            raise ValueError(f"need 4 <= min_len <= max_len, got {self.min_len}..{self.max_len}")


def _skewed_targets(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.skew == 0.0:
        z = rng.standard_normal(spec.n)
    else:
        shape = 4.0 / spec.skew ** 2
        z = (rng.gamma(shape, 1.0, spec.n) - shape) / np.sqrt(shape)
        if spec.skew < 0:
            z = -z
    return np.clip(spec.mean + spec.std * z, 0.0, 1.0)


def generate_imbalanced_rows(spec: SynthSpec) -> list[EssayRow]:
    """Synthetic essays whose token ORDER, not token counts, carries the score.

    Targets follow a clipped skewed distribution with the requested
    moments, then snap to the prompt 1 integer grid so the rows survive
    the normal ingestion path. Each essay is a shuffled mix of word pairs
    ("up dn" with probability equal to the normalized score, "dn up"
    otherwise) plus fillers, and both ends are capped with fillers so the
    first and last tokens carry no score cue. Per-token counts are
    independent of the score, so the target is recoverable only from the
    pair order. This makes mean collapse an optimization failure, not an
    information limit: a bag-of-words shortcut cannot explain the
    targets, while the pair order can.
    """
    rng = np.random.default_rng(spec.seed)
    prompt = SYNTH_PROMPT
    targets = _skewed_targets(spec, rng)
    min_pairs = max(2, spec.min_len // 2)
    max_pairs = max(min_pairs, spec.max_len // 2)
    rows = []

    def filler() -> str:
        return _FILLERS[int(rng.integers(0, len(_FILLERS)))]

    for i, y in enumerate(targets):
        score = prompt.denormalize(float(y))
        q = prompt.normalize(score)
        n_pairs = int(rng.integers(min_pairs, max_pairs + 1))
        chunks = []
        for _ in range(n_pairs):
            p_up_first = q if rng.random() < spec.signal_frac else 0.5
            if rng.random() < p_up_first:
                chunks.append(UP_TOKEN + " " + DOWN_TOKEN)
            else:
                chunks.append(DOWN_TOKEN + " " + UP_TOKEN)
        for _ in range(int(rng.integers(0, MAX_FILLERS + 1))):
            chunks.append(filler())
        order = rng.permutation(len(chunks))
        words = [filler()] + [chunks[j] for j in order] + [filler()]
        rows.append(EssayRow(
            essay_id=i + 1,
            text=" ".join(words),
            score=score,
            target=q,
            prompt_id=prompt.prompt_id,
        ))
    return rows


def synth_imbalanced(n: int, mean: float, std: float, skew: float,
                     vocab: Vocabulary, seed: int) -> list[Sample]:
    """Synthetic samples tokenized with an existing vocabulary."""
    rows = generate_imbalanced_rows(SynthSpec(n=n, mean=mean, std=std, skew=skew, seed=seed))
    return rows_to_samples(vocab, rows)
