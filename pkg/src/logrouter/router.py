"""Two-level cost-aware query routing.

Level 1 dispatches a question to one of four execution paths by counting
regex-signal matches in three families (sql, keyword P0-P6, event), each
match worth a fixed weight, compared against per-family thresholds. A
question-starter guard (P7) keeps compound analytical questions from
triggering the keyword path on a sub-clause. Level 2 scores complexity as
a bounded sum of four features and picks the generator tier.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .errors import InvalidConfigError, TermRejectedError

VOCAB_ENV = "LOGROUTER_VOCAB"

PATH_GENERAL = "general"
PATH_KEYWORD = "keyword"
PATH_SQL = "sql"
PATH_SEMANTIC = "semantic"

TIER_SMALL = "small"
TIER_LARGE = "large"

_WORD_RE = re.compile(r"[a-z]+|[0-9]+")

# scaffolding words dropped when falling back to content-word term extraction
_STOPWORDS = frozenset(
    "what which where when how why is are was were has had did do does done "
    "being been be the a an this that these those of in on at to for and or "
    "me my it its his her their there here with".split()
)

_WHITELIST_RE = re.compile(r"^[A-Za-z0-9 ._:/-]+$")
_FORBIDDEN_SEQUENCES = (";", "--", "/*")


def validate_search_term(term: str) -> bool:
    """True iff `term` is whitelist-clean (safe to hand to the keyword backend)."""
    if not term:
        return False
    if not _WHITELIST_RE.match(term):
        return False
    return not any(seq in term for seq in _FORBIDDEN_SEQUENCES)


@dataclass(frozen=True)
class Signal:
    signal_id: str
    pattern: str
    name: str = ""

    def compiled(self) -> re.Pattern:
        return re.compile(self.pattern, re.IGNORECASE)


class SignalVocabulary:
    """Versioned regex families driving the L1 router plus the L2 word lists."""

    def __init__(self, data: dict):
        self.version = data.get("version", 0)
        self.sql_signals = [Signal(d["id"], d["pattern"]) for d in data["sql_signals"]]
        self.keyword_signals = [
            Signal(d["id"], d["pattern"], d.get("name", "")) for d in data["keyword_signals"]
        ]
        self.event_signals = [Signal(d["id"], d["pattern"]) for d in data["event_signals"]]
        self.p7_starters = frozenset(w.lower() for w in data["p7_starters"])
        self.greeting_lexicon = frozenset(w.lower() for w in data["greeting_lexicon"])
        self.l2_aggregation = [re.compile(p, re.IGNORECASE) for p in data.get("l2_aggregation", [])]
        self.l2_temporal = [re.compile(p, re.IGNORECASE) for p in data.get("l2_temporal", [])]
        self.l2_entity = [re.compile(p, re.IGNORECASE) for p in data.get("l2_entity", [])]
        self._compiled = {
            "sql": [(s.signal_id, s.compiled()) for s in self.sql_signals],
            "keyword": [(s.signal_id, s.compiled()) for s in self.keyword_signals],
            "event": [(s.signal_id, s.compiled()) for s in self.event_signals],
        }

    @classmethod
    def from_file(cls, path) -> "SignalVocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def default(cls) -> "SignalVocabulary":
        override = os.environ.get(VOCAB_ENV)
        if override:
            return cls.from_file(override)
        text = resources.files("logrouter.data").joinpath("vocabulary.json").read_text("utf-8")
        return cls(json.loads(text))


@dataclass(frozen=True)
class RouterConfig:
    sql_threshold: float = 0.3
    keyword_threshold: float = 0.3
    event_threshold: float = 0.5
    complexity_threshold: float = 0.5
    weight_per_match: float = 0.4
    len_saturation_words: int = 40
    per_match_increment: float = 0.125
    p5_schema_exclusion: bool = False  # proposed fix, off to match the evaluated system

    def validate(self) -> None:
        for name in ("sql_threshold", "keyword_threshold", "event_threshold", "complexity_threshold"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidConfigError(f"{name} must be in (0, 1], got {value}")
        if self.weight_per_match <= 0:
            raise InvalidConfigError("weight_per_match must be positive")
        if self.len_saturation_words <= 0:
            raise InvalidConfigError("len_saturation_words must be positive")
        if self.per_match_increment <= 0:
            raise InvalidConfigError("per_match_increment must be positive")


@dataclass
class L1Decision:
    path: str
    sql_score: float = 0.0
    keyword_score: float = 0.0
    event_score: float = 0.0
    matched_patterns: list = field(default_factory=list)
    p7_passed: bool = False
    extracted_search_term: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "sql_score": self.sql_score,
            "keyword_score": self.keyword_score,
            "event_score": self.event_score,
            "matched_patterns": list(self.matched_patterns),
            "p7_passed": self.p7_passed,
            "extracted_search_term": self.extracted_search_term,
        }


@dataclass
class L2Decision:
    s_len: float
    s_agg: float
    s_temp: float
    s_ent: float
    total: float
    tier: str

    def to_dict(self) -> dict:
        return {
            "s_len": self.s_len,
            "s_agg": self.s_agg,
            "s_temp": self.s_temp,
            "s_ent": self.s_ent,
            "total": self.total,
            "tier": self.tier,
        }


_SCHEMA_VOCAB_RE = re.compile(r"\b(?:columns?|fields?|rows?|schemas?|formats?)\b", re.IGNORECASE)


def _words(question: str) -> list[str]:
    return _WORD_RE.findall(question.lower())


def _is_greeting(question: str, vocab: SignalVocabulary) -> bool:
    tokens = [t.strip(".,!?;:'\"") for t in question.lower().split()]
    tokens = [t for t in tokens if t]
    if not tokens or len(tokens) > 4:
        return False
    return all(t in vocab.greeting_lexicon for t in tokens)


_P0_STRIP_RE = re.compile(
    r"^(?:find|show|search|grep|list|display)\s+"
    r"(?:(?:all|any|the|me|every)\s+)*"
    r"(?:(?:lines?|entries|logs?|records?|messages?|rows?|events?)\s+)?"
    r"(?:(?:that\s+)?(?:contain(?:ing|s)?|match(?:ing|es)?|mention(?:ing|s)?|includ(?:ing|es)?|with|for|about|of)\s+)?"
    r"(?P<rest>.+)$",
    re.IGNORECASE,
)

_QUOTE_RE = re.compile(r"\"([^\"]+)\"|'([^']+)'")


def _extract_term(question: str, keyword_matches: list[tuple[str, re.Match]]) -> Optional[str]:
    quoted = _QUOTE_RE.search(question)
    if quoted:
        term = (quoted.group(1) or quoted.group(2) or "").strip()
        if term:
            return term
    for signal_id, match in keyword_matches:
        if signal_id == "P0":
            m = _P0_STRIP_RE.match(question.strip())
            if m:
                return m.group("rest").strip().rstrip("?.!").strip()
        groups = match.groupdict()
        if groups.get("term"):
            return groups["term"].strip().rstrip("?.!").strip()
    content = [w for w in _words(question) if w not in _STOPWORDS]
    if content:
        return " ".join(content)
    return None


def route_l1(
    question: str,
    vocab: Optional[SignalVocabulary] = None,
    cfg: Optional[RouterConfig] = None,
) -> L1Decision:
    """Classify `question` into general / keyword / sql / semantic.

    Raises TermRejectedError when a keyword route extracted a term that
    fails the whitelist; the exception carries the semantic-downgraded
    decision so callers never execute the tainted term.
    """
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    vocab = vocab or _default_vocab()
    cfg = cfg or RouterConfig()
    cfg.validate()

    if _is_greeting(question, vocab):
        return L1Decision(path=PATH_GENERAL, p7_passed=False)

    sql_matched = [sid for sid, p in vocab._compiled["sql"] if p.search(question)]
    keyword_matched = [
        (sid, m)
        for sid, p in vocab._compiled["keyword"]
        if (m := p.search(question)) is not None
    ]
    if cfg.p5_schema_exclusion and _SCHEMA_VOCAB_RE.search(question):
        keyword_matched = [(sid, m) for sid, m in keyword_matched if sid != "P5"]
    event_matched = [sid for sid, p in vocab._compiled["event"] if p.search(question)]

    w = cfg.weight_per_match
    sql_score = w * len(sql_matched)
    keyword_score = w * len(keyword_matched)
    event_score = w * len(event_matched)

    words = _words(question)
    starts_factseeking = bool(words) and words[0] in vocab.p7_starters
    p0_fired = any(sid == "P0" for sid, _ in keyword_matched)
    p7_passed = starts_factseeking or p0_fired

    matched = sql_matched + [sid for sid, _ in keyword_matched] + event_matched
    decision = L1Decision(
        path=PATH_SEMANTIC,
        sql_score=sql_score,
        keyword_score=keyword_score,
        event_score=event_score,
        matched_patterns=matched,
        p7_passed=p7_passed,
    )

    if sql_score >= cfg.sql_threshold or event_score >= cfg.event_threshold:
        decision.path = PATH_SQL
        return decision
    if keyword_score >= cfg.keyword_threshold and p7_passed:
        term = _extract_term(question, keyword_matched)
        if term is None:
            return decision  # nothing searchable; stay semantic
        if not validate_search_term(term):
            raise TermRejectedError(term, decision)
        decision.path = PATH_KEYWORD
        decision.extracted_search_term = term
        return decision
    return decision


def score_l2(
    question: str,
    cfg: Optional[RouterConfig] = None,
    vocab: Optional[SignalVocabulary] = None,
) -> L2Decision:
    """Complexity score: bounded sum of length, aggregation, temporal, entity features."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    cfg = cfg or RouterConfig()
    cfg.validate()
    vocab = vocab or _default_vocab()

    cap = 0.25
    word_count = len(_words(question))
    s_len = min(cap, cap * word_count / cfg.len_saturation_words)
    inc = cfg.per_match_increment
    s_agg = min(cap, inc * _occurrences(question, vocab.l2_aggregation))
    s_temp = min(cap, inc * _occurrences(question, vocab.l2_temporal))
    s_ent = min(cap, inc * _occurrences(question, vocab.l2_entity))
    total = s_len + s_agg + s_temp + s_ent
    tier = TIER_LARGE if total >= cfg.complexity_threshold else TIER_SMALL
    return L2Decision(s_len=s_len, s_agg=s_agg, s_temp=s_temp, s_ent=s_ent, total=total, tier=tier)


def _occurrences(question: str, patterns: Sequence[re.Pattern]) -> int:
    return sum(len(p.findall(question)) for p in patterns)


_DEFAULT_VOCAB: Optional[SignalVocabulary] = None


def _default_vocab() -> SignalVocabulary:
    global _DEFAULT_VOCAB
    if _DEFAULT_VOCAB is None:
        _DEFAULT_VOCAB = SignalVocabulary.default()
    return _DEFAULT_VOCAB
