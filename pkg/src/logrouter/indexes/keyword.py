"""Full-text keyword index over raw lines (or any id->text corpus).

BM25-scored (k1=1.2, b=0.75) with the simple log-aware tokenizer, so IPs,
hex strings, and error codes stay whole. Matching is conjunctive-relaxed
by default: documents containing any query token are ranked, scores summed
over matched tokens; a strict all-tokens mode is available behind a flag.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from typing import Callable, Hashable, Optional

from ..errors import InvalidPatternError
from ..tokens import simple_tokens

BM25_K1 = 1.2
BM25_B = 0.75


class KeywordIndex:
    """In-memory inverted index. Doc ids are opaque; insertion order is rank 0..n."""

    def __init__(self, k1: float = BM25_K1, b: float = BM25_B, require_all: bool = False):
        self.k1 = k1
        self.b = b
        self.require_all = require_all
        self._postings: dict[str, dict[int, int]] = defaultdict(dict)  # term -> {doc_pos: tf}
        self._doc_ids: list[Hashable] = []
        self._doc_texts: list[str] = []
        self._doc_lens: list[int] = []
        self._pos_by_id: dict[Hashable, int] = {}
        self._total_len = 0

    def __len__(self) -> int:
        return len(self._doc_ids)

    def add(self, doc_id: Hashable, text: str) -> None:
        pos = len(self._doc_ids)
        self._doc_ids.append(doc_id)
        self._doc_texts.append(text)
        self._pos_by_id[doc_id] = pos
        tokens = simple_tokens(text)
        self._doc_lens.append(len(tokens))
        self._total_len += len(tokens)
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for tok, tf in counts.items():
            self._postings[tok][pos] = tf

    def text_of(self, doc_id: Hashable) -> Optional[str]:
        pos = self._pos_by_id.get(doc_id)
        return self._doc_texts[pos] if pos is not None else None

    def items(self) -> list[tuple[Hashable, str]]:
        return list(zip(self._doc_ids, self._doc_texts))

    def _idf(self, term: str) -> float:
        n = len(self._doc_ids)
        df = len(self._postings.get(term, ()))
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def search(
        self,
        query_text: str,
        top_n: int = 20,
        doc_filter: Optional[Callable[[Hashable], bool]] = None,
    ) -> list[tuple[Hashable, float]]:
        """BM25 ranking; ties break on insertion order (ascending)."""
        terms = simple_tokens(query_text)
        if not terms or not self._doc_ids:
            return []
        avg_len = self._total_len / len(self._doc_ids)
        scores: dict[int, float] = defaultdict(float)
        hit_terms: dict[int, int] = defaultdict(int)
        seen_terms = set()
        for term in terms:
            if term in seen_terms:
                continue
            seen_terms.add(term)
            postings = self._postings.get(term)
            if not postings:
                continue
            idf = self._idf(term)
            for pos, tf in postings.items():
                denom = tf + self.k1 * (1 - self.b + self.b * self._doc_lens[pos] / avg_len)
                scores[pos] += idf * (tf * (self.k1 + 1)) / denom
                hit_terms[pos] += 1
        if self.require_all:
            needed = len(seen_terms)
            scores = {p: s for p, s in scores.items() if hit_terms[p] == needed}
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        out = []
        for pos, score in ranked:
            doc_id = self._doc_ids[pos]
            if doc_filter is not None and not doc_filter(doc_id):
                continue
            out.append((doc_id, score))
            if len(out) >= top_n:
                break
        return out

    def regex_search(
        self,
        pattern: str,
        top_n: int,
        flags: int = 0,
        doc_filter: Optional[Callable[[Hashable], bool]] = None,
    ) -> list[Hashable]:
        """Lines matching `pattern`, in corpus order, truncated to top_n."""
        try:
            compiled = re.compile(pattern, flags)
        except re.error as exc:
            raise InvalidPatternError(f"invalid regex {pattern!r}: {exc}") from exc
        out = []
        for pos, text in enumerate(self._doc_texts):
            if compiled.search(text):
                doc_id = self._doc_ids[pos]
                if doc_filter is not None and not doc_filter(doc_id):
                    continue
                out.append(doc_id)
                if len(out) >= top_n:
                    break
        return out
