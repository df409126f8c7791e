"""Simple log-aware tokenization shared by the keyword index and the hashed embedder.

Lowercase, no stemming. IPv4-shaped tokens keep their dots so a query for
10.0.0.1 never matches 10.0.0.11; everything else is split into plain
alphanumeric runs (hex strings and error codes survive intact as single runs).
"""

import re

_IPV4 = r"\d{1,3}(?:\.\d{1,3}){3}"
_TOKEN_RE = re.compile(rf"{_IPV4}|[a-z0-9]+")


def simple_tokens(text: str) -> list[str]:
    """Tokenize `text` for indexing/search. Deterministic and unstemmed."""
    return _TOKEN_RE.findall(text.lower())
