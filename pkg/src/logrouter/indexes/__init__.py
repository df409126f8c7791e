"""Embedded storage backends: keyword FTS, vector store, structured rows."""

from .keyword import KeywordIndex
from .rows import (
    COLUMNS,
    Predicate,
    RestrictedQuery,
    RowStore,
    StructuredRow,
    TABLE_NAME,
    execute_restricted,
    parse_sql,
    template_lookup,
)
from .vector import VectorStore

__all__ = [
    "COLUMNS",
    "KeywordIndex",
    "Predicate",
    "RestrictedQuery",
    "RowStore",
    "StructuredRow",
    "TABLE_NAME",
    "VectorStore",
    "execute_restricted",
    "parse_sql",
    "template_lookup",
]
