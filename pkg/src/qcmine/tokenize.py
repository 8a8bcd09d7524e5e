"""Tokenization of natural-language text and Python/SQL code snippets.

Text is split wordpunct-style and lowercased. Code is normalized to tame
vocabulary size: Python identifiers/numbers/strings collapse to VAR/NUMBER/
STRING (keywords and common builtins survive via a keep-list), SQL table and
column names become numbered placeholders shared across repeated mentions.
Both normalizers are total: lines (Python) that defeat the lexer fall back
to a plain word/punct split.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources


class Language(Enum):
    TEXT = "text"
    PYTHON = "python"
    SQL = "sql"


@dataclass
class TokenStream:
    """A tokenized text or code fragment.

    ``n_lines`` counts non-blank source lines (code only); a handful of
    shape features in the baselines need it after line structure is gone.
    """

    tokens: list[str] = field(default_factory=list)
    language: Language = Language.TEXT
    n_lines: int = 0

    def __len__(self) -> int:
        return len(self.tokens)


_WORDPUNCT = re.compile(r"\w+|[^\w\s]+", re.UNICODE)


def wordpunct(s: str) -> list[str]:
    """Split into runs of word characters and runs of symbols."""
    return _WORDPUNCT.findall(s)


def tokenize_text(s: str) -> TokenStream:
    """Tokenize natural-language text: wordpunct split, lowercased."""
    tokens = [t.lower() for t in wordpunct(s)]
    return TokenStream(tokens, Language.TEXT, n_lines=_count_lines(s))


def _count_lines(s: str) -> int:
    return sum(1 for line in s.splitlines() if line.strip())


# --------------------------------------------------------------------------
# Python normalization
# --------------------------------------------------------------------------

VAR_TOKEN = "VAR"
NUMBER_TOKEN = "NUMBER"
STRING_TOKEN = "STRING"


def load_wordlist_resource(name: str) -> frozenset[str]:
    """Read a packaged lexicon: one entry per line, '#' comments ignored."""
    text = resources.files("qcmine.data").joinpath(name).read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


_DEFAULT_KEEP: frozenset[str] | None = None


def default_python_keep_list() -> frozenset[str]:
    """Keywords plus common builtins that survive identifier replacement."""
    global _DEFAULT_KEEP
    if _DEFAULT_KEEP is None:
        _DEFAULT_KEEP = load_wordlist_resource("python_keep_list.txt")
    return _DEFAULT_KEEP


def set_default_keep_list(keep: frozenset[str] | None) -> None:
    """Override the packaged keep-list (None restores it). Lets a config
    file swap lexicons without threading them through every call."""
    global _DEFAULT_KEEP
    _DEFAULT_KEEP = frozenset(keep) if keep is not None else None


def load_keep_list(path) -> frozenset[str]:
    """Load a keep-list file: one token per line, '#' comments ignored."""
    with open(path, encoding="utf-8") as f:
        return frozenset(line.strip() for line in f if line.strip() and not line.startswith("#"))


class _LexError(Exception):
    pass


_NAME_RE = re.compile(r"[^\W\d]\w*", re.UNICODE)
_NUMBER_RE = re.compile(
    r"""
    0[xX][0-9a-fA-F_]+
    | 0[oO][0-7_]+
    | 0[bB][01_]+
    | (?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d[\d_]*)?[jJ]?
    """,
    re.VERBOSE,
)
_STRING_PREFIX_RE = re.compile(r"[rRbBuUfF]{0,3}")

# Maximal-munch operator table. ">>>" is not a Python operator but marks a
# console prompt and is predictive, so it is lexed as a single token.
_PY_OPERATORS = sorted(
    [
        ">>>", "**=", "//=", ">>=", "<<=", "...", "!=", ">=", "<=", "==",
        "->", ":=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=",
        "**", "//", "<<", ">>", "+", "-", "*", "/", "%", "@", "<", ">",
        "&", "|", "^", "~", "=", ",", ":", ".", ";", "(", ")", "[", "]",
        "{", "}",
    ],
    key=len,
    reverse=True,
)


def _lex_python_line(line: str, in_triple: str | None):
    """Lex one line into (kind, text) pairs.

    ``in_triple`` carries an unterminated triple-quote delimiter from the
    previous line. Returns (pairs, still_open_delimiter). Raises _LexError
    on characters the lexer does not understand; the caller falls back to a
    word/punct split for that line only.
    """
    pairs = []
    i = 0
    n = len(line)

    if in_triple is not None:
        end = line.find(in_triple)
        if end < 0:
            return [], in_triple
        pairs.append(("STRING", ""))
        i = end + len(in_triple)
        in_triple = None

    while i < n:
        ch = line[i]
        if ch in " \t\f":
            i += 1
            continue
        if ch == "#":
            pairs.append(("OP", "#"))
            pairs.extend(("WORD", t) for t in wordpunct(line[i + 1 :]))
            break
        if ch == "\\" and line[i + 1 :].strip() == "":
            break  # explicit line continuation
        m = _NAME_RE.match(line, i)
        if m:
            prefix = m.group(0)
            quote_at = m.end()
            if quote_at < n and line[quote_at] in "'\"" and _STRING_PREFIX_RE.fullmatch(prefix):
                i, in_triple = _lex_python_string(line, quote_at)
                if in_triple:
                    return pairs, in_triple  # STRING emitted once it closes
                pairs.append(("STRING", ""))
                continue
            pairs.append(("NAME", prefix))
            i = m.end()
            continue
        if ch in "'\"":
            i, in_triple = _lex_python_string(line, i)
            if in_triple:
                return pairs, in_triple
            pairs.append(("STRING", ""))
            continue
        m = _NUMBER_RE.match(line, i)
        if m and m.group(0):
            pairs.append(("NUMBER", m.group(0)))
            i = m.end()
            continue
        for op in _PY_OPERATORS:
            if line.startswith(op, i):
                pairs.append(("OP", op))
                i += len(op)
                break
        else:
            raise _LexError(f"unexpected character {ch!r}")
    return pairs, in_triple


def _lex_python_string(line: str, i: int):
    """Consume a string literal starting at the quote character.

    Returns (index past the literal, open-triple delimiter or None).
    Raises _LexError for a single-quoted string left open at end of line.
    """
    quote = line[i]
    if line.startswith(quote * 3, i):
        delim = quote * 3
        end = line.find(delim, i + 3)
        if end < 0:
            return len(line), delim
        return end + 3, None
    j = i + 1
    n = len(line)
    while j < n:
        c = line[j]
        if c == "\\":
            j += 2
            continue
        if c == quote:
            return j + 1, None
        j += 1
    raise _LexError("unterminated string")


def normalize_python(code: str, keep: frozenset[str] | None = None) -> TokenStream:
    """Normalize a Python snippet, parsable or not.

    Identifiers become VAR unless on the keep-list, numeric literals NUMBER,
    string literals STRING; keywords, operators and ">>>" prompts survive
    verbatim. Lines the lexer cannot handle are word/punct split instead.
    """
    if keep is None:
        keep = default_python_keep_list()
    tokens: list[str] = []
    in_triple: str | None = None
    for line in code.splitlines():
        try:
            pairs, in_triple = _lex_python_line(line, in_triple)
        except _LexError:
            pairs, in_triple = [("WORD", t) for t in wordpunct(line)], None
        for kind, text in pairs:
            if kind == "NAME":
                tokens.append(text if text in keep else VAR_TOKEN)
            elif kind == "NUMBER":
                tokens.append(NUMBER_TOKEN)
            elif kind == "STRING":
                tokens.append(STRING_TOKEN)
            else:
                tokens.append(text)
    return TokenStream(tokens, Language.PYTHON, n_lines=_count_lines(code))


# --------------------------------------------------------------------------
# SQL normalization
# --------------------------------------------------------------------------

SQL_KEYWORDS = frozenset(
    """
    select from where join inner outer left right full cross on and or not
    null is in like between exists group by order having limit offset union
    all distinct as insert into values update set delete create drop alter
    table view index primary key foreign references unique default check
    constraint case when then else end if begin commit rollback declare
    asc desc count sum avg min max abs round coalesce nvl ifnull nullif
    cast convert substring substr concat trim upper lower length replace
    char varchar nvarchar text int integer bigint smallint decimal numeric
    float real double date datetime timestamp time year month day now
    current_date current_time current_timestamp interval top rownum
    with recursive over partition row_number rank dense_rank first last
    using natural having any some except intersect fetch next only rows row
    procedure function trigger grant revoke truncate add column modify
    auto_increment identity serial true false unknown escape collate
    """.split()
)

# Identifiers seen right after these keywords (through commas, dots, and AS
# aliases) are table names; everything else is a column name.
_TABLE_CONTEXT = frozenset({"from", "join", "into", "update", "table"})
_TABLE_CONTEXT_KEEPERS = frozenset({",", ".", "as"})

_SQL_TOKEN_RE = re.compile(
    r"""
      --[^\n]*                       # line comment
    | /\*.*?(?:\*/|\Z)               # block comment
    | '(?:[^']|'')*'(?!')            # string literal, '' escape
    | "[^"\n]*"                      # quoted identifier
    | `[^`\n]*`                      # quoted identifier (MySQL)
    | \[[^\]\n]*\]                   # quoted identifier (T-SQL)
    | (?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?
    | [A-Za-z_][\w$#]*
    | <> | != | >= | <= | \|\| | :=
    | [^\w\s]
    """,
    re.VERBOSE | re.DOTALL,
)


def normalize_sql(code: str) -> TokenStream:
    """Normalize a SQL snippet.

    Keywords are lowercased and kept; table/column identifiers become
    tab0, tab1, ... / col0, col1, ... numbered by first occurrence, so a
    repeated name always reuses its placeholder. Literals become
    STRING/NUMBER. Never raises.
    """
    tokens: list[str] = []
    placeholders: dict[str, str] = {}
    counts = {"tab": 0, "col": 0}
    in_table = False

    def name_token(raw: str) -> str:
        nonlocal in_table
        key = raw.lower()
        if key not in placeholders:
            kind = "tab" if in_table else "col"
            placeholders[key] = f"{kind}{counts[kind]}"
            counts[kind] += 1
        return placeholders[key]

    for m in _SQL_TOKEN_RE.finditer(code):
        t = m.group(0)
        if t.startswith("--") or t.startswith("/*"):
            continue
        if t.startswith("'"):
            tokens.append(STRING_TOKEN)
            in_table = False
            continue
        if t[0] in '"`[':
            tokens.append(name_token(t[1:-1].strip() or t))
            continue
        if t[0].isdigit() or (t[0] == "." and len(t) > 1 and t[1].isdigit()):
            tokens.append(NUMBER_TOKEN)
            in_table = False
            continue
        if t[0].isalpha() or t[0] == "_":
            low = t.lower()
            if low in SQL_KEYWORDS:
                tokens.append(low)
                if low in _TABLE_CONTEXT:
                    in_table = True
                elif low not in _TABLE_CONTEXT_KEEPERS:
                    in_table = False
            else:
                tokens.append(name_token(t))
            continue
        tokens.append(t)
        if t not in _TABLE_CONTEXT_KEEPERS:
            in_table = False
    return TokenStream(tokens, Language.SQL, n_lines=_count_lines(code))


def normalize_code(code: str, language: Language) -> TokenStream:
    if language is Language.PYTHON:
        return normalize_python(code)
    if language is Language.SQL:
        return normalize_sql(code)
    raise ValueError(f"no code normalizer for {language}")
