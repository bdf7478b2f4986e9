"""Token type shared by the compiled and pure-Python lexers."""
from typing import NamedTuple, Union

KEYWORD = "KEYWORD"
INTEGER = "INTEGER"
REAL = "REAL"
STRING = "STRING"
ENUM = "ENUM"
REF = "REF"
BINARY = "BINARY"
LPAREN = "("
RPAREN = ")"
COMMA = ","
SEMI = ";"
EQUALS = "="
DOLLAR = "$"
STAR = "*"

PUNCTUATION = {"(": LPAREN, ")": RPAREN, ",": COMMA, ";": SEMI, "=": EQUALS, "$": DOLLAR, "*": STAR}

# Matched before plain keywords; they are the only keywords containing '-'.
SPECIAL_KEYWORDS = ("END-ISO-10303-21", "ISO-10303-21")


class Token(NamedTuple):
    """One lexeme.

    ``value`` is the int id for REF, the unescaped text for STRING, the bare
    name for ENUM (no dots), the hex digits for BINARY, the raw lexeme for
    numbers and keywords, and the character itself for punctuation.
    """

    kind: str
    value: Union[str, int]
    line: int
    col: int
