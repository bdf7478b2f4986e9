"""Pure-Python versions of the compiled kernels in ``_speedups.pyx``.

The results are identical to the compiled ones, token for token and bit for bit.
"""
import gc
import re

import numpy as np

from stepgraph.step.errors import IllegalCharacter, UnterminatedComment, UnterminatedString
from stepgraph.step.tokens import Token

_MASTER = re.compile(
    r"""
    (?P<NL>\n)
  | (?P<WS>[ \t\r]+)
  | (?P<COMMENT>/\*.*?\*/)
  | (?P<STRING>'(?:[^']|'')*')
  | (?P<REF>\#\d+)
  | (?P<NUM>[+-]?\d+(?P<FRAC>\.\d*)?(?P<EXP>[Ee][+-]?\d+)?)
  | (?P<ENUM>\.[A-Za-z_][A-Za-z0-9_]*\.)
  | (?P<BINARY>"[0-9A-Fa-f]*")
  | (?P<SPECIAL>(?:END-ISO-10303-21|ISO-10303-21)(?![A-Za-z0-9_]))
  | (?P<KEYWORD>![A-Za-z0-9_]+|[A-Za-z_][A-Za-z0-9_]*)
  | (?P<PUNCT>[(),;=$*])
    """,
    re.VERBOSE | re.DOTALL,
)


def _raise_at(text, pos, line, col):
    c = text[pos]
    if c == "/":
        if text.startswith("/*", pos):
            raise UnterminatedComment("unterminated comment", line, col)
        raise IllegalCharacter("illegal character '/'", line, col)
    if c == "'":
        raise UnterminatedString("unterminated string", line, col)
    if c == "#":
        raise IllegalCharacter("'#' not followed by an instance id", line, col)
    if c == ".":
        raise IllegalCharacter("malformed enumeration literal", line, col)
    if c == '"':
        raise IllegalCharacter("malformed binary literal", line, col)
    raise IllegalCharacter(f"illegal character {c!r}", line, col)


def tokenize_bytes(data):
    enabled = gc.isenabled()
    gc.disable()
    try:
        return _tokenize(data)
    finally:
        if enabled:
            gc.enable()


def _tokenize(data):
    text = data.decode("latin-1")
    n = len(text)
    pos = 0
    line = 1
    line_start = 0
    out = []
    append = out.append
    match = _MASTER.match
    while pos < n:
        m = match(text, pos)
        col = pos - line_start + 1
        if m is None:
            _raise_at(text, pos, line, col)
        kind = m.lastgroup
        end = m.end()
        if kind == "NL":
            line += 1
            line_start = end
        elif kind == "WS":
            pass
        elif kind == "COMMENT" or kind == "STRING":
            lexeme = m.group()
            if kind == "STRING":
                value = lexeme[1:-1].replace("''", "'").replace("\r", "").replace("\n", "")
                append(Token("STRING", value, line, col))
            nl = lexeme.count("\n")
            if nl:
                line += nl
                line_start = pos + lexeme.rfind("\n") + 1
        elif kind == "REF":
            append(Token("REF", int(text[pos + 1:end]), line, col))
        elif kind == "NUM":
            real = m.group("FRAC") is not None or m.group("EXP") is not None
            append(Token("REAL" if real else "INTEGER", m.group(), line, col))
        elif kind == "ENUM":
            append(Token("ENUM", text[pos + 1:end - 1], line, col))
        elif kind == "BINARY":
            append(Token("BINARY", text[pos + 1:end - 1], line, col))
        elif kind == "SPECIAL" or kind == "KEYWORD":
            append(Token("KEYWORD", m.group(), line, col))
        else:
            s = m.group()
            append(Token(s, s, line, col))
        pos = end
    return out


def csr_matmul(indptr, indices, data, h):
    """Return ``A @ h`` for CSR ``A``; rows are summed in index order, one slot at a time."""
    nrows = len(indptr) - 1
    out = np.zeros((nrows, h.shape[1]), dtype=np.float64)
    counts = np.diff(indptr)
    if nrows == 0 or counts.max(initial=0) == 0:
        return out
    rows = np.arange(nrows)
    for slot in range(int(counts.max())):
        live = rows[counts > slot]
        pos = indptr[live] + slot
        out[live] += data[pos][:, None] * h[indices[pos]]
    return out
