# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernels: the Part 21 lexer and CSR sparse-times-dense propagation.

Both must stay bit-compatible with the fallbacks in ``_fallback.py``; the
test suite runs every backend-sensitive test against both.
"""
import gc

import numpy as np
cimport numpy as cnp

from stepgraph.step.errors import IllegalCharacter, UnterminatedComment, UnterminatedString
from stepgraph.step.tokens import Token, SPECIAL_KEYWORDS

cnp.import_array()

_PUNCT = {ord(ch): ch for ch in "(),;=$*"}

cdef bytes _SPECIAL_0 = SPECIAL_KEYWORDS[0].encode("ascii")
cdef bytes _SPECIAL_1 = SPECIAL_KEYWORDS[1].encode("ascii")


cdef inline bint _alpha(unsigned char c) noexcept nogil:
    return (65 <= c <= 90) or (97 <= c <= 122) or c == 95


cdef inline bint _digit(unsigned char c) noexcept nogil:
    return 48 <= c <= 57


cdef inline bint _hex(unsigned char c) noexcept nogil:
    return (48 <= c <= 57) or (65 <= c <= 70) or (97 <= c <= 102)


cdef inline bint _starts_with(const unsigned char* p, Py_ssize_t i, Py_ssize_t n, bytes word):
    cdef Py_ssize_t m = len(word), k
    cdef const unsigned char* w = word
    if i + m > n:
        return False
    for k in range(m):
        if p[i + k] != w[k]:
            return False
    # must not run on into an identifier
    if i + m < n and (_alpha(p[i + m]) or _digit(p[i + m])):
        return False
    return True


def tokenize_bytes(bytes data):
    # tokens hold no containers; cyclic GC passes over them are pure overhead
    enabled = gc.isenabled()
    gc.disable()
    try:
        return _tokenize(data)
    finally:
        if enabled:
            gc.enable()


cdef list _tokenize(bytes data):
    cdef const unsigned char* p = data
    cdef Py_ssize_t n = len(data)
    cdef Py_ssize_t i = 0, j, k, line = 1, line_start = 0, col, tline
    cdef unsigned char c
    cdef bint is_real
    cdef bytearray buf
    out = []
    append = out.append
    _new = tuple.__new__

    while i < n:
        c = p[i]
        if c == 10:
            line += 1
            i += 1
            line_start = i
            continue
        if c == 32 or c == 9 or c == 13:
            i += 1
            continue
        col = i - line_start + 1

        if c == 47:  # '/'
            if i + 1 < n and p[i + 1] == 42:
                tline = line
                j = i + 2
                while True:
                    if j + 1 >= n:
                        raise UnterminatedComment("unterminated comment", tline, col)
                    if p[j] == 42 and p[j + 1] == 47:
                        break
                    if p[j] == 10:
                        line += 1
                        line_start = j + 1
                    j += 1
                i = j + 2
                continue
            raise IllegalCharacter("illegal character '/'", line, col)

        if c == 39:  # quote
            tline = line
            buf = bytearray()
            j = i + 1
            while True:
                if j >= n:
                    raise UnterminatedString("unterminated string", tline, col)
                c = p[j]
                if c == 39:
                    if j + 1 < n and p[j + 1] == 39:
                        buf.append(39)
                        j += 2
                        continue
                    j += 1
                    break
                if c == 10:
                    line += 1
                    line_start = j + 1
                elif c != 13:
                    buf.append(c)
                j += 1
            append(_new(Token, ("STRING", buf.decode("latin-1"), tline, col)))
            i = j
            continue

        if c == 35:  # '#'
            j = i + 1
            while j < n and _digit(p[j]):
                j += 1
            if j == i + 1:
                raise IllegalCharacter("'#' not followed by an instance id", line, col)
            append(_new(Token, ("REF", int(data[i + 1:j]), line, col)))
            i = j
            continue

        if _digit(c) or ((c == 43 or c == 45) and i + 1 < n and _digit(p[i + 1])):
            j = i + 1
            while j < n and _digit(p[j]):
                j += 1
            is_real = False
            if j < n and p[j] == 46:
                is_real = True
                j += 1
                while j < n and _digit(p[j]):
                    j += 1
            if j < n and (p[j] == 69 or p[j] == 101):
                k = j + 1
                if k < n and (p[k] == 43 or p[k] == 45):
                    k += 1
                if k < n and _digit(p[k]):
                    while k < n and _digit(p[k]):
                        k += 1
                    j = k
                    is_real = True
            append(_new(Token, ("REAL" if is_real else "INTEGER", data[i:j].decode("ascii"), line, col)))
            i = j
            continue

        if c == 46:  # '.'
            j = i + 1
            if j < n and _alpha(p[j]):
                while j < n and (_alpha(p[j]) or _digit(p[j])):
                    j += 1
                if j < n and p[j] == 46:
                    append(_new(Token, ("ENUM", data[i + 1:j].decode("ascii"), line, col)))
                    i = j + 1
                    continue
            raise IllegalCharacter("malformed enumeration literal", line, col)

        if c == 34:  # '"'
            j = i + 1
            while j < n and _hex(p[j]):
                j += 1
            if j >= n or p[j] != 34:
                raise IllegalCharacter("malformed binary literal", line, col)
            append(_new(Token, ("BINARY", data[i + 1:j].decode("ascii"), line, col)))
            i = j + 1
            continue

        if _alpha(c) or c == 33:
            if _starts_with(p, i, n, _SPECIAL_0):
                append(_new(Token, ("KEYWORD", SPECIAL_KEYWORDS[0], line, col)))
                i += len(_SPECIAL_0)
                continue
            if _starts_with(p, i, n, _SPECIAL_1):
                append(_new(Token, ("KEYWORD", SPECIAL_KEYWORDS[1], line, col)))
                i += len(_SPECIAL_1)
                continue
            j = i + 1
            while j < n and (_alpha(p[j]) or _digit(p[j])):
                j += 1
            if c == 33 and j == i + 1:
                raise IllegalCharacter("illegal character '!'", line, col)
            append(_new(Token, ("KEYWORD", data[i:j].decode("ascii"), line, col)))
            i = j
            continue

        if c == 40 or c == 41 or c == 44 or c == 59 or c == 61 or c == 36 or c == 42:
            s = chr(c)
            append(_new(Token, (s, s, line, col)))
            i += 1
            continue

        raise IllegalCharacter(f"illegal character {chr(c)!r}", line, col)

    return out


def csr_matmul(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] data, const double[:, ::1] h):
    """Return ``A @ h`` for ``A`` given in CSR form, summing each row in index order."""
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t ncols = h.shape[1]
    cdef Py_ssize_t i, k, c, j
    cdef double v
    result = np.zeros((nrows, ncols), dtype=np.float64)
    cdef double[:, ::1] o = result
    with nogil:
        for i in range(nrows):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                v = data[k]
                for c in range(ncols):
                    o[i, c] += v * h[j, c]
    return result
