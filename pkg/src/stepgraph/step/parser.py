"""Recursive-descent parser from a token list to a :class:`StepFile`."""
import re

from stepgraph import _backend
from stepgraph.step import tokens as T
from stepgraph.step.errors import (
    DuplicateInstanceId,
    MalformedHeader,
    MalformedInstance,
    MissingDataSection,
    MissingIsoHeader,
    StepError,
    UnexpectedToken,
)
from stepgraph.step.model import (
    INHERITED,
    UNSET,
    ArgList,
    Binary,
    EntityInstance,
    EnumValue,
    HeaderRecord,
    Number,
    Reference,
    StepFile,
    Text,
    Typed,
)

_ENTITY_NAME = re.compile(r"[A-Z_][A-Z0-9_]*\Z")


def tokenize(data):
    """Split Part 21 text (``bytes`` or ``str``) into a list of tokens."""
    if isinstance(data, str):
        data = data.encode("latin-1")
    return _backend.tokenize_bytes(bytes(data))


class _Syntax(Exception):
    """Internal signal; converted to a typed StepError by the caller."""

    def __init__(self, reason, token):
        super().__init__(reason)
        self.reason = reason
        self.token = token


class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def peek(self, offset=0):
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else None
            raise _Syntax("unexpected end of file", last)
        self.pos += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.next()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value if value is not None else kind
            raise _Syntax(f"expected {want!r}, found {tok.value!r}", tok)
        return tok

    def at_keyword(self, word):
        tok = self.peek()
        return tok is not None and tok.kind == T.KEYWORD and tok.value.upper() == word

    # parameters

    def params(self):
        """Parse ``( p, p, ... )`` and return the tuple of arguments."""
        self.expect(T.LPAREN)
        items = []
        if self.peek() is not None and self.peek().kind == T.RPAREN:
            self.pos += 1
            return ()
        while True:
            items.append(self.param())
            tok = self.next()
            if tok.kind == T.RPAREN:
                return tuple(items)
            if tok.kind != T.COMMA:
                raise _Syntax(f"expected ',' or ')', found {tok.value!r}", tok)

    def param(self):
        tok = self.peek()
        if tok is None:
            self.next()
        kind = tok.kind
        if kind == T.LPAREN:
            return ArgList(self.params())
        self.pos += 1
        if kind == T.INTEGER or kind == T.REAL:
            return Number(tok.value, float(tok.value))
        if kind == T.STRING:
            return Text(tok.value)
        if kind == T.REF:
            if tok.value <= 0:
                raise _Syntax("reference to non-positive id", tok)
            return Reference(tok.value)
        if kind == T.ENUM:
            return EnumValue(tok.value)
        if kind == T.DOLLAR:
            return UNSET
        if kind == T.STAR:
            return INHERITED
        if kind == T.BINARY:
            return Binary(tok.value)
        if kind == T.KEYWORD:
            self.expect(T.LPAREN)
            inner = self.param()
            self.expect(T.RPAREN)
            return Typed(tok.value.upper(), inner)
        raise _Syntax(f"unexpected {tok.value!r} in parameter list", tok)

    def record(self):
        name = self.expect(T.KEYWORD)
        type_name = name.value.upper()
        if not _ENTITY_NAME.match(type_name):
            raise _Syntax(f"invalid entity name {name.value!r}", name)
        return type_name, self.params()

    # sections

    def header(self):
        records = []
        if not self.at_keyword("HEADER"):
            return records
        self.next()
        self.expect(T.SEMI)
        while not self.at_keyword("ENDSEC"):
            name = self.expect(T.KEYWORD)
            args = self.params()
            self.expect(T.SEMI)
            records.append(HeaderRecord(name.value.upper(), args))
        self.next()
        self.expect(T.SEMI)
        return records

    def instance(self):
        ref = self.next()
        if ref.kind != T.REF:
            raise UnexpectedToken(f"expected an instance or ENDSEC, found {ref.value!r}", ref.line, ref.col)
        iid = ref.value
        try:
            if iid <= 0:
                raise _Syntax("instance id must be positive", ref)
            self.expect(T.EQUALS)
            types, args = [], []
            tok = self.peek()
            if tok is not None and tok.kind == T.LPAREN:
                self.next()
                while self.peek() is not None and self.peek().kind == T.KEYWORD:
                    name, a = self.record()
                    types.append(name)
                    args.append(a)
                self.expect(T.RPAREN)
                if not types:
                    raise _Syntax("complex instance without records", tok)
            else:
                name, a = self.record()
                types.append(name)
                args.append(a)
            self.expect(T.SEMI)
        except _Syntax as exc:
            tok = exc.token or ref
            raise MalformedInstance(iid, exc.reason, tok.line, tok.col) from None
        return EntityInstance(iid, tuple(types), tuple(args)), ref

    def data_section(self, instances):
        self.next()
        if self.peek() is not None and self.peek().kind == T.LPAREN:
            self.params()
        self.expect(T.SEMI)
        while not self.at_keyword("ENDSEC"):
            if self.peek() is None:
                raise _Syntax("DATA section not closed by ENDSEC", self.toks[-1])
            inst, ref = self.instance()
            if inst.id in instances:
                raise DuplicateInstanceId(inst.id, ref.line, ref.col)
            instances[inst.id] = inst
        self.next()
        self.expect(T.SEMI)

    def file(self):
        first = self.peek()
        if first is None or first.kind != T.KEYWORD or first.value != T.SPECIAL_KEYWORDS[1]:
            line, col = (first.line, first.col) if first is not None else (None, None)
            raise MissingIsoHeader("file does not start with ISO-10303-21;", line, col)
        self.next()
        try:
            self.expect(T.SEMI)
        except _Syntax as exc:
            raise MissingIsoHeader(exc.reason, exc.token.line, exc.token.col) from None
        try:
            header = self.header()
        except _Syntax as exc:
            tok = exc.token
            raise MalformedHeader(exc.reason, tok and tok.line, tok and tok.col) from None

        instances = {}
        seen_data = False
        try:
            while self.at_keyword("DATA"):
                seen_data = True
                self.data_section(instances)
            if not seen_data:
                tok = self.peek()
                raise MissingDataSection("no DATA section", tok and tok.line, tok and tok.col)
            tok = self.peek()
            if tok is not None:
                self.expect(T.KEYWORD, T.SPECIAL_KEYWORDS[0])
                self.expect(T.SEMI)
                tok = self.peek()
                if tok is not None:
                    raise _Syntax(f"trailing content {tok.value!r}", tok)
        except _Syntax as exc:
            tok = exc.token
            raise UnexpectedToken(exc.reason, tok and tok.line, tok and tok.col) from None
        return StepFile(header, instances, _schema_name(header))


def _schema_name(header):
    for rec in header:
        if rec.name == "FILE_SCHEMA" and rec.args:
            first = rec.args[0]
            items = first.items if isinstance(first, ArgList) else (first,)
            names = [a.value for a in items if isinstance(a, Text)]
            return ", ".join(names)
    return ""


def parse_file(toks):
    """Build a :class:`StepFile` from ``tokenize`` output."""
    return _Parser(list(toks)).file()


def loads(data):
    """Parse Part 21 text given as ``bytes`` or ``str``."""
    return parse_file(tokenize(data))


def read_step(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


__all__ = ["tokenize", "parse_file", "loads", "read_step", "StepError"]
