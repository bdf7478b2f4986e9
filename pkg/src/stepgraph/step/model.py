"""In-memory form of a parsed exchange file."""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Tuple, Union


@dataclass(frozen=True)
class Number:
    """Numeric argument; ``text`` is the lexeme as written, kept for lossless output."""

    text: str
    value: float = field(compare=False)


@dataclass(frozen=True)
class Text:
    value: str


@dataclass(frozen=True)
class EnumValue:
    name: str


@dataclass(frozen=True)
class Reference:
    target: int


@dataclass(frozen=True)
class ArgList:
    items: tuple


@dataclass(frozen=True)
class Binary:
    hex: str


@dataclass(frozen=True)
class Typed:
    """Typed parameter such as ``LENGTH_MEASURE(2.5)``."""

    name: str
    inner: "Argument"


@dataclass(frozen=True)
class _Unset:
    def __repr__(self):
        return "UNSET"


@dataclass(frozen=True)
class _Inherited:
    def __repr__(self):
        return "INHERITED"


UNSET = _Unset()
INHERITED = _Inherited()

Argument = Union[Number, Text, EnumValue, Reference, ArgList, Binary, Typed, _Unset, _Inherited]


def iter_references(args, path=()) -> Iterator[Tuple[int, tuple]]:
    """Yield ``(target_id, path)`` for every reference in ``args``, depth first."""
    for i, arg in enumerate(args):
        if isinstance(arg, Reference):
            yield arg.target, path + (i,)
        elif isinstance(arg, ArgList):
            yield from iter_references(arg.items, path + (i,))
        elif isinstance(arg, Typed):
            yield from iter_references((arg.inner,), path + (i,))


def iter_leaves(args) -> Iterator[Argument]:
    """Yield the non-list arguments of ``args`` depth first, unwrapping typed values."""
    for arg in args:
        if isinstance(arg, ArgList):
            yield from iter_leaves(arg.items)
        elif isinstance(arg, Typed):
            yield from iter_leaves((arg.inner,))
        else:
            yield arg


@dataclass(frozen=True)
class EntityInstance:
    """One ``#id=...;`` record of the DATA section.

    ``args`` holds one argument tuple per entry of ``types``; simple instances
    have a single type, complex instances ``#n=(A()B());`` several.
    """

    id: int
    types: Tuple[str, ...]
    args: Tuple[tuple, ...]

    @property
    def is_complex(self):
        return len(self.types) > 1

    def references(self):
        """``(target_id, (type_index, arg_index, ...))`` pairs in argument order."""
        for t, type_args in enumerate(self.args):
            yield from iter_references(type_args, (t,))


@dataclass(frozen=True)
class HeaderRecord:
    name: str
    args: tuple


@dataclass
class StepFile:
    header: List[HeaderRecord]
    instances: Dict[int, EntityInstance]
    schema_name: str = ""


@dataclass(frozen=True)
class DanglingReference:
    source: int
    target: int
    path: tuple


def validate_references(step_file: StepFile) -> List[DanglingReference]:
    """Report every reference whose target is not defined, ordered by source id then position."""
    known = step_file.instances
    found = []
    for iid in sorted(known):
        for target, path in known[iid].references():
            if target not in known:
                found.append(DanglingReference(iid, target, path))
    return found
