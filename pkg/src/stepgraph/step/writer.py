"""Serialize a :class:`StepFile` back to Part 21 text."""
from stepgraph.step.model import (
    ArgList,
    Binary,
    EnumValue,
    Number,
    Reference,
    Text,
    Typed,
    _Inherited,
    _Unset,
)


def format_arg(arg):
    if isinstance(arg, Reference):
        return f"#{arg.target}"
    if isinstance(arg, Number):
        return arg.text
    if isinstance(arg, Text):
        return "'" + arg.value.replace("'", "''") + "'"
    if isinstance(arg, EnumValue):
        return f".{arg.name}."
    if isinstance(arg, ArgList):
        return "(" + ",".join(format_arg(a) for a in arg.items) + ")"
    if isinstance(arg, Typed):
        return f"{arg.name}({format_arg(arg.inner)})"
    if isinstance(arg, Binary):
        return f'"{arg.hex}"'
    if isinstance(arg, _Unset):
        return "$"
    if isinstance(arg, _Inherited):
        return "*"
    raise TypeError(f"not a STEP argument: {arg!r}")


def _record(name, args):
    return name + "(" + ",".join(format_arg(a) for a in args) + ")"


def format_instance(inst):
    if inst.is_complex:
        body = "(" + "".join(_record(t, a) for t, a in zip(inst.types, inst.args)) + ")"
    else:
        body = _record(inst.types[0], inst.args[0])
    return f"#{inst.id}={body};"


def dumps(step_file):
    lines = ["ISO-10303-21;", "HEADER;"]
    lines.extend(_record(rec.name, rec.args) + ";" for rec in step_file.header)
    lines += ["ENDSEC;", "DATA;"]
    lines.extend(format_instance(inst) for inst in step_file.instances.values())
    lines += ["ENDSEC;", "END-ISO-10303-21;", ""]
    return "\n".join(lines)


def dump(step_file, path):
    # latin-1 keeps bytes >= 0x80 inside strings exactly as they were read
    with open(path, "wb") as fh:
        fh.write(dumps(step_file).encode("latin-1"))
