"""Reading and writing ISO 10303-21 (STEP) clear-text exchange files."""
from stepgraph.step.errors import (
    DuplicateInstanceId,
    IllegalCharacter,
    MalformedHeader,
    MalformedInstance,
    MissingDataSection,
    MissingIsoHeader,
    StepError,
    UnexpectedToken,
    UnterminatedComment,
    UnterminatedString,
)
from stepgraph.step.model import (
    INHERITED,
    UNSET,
    ArgList,
    Binary,
    DanglingReference,
    EntityInstance,
    EnumValue,
    HeaderRecord,
    Number,
    Reference,
    StepFile,
    Text,
    Typed,
    validate_references,
)
from stepgraph.step.parser import loads, parse_file, read_step, tokenize
from stepgraph.step.tokens import Token
from stepgraph.step.writer import dump, dumps
