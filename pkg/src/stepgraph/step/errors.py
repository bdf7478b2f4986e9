"""Exceptions raised while reading ISO 10303-21 exchange files."""


class StepError(Exception):
    """Base class for all STEP reading errors.

    ``line`` and ``col`` are 1-based when known, ``None`` otherwise.
    """

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


class UnterminatedString(StepError):
    pass


class UnterminatedComment(StepError):
    pass


class IllegalCharacter(StepError):
    pass


class MissingIsoHeader(StepError):
    pass


class MissingDataSection(StepError):
    pass


class DuplicateInstanceId(StepError):
    def __init__(self, instance_id, line=None, col=None):
        self.instance_id = instance_id
        super().__init__(f"instance #{instance_id} defined twice", line, col)


class MalformedInstance(StepError):
    def __init__(self, instance_id, reason, line=None, col=None):
        self.instance_id = instance_id
        super().__init__(f"malformed instance #{instance_id}: {reason}", line, col)


class MalformedHeader(StepError):
    pass


class UnexpectedToken(StepError):
    pass
