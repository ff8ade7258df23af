"""Exception types shared across the simulator."""


class InputError(ValueError):
    """An argument violates an operation's precondition."""


class ConfigurationError(ValueError):
    """A scenario or topology cannot be built as requested."""


class ProtocolViolation(RuntimeError):
    """An agent observed something a correct simulator never produces."""


class InvariantViolation(RuntimeError):
    """A runtime invariant (queue bound, conservation, ...) was broken."""


class TraceParseError(ValueError):
    def __init__(self, message, line_no=None, field=None):
        self.line_no = line_no
        self.field = field
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{message}")
