"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violated a documented precondition or invariant."""


class InstructionParseError(ValueError):
    """An instruction string failed to parse.

    Carries the zero-based index of the offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (token {position})")
        self.position = position


class EpisodeError(ValueError):
    """An episode directory or sample stream is malformed."""
