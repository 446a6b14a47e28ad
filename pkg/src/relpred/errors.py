"""Exception types shared across the package."""


class ParseError(ValueError):
    """A triple file line could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line_number: int, source: str = ""):
        self.line_number = line_number
        self.source = source
        where = f"{source}:{line_number}" if source else f"line {line_number}"
        super().__init__(f"{where}: {message}")


class VocabularyError(KeyError):
    """A label is missing from the vocabulary."""

    def __init__(self, label: str, kind: str = "entity", split: str = ""):
        self.label = label
        self.kind = kind
        self.split = split
        where = f" in split '{split}'" if split else ""
        super().__init__(f"unknown {kind} label '{label}'{where}")

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class ConfigError(ValueError):
    """A configuration file or option is invalid."""
