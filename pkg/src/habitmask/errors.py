"""Exception types shared across the package."""


class HabitmaskError(Exception):
    """Base class for all package-specific errors."""


class EmptyInput(HabitmaskError):
    pass


class InvalidGeometry(HabitmaskError):
    pass


class ParseError(HabitmaskError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(HabitmaskError):
    pass


class InvariantError(HabitmaskError):
    pass


class FormatError(HabitmaskError):
    pass


class ShapeError(HabitmaskError):
    pass


class ContractError(HabitmaskError):
    pass


class SplitError(HabitmaskError):
    pass
