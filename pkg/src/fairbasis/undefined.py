"""Tagged marker for quantities whose denominator is empty.

Metrics such as a true positive rate on a group without positives have no
value. They are reported as ``UNDEFINED`` rather than NaN or zero so the
distinction survives serialization.
"""


class _Undefined:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __str__(self):
        return "undefined"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()


def is_undefined(value) -> bool:
    return value is UNDEFINED


def to_jsonable(value):
    """Serialize a possibly-undefined scalar; undefined becomes the string ``"undefined"``."""
    if value is UNDEFINED:
        return "undefined"
    return value


def from_jsonable(value):
    if value == "undefined":
        return UNDEFINED
    return value
