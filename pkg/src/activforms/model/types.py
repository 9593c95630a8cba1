"""Resolved types for model variables and helpers shared by the checker and the evaluator."""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

from src.activforms.model.errors import ModelError, NotSupported
from src.activforms.model.network import TypeSpec

INT64_MIN, INT64_MAX = -(2 ** 63), 2 ** 63 - 1


@dataclass(frozen=True)
class IntType:
    low: int = INT64_MIN
    high: int = INT64_MAX

    @property
    def ranged(self) -> bool:
        return (self.low, self.high) != (INT64_MIN, INT64_MAX)

    def __str__(self):
        return f"int[{self.low},{self.high}]" if self.ranged else "int"


@dataclass(frozen=True)
class BoolType:
    def __str__(self):
        return "bool"


@dataclass(frozen=True)
class DoubleType:
    def __str__(self):
        return "double"


@dataclass(frozen=True)
class ClockType:
    def __str__(self):
        return "clock"


@dataclass(frozen=True)
class ChanType:
    broadcast: bool = False
    urgent: bool = False

    def __str__(self):
        prefix = ('urgent ' if self.urgent else '') + ('broadcast ' if self.broadcast else '')
        return f"{prefix}chan"


@dataclass(frozen=True)
class VoidType:
    def __str__(self):
        return "void"


@dataclass(frozen=True)
class ArrayType:
    element: Any
    size: int

    def __str__(self):
        return f"{self.element}[{self.size}]"


@dataclass(frozen=True)
class RecordType:
    fields: Tuple[Tuple[str, Any], ...]

    def field(self, name: str) -> Optional[Any]:
        for field_name, field_type in self.fields:
            if field_name == name:
                return field_type
        return None

    def __str__(self):
        return "struct { " + ' '.join(f"{t} {n};" for n, t in self.fields) + " }"


INT = IntType()
BOOL = BoolType()
DOUBLE = DoubleType()
CLOCK = ClockType()
VOID = VoidType()


def is_numeric(t: Any) -> bool:
    return isinstance(t, (IntType, BoolType, DoubleType, ClockType))


def is_integral(t: Any) -> bool:
    return isinstance(t, (IntType, BoolType))


def resolve_type(spec: TypeSpec, dims: Tuple[Any, ...], typedefs: Dict[str, Any],
                 const_eval: Callable[[Any], Any]) -> Any:
    """
    Resolve a written type plus array dimensions to a concrete type.

    Args:
        spec: Type as written
        dims: Array dimension expressions, outermost first
        typedefs: Known typedef names
        const_eval: Evaluates constant expressions (range bounds, sizes)
    """
    base = _resolve_base(spec, typedefs, const_eval)
    for dim in reversed(dims):
        size = const_eval(dim)
        if not isinstance(size, int) or isinstance(size, bool) or size < 0:
            raise ModelError(f"Array size must be a non-negative integer, got {size!r}")
        base = ArrayType(base, size)
    return base


def _resolve_base(spec: TypeSpec, typedefs: Dict[str, Any], const_eval) -> Any:
    if 'meta' in spec.prefixes:
        raise NotSupported("'meta' variables are not supported")
    kind = spec.kind
    if kind == 'int':
        if spec.range is None:
            return INT
        low, high = (const_eval(e) for e in spec.range)
        if low > high:
            raise ModelError(f"Empty integer range [{low},{high}]")
        return IntType(int(low), int(high))
    if kind == 'bool':
        return BOOL
    if kind == 'double':
        return DOUBLE
    if kind == 'clock':
        return CLOCK
    if kind == 'void':
        return VOID
    if kind == 'chan':
        return ChanType(broadcast='broadcast' in spec.prefixes, urgent='urgent' in spec.prefixes)
    if kind == 'named':
        if spec.name not in typedefs:
            raise ModelError(f"Unknown type name '{spec.name}'")
        return typedefs[spec.name]
    if kind == 'struct':
        fields = []
        for member in spec.fields:
            fields.append((member.name, resolve_type(member.type, member.dims, typedefs, const_eval)))
        return RecordType(tuple(fields))
    if kind == 'scalar':
        raise NotSupported("'scalar' types are not supported")
    raise ModelError(f"Unknown type kind '{kind}'")


def default_value(t: Any) -> Any:
    """Initial value of a variable declared without an initializer."""
    if isinstance(t, IntType):
        return 0 if t.low <= 0 <= t.high else t.low
    if isinstance(t, BoolType):
        return False
    if isinstance(t, DoubleType):
        return 0.0
    if isinstance(t, ClockType):
        return 0
    if isinstance(t, ArrayType):
        return [default_value(t.element) for _ in range(t.size)]
    if isinstance(t, RecordType):
        return {name: default_value(ft) for name, ft in t.fields}
    return None


def type_of_value(value: Any) -> Any:
    """Best-effort type of a plain Python value (used for ad hoc environments)."""
    if isinstance(value, bool):
        return BOOL
    if isinstance(value, int):
        return INT
    if isinstance(value, float):
        return DOUBLE
    if isinstance(value, (list, tuple)):
        element = type_of_value(value[0]) if value else INT
        return ArrayType(element, len(value))
    if isinstance(value, dict):
        return RecordType(tuple((k, type_of_value(v)) for k, v in value.items()))
    raise ModelError(f"Cannot infer a model type for {value!r}")


def assignable(target: Any, source: Any) -> bool:
    """Whether a value of type ``source`` may be stored in a variable of type ``target``."""
    if isinstance(target, (IntType, ClockType)):
        return isinstance(source, (IntType, ClockType))
    if isinstance(target, BoolType):
        return isinstance(source, (BoolType, IntType))
    if isinstance(target, DoubleType):
        return is_numeric(source)
    if isinstance(target, ArrayType):
        return isinstance(source, ArrayType) and source.size == target.size \
            and same_shape(target.element, source.element)
    if isinstance(target, RecordType):
        return isinstance(source, RecordType) and same_shape(target, source)
    return False


def same_shape(a: Any, b: Any) -> bool:
    """Structural type equality ignoring integer ranges."""
    if isinstance(a, IntType) and isinstance(b, IntType):
        return True
    if isinstance(a, ArrayType) and isinstance(b, ArrayType):
        return a.size == b.size and same_shape(a.element, b.element)
    if isinstance(a, RecordType) and isinstance(b, RecordType):
        return len(a.fields) == len(b.fields) and all(
            na == nb and same_shape(ta, tb) for (na, ta), (nb, tb) in zip(a.fields, b.fields))
    return type(a) is type(b)


def coerce(t: Any, value: Any) -> Any:
    """Convert a value to the representation used for type ``t``."""
    if isinstance(t, BoolType):
        return bool(value)
    if isinstance(t, (IntType, ClockType)) and isinstance(value, bool):
        return int(value)
    if isinstance(t, DoubleType) and not isinstance(value, float):
        return float(value)
    if isinstance(t, ArrayType):
        return [coerce(t.element, v) for v in value]
    if isinstance(t, RecordType):
        return {name: coerce(ft, value[name]) for name, ft in t.fields}
    return value


def freeze(value: Any) -> Any:
    """Hashable copy of a runtime value."""
    if isinstance(value, list):
        return tuple(freeze(v) for v in value)
    if isinstance(value, dict):
        return tuple((k, freeze(v)) for k, v in value.items())
    return value


def thaw(t: Any, value: Any) -> Any:
    """Inverse of ``freeze`` guided by the variable's type."""
    if isinstance(t, ArrayType):
        return [thaw(t.element, v) for v in value]
    if isinstance(t, RecordType):
        items = dict(value)
        return {name: thaw(ft, items[name]) for name, ft in t.fields}
    return value


def clone(value: Any) -> Any:
    """Deep copy of a runtime value (nested lists, dicts and scalars)."""
    if isinstance(value, list):
        if value and not isinstance(value[0], (list, dict)):
            return value[:]
        return [clone(v) for v in value]
    if isinstance(value, dict):
        return {k: clone(v) for k, v in value.items()}
    return value
