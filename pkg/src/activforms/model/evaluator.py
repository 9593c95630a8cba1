#!/usr/bin/env python
"""
Expression and statement evaluation for model networks.

Expressions are compiled once into closures ``fn(store, frame)``; the store
holds global and process-local variables in a flat list, the frame holds
function locals. The same compiler serves the execution engine, the
explicit-state checker and the stochastic simulator.

USAGE EXAMPLES:
    eval_expression('2 + 3 * 4')                                  # 14
    eval_expression('a[1] + b', {'a': [1, 2, 3], 'b': 4})         # 6
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from src.activforms.model.errors import (
    ArrayIndexOutOfBounds, DivisionByZero, EvaluationError, ModelError, NotSupported,
    RangeViolation, UnboundParameter,
)
from src.activforms.model.network import (
    Assign, Binary, Block, Call, DoWhile, EmptyStmt, ExprStmt, Field, For, Function, If,
    Index, Iterate, ListInit, Literal, Name, Quantifier, Return, Slot, Ternary, TypeSpec,
    Typedef, Unary, Variable, While,
)
from src.activforms.model.types import (
    BOOL, CLOCK, DOUBLE, INT, VOID, ArrayType, BoolType, ChanType, ClockType, DoubleType,
    IntType, RecordType, VoidType, assignable, clone, coerce, default_value, is_numeric,
    resolve_type, type_of_value,
)

logger = logging.getLogger(__name__)

MAX_LOOP_ITERATIONS = 1_000_000

Compiled = Callable[['Store', Optional[list]], Any]


class Store:
    """Mutable runtime data: variable values, active locations, clock time and RNG."""

    __slots__ = ('values', 'locations', 'rng', 'time')

    def __init__(self, values: List[Any], locations: Optional[List[int]] = None,
                 rng: Any = None, time: float = 0):
        self.values = values
        self.locations = locations if locations is not None else []
        self.rng = rng
        self.time = time


@dataclass
class Symbol:
    name: str
    kind: str                 # var | const | local | ref | chan | func | process | type
    type: Any = None
    slot: int = -1
    value: Any = None
    pending: Any = None       # function declaration awaiting its body


@dataclass
class ChannelInfo:
    name: str
    broadcast: bool
    urgent: bool


@dataclass
class ProcessInfo:
    """Compile-time view of one process, used to resolve ``Proc.member`` references."""
    name: str
    index: int
    locations: Dict[str, int]
    scope: 'Scope'


class Scope:
    """Lexical scope chain mapping names to symbols."""

    def __init__(self, parent: Optional['Scope'] = None, owner: str = ''):
        self.parent = parent
        self.owner = owner
        self.symbols: Dict[str, Symbol] = {}
        self.return_type = parent.return_type if parent is not None else VOID

    def define(self, symbol: Symbol) -> Symbol:
        self.symbols[symbol.name] = symbol
        return symbol

    def lookup(self, name: str) -> Optional[Symbol]:
        scope = self
        while scope is not None:
            if name in scope.symbols:
                return scope.symbols[name]
            scope = scope.parent
        return None

    def typedefs(self) -> Dict[str, Any]:
        found: Dict[str, Any] = {}
        scope = self
        while scope is not None:
            for name, symbol in scope.symbols.items():
                if symbol.kind == 'type' and name not in found:
                    found[name] = symbol.type
            scope = scope.parent
        return found


@dataclass
class StoreLayout:
    """Slot assignment for every stored variable, with initial values."""
    names: List[str] = field(default_factory=list)
    types: List[Any] = field(default_factory=list)
    initial: List[Any] = field(default_factory=list)
    clocks: List[int] = field(default_factory=list)
    channels: List[ChannelInfo] = field(default_factory=list)

    def add(self, name: str, var_type: Any, value: Any) -> int:
        slot = len(self.names)
        self.names.append(name)
        self.types.append(var_type)
        self.initial.append(value)
        if isinstance(var_type, ClockType):
            self.clocks.append(slot)
        return slot

    def add_channel(self, name: str, chan: ChanType) -> int:
        self.channels.append(ChannelInfo(name, chan.broadcast, chan.urgent))
        return len(self.channels) - 1

    def slot_of(self, name: str) -> int:
        return self.names.index(name)


class _Returned:
    __slots__ = ('value',)

    def __init__(self, value):
        self.value = value


class _Ref:
    """By-reference argument cell."""

    __slots__ = ('get', 'set')

    def __init__(self, get, set_):
        self.get = get
        self.set = set_


@dataclass
class CompiledFunction:
    name: str
    return_type: Any
    params: List[Tuple[Any, bool]] = field(default_factory=list)
    frame_size: int = 0
    body: Optional[Compiled] = None


class _FrameCounter:
    def __init__(self, start: int = 0):
        self.size = start

    def allocate(self) -> int:
        self.size += 1
        return self.size - 1


# =============================================================================
# Runtime helpers
# =============================================================================

def _divide(a, b):
    if b == 0:
        raise DivisionByZero("Division by zero")
    if isinstance(a, float) or isinstance(b, float):
        return a / b
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _modulo(a, b):
    if b == 0:
        raise DivisionByZero("Modulo by zero")
    if isinstance(a, float) or isinstance(b, float):
        return math.fmod(a, b)
    return a - b * _divide(a, b)


def _check_index(container, index):
    if not isinstance(index, int) or index < 0 or index >= len(container):
        raise ArrayIndexOutOfBounds(f"Index {index} out of bounds for array of length {len(container)}")
    return index


def _check_range(var_type, value, name):
    if isinstance(var_type, IntType) and var_type.ranged:
        if value < var_type.low or value > var_type.high:
            raise RangeViolation(f"Value {value} outside {var_type} assigning {name}")
    return value


_ARITHMETIC = {
    '+': lambda a, b: a + b,
    '-': lambda a, b: a - b,
    '*': lambda a, b: a * b,
    '/': _divide,
    '%': _modulo,
    '<<': lambda a, b: a << b,
    '>>': lambda a, b: a >> b,
    '&': lambda a, b: a & b,
    '|': lambda a, b: a | b,
    '^': lambda a, b: a ^ b,
    '<?': lambda a, b: a if a <= b else b,
    '>?': lambda a, b: a if a >= b else b,
}
_COMPARISON = {
    '==': lambda a, b: a == b,
    '!=': lambda a, b: a != b,
    '<': lambda a, b: a < b,
    '<=': lambda a, b: a <= b,
    '>': lambda a, b: a > b,
    '>=': lambda a, b: a >= b,
}
_INTEGER_ONLY = {'<<', '>>', '&', '|', '^'}


def _uniform(s, x):
    if s.rng is None:
        raise EvaluationError("random() requires a stochastic execution context")
    return float(s.rng.uniform(0.0, x))


def _normal(s, mean, sd):
    if s.rng is None:
        raise EvaluationError("random_normal() requires a stochastic execution context")
    return float(s.rng.normal(mean, sd)) if sd > 0 else float(mean)


# name -> (arity, return type, implementation, stochastic)
BUILTINS: Dict[str, Tuple[int, Any, Callable, bool]] = {
    'fabs': (1, DOUBLE, lambda s, x: float(abs(x)), False),
    'abs': (1, INT, lambda s, x: abs(x), False),
    'floor': (1, INT, lambda s, x: int(math.floor(x)), False),
    'ceil': (1, INT, lambda s, x: int(math.ceil(x)), False),
    'fint': (1, INT, lambda s, x: int(x), False),
    'round': (1, INT, lambda s, x: int(math.floor(x + 0.5)), False),
    'pow': (2, DOUBLE, lambda s, x, y: float(math.pow(x, y)), False),
    'sqrt': (1, DOUBLE, lambda s, x: math.sqrt(x), False),
    'exp': (1, DOUBLE, lambda s, x: math.exp(x), False),
    'ln': (1, DOUBLE, lambda s, x: math.log(x), False),
    'log': (1, DOUBLE, lambda s, x: math.log(x), False),
    'fmin': (2, DOUBLE, lambda s, x, y: float(min(x, y)), False),
    'fmax': (2, DOUBLE, lambda s, x, y: float(max(x, y)), False),
    'random': (1, DOUBLE, _uniform, True),
    'random_normal': (2, DOUBLE, _normal, True),
}


# =============================================================================
# Compiler
# =============================================================================

class ExpressionCompiler:
    """
    Compiles declarations, expressions and statements into closures.

    Compile-time problems (unknown names, type errors, unsupported constructs)
    raise ModelError; runtime problems raise EvaluationError subclasses.
    """

    def __init__(self, layout: Optional[StoreLayout] = None,
                 bindings: Optional[Dict[str, Any]] = None,
                 allow_random: bool = True):
        self.layout = layout or StoreLayout()
        self.bindings = bindings or {}
        self.allow_random = allow_random
        self.unbound: List[str] = []
        self.logger = logging.getLogger(__name__)

    # ---------------------------------------------------------------- constants

    def constant(self, expr: Any, scope: Scope) -> Any:
        """Evaluate an expression at compile time against the initial store."""
        fn, _ = self.expression(expr, scope)
        return fn(Store(self.layout.initial), None)

    def _const_eval(self, scope: Scope) -> Callable[[Any], Any]:
        return lambda e: self.constant(e, scope)

    def resolve(self, spec: TypeSpec, dims, scope: Scope) -> Any:
        return resolve_type(spec, tuple(dims), scope.typedefs(), self._const_eval(scope))

    # ---------------------------------------------------------------- declarations

    def declare(self, decl: Any, scope: Scope, qualifier: str = '') -> Optional[Symbol]:
        """Declare a global or process-local variable, typedef or function."""
        if isinstance(decl, Typedef):
            return scope.define(Symbol(decl.name, 'type', self.resolve(decl.type, decl.dims, scope)))
        if isinstance(decl, Function):
            return self.declare_function(decl, scope)
        var_type = self.resolve(decl.type, decl.dims, scope)
        qualified = f"{qualifier}{decl.name}"
        if _is_channel(var_type):
            return scope.define(Symbol(decl.name, 'chan', var_type,
                                       value=self._allocate_channels(qualified, var_type)))
        value = self.initial_value(decl, var_type, scope)
        if decl.type.is_const:
            return scope.define(Symbol(decl.name, 'const', var_type, value=value))
        slot = self.layout.add(qualified, var_type, value)
        return scope.define(Symbol(decl.name, 'var', var_type, slot=slot))

    def _allocate_channels(self, name: str, var_type: Any) -> int:
        if isinstance(var_type, ChanType):
            return self.layout.add_channel(name, var_type)
        base = None
        for i in range(var_type.size):
            index = self._allocate_channels(f"{name}[{i}]", var_type.element)
            base = index if base is None else base
        return base if base is not None else len(self.layout.channels)

    def initial_value(self, decl: Variable, var_type: Any, scope: Scope) -> Any:
        if decl.init is None:
            return default_value(var_type)
        value = self._initializer(decl.init, var_type, scope)
        check_shape(var_type, value, decl.name)
        value = coerce(var_type, value)
        _check_nested_range(var_type, value, decl.name)
        return value

    def _initializer(self, init: Any, var_type: Any, scope: Scope) -> Any:
        if isinstance(init, ListInit):
            if isinstance(var_type, ArrayType):
                return [self._initializer(i, var_type.element, scope) for i in init.items]
            if isinstance(var_type, RecordType):
                if len(init.items) != len(var_type.fields):
                    raise ModelError(f"Record initializer has {len(init.items)} items, "
                                     f"expected {len(var_type.fields)}")
                return {name: self._initializer(i, ft, scope)
                        for (name, ft), i in zip(var_type.fields, init.items)}
            raise ModelError(f"List initializer for non-aggregate type {var_type}")
        fn, init_type = self.expression(init, scope)
        if init_type is not None and not assignable(var_type, init_type):
            raise ModelError(f"Type error: cannot initialize {var_type} with {init_type}")
        return _thaw_value(fn(Store(self.layout.initial), None))

    def declare_function(self, decl: Function, scope: Scope) -> Symbol:
        return_type = self.resolve(decl.return_type, (), scope)
        compiled = CompiledFunction(decl.name, return_type)
        symbol = scope.define(Symbol(decl.name, 'func', return_type, value=compiled))
        symbol.pending = decl
        return symbol

    def compile_function_body(self, symbol: Symbol, scope: Scope) -> None:
        decl: Function = symbol.pending
        compiled: CompiledFunction = symbol.value
        frame = _FrameCounter()
        inner = Scope(scope, owner=decl.name)
        for param in decl.params:
            param_type = self.resolve(param.type, param.dims, scope)
            slot = frame.allocate()
            kind = 'ref' if param.by_ref else 'local'
            inner.define(Symbol(param.name, kind, param_type, slot=slot))
            compiled.params.append((param_type, param.by_ref))
        inner.return_type = compiled.return_type
        compiled.body = self.statement(decl.body, inner, frame)
        compiled.frame_size = frame.size

    # ---------------------------------------------------------------- expressions

    def expression(self, expr: Any, scope: Scope) -> Tuple[Compiled, Any]:
        method = getattr(self, f"_expr_{type(expr).__name__.lower()}", None)
        if method is None:
            raise ModelError(f"Unsupported expression {expr!r}")
        return method(expr, scope)

    def condition(self, expr: Any, scope: Scope) -> Compiled:
        fn, expr_type = self.expression(expr, scope)
        if not isinstance(expr_type, (BoolType, IntType, ClockType)):
            raise ModelError(f"Type error: condition must be boolean, got {expr_type}")
        return fn

    def _expr_literal(self, expr: Literal, scope):
        value = expr.value
        if isinstance(value, bool):
            t = BOOL
        elif isinstance(value, int):
            t = INT
        else:
            t = DOUBLE
        return (lambda s, f: value), t

    def _expr_slot(self, expr: Slot, scope):
        if expr.name not in self.bindings:
            self.unbound.append(expr.name)
            raise UnboundParameter([expr.name])
        value = self.bindings[expr.name]
        t = type_of_value(_thaw_value(value))
        return (lambda s, f: _thaw_value(value)), t

    def _expr_name(self, expr: Name, scope):
        symbol = scope.lookup(expr.name)
        if symbol is None:
            raise ModelError(f"Unknown identifier '{expr.name}'")
        if symbol.kind == 'var':
            slot = symbol.slot
            return (lambda s, f: s.values[slot]), symbol.type
        if symbol.kind == 'const':
            value = symbol.value
            return (lambda s, f: value), symbol.type
        if symbol.kind == 'local':
            slot = symbol.slot
            return (lambda s, f: f[slot]), symbol.type
        if symbol.kind == 'ref':
            slot = symbol.slot
            return (lambda s, f: f[slot].get()), symbol.type
        raise ModelError(f"'{expr.name}' ({symbol.kind}) cannot be used as a value")

    def _expr_index(self, expr: Index, scope):
        base, base_type = self.expression(expr.base, scope)
        index, index_type = self.expression(expr.index, scope)
        if not isinstance(base_type, ArrayType):
            raise ModelError(f"Type error: indexing non-array type {base_type}")
        if not isinstance(index_type, (IntType, BoolType)):
            raise ModelError(f"Type error: array index must be an integer, got {index_type}")

        def get(s, f):
            container = base(s, f)
            return container[_check_index(container, index(s, f))]
        return get, base_type.element

    def _expr_field(self, expr: Field, scope):
        process = self._process_of(expr.base, scope)
        if process is not None:
            return self._process_member(process, expr.name)
        base, base_type = self.expression(expr.base, scope)
        if not isinstance(base_type, RecordType):
            raise ModelError(f"Type error: field access '.{expr.name}' on non-record type {base_type}")
        field_type = base_type.field(expr.name)
        if field_type is None:
            raise ModelError(f"Record has no field '{expr.name}'")
        name = expr.name
        return (lambda s, f: base(s, f)[name]), field_type

    def _process_of(self, expr: Any, scope: Scope) -> Optional[ProcessInfo]:
        if isinstance(expr, Name):
            symbol = scope.lookup(expr.name)
            if symbol is not None and symbol.kind == 'process':
                return symbol.value
        return None

    def _process_member(self, process: ProcessInfo, member: str):
        if member in process.locations:
            p, loc = process.index, process.locations[member]
            return (lambda s, f: s.locations[p] == loc), BOOL
        symbol = process.scope.symbols.get(member)
        if symbol is None:
            raise ModelError(f"Process {process.name} has no location or variable '{member}'")
        return self._expr_name(Name(member), process.scope)

    def _expr_unary(self, expr: Unary, scope):
        op = expr.op
        if op in ('++pre', '--pre', '++post', '--post'):
            get, set_, var_type = self.lvalue(expr.operand, scope)
            delta = 1 if op.startswith('++') else -1
            post = op.endswith('post')

            def step(s, f):
                old = get(s, f)
                set_(s, f, old + delta)
                return old if post else old + delta
            return step, var_type
        operand, operand_type = self.expression(expr.operand, scope)
        if op == '!':
            return (lambda s, f: not operand(s, f)), BOOL
        if not is_numeric(operand_type):
            raise ModelError(f"Type error: unary '{op}' on {operand_type}")
        result_type = DOUBLE if isinstance(operand_type, DoubleType) else INT
        if op == '-':
            return (lambda s, f: -operand(s, f)), result_type
        return (lambda s, f: +operand(s, f)), result_type

    def _expr_binary(self, expr: Binary, scope):
        left, left_type = self.expression(expr.left, scope)
        right, right_type = self.expression(expr.right, scope)
        op = expr.op
        if op == '&&':
            return (lambda s, f: bool(left(s, f)) and bool(right(s, f))), BOOL
        if op == '||':
            return (lambda s, f: bool(left(s, f)) or bool(right(s, f))), BOOL
        if op == 'imply':
            return (lambda s, f: (not left(s, f)) or bool(right(s, f))), BOOL
        if op in _COMPARISON:
            compare = _COMPARISON[op]
            if op not in ('==', '!=') and not (is_numeric(left_type) and is_numeric(right_type)):
                raise ModelError(f"Type error: '{op}' between {left_type} and {right_type}")
            return (lambda s, f: compare(left(s, f), right(s, f))), BOOL
        if not (is_numeric(left_type) and is_numeric(right_type)):
            raise ModelError(f"Type error: '{op}' between {left_type} and {right_type}")
        if op in _INTEGER_ONLY and (isinstance(left_type, DoubleType) or isinstance(right_type, DoubleType)):
            raise ModelError(f"Type error: '{op}' requires integer operands")
        arith = _ARITHMETIC[op]
        result_type = DOUBLE if DOUBLE in (left_type, right_type) else INT
        return (lambda s, f: arith(left(s, f), right(s, f))), result_type

    def _expr_ternary(self, expr: Ternary, scope):
        cond = self.condition(expr.cond, scope)
        then, then_type = self.expression(expr.then, scope)
        other, other_type = self.expression(expr.other, scope)
        result_type = DOUBLE if DOUBLE in (then_type, other_type) else then_type
        return (lambda s, f: then(s, f) if cond(s, f) else other(s, f)), result_type

    def _expr_assign(self, expr: Assign, scope):
        get, set_, target_type = self.lvalue(expr.target, scope)
        value, value_type = self.expression(expr.value, scope)
        if expr.op == '=':
            if not assignable(target_type, value_type):
                raise ModelError(f"Type error: cannot assign {value_type} to {target_type}")

            def assign(s, f):
                v = clone(value(s, f))
                set_(s, f, v)
                return v
            return assign, target_type
        op = expr.op[:-1]
        if not (is_numeric(target_type) and is_numeric(value_type)):
            raise ModelError(f"Type error: '{expr.op}' on {target_type}")
        arith = _ARITHMETIC[op]

        def compound(s, f):
            v = arith(get(s, f), value(s, f))
            set_(s, f, v)
            return v
        return compound, target_type

    def _expr_call(self, expr: Call, scope):
        if isinstance(expr.func, Field):
            process = self._process_of(expr.func.base, scope)
            if process is None:
                raise ModelError("Only functions of processes can be called with a qualifier")
            return self._call_function(expr.func.name, expr.args, process.scope, scope)
        if not isinstance(expr.func, Name):
            raise ModelError(f"Cannot call {expr.func!r}")
        name = expr.func.name
        symbol = scope.lookup(name)
        if symbol is None and name in BUILTINS:
            return self._call_builtin(name, expr.args, scope)
        return self._call_function(name, expr.args, scope, scope)

    def _call_builtin(self, name, args, scope):
        arity, return_type, impl, stochastic = BUILTINS[name]
        if len(args) != arity:
            raise ModelError(f"{name}() takes {arity} argument(s), got {len(args)}")
        if stochastic and not self.allow_random:
            raise NotSupported(f"{name}() is only available in stochastic execution")
        compiled = []
        for arg in args:
            fn, arg_type = self.expression(arg, scope)
            if not is_numeric(arg_type):
                raise ModelError(f"Type error: {name}() argument of type {arg_type}")
            compiled.append(fn)
        if arity == 1:
            a, = compiled
            return (lambda s, f: impl(s, a(s, f))), return_type
        a, b = compiled
        return (lambda s, f: impl(s, a(s, f), b(s, f))), return_type

    def _call_function(self, name, args, lookup_scope, arg_scope):
        symbol = lookup_scope.lookup(name)
        if symbol is None or symbol.kind != 'func':
            raise ModelError(f"Unknown function '{name}'")
        function: CompiledFunction = symbol.value
        decl: Function = symbol.pending
        if len(args) != len(decl.params):
            raise ModelError(f"{name}() takes {len(decl.params)} argument(s), got {len(args)}")
        passers = []
        for param, arg in zip(decl.params, args):
            if param.by_ref:
                get, set_, _ = self.lvalue(arg, arg_scope)
                passers.append(_ref_passer(get, set_))
            else:
                fn, _ = self.expression(arg, arg_scope)
                passers.append(_value_passer(fn))

        def call(s, f):
            frame = [None] * function.frame_size
            for i, passer in enumerate(passers):
                frame[i] = passer(s, f)
            for i, (param_type, by_ref) in enumerate(function.params):
                if not by_ref:
                    frame[i] = coerce(param_type, frame[i])
            result = function.body(s, frame)
            if isinstance(result, _Returned):
                return result.value
            return None
        return call, function.return_type

    def _expr_quantifier(self, expr: Quantifier, scope):
        raise NotSupported(f"'{expr.kind}' quantifiers are not supported")

    # ---------------------------------------------------------------- lvalues

    def lvalue(self, expr: Any, scope: Scope) -> Tuple[Compiled, Callable, Any]:
        """Compile an assignable expression into (getter, setter, type)."""
        if isinstance(expr, Name):
            symbol = scope.lookup(expr.name)
            if symbol is None:
                raise ModelError(f"Unknown identifier '{expr.name}'")
            var_type, name = symbol.type, expr.name
            if symbol.kind == 'var':
                slot = symbol.slot

                def set_var(s, f, v):
                    s.values[slot] = _check_range(var_type, coerce(var_type, v), name)
                return (lambda s, f: s.values[slot]), set_var, var_type
            if symbol.kind == 'local':
                slot = symbol.slot

                def set_local(s, f, v):
                    f[slot] = _check_range(var_type, coerce(var_type, v), name)
                return (lambda s, f: f[slot]), set_local, var_type
            if symbol.kind == 'ref':
                slot = symbol.slot

                def set_ref(s, f, v):
                    f[slot].set(_check_range(var_type, coerce(var_type, v), name))
                return (lambda s, f: f[slot].get()), set_ref, var_type
            raise ModelError(f"'{expr.name}' is not assignable")
        if isinstance(expr, Index):
            base, _, base_type = self.lvalue(expr.base, scope)
            index, _ = self.expression(expr.index, scope)
            if not isinstance(base_type, ArrayType):
                raise ModelError(f"Type error: indexing non-array type {base_type}")
            element = base_type.element

            def get_item(s, f):
                container = base(s, f)
                return container[_check_index(container, index(s, f))]

            def set_item(s, f, v):
                container = base(s, f)
                container[_check_index(container, index(s, f))] = \
                    _check_range(element, coerce(element, v), 'array element')
            return get_item, set_item, element
        if isinstance(expr, Field):
            process = self._process_of(expr.base, scope)
            if process is not None:
                return self.lvalue(Name(expr.name), process.scope)
            base, _, base_type = self.lvalue(expr.base, scope)
            if not isinstance(base_type, RecordType):
                raise ModelError(f"Type error: field access on non-record type {base_type}")
            field_type = base_type.field(expr.name)
            if field_type is None:
                raise ModelError(f"Record has no field '{expr.name}'")
            name = expr.name

            def set_field(s, f, v):
                base(s, f)[name] = _check_range(field_type, coerce(field_type, v), name)
            return (lambda s, f: base(s, f)[name]), set_field, field_type
        raise ModelError(f"Expression is not assignable: {expr!r}")

    # ---------------------------------------------------------------- statements

    def statement(self, stmt: Any, scope: Scope, frame: _FrameCounter) -> Compiled:
        if isinstance(stmt, Block):
            inner = Scope(scope, owner=scope.owner)
            parts = [self._block_item(item, inner, frame) for item in stmt.items]

            def block(s, f):
                for part in parts:
                    result = part(s, f)
                    if result is not None:
                        return result
                return None
            return block
        if isinstance(stmt, ExprStmt):
            fn, _ = self.expression(stmt.expr, scope)

            def run(s, f):
                fn(s, f)
            return run
        if isinstance(stmt, EmptyStmt):
            return lambda s, f: None
        if isinstance(stmt, If):
            cond = self.condition(stmt.cond, scope)
            then = self.statement(stmt.then, scope, frame)
            other = self.statement(stmt.other, scope, frame) if stmt.other is not None else None

            def if_(s, f):
                if cond(s, f):
                    return then(s, f)
                if other is not None:
                    return other(s, f)
                return None
            return if_
        if isinstance(stmt, (While, DoWhile)):
            cond = self.condition(stmt.cond, scope)
            body = self.statement(stmt.body, scope, frame)
            first = isinstance(stmt, DoWhile)

            def loop(s, f):
                count = 0
                run_body = first
                while run_body or cond(s, f):
                    run_body = False
                    result = body(s, f)
                    if result is not None:
                        return result
                    count += 1
                    if count > MAX_LOOP_ITERATIONS:
                        raise EvaluationError("Loop iteration limit exceeded")
                return None
            return loop
        if isinstance(stmt, For):
            init = self.expression(stmt.init, scope)[0] if stmt.init is not None else None
            cond = self.condition(stmt.cond, scope) if stmt.cond is not None else None
            step = self.expression(stmt.step, scope)[0] if stmt.step is not None else None
            body = self.statement(stmt.body, scope, frame)

            def for_(s, f):
                if init is not None:
                    init(s, f)
                count = 0
                while cond is None or cond(s, f):
                    result = body(s, f)
                    if result is not None:
                        return result
                    if step is not None:
                        step(s, f)
                    count += 1
                    if count > MAX_LOOP_ITERATIONS:
                        raise EvaluationError("Loop iteration limit exceeded")
                return None
            return for_
        if isinstance(stmt, Iterate):
            var_type = self.resolve(stmt.type, (), scope)
            if not isinstance(var_type, IntType) or not var_type.ranged:
                raise ModelError("Iteration requires a bounded integer range")
            inner = Scope(scope, owner=scope.owner)
            slot = frame.allocate()
            inner.define(Symbol(stmt.var, 'local', var_type, slot=slot))
            body = self.statement(stmt.body, inner, frame)
            low, high = var_type.low, var_type.high

            def iterate(s, f):
                for i in range(low, high + 1):
                    f[slot] = i
                    result = body(s, f)
                    if result is not None:
                        return result
                return None
            return iterate
        if isinstance(stmt, Return):
            return_type = scope.return_type
            if stmt.value is None:
                if not isinstance(return_type, VoidType):
                    raise ModelError(f"Missing return value in function returning {return_type}")
                return lambda s, f: _Returned(None)
            value, value_type = self.expression(stmt.value, scope)
            if not assignable(return_type, value_type):
                raise ModelError(f"Type error: returning {value_type} from function returning {return_type}")
            return lambda s, f: _Returned(coerce(return_type, clone(value(s, f))))
        if isinstance(stmt, (Variable, Typedef)):
            return self._block_item(stmt, scope, frame)
        raise ModelError(f"Unsupported statement {stmt!r}")

    def _block_item(self, item: Any, scope: Scope, frame: _FrameCounter) -> Compiled:
        if isinstance(item, Typedef):
            self.declare(item, scope)
            return lambda s, f: None
        if isinstance(item, Variable):
            var_type = self.resolve(item.type, item.dims, scope)
            slot = frame.allocate()
            scope.define(Symbol(item.name, 'local', var_type, slot=slot))
            if item.init is None:
                initial = default_value(var_type)
                return _local_default(slot, initial)
            if isinstance(item.init, ListInit):
                value = self._initializer(item.init, var_type, scope)
                return _local_default(slot, value)
            fn, init_type = self.expression(item.init, scope)
            if not assignable(var_type, init_type):
                raise ModelError(f"Type error: cannot initialize {var_type} with {init_type}")
            name = item.name

            def init_local(s, f):
                f[slot] = _check_range(var_type, coerce(var_type, clone(fn(s, f))), name)
            return init_local
        return self.statement(item, scope, frame)


def _local_default(slot, value):
    def init(s, f):
        f[slot] = clone(value)
    return init


def _ref_passer(get, set_):
    def pass_ref(s, f):
        return _Ref(lambda: get(s, f), lambda v: set_(s, f, v))
    return pass_ref


def _value_passer(fn):
    def pass_value(s, f):
        return clone(fn(s, f))
    return pass_value


def _is_channel(var_type: Any) -> bool:
    while isinstance(var_type, ArrayType):
        var_type = var_type.element
    return isinstance(var_type, ChanType)


def _thaw_value(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_thaw_value(v) for v in value]
    return value


def check_shape(var_type: Any, value: Any, name: str) -> None:
    if isinstance(var_type, ArrayType):
        if not isinstance(value, list) or len(value) != var_type.size:
            size = len(value) if isinstance(value, list) else 'scalar'
            raise ModelError(f"Initializer for {name} has shape {size}, expected {var_type.size}")
        for item in value:
            check_shape(var_type.element, item, name)


def _check_nested_range(var_type: Any, value: Any, name: str) -> None:
    if isinstance(var_type, ArrayType):
        for item in value:
            _check_nested_range(var_type.element, item, name)
    elif isinstance(var_type, RecordType):
        for field_name, field_type in var_type.fields:
            _check_nested_range(field_type, value[field_name], f"{name}.{field_name}")
    else:
        _check_range(var_type, value, name)


# =============================================================================
# Public helpers
# =============================================================================

def eval_expression(expr: Union[str, Any], env: Optional[Dict[str, Any]] = None, rng: Any = None) -> Any:
    """
    Evaluate an expression against a plain variable environment.

    Args:
        expr: Expression node or source text
        env: Mapping of identifier to value (ints, floats, bools, lists, dicts).
            Assignments inside the expression are written back to it.
        rng: Optional numpy Generator for random()/random_normal()

    Returns:
        The expression's value
    """
    if isinstance(expr, str):
        from src.activforms.model.parser import parse_expression
        expr = parse_expression(expr)
    env = env if env is not None else {}
    compiler = ExpressionCompiler()
    scope = Scope()
    slots = {}
    for name, value in env.items():
        value = _thaw_value(value)
        var_type = type_of_value(value)
        slots[name] = compiler.layout.add(name, var_type, clone(value))
        scope.define(Symbol(name, 'var', var_type, slot=slots[name]))
    fn, _ = compiler.expression(expr, scope)
    store = Store(list(compiler.layout.initial), rng=rng)
    result = fn(store, None)
    for name, slot in slots.items():
        if store.values[slot] != _thaw_value(env[name]):
            env[name] = store.values[slot]
    return result
