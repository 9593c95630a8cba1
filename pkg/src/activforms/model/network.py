#!/usr/bin/env python
"""
Syntax tree for networks of (stochastic) timed automata and queries.

All nodes are frozen dataclasses; source line numbers are excluded from
equality so that a printed and re-parsed network compares equal to the
original.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple, Union


# =============================================================================
# Expressions
# =============================================================================

@dataclass(frozen=True)
class Literal:
    value: Union[int, float, bool]


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Slot:
    """Parameter slot ``$name`` filled by ``ModelNetwork.bind``."""
    name: str


@dataclass(frozen=True)
class Index:
    base: 'Expr'
    index: 'Expr'


@dataclass(frozen=True)
class Field:
    base: 'Expr'
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # '-', '+', '!', '++pre', '--pre', '++post', '--post'
    operand: 'Expr'


@dataclass(frozen=True)
class Binary:
    op: str
    left: 'Expr'
    right: 'Expr'


@dataclass(frozen=True)
class Ternary:
    cond: 'Expr'
    then: 'Expr'
    other: 'Expr'


@dataclass(frozen=True)
class Assign:
    op: str  # '=', '+=', '-=', ...
    target: 'Expr'
    value: 'Expr'


@dataclass(frozen=True)
class Call:
    func: 'Expr'  # Name, or Field(Name(automaton), fn) inside queries
    args: Tuple['Expr', ...] = ()


@dataclass(frozen=True)
class Quantifier:
    """forall/exists/sum: parsed so that the checker can reject it."""
    kind: str
    var: str
    type: 'TypeSpec'
    body: 'Expr'


Expr = Union[Literal, Name, Slot, Index, Field, Unary, Binary, Ternary,
             Assign, Call, Quantifier]

ASSIGN_OPS = ('=', '+=', '-=', '*=', '/=', '%=', '|=', '&=', '^=', '<<=', '>>=')


# =============================================================================
# Types and declarations
# =============================================================================

@dataclass(frozen=True)
class TypeSpec:
    """
    Declared type as written.

    kind is one of int, bool, clock, chan, double, void, named, struct, scalar.
    """
    kind: str
    prefixes: Tuple[str, ...] = ()
    name: Optional[str] = None              # typedef name for kind 'named'
    range: Optional[Tuple[Expr, Expr]] = None
    fields: Tuple['Variable', ...] = ()     # struct members
    size: Optional[Expr] = None             # scalar[size]

    @property
    def is_const(self) -> bool:
        return 'const' in self.prefixes


@dataclass(frozen=True)
class ListInit:
    items: Tuple[Any, ...]


Initializer = Union[Expr, ListInit]


@dataclass(frozen=True)
class Variable:
    type: TypeSpec
    name: str
    dims: Tuple[Expr, ...] = ()
    init: Optional[Initializer] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Typedef:
    type: TypeSpec
    name: str
    dims: Tuple[Expr, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Param:
    type: TypeSpec
    name: str
    dims: Tuple[Expr, ...] = ()
    by_ref: bool = False


# Statements ------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    items: Tuple[Any, ...]


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr


@dataclass(frozen=True)
class EmptyStmt:
    pass


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Any
    other: Any = None


@dataclass(frozen=True)
class While:
    cond: Expr
    body: Any


@dataclass(frozen=True)
class DoWhile:
    body: Any
    cond: Expr


@dataclass(frozen=True)
class For:
    init: Optional[Expr]
    cond: Optional[Expr]
    step: Optional[Expr]
    body: Any


@dataclass(frozen=True)
class Iterate:
    """``for (i : int[lo,hi]) body``"""
    var: str
    type: TypeSpec
    body: Any


@dataclass(frozen=True)
class Return:
    value: Optional[Expr] = None


@dataclass(frozen=True)
class Function:
    return_type: TypeSpec
    name: str
    params: Tuple[Param, ...]
    body: Block
    line: int = field(default=0, compare=False)


Declaration = Union[Variable, Typedef, Function]


# =============================================================================
# Automata
# =============================================================================

@dataclass(frozen=True)
class Location:
    name: str
    kind: str = 'normal'            # normal | urgent | committed
    initial: bool = False
    invariant: Optional[Expr] = None
    rate: Optional[Expr] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Sync:
    channel: str
    direction: str                  # '!' send, '?' receive
    index: Optional[Expr] = None


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    guard: Optional[Expr] = None
    sync: Optional[Sync] = None
    updates: Tuple[Expr, ...] = ()
    weight: Optional[Expr] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Automaton:
    name: str
    params: Tuple[Param, ...] = ()
    declarations: Tuple[Declaration, ...] = ()
    locations: Tuple[Location, ...] = ()
    branchpoints: Tuple[str, ...] = ()
    edges: Tuple[Edge, ...] = ()
    line: int = field(default=0, compare=False)

    @property
    def initial(self) -> Optional[str]:
        for location in self.locations:
            if location.initial:
                return location.name
        return None

    def location(self, name: str) -> Optional[Location]:
        for location in self.locations:
            if location.name == name:
                return location
        return None

    def functions(self) -> Dict[str, Function]:
        return {d.name: d for d in self.declarations if isinstance(d, Function)}


@dataclass(frozen=True)
class Instance:
    """``instance Name = Template(args);``"""
    name: str
    template: str
    args: Tuple[Expr, ...] = ()


# =============================================================================
# Queries
# =============================================================================

@dataclass(frozen=True)
class ProbabilityQuery:
    bound: Expr
    target: Expr


@dataclass(frozen=True)
class SimulationQuery:
    runs: int
    bound: Expr
    expressions: Tuple[Expr, ...]


@dataclass(frozen=True)
class InvariantQuery:
    expr: Expr


@dataclass(frozen=True)
class ReachabilityQuery:
    expr: Expr


@dataclass(frozen=True)
class LeadsToQuery:
    premise: Expr
    conclusion: Expr


@dataclass(frozen=True)
class DeadlockFreedomQuery:
    pass


Query = Union[ProbabilityQuery, SimulationQuery, InvariantQuery,
              ReachabilityQuery, LeadsToQuery, DeadlockFreedomQuery]


@dataclass(frozen=True)
class NamedQuery:
    name: Optional[str]
    text: str


@dataclass(frozen=True)
class LineageEntry:
    """Maps a model element (``Automaton`` or ``Automaton.member``) to a template element."""
    element: str
    template: str
    bracket: str        # 'square' | 'angle'


# =============================================================================
# Network
# =============================================================================

@dataclass(frozen=True)
class ModelNetwork:
    declarations: Tuple[Declaration, ...] = ()
    automata: Tuple[Automaton, ...] = ()
    instances: Tuple[Instance, ...] = ()
    system: Optional[Tuple[str, ...]] = None
    queries: Tuple[NamedQuery, ...] = ()
    lineage: Tuple[LineageEntry, ...] = ()
    bindings: Tuple[Tuple[str, Any], ...] = ()
    source: str = field(default='<model>', compare=False)

    def automaton(self, name: str) -> Optional[Automaton]:
        for automaton in self.automata:
            if automaton.name == name:
                return automaton
        return None

    def functions(self) -> Dict[str, Function]:
        return {d.name: d for d in self.declarations if isinstance(d, Function)}

    def variables(self) -> Dict[str, Variable]:
        return {d.name: d for d in self.declarations if isinstance(d, Variable)}

    def channels(self) -> Dict[str, Variable]:
        return {d.name: d for d in self.declarations
                if isinstance(d, Variable) and d.type.kind == 'chan'}

    def slots(self) -> Tuple[str, ...]:
        """Names of all parameter slots referenced by global initializers."""
        found = []
        for declaration in self.declarations:
            if isinstance(declaration, Variable) and declaration.init is not None:
                _collect_slots(declaration.init, found)
        return tuple(dict.fromkeys(found))

    def process_names(self) -> Tuple[str, ...]:
        """Instantiated process names in system order."""
        if self.system is not None:
            return self.system
        explicit = {inst.template for inst in self.instances}
        names = [a.name for a in self.automata if not a.params and a.name not in explicit]
        names.extend(inst.name for inst in self.instances)
        return tuple(names)

    def binding_map(self) -> Dict[str, Any]:
        return dict(self.bindings)

    def bind(self, values: Dict[str, Any]) -> 'ModelNetwork':
        """Return a copy with slot values attached (merged over existing ones)."""
        merged = dict(self.bindings)
        for key, value in values.items():
            merged[key] = _freeze(value)
        return replace(self, bindings=tuple(sorted(merged.items())))


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if hasattr(value, 'tolist'):
        return _freeze(value.tolist())
    return value


def _collect_slots(node: Any, found: list) -> None:
    if isinstance(node, Slot):
        found.append(node.name)
    elif isinstance(node, ListInit):
        for item in node.items:
            _collect_slots(item, found)
    elif hasattr(node, '__dataclass_fields__'):
        for name in node.__dataclass_fields__:
            _collect_slots(getattr(node, name), found)
    elif isinstance(node, tuple):
        for item in node:
            _collect_slots(item, found)
