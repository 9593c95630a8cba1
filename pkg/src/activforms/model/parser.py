#!/usr/bin/env python
"""
Parser for the model container format and for verification queries.

USAGE EXAMPLES:
    network = parse_model(Path('models/quality/packet_loss.ta').read_text())
    query = parse_query('Pr [<=1](<>Network.PacketLoss)')
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, List, Optional, Union

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken

from src.activforms.model.errors import DuplicateDeclaration, ModelSyntaxError, UnknownChannel
from src.activforms.model.grammar import GRAMMAR
from src.activforms.model.network import (
    Assign, Automaton, Binary, Block, Call, DeadlockFreedomQuery, DoWhile, Edge, EmptyStmt,
    ExprStmt, Field, For, Function, If, Index, Instance, InvariantQuery, Iterate,
    LeadsToQuery, LineageEntry, ListInit, Literal, Location, ModelNetwork, Name, NamedQuery,
    Param, ProbabilityQuery, Quantifier, Query, ReachabilityQuery, Return, SimulationQuery,
    Slot, Sync, Ternary, TypeSpec, Typedef, Unary, Variable, While,
)

logger = logging.getLogger(__name__)

_OP_ALIASES = {'or': '||', 'and': '&&', 'not': '!', ':=': '='}


@lru_cache(maxsize=1)
def _parser() -> Lark:
    return Lark(GRAMMAR, start=['model', 'query'], parser='lalr',
                propagate_positions=True, maybe_placeholders=True)


def _line(tree: Any) -> int:
    meta = getattr(tree, 'meta', None)
    return getattr(meta, 'line', 0) if meta is not None and not getattr(meta, 'empty', True) else 0


class ModelBuilder:
    """Turns lark parse trees into network nodes, one method per grammar rule."""

    def build(self, node: Any) -> Any:
        if node is None:
            return None
        if isinstance(node, Token):
            return str(node)
        method = getattr(self, str(node.data))
        return method(node, node.children)

    def _all(self, children: Iterable[Any]) -> List[Any]:
        return [self.build(c) for c in children]

    # ---------------------------------------------------------------- top level

    def model(self, tree, children):
        declarations, automata, instances, queries, lineage = [], [], [], [], []
        system = None
        for item in children:
            data = str(item.data)
            built = self.build(item)
            if data == 'var_decl':
                declarations.extend(built)
            elif data in ('typedef_decl', 'function'):
                declarations.append(built)
            elif data == 'automaton':
                automata.append(built)
            elif data == 'instance':
                instances.append(built)
            elif data == 'system':
                system = built
            elif data == 'query_decl':
                queries.append(built)
            elif data == 'lineage':
                lineage.extend(built)
        return ModelNetwork(declarations=tuple(declarations), automata=tuple(automata),
                            instances=tuple(instances), system=system,
                            queries=tuple(queries), lineage=tuple(lineage))

    def var_decl(self, tree, children):
        type_spec = self.build(children[0])
        return [self._var_item(type_spec, item) for item in children[1:]]

    def _var_item(self, type_spec: TypeSpec, item: Tree) -> Variable:
        name, *dims, init = item.children
        return Variable(type=type_spec, name=str(name), dims=tuple(self._all(dims)),
                        init=self.build(init), line=_line(item))

    def dim(self, tree, children):
        return self.build(children[0])

    def list_init(self, tree, children):
        return ListInit(tuple(self._all(children)))

    def typedef_decl(self, tree, children):
        type_spec, name, *dims = children
        return Typedef(type=self.build(type_spec), name=str(name),
                       dims=tuple(self._all(dims)), line=_line(tree))

    def type_spec(self, tree, children):
        *prefixes, base = children
        base_spec = self.build(base)
        names = tuple(str(p.children[0]) for p in prefixes)
        return TypeSpec(kind=base_spec.kind, prefixes=names, name=base_spec.name,
                        range=base_spec.range, fields=base_spec.fields, size=base_spec.size)

    def int_type(self, tree, children):
        bounds = children[0]
        if bounds is None:
            return TypeSpec('int')
        low, high = self._all(bounds.children)
        return TypeSpec('int', range=(low, high))

    def bool_type(self, tree, children):
        return TypeSpec('bool')

    def clock_type(self, tree, children):
        return TypeSpec('clock')

    def chan_type(self, tree, children):
        return TypeSpec('chan')

    def double_type(self, tree, children):
        return TypeSpec('double')

    def void_type(self, tree, children):
        return TypeSpec('void')

    def named_type(self, tree, children):
        return TypeSpec('named', name=str(children[0]))

    def scalar_type(self, tree, children):
        return TypeSpec('scalar', size=self.build(children[0]))

    def struct_type(self, tree, children):
        fields = []
        for field_decl in children:
            field_type = self.build(field_decl.children[0])
            name, dims = None, []
            for child in field_decl.children[1:]:
                if isinstance(child, Token):
                    if name is not None:
                        fields.append(Variable(field_type, name, tuple(dims)))
                    name, dims = str(child), []
                else:
                    dims.append(self.build(child))
            fields.append(Variable(field_type, name, tuple(dims)))
        return TypeSpec('struct', fields=tuple(fields))

    def function(self, tree, children):
        return_type, name, params, body = children
        return Function(return_type=self.build(return_type), name=str(name),
                        params=tuple(self.build(params) or ()), body=self.build(body),
                        line=_line(tree))

    def params(self, tree, children):
        return self._all(children)

    def param(self, tree, children):
        type_spec, ref, name, *dims = children
        return Param(type=self.build(type_spec), name=str(name),
                     dims=tuple(self._all(dims)), by_ref=ref is not None)

    # ---------------------------------------------------------------- statements

    def block(self, tree, children):
        items = []
        for child in children:
            built = self.build(child)
            if isinstance(built, list):
                items.extend(built)
            else:
                items.append(built)
        return Block(tuple(items))

    def expr_stmt(self, tree, children):
        return ExprStmt(self.build(children[0]))

    def empty_stmt(self, tree, children):
        return EmptyStmt()

    def if_stmt(self, tree, children):
        cond, then, other = self._all(children)
        return If(cond, then, other)

    def while_stmt(self, tree, children):
        cond, body = self._all(children)
        return While(cond, body)

    def do_stmt(self, tree, children):
        body, cond = self._all(children)
        return DoWhile(body, cond)

    def for_stmt(self, tree, children):
        init, cond, step, body = self._all(children)
        return For(init, cond, step, body)

    def iterate_stmt(self, tree, children):
        name, type_spec, body = children
        return Iterate(str(name), self.build(type_spec), self.build(body))

    def return_stmt(self, tree, children):
        return Return(self.build(children[0]))

    # ---------------------------------------------------------------- automata

    def automaton(self, tree, children):
        name = str(children[0])
        params: tuple = ()
        declarations, locations, branchpoints, edges = [], [], [], []
        for child in children[1:]:
            data = str(child.data)
            if data == 'automaton_params':
                params = tuple(self.build(child.children[0]) or ())
            elif data == 'var_decl':
                declarations.extend(self.build(child))
            elif data in ('typedef_decl', 'function'):
                declarations.append(self.build(child))
            elif data == 'location':
                locations.append(self.build(child))
            elif data == 'branchpoint':
                branchpoints.append(str(child.children[0]))
            elif data == 'edge':
                edges.append(self.build(child))
        return Automaton(name=name, params=params, declarations=tuple(declarations),
                         locations=tuple(locations), branchpoints=tuple(branchpoints),
                         edges=tuple(edges), line=_line(tree))

    def location(self, tree, children):
        name = str(children[0])
        kind, initial, invariant, rate = 'normal', False, None, None
        for child in children[1:]:
            data = str(child.data)
            if data == 'location_flag':
                flag = str(child.children[0])
                if flag == 'initial':
                    initial = True
                elif kind != 'normal' and kind != flag:
                    raise ModelSyntaxError(f"Location {name} cannot be both {kind} and {flag}",
                                           line=_line(tree))
                else:
                    kind = flag
            elif data == 'invariant':
                invariant = self.build(child.children[0])
            elif data == 'rate':
                rate = self.build(child.children[0])
        return Location(name=name, kind=kind, initial=initial, invariant=invariant,
                        rate=rate, line=_line(tree))

    def edge(self, tree, children):
        source, target = str(children[0]), str(children[1])
        guard, sync, weight = None, None, None
        updates: list = []
        for child in children[2:]:
            data = str(child.data)
            if data == 'guard':
                guard = self.build(child.children[0])
            elif data == 'sync':
                channel, index, direction = child.children
                sync = Sync(channel=str(channel), direction=str(direction.children[0]),
                            index=self.build(index))
            elif data == 'update':
                updates.extend(self._all(child.children))
            elif data == 'weight':
                weight = self.build(child.children[0])
        return Edge(source=source, target=target, guard=guard, sync=sync,
                    updates=tuple(updates), weight=weight, line=_line(tree))

    def instance(self, tree, children):
        name, template, args = children
        return Instance(str(name), str(template), tuple(self.build(args) or ()))

    def system(self, tree, children):
        return tuple(str(c) for c in children)

    def query_decl(self, tree, children):
        name, text = children
        return NamedQuery(name=str(name) if name is not None else None,
                          text=_unquote(str(text)))

    def lineage(self, tree, children):
        return self._all(children)

    def lineage_entry(self, tree, children):
        owner, member, ref = children
        element = str(owner) if member is None else f"{owner}.{member}"
        ref = str(ref)
        bracket = 'square' if ref.startswith('[') else 'angle'
        return LineageEntry(element=element, template=ref[1:-1], bracket=bracket)

    # ---------------------------------------------------------------- queries

    def probability_query(self, tree, children):
        bound, target = self._all(children)
        return ProbabilityQuery(bound, target)

    def simulation_query(self, tree, children):
        runs, bound, *expressions = children
        return SimulationQuery(int(runs), self.build(bound), tuple(self._all(expressions)))

    def deadlock_query(self, tree, children):
        return DeadlockFreedomQuery()

    def invariant_query(self, tree, children):
        return InvariantQuery(self.build(children[-1]))

    def reachability_query(self, tree, children):
        return ReachabilityQuery(self.build(children[-1]))

    def leadsto_query(self, tree, children):
        premise, conclusion = self._all(children)
        return LeadsToQuery(premise, conclusion)

    # ---------------------------------------------------------------- expressions

    def assign(self, tree, children):
        target, op, value = children
        op = str(op.children[0])
        return Assign(_OP_ALIASES.get(op, op), self.build(target), self.build(value))

    def ternary(self, tree, children):
        cond, then, other = self._all(children)
        return Ternary(cond, then, other)

    def imply(self, tree, children):
        left, right = self._all(children)
        return Binary('imply', left, right)

    def binary(self, tree, children):
        left, op, right = children
        op = str(op.children[0])
        return Binary(_OP_ALIASES.get(op, op), self.build(left), self.build(right))

    def unary(self, tree, children):
        op, operand = children
        op = str(op.children[0])
        return Unary(_OP_ALIASES.get(op, op), self.build(operand))

    def preinc(self, tree, children):
        return Unary('++pre', self.build(children[0]))

    def predec(self, tree, children):
        return Unary('--pre', self.build(children[0]))

    def postinc(self, tree, children):
        return Unary('++post', self.build(children[0]))

    def postdec(self, tree, children):
        return Unary('--post', self.build(children[0]))

    def quantifier(self, tree, children):
        kind, var, type_spec, body = children
        return Quantifier(str(kind.children[0]), str(var), self.build(type_spec), self.build(body))

    def index(self, tree, children):
        base, index = self._all(children)
        return Index(base, index)

    def field(self, tree, children):
        base, name = children
        return Field(self.build(base), str(name))

    def call(self, tree, children):
        func, args = children
        return Call(self.build(func), tuple(self.build(args) or ()))

    def args(self, tree, children):
        return self._all(children)

    def int_lit(self, tree, children):
        return Literal(int(children[0]))

    def float_lit(self, tree, children):
        return Literal(float(children[0]))

    def true_lit(self, tree, children):
        return Literal(True)

    def false_lit(self, tree, children):
        return Literal(False)

    def name(self, tree, children):
        return Name(str(children[0]))

    def slot(self, tree, children):
        return Slot(str(children[0])[1:])


def _unquote(text: str) -> str:
    body = text[1:-1]
    return body.replace('\\"', '"').replace('\\\\', '\\')


def _syntax_error(error: UnexpectedInput, source: str) -> ModelSyntaxError:
    if isinstance(error, UnexpectedToken):
        message = f"Unexpected token {str(error.token)!r}"
        expected = error.expected
    elif isinstance(error, UnexpectedCharacters):
        message = f"Unexpected character {error.char!r}"
        expected = error.allowed
    elif isinstance(error, UnexpectedEOF):
        message = "Unexpected end of input"
        expected = error.expected
    else:
        message, expected = str(error), ()
    return ModelSyntaxError(message, line=getattr(error, 'line', 0) or 0,
                            column=getattr(error, 'column', 0) or 0,
                            expected=expected or (), source=source)


def _check_unique(names: Iterable[str], what: str) -> None:
    seen = set()
    for name in names:
        if name in seen:
            raise DuplicateDeclaration(f"Duplicate {what}: {name}")
        seen.add(name)


def _resolve(network: ModelNetwork, check_channels: bool = True) -> None:
    """Structural checks that parse_model reports as hard errors."""
    global_names = [d.name for d in network.declarations]
    _check_unique(global_names, 'global declaration')
    _check_unique([a.name for a in network.automata], 'automaton')
    _check_unique([i.name for i in network.instances], 'instance')

    global_channels = {name for name, var in network.channels().items()}
    for automaton in network.automata:
        _check_unique([loc.name for loc in automaton.locations] + list(automaton.branchpoints),
                      f'location in {automaton.name}')
        local_names = [p.name for p in automaton.params] + [d.name for d in automaton.declarations]
        _check_unique(local_names, f'declaration in {automaton.name}')
        channels = set(global_channels)
        channels.update(d.name for d in automaton.declarations
                        if isinstance(d, Variable) and d.type.kind == 'chan')
        channels.update(p.name for p in automaton.params if p.type.kind == 'chan')
        for edge in automaton.edges if check_channels else ():
            if edge.sync is not None and edge.sync.channel not in channels:
                raise UnknownChannel(
                    f"{automaton.name}: edge {edge.source} -> {edge.target} "
                    f"synchronizes on undeclared channel '{edge.sync.channel}'")


def parse_model(text: str, source: str = '<model>', closed: bool = True) -> ModelNetwork:
    """
    Parse a model document into a resolved network.

    Args:
        text: Complete model document
        source: Name used in error messages
        closed: Require every synchronized channel to be declared; stubs
            that use the channels of the model they complete pass False

    Returns:
        ModelNetwork

    Raises:
        ModelSyntaxError, DuplicateDeclaration, UnknownChannel
    """
    try:
        tree = _parser().parse(text, start='model')
    except UnexpectedInput as e:
        raise _syntax_error(e, source) from None
    network = ModelBuilder().build(tree)
    _resolve(network, check_channels=closed)
    logger.debug(f"Parsed {source}: {len(network.automata)} automata, "
                 f"{len(network.declarations)} global declarations")
    return ModelNetwork(declarations=network.declarations, automata=network.automata,
                        instances=network.instances, system=network.system,
                        queries=network.queries, lineage=network.lineage, source=source)


def load_model(path: Union[str, Path], closed: bool = True) -> ModelNetwork:
    """Read and parse a model file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    return parse_model(path.read_text(), source=str(path), closed=closed)


def parse_query(text: str) -> Query:
    """Parse a single query string."""
    try:
        tree = _parser().parse(text, start='query')
    except UnexpectedInput as e:
        raise _syntax_error(e, '<query>') from None
    return ModelBuilder().build(tree)


def parse_expression(text: str):
    """Parse a bare expression (used by tests and the CLI)."""
    query = parse_query(f"E<> {text}")
    return query.expr


def merge_networks(model: ModelNetwork, *stubs: ModelNetwork) -> ModelNetwork:
    """
    Compose a model with stub networks into one closed network.

    Global declarations and automata are concatenated; a name declared twice
    is a DuplicateDeclaration. The model's system line, if any, is extended
    with the stubs' processes.
    """
    declarations = list(model.declarations)
    automata = list(model.automata)
    instances = list(model.instances)
    queries = list(model.queries)
    lineage = list(model.lineage)
    system: Optional[list] = list(model.system) if model.system is not None else None
    for stub in stubs:
        declarations.extend(stub.declarations)
        automata.extend(stub.automata)
        instances.extend(stub.instances)
        queries.extend(stub.queries)
        if system is not None:
            system.extend(stub.process_names())
    merged = ModelNetwork(declarations=tuple(declarations), automata=tuple(automata),
                          instances=tuple(instances),
                          system=tuple(system) if system is not None else None,
                          queries=tuple(queries), lineage=tuple(lineage),
                          bindings=model.bindings,
                          source='+'.join([model.source] + [s.source for s in stubs]))
    _resolve(merged)
    return merged
