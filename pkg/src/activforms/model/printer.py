"""Pretty printer for networks and queries; output re-parses to an equal network."""

from typing import Any, List

from src.activforms.model.network import (
    Assign, Automaton, Binary, Block, Call, DeadlockFreedomQuery, DoWhile, Edge, EmptyStmt,
    ExprStmt, Field, For, Function, If, Index, Instance, InvariantQuery, Iterate,
    LeadsToQuery, ListInit, Literal, Location, ModelNetwork, Name, Param, ProbabilityQuery,
    Quantifier, ReachabilityQuery, Return, SimulationQuery, Slot, Ternary, TypeSpec,
    Typedef, Unary, Variable, While,
)

_BINARY_LEVEL = {
    'imply': 3, '||': 4, '&&': 5, '|': 6, '^': 7, '&': 8,
    '==': 9, '!=': 9, '<': 10, '<=': 10, '>': 10, '>=': 10,
    '<?': 11, '>?': 11, '<<': 12, '>>': 12,
    '+': 13, '-': 13, '*': 14, '/': 14, '%': 14,
}
_ASSIGN, _TERNARY, _UNARY, _POSTFIX, _ATOM = 1, 2, 15, 16, 17


def _level(expr: Any) -> int:
    if isinstance(expr, Assign):
        return _ASSIGN
    if isinstance(expr, Ternary):
        return _TERNARY
    if isinstance(expr, Binary):
        return _BINARY_LEVEL[expr.op]
    if isinstance(expr, Quantifier):
        return _UNARY
    if isinstance(expr, Unary):
        return _POSTFIX if expr.op.endswith('post') else _UNARY
    if isinstance(expr, (Index, Field, Call)):
        return _POSTFIX
    if isinstance(expr, Literal) and isinstance(expr.value, (int, float)) \
            and not isinstance(expr.value, bool) and expr.value < 0:
        return _UNARY
    return _ATOM


def _wrap(expr: Any, minimum: int) -> str:
    text = format_expr(expr)
    return f"({text})" if _level(expr) < minimum else text


def format_expr(expr: Any) -> str:
    """Render an expression with the fewest parentheses that preserve its structure."""
    if isinstance(expr, Literal):
        if isinstance(expr.value, bool):
            return 'true' if expr.value else 'false'
        return repr(expr.value)
    if isinstance(expr, Name):
        return expr.name
    if isinstance(expr, Slot):
        return f"${expr.name}"
    if isinstance(expr, Index):
        return f"{_wrap(expr.base, _POSTFIX)}[{format_expr(expr.index)}]"
    if isinstance(expr, Field):
        return f"{_wrap(expr.base, _POSTFIX)}.{expr.name}"
    if isinstance(expr, Call):
        args = ', '.join(_wrap(a, _ASSIGN) for a in expr.args)
        return f"{_wrap(expr.func, _POSTFIX)}({args})"
    if isinstance(expr, Unary):
        if expr.op == '++post':
            return f"{_wrap(expr.operand, _POSTFIX)}++"
        if expr.op == '--post':
            return f"{_wrap(expr.operand, _POSTFIX)}--"
        symbol = {'++pre': '++', '--pre': '--'}.get(expr.op, expr.op)
        operand = _wrap(expr.operand, _UNARY)
        # keep "- -x" from lexing as "--x"
        sep = ' ' if operand[:1] in ('-', '+') else ''
        return f"{symbol}{sep}{operand}"
    if isinstance(expr, Binary):
        level = _BINARY_LEVEL[expr.op]
        return f"{_wrap(expr.left, level)} {expr.op} {_wrap(expr.right, level + 1)}"
    if isinstance(expr, Ternary):
        return (f"{_wrap(expr.cond, _TERNARY + 1)} ? {_wrap(expr.then, _ASSIGN)} : "
                f"{_wrap(expr.other, _TERNARY)}")
    if isinstance(expr, Assign):
        return f"{_wrap(expr.target, _POSTFIX)} {expr.op} {_wrap(expr.value, _ASSIGN)}"
    if isinstance(expr, Quantifier):
        return f"{expr.kind} ({expr.var} : {format_type(expr.type)}) {_wrap(expr.body, _UNARY)}"
    raise TypeError(f"Not an expression: {expr!r}")


def format_type(spec: TypeSpec) -> str:
    prefix = ''.join(f"{p} " for p in spec.prefixes)
    if spec.kind == 'int' and spec.range is not None:
        low, high = spec.range
        return f"{prefix}int[{format_expr(low)},{format_expr(high)}]"
    if spec.kind == 'named':
        return f"{prefix}{spec.name}"
    if spec.kind == 'scalar':
        return f"{prefix}scalar[{format_expr(spec.size)}]"
    if spec.kind == 'struct':
        members = ' '.join(f"{format_type(f.type)} {f.name}{_dims(f.dims)};" for f in spec.fields)
        return f"{prefix}struct {{ {members} }}"
    return f"{prefix}{spec.kind}"


def _dims(dims) -> str:
    return ''.join(f"[{format_expr(d)}]" for d in dims)


def format_initializer(init: Any) -> str:
    if isinstance(init, ListInit):
        return '{' + ', '.join(format_initializer(i) for i in init.items) + '}'
    return format_expr(init)


def _format_param(param: Param) -> str:
    ref = '&' if param.by_ref else ''
    return f"{format_type(param.type)} {ref}{param.name}{_dims(param.dims)}"


def _format_statement(stmt: Any, indent: str, out: List[str]) -> None:
    inner = indent + '    '
    if isinstance(stmt, Block):
        out.append(f"{indent}{{")
        for item in stmt.items:
            _format_statement(item, inner, out)
        out.append(f"{indent}}}")
    elif isinstance(stmt, (Variable, Typedef)):
        out.append(indent + _format_declaration(stmt))
    elif isinstance(stmt, ExprStmt):
        out.append(f"{indent}{format_expr(stmt.expr)};")
    elif isinstance(stmt, EmptyStmt):
        out.append(f"{indent};")
    elif isinstance(stmt, If):
        out.append(f"{indent}if ({format_expr(stmt.cond)})")
        _format_body(stmt.then, indent, out)
        if stmt.other is not None:
            out.append(f"{indent}else")
            _format_body(stmt.other, indent, out)
    elif isinstance(stmt, While):
        out.append(f"{indent}while ({format_expr(stmt.cond)})")
        _format_body(stmt.body, indent, out)
    elif isinstance(stmt, DoWhile):
        out.append(f"{indent}do")
        _format_body(stmt.body, indent, out)
        out.append(f"{indent}while ({format_expr(stmt.cond)});")
    elif isinstance(stmt, For):
        parts = [format_expr(p) if p is not None else '' for p in (stmt.init, stmt.cond, stmt.step)]
        out.append(f"{indent}for ({parts[0]}; {parts[1]}; {parts[2]})")
        _format_body(stmt.body, indent, out)
    elif isinstance(stmt, Iterate):
        out.append(f"{indent}for ({stmt.var} : {format_type(stmt.type)})")
        _format_body(stmt.body, indent, out)
    elif isinstance(stmt, Return):
        value = f" {format_expr(stmt.value)}" if stmt.value is not None else ''
        out.append(f"{indent}return{value};")
    else:
        raise TypeError(f"Not a statement: {stmt!r}")


def _format_body(stmt: Any, indent: str, out: List[str]) -> None:
    """Block bodies keep the enclosing indent; single statements are indented one level."""
    if isinstance(stmt, Block):
        _format_statement(stmt, indent, out)
    else:
        _format_statement(stmt, indent + "    ", out)


def _format_declaration(decl: Any) -> str:
    if isinstance(decl, Variable):
        init = f" = {format_initializer(decl.init)}" if decl.init is not None else ''
        return f"{format_type(decl.type)} {decl.name}{_dims(decl.dims)}{init};"
    if isinstance(decl, Typedef):
        return f"typedef {format_type(decl.type)} {decl.name}{_dims(decl.dims)};"
    raise TypeError(f"Not a declaration: {decl!r}")


def _format_declarations(declarations, indent: str, out: List[str]) -> None:
    for decl in declarations:
        if isinstance(decl, Function):
            params = ', '.join(_format_param(p) for p in decl.params)
            out.append(f"{indent}{format_type(decl.return_type)} {decl.name}({params})")
            _format_statement(decl.body, indent, out)
        else:
            out.append(indent + _format_declaration(decl))


def _format_location(location: Location) -> str:
    flags = ''.join(f" {f}" for f in (['initial'] if location.initial else [])
                    + ([location.kind] if location.kind != 'normal' else []))
    items = []
    if location.invariant is not None:
        items.append(f"invariant {format_expr(location.invariant)};")
    if location.rate is not None:
        items.append(f"rate {format_expr(location.rate)};")
    if not items:
        return f"location {location.name}{flags};"
    return f"location {location.name}{flags} {{ {' '.join(items)} }}"


def _format_edge(edge: Edge) -> str:
    items = []
    if edge.guard is not None:
        items.append(f"guard {format_expr(edge.guard)};")
    if edge.sync is not None:
        index = f"[{format_expr(edge.sync.index)}]" if edge.sync.index is not None else ''
        items.append(f"sync {edge.sync.channel}{index}{edge.sync.direction};")
    if edge.updates:
        items.append(f"update {', '.join(format_expr(u) for u in edge.updates)};")
    if edge.weight is not None:
        items.append(f"weight {format_expr(edge.weight)};")
    if not items:
        return f"edge {edge.source} -> {edge.target};"
    return f"edge {edge.source} -> {edge.target} {{ {' '.join(items)} }}"


def _format_automaton(automaton: Automaton, out: List[str]) -> None:
    params = ''
    if automaton.params:
        params = '(' + ', '.join(_format_param(p) for p in automaton.params) + ')'
    out.append(f"automaton {automaton.name}{params} {{")
    _format_declarations(automaton.declarations, '    ', out)
    for location in automaton.locations:
        out.append('    ' + _format_location(location))
    for name in automaton.branchpoints:
        out.append(f"    branchpoint {name};")
    for edge in automaton.edges:
        out.append('    ' + _format_edge(edge))
    out.append('}')


def _format_instance(instance: Instance) -> str:
    args = ', '.join(format_expr(a) for a in instance.args)
    return f"instance {instance.name} = {instance.template}({args});"


def format_model(network: ModelNetwork) -> str:
    """Render a network in the container format."""
    out: List[str] = []
    _format_declarations(network.declarations, '', out)
    for automaton in network.automata:
        out.append('')
        _format_automaton(automaton, out)
    if network.instances:
        out.append('')
        out.extend(_format_instance(i) for i in network.instances)
    if network.system is not None:
        out.append(f"system {', '.join(network.system)};")
    for query in network.queries:
        name = f"{query.name} " if query.name else ''
        text = query.text.replace('\\', '\\\\').replace('"', '\\"')
        out.append(f'query {name}"{text}";')
    if network.lineage:
        out.append('lineage {')
        for entry in network.lineage:
            ref = f"[{entry.template}]" if entry.bracket == 'square' else f"<{entry.template}>"
            out.append(f"    {entry.element} = {ref};")
        out.append('}')
    return '\n'.join(out) + '\n'


def format_query(query: Any) -> str:
    if isinstance(query, ProbabilityQuery):
        return f"Pr [<={format_expr(query.bound)}](<> {format_expr(query.target)})"
    if isinstance(query, SimulationQuery):
        exprs = ', '.join(format_expr(e) for e in query.expressions)
        return f"simulate {query.runs}[<={format_expr(query.bound)}]{{{exprs}}}"
    if isinstance(query, DeadlockFreedomQuery):
        return "A[] no deadlock"
    if isinstance(query, InvariantQuery):
        return f"A[] {format_expr(query.expr)}"
    if isinstance(query, ReachabilityQuery):
        return f"E<> {format_expr(query.expr)}"
    if isinstance(query, LeadsToQuery):
        return f"{format_expr(query.premise)} --> {format_expr(query.conclusion)}"
    raise TypeError(f"Not a query: {query!r}")
