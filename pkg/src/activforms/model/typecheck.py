#!/usr/bin/env python
"""
Static checks for model networks.

typecheck_model never raises on model problems: every problem becomes a
Diagnostic. It compiles each declaration, guard, invariant, update and query
with the evaluator's compiler, so anything that type-checks here also loads
in the engine.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List

from src.activforms.model.errors import ModelError
from src.activforms.model.evaluator import (
    ExpressionCompiler, ProcessInfo, Scope, Symbol,
)
from src.activforms.model.network import Automaton, Call, Function, ModelNetwork, Name
from src.activforms.model.types import (
    ArrayType, ChanType, default_value, is_numeric,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Diagnostic:
    message: str
    where: str = ''
    line: int = 0
    severity: str = 'error'

    def __str__(self):
        position = f":{self.line}" if self.line else ''
        where = f"{self.where}{position}: " if self.where else ''
        return f"{self.severity}: {where}{self.message}"


class TypeChecker:
    """Collects diagnostics for one network."""

    def __init__(self, network: ModelNetwork, allow_random: bool = True):
        self.network = network
        self.compiler = ExpressionCompiler(bindings=network.binding_map(), allow_random=allow_random)
        self.diagnostics: List[Diagnostic] = []
        self.global_scope = Scope()
        self.template_scopes: Dict[str, Scope] = {}
        self.logger = logging.getLogger(__name__)

    def report(self, message: str, where: str = '', line: int = 0) -> None:
        self.diagnostics.append(Diagnostic(message, where, line))

    def _try(self, where: str, line: int, action, *args) -> Any:
        try:
            return action(*args)
        except ModelError as e:
            self.report(str(e), where, line)
        except (TypeError, ValueError, KeyError, IndexError, ZeroDivisionError) as e:
            self.report(f"Cannot evaluate: {e}", where, line)
        return None

    # ---------------------------------------------------------------- passes

    def check(self) -> List[Diagnostic]:
        self._check_declarations(self.network.declarations, self.global_scope, '', 'global')
        for automaton in self.network.automata:
            self._check_automaton(automaton)
        self._check_system()
        self._check_queries()
        return self.diagnostics

    def _check_declarations(self, declarations, scope: Scope, qualifier: str, where: str) -> None:
        functions = []
        for decl in declarations:
            symbol = self._try(f"{where} {decl.name}", decl.line, self.compiler.declare,
                               decl, scope, qualifier)
            if isinstance(decl, Function) and symbol is not None:
                functions.append((decl, symbol))
        for decl, symbol in functions:
            self._try(f"function {decl.name}", decl.line, self.compiler.compile_function_body,
                      symbol, scope)

    def _check_automaton(self, automaton: Automaton) -> None:
        where = f"automaton {automaton.name}"
        scope = Scope(self.global_scope, owner=automaton.name)
        self.template_scopes[automaton.name] = scope
        for param in automaton.params:
            param_type = self._try(where, automaton.line, self.compiler.resolve,
                                   param.type, param.dims, scope)
            if param_type is None:
                continue
            if isinstance(param_type, ChanType):
                scope.define(Symbol(param.name, 'chan', param_type, value=0))
            else:
                scope.define(Symbol(param.name, 'const', param_type, value=default_value(param_type)))
        self._check_declarations(automaton.declarations, scope, f"{automaton.name}.", where)

        initials = [loc.name for loc in automaton.locations if loc.initial]
        if len(initials) != 1:
            self.report(f"expected exactly one initial location, found {len(initials)}",
                        where, automaton.line)
        nodes = {loc.name for loc in automaton.locations} | set(automaton.branchpoints)
        for location in automaton.locations:
            loc_where = f"{automaton.name}.{location.name}"
            if location.invariant is not None:
                self._try(loc_where, location.line, self.compiler.condition, location.invariant, scope)
            if location.rate is not None:
                compiled = self._try(loc_where, location.line, self.compiler.expression,
                                     location.rate, scope)
                if compiled is not None and not is_numeric(compiled[1]):
                    self.report(f"rate must be numeric, got {compiled[1]}", loc_where, location.line)
        for edge in automaton.edges:
            self._check_edge(automaton, edge, scope, nodes)
        self._check_branchpoints(automaton, scope)

    def _check_edge(self, automaton: Automaton, edge, scope: Scope, nodes) -> None:
        where = f"{automaton.name}: {edge.source} -> {edge.target}"
        for endpoint in (edge.source, edge.target):
            if endpoint not in nodes:
                self.report(f"edge endpoint '{endpoint}' does not exist", where, edge.line)
        if edge.guard is not None:
            self._try(where, edge.line, self.compiler.condition, edge.guard, scope)
        if edge.sync is not None:
            symbol = scope.lookup(edge.sync.channel)
            if symbol is None or symbol.kind != 'chan':
                self.report(f"'{edge.sync.channel}' is not a channel", where, edge.line)
            elif isinstance(symbol.type, ArrayType) and edge.sync.index is None:
                self.report(f"channel array '{edge.sync.channel}' needs an index", where, edge.line)
            elif edge.sync.index is not None:
                self._try(where, edge.line, self.compiler.expression, edge.sync.index, scope)
            if edge.source in automaton.branchpoints:
                self.report("edges leaving a branch point cannot synchronize", where, edge.line)
        for update in edge.updates:
            self._try(where, edge.line, self.compiler.expression, update, scope)
        if edge.weight is not None:
            compiled = self._try(where, edge.line, self.compiler.expression, edge.weight, scope)
            if compiled is not None and not is_numeric(compiled[1]):
                self.report(f"branch weight must be numeric, got {compiled[1]}", where, edge.line)

    def _check_branchpoints(self, automaton: Automaton, scope: Scope) -> None:
        for branchpoint in automaton.branchpoints:
            where = f"{automaton.name}.{branchpoint}"
            edges = [e for e in automaton.edges if e.source == branchpoint]
            if not edges:
                self.report("branch point has no outgoing edges", where, automaton.line)
                continue
            weighted = [e for e in edges if e.weight is not None]
            if weighted and len(weighted) != len(edges):
                self.report("either all or none of the edges leaving a branch point carry weights",
                            where, edges[0].line)
                continue
            if not weighted:
                continue
            if not all(_is_constant(e.weight, scope) for e in weighted):
                continue  # state-dependent weights are checked at run time
            try:
                total = sum(self.compiler.constant(e.weight, scope) for e in weighted)
            except ModelError:
                continue
            if total <= 0:
                self.report(f"branch weights must sum to a positive value, got {total}",
                            where, edges[0].line)

    def _check_system(self) -> None:
        names = {a.name for a in self.network.automata}
        for instance in self.network.instances:
            template = self.network.automaton(instance.template)
            if template is None:
                self.report(f"unknown template '{instance.template}'", f"instance {instance.name}")
                continue
            if len(instance.args) != len(template.params):
                self.report(f"{instance.template} takes {len(template.params)} argument(s), "
                            f"got {len(instance.args)}", f"instance {instance.name}")
            for arg in instance.args:
                self._try(f"instance {instance.name}", 0, self.compiler.expression,
                          arg, self.global_scope)
            names.add(instance.name)
        for name in self.network.system or ():
            if name not in names:
                self.report(f"unknown process '{name}'", 'system')
            else:
                automaton = self.network.automaton(name)
                if automaton is not None and automaton.params:
                    self.report(f"template '{name}' needs an instance declaration", 'system')

    def query_scope(self) -> Scope:
        """Global scope extended with one symbol per process."""
        scope = Scope(self.global_scope)
        for index, name in enumerate(self.network.process_names()):
            automaton = self.network.automaton(name)
            if automaton is None:
                instance = next((i for i in self.network.instances if i.name == name), None)
                automaton = self.network.automaton(instance.template) if instance else None
            if automaton is None:
                continue
            locations = {loc.name: i for i, loc in enumerate(automaton.locations)}
            process_scope = self.template_scopes.get(automaton.name, Scope(self.global_scope))
            scope.define(Symbol(name, 'process', value=ProcessInfo(name, index, locations, process_scope)))
        return scope

    def _check_queries(self) -> None:
        if not self.network.queries:
            return
        from src.activforms.model.parser import parse_query
        scope = self.query_scope()
        for named in self.network.queries:
            where = f"query {named.name or named.text}"
            query = self._try(where, 0, parse_query, named.text)
            if query is None:
                continue
            self._check_query(query, scope, where)

    def _check_query(self, query, scope: Scope, where: str) -> None:
        for name in ('expr', 'target', 'premise', 'conclusion'):
            expr = getattr(query, name, None)
            if expr is not None:
                self._try(where, 0, self.compiler.condition, expr, scope)
        bound = getattr(query, 'bound', None)
        if bound is not None:
            value = self._try(where, 0, self.compiler.constant, bound, scope)
            if value is not None and value <= 0:
                self.report(f"time bound must be positive, got {value}", where)
        for expr in getattr(query, 'expressions', ()):
            compiled = self._try(where, 0, self.compiler.expression, expr, scope)
            if compiled is not None and not is_numeric(compiled[1]):
                self.report(f"monitored expression must be numeric, got {compiled[1]}", where)
        runs = getattr(query, 'runs', None)
        if runs is not None and runs < 1:
            self.report(f"number of runs must be at least 1, got {runs}", where)


def typecheck_model(network: ModelNetwork, allow_random: bool = True) -> List[Diagnostic]:
    """
    Type-check a network.

    Args:
        network: Parsed network (parameter slots must be bound)
        allow_random: Whether random()/random_normal() are legal

    Returns:
        List of diagnostics; empty when the network is well-typed
    """
    diagnostics = TypeChecker(network, allow_random=allow_random).check()
    if diagnostics:
        logger.debug(f"{network.source}: {len(diagnostics)} diagnostic(s)")
    return diagnostics


def _is_constant(expr: Any, scope: Scope) -> bool:
    """True when every identifier in ``expr`` names a constant."""
    if isinstance(expr, Name):
        symbol = scope.lookup(expr.name)
        return symbol is not None and symbol.kind == 'const'
    if isinstance(expr, Call):
        return False
    if hasattr(expr, '__dataclass_fields__'):
        return all(_is_constant(getattr(expr, f), scope) for f in expr.__dataclass_fields__)
    if isinstance(expr, tuple):
        return all(_is_constant(item, scope) for item in expr)
    return True
