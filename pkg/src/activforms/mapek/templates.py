#!/usr/bin/env python
"""
Validation of a feedback-loop model against the MAPE templates.

A model records in its ``lineage`` block which template element each of its
automata, locations and functions instantiates: ``[Name]`` for elements the
templates define by name, ``<Name>`` for elements a designer may rename.
Names ending in ``_I`` denote families instantiated any number of times.

Rules:
    1  a square-bracket element keeps the template's name and exists
    2  an angle-bracket element exists
    3  property bindings resolve to names of the model
    4  the members of a family are all of the family's kind
    5  every required template element is instantiated, and no lineage entry
       names an element the templates do not define
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from src.activforms.checker.errors import InstantiationError
from src.activforms.checker.suite import instantiate_property
from src.activforms.engine.semantics import CompiledNetwork
from src.activforms.model.errors import ModelError
from src.activforms.model.network import Function, ModelNetwork
from src.activforms.model.parser import merge_networks

logger = logging.getLogger(__name__)

AUTOMATON, LOCATION, FUNCTION, VARIABLE = 'automaton', 'location', 'function', 'variable'
FAMILY_SUFFIX = '_I'


@dataclass(frozen=True)
class Diagnostic:
    rule: int
    element: str
    message: str

    def __str__(self) -> str:
        return f"rule {self.rule}: {self.element}: {self.message}"


@dataclass(frozen=True)
class TemplateSet:
    """Template elements: name -> kind, split by bracket style."""
    name: str
    square: Dict[str, str] = field(default_factory=dict)
    angle: Dict[str, str] = field(default_factory=dict)
    required: Sequence[str] = ()

    def kind_of(self, template: str) -> Optional[str]:
        return self.square.get(template, self.angle.get(template))


MAPE_TEMPLATES = TemplateSet(
    name='mape',
    square={
        'Monitor': AUTOMATON, 'Analyzer': AUTOMATON, 'Planner': AUTOMATON, 'Executor': AUTOMATON,
        'Waiting': LOCATION, 'KnowledgeUpdated': LOCATION, 'AnalysisRequired': LOCATION,
        'CheckForAdaptationDone': LOCATION, 'AdaptationNeeded': LOCATION, 'Verifying': LOCATION,
        'QualityEstimatesReady': LOCATION, 'VerificationTimeExceeded': LOCATION,
        'UseFailSafeStrategy': LOCATION, 'SelectBestOption': LOCATION, 'ComposeAdaptationPlan': LOCATION,
        'BestOptionInUse': LOCATION, 'PlanCreated': LOCATION, 'PlanExecuted': LOCATION,
        'updateKnowledge': FUNCTION, 'selectBestOption': FUNCTION,
    },
    angle={
        'ElementPlanned': LOCATION, 'AdaptElement': LOCATION,
        'stepsContains': FUNCTION, 'stepsAppliedContains': FUNCTION, 'composeAdaptationOptions': FUNCTION,
        'analyze_I': FUNCTION, 'satisfactionGoal_I': FUNCTION,
    },
    required=(
        'Monitor', 'Analyzer', 'Planner', 'Executor', 'KnowledgeUpdated', 'AnalysisRequired',
        'CheckForAdaptationDone', 'AdaptationNeeded', 'Verifying', 'QualityEstimatesReady',
        'VerificationTimeExceeded', 'UseFailSafeStrategy', 'SelectBestOption', 'ComposeAdaptationPlan',
        'BestOptionInUse', 'PlanCreated', 'PlanExecuted', 'updateKnowledge', 'selectBestOption',
        'ElementPlanned', 'AdaptElement', 'stepsContains', 'stepsAppliedContains', 'composeAdaptationOptions',
    ),
)


def element_kind(network: ModelNetwork, element: str) -> Optional[str]:
    """Kind of ``Name`` or ``Automaton.member`` in the model, None if absent."""
    owner, _, member = element.partition('.')
    if not member:
        if network.automaton(owner) is not None:
            return AUTOMATON
        if owner in network.functions():
            return FUNCTION
        return VARIABLE if owner in network.variables() else None
    automaton = network.automaton(owner)
    if automaton is None:
        return None
    if automaton.location(member) is not None:
        return LOCATION
    for declaration in automaton.declarations:
        if declaration.name == member:
            return FUNCTION if isinstance(declaration, Function) else VARIABLE
    return None


def validate_template_instantiation(templates: TemplateSet, model: ModelNetwork,
                                    stubs: Sequence[ModelNetwork] = (),
                                    bindings: Optional[Dict[str, Dict[str, object]]] = None) -> List[Diagnostic]:
    """
    Check a model's lineage against a template set.

    Args:
        templates: Template elements
        model: Feedback-loop model with a lineage block
        stubs: Stub networks property bindings may refer to
        bindings: Per-property placeholder bindings (P8, P9, P11)

    Returns:
        Rule violations; empty when the model instantiates the templates
    """
    diagnostics: List[Diagnostic] = []
    families: Dict[str, set] = {}
    instantiated = set()

    for entry in model.lineage:
        kind = element_kind(model, entry.element)
        expected = templates.kind_of(entry.template)
        instantiated.add(entry.template)
        if expected is None:
            diagnostics.append(Diagnostic(5, entry.element, f"instantiates unknown template element "
                                                            f"'{entry.template}'"))
            continue
        if entry.bracket == 'square':
            if entry.element.rpartition('.')[2] != entry.template:
                diagnostics.append(Diagnostic(1, entry.element, f"must keep the template name '{entry.template}'"))
            elif kind is None:
                diagnostics.append(Diagnostic(1, entry.element, "is not implemented in the model"))
        else:
            if kind is None:
                diagnostics.append(Diagnostic(2, entry.element, f"instantiates <{entry.template}> but does not exist"))
        if entry.template.endswith(FAMILY_SUFFIX) and kind is not None:
            families.setdefault(entry.template, set()).add(kind)
            if kind != expected:
                diagnostics.append(Diagnostic(4, entry.element, f"is a {kind}, family {entry.template} "
                                                                f"holds {expected}s"))

    for family, kinds in families.items():
        if len(kinds) > 1:
            diagnostics.append(Diagnostic(4, family, f"members of several kinds: {sorted(kinds)}"))

    for template in templates.required:
        if template not in instantiated:
            diagnostics.append(Diagnostic(5, template, "template element is not instantiated"))

    if bindings:
        try:
            network = CompiledNetwork(merge_networks(model, *stubs) if stubs else model, allow_random=False)
        except ModelError as e:
            diagnostics.append(Diagnostic(3, model.source, f"cannot compile with the stubs: {e}"))
            network = None
        for name, values in bindings.items() if network is not None else ():
            try:
                instantiate_property(name, values, network)
            except (InstantiationError, ModelError) as e:
                diagnostics.append(Diagnostic(3, name, str(e)))

    for diagnostic in diagnostics:
        logger.debug(str(diagnostic))
    return diagnostics
