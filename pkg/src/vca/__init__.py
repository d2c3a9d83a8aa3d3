"""Multi-agent vehicle checking: five agents on a supervised message bus."""

from .rules import (
    Diagnosis,
    ExternalSnapshot,
    FaultKind,
    InternalSnapshot,
    RuleConfig,
    evaluate_external_rules,
    evaluate_internal_rules,
    rule_table,
)
from .system import VcaSystem
from .vehicle import FaultInjection, Scope, new_vehicle

__version__ = "0.1.0"
