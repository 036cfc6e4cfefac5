from flowcheck.checker import ComplianceReport, check_compliance
from flowcheck.lang import parse_program, pretty
from flowcheck.policy import DynamicPolicySpec, EquivSpec, approximate_policy
from flowcheck.typesystem import DepEnv, infer

__all__ = [
    "ComplianceReport",
    "DepEnv",
    "DynamicPolicySpec",
    "EquivSpec",
    "approximate_policy",
    "check_compliance",
    "infer",
    "parse_program",
    "pretty",
]
