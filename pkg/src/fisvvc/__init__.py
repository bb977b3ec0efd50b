"""Fuzzy-inference volt/var control for a 66/20 kV substation, with a plant simulator and metrics."""

from .errors import ConfigError, FisVvcError, MetricsError, PlantError, RuleBaseError, RuleSyntaxError
from .fis import LinguisticVariable, MembershipFunction, RuleBase, explain, infer
from .rules import default_rulebase, load_rulebase, parse_rule, parse_rules, format_rule

__version__ = "0.1.0"
