"""Runtime for declarative REST API descriptions (DADL) with a two-tool
code-mode gateway for agents."""

from .errors import (
    AuthError,
    AuthzDenied,
    ClosureViolation,
    CredentialError,
    DadlError,
    JqError,
    SandboxError,
    SchemaError,
    UnknownTool,
    UpstreamTerminal,
    YamlError,
)
from .model import (
    DadlDocument,
    ResolvedTool,
    ValidationReport,
    coverage_report,
    effective_tool,
    parse_document,
    serialize_document,
    static_closure,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AuthError",
    "AuthzDenied",
    "ClosureViolation",
    "CredentialError",
    "DadlDocument",
    "DadlError",
    "JqError",
    "ResolvedTool",
    "SandboxError",
    "SchemaError",
    "UnknownTool",
    "UpstreamTerminal",
    "ValidationReport",
    "YamlError",
    "__version__",
    "coverage_report",
    "effective_tool",
    "parse_document",
    "serialize_document",
    "static_closure",
    "validate",
]
