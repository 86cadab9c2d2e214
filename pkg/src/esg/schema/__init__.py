from esg.schema.blocks import (
    GEOGRAPHIC_POSITION,
    VALUE_MESSAGE_LIST,
    geographic_position,
    timestamp,
    value_message_list,
)
from esg.schema.nodes import (
    UNSET,
    ArrayNode,
    BooleanNode,
    EnumNode,
    IntegerNode,
    NumberNode,
    ObjectNode,
    SchemaError,
    SchemaNode,
    StringNode,
    ValidationFailed,
    ValidationIssue,
    check,
    validate,
)
from esg.schema.openapi import emit_openapi, translate_node
from esg.schema.service import (
    Endpoint,
    Handler,
    ServiceSpec,
    ServiceVersion,
    SpecInvalid,
    UnknownVersion,
    UnsupportedEndpoint,
)

__all__ = [
    "GEOGRAPHIC_POSITION", "VALUE_MESSAGE_LIST", "geographic_position", "timestamp",
    "value_message_list", "UNSET", "ArrayNode", "BooleanNode", "EnumNode", "IntegerNode",
    "NumberNode", "ObjectNode", "SchemaError", "SchemaNode", "StringNode", "ValidationFailed",
    "ValidationIssue", "check", "validate", "emit_openapi", "translate_node", "Endpoint",
    "Handler", "ServiceSpec", "ServiceVersion", "SpecInvalid", "UnknownVersion",
    "UnsupportedEndpoint",
]
