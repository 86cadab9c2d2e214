"""OpenAPI 3.1 documents generated from the same nodes used for validation."""

from __future__ import annotations

from typing import Any

from esg.core import EndpointKind, TaskStatus
from esg.schema.nodes import (
    UNSET,
    ArrayNode,
    BooleanNode,
    EnumNode,
    IntegerNode,
    NumberNode,
    ObjectNode,
    SchemaNode,
    StringNode,
)
from esg.schema.service import ServiceSpec, SpecInvalid

OPENAPI_VERSION = "3.1.0"
INCREASING_KEYWORD = "x-strictly-increasing"

_COMPONENT_NAMES = {
    EndpointKind.REQUEST: ("RequestInput", "RequestOutput"),
    EndpointKind.FIT_PARAMETERS: ("FitInput", "FitOutput"),
}

STATUS_NODE = EnumNode(
    values=[s.value for s in TaskStatus],
    description="Processing state of a task.",
)


def _typed(name: str, node: SchemaNode) -> dict:
    return {"type": [name, "null"] if node.nullable else name}


def translate_node(node: SchemaNode) -> dict:
    """Map a schema node onto a JSON Schema (2020-12) fragment."""
    if isinstance(node, ObjectNode):
        out = _typed("object", node)
        _describe(out, node)
        out["properties"] = {name: translate_node(child) for name, child in node.fields.items()}
        required = [name for name in node.fields if name in node.required]
        if required:
            out["required"] = required
        out["additionalProperties"] = False
    elif isinstance(node, ArrayNode):
        out = _typed("array", node)
        _describe(out, node)
        out["items"] = translate_node(node.item)
        if node.min_items is not None:
            out["minItems"] = node.min_items
        if node.max_items is not None:
            out["maxItems"] = node.max_items
        if node.increasing_by is not None:
            out[INCREASING_KEYWORD] = {"key": node.increasing_by}
    elif isinstance(node, EnumNode):
        out = _typed("string", node)
        _describe(out, node)
        out["enum"] = list(node.values) + ([None] if node.nullable else [])
    elif isinstance(node, StringNode):
        out = _typed("string", node)
        _describe(out, node)
        if node.format:
            out["format"] = node.format
        if node.pattern is not None:
            out["pattern"] = node.pattern
    elif isinstance(node, NumberNode):
        out = _typed("integer" if isinstance(node, IntegerNode) else "number", node)
        _describe(out, node)
        if node.minimum is not None:
            out["minimum"] = node.minimum
        if node.maximum is not None:
            out["maximum"] = node.maximum
    elif isinstance(node, BooleanNode):
        out = _typed("boolean", node)
        _describe(out, node)
    else:
        raise TypeError(f"unknown node type {type(node).__name__}")
    if node.example is not UNSET:
        out["example"] = node.example
    return out


def _describe(out: dict, node: SchemaNode) -> None:
    if node.description:
        out["description"] = node.description


def _ref(name: str) -> dict:
    return {"$ref": f"#/components/schemas/{name}"}


def _json(schema: dict) -> dict:
    return {"content": {"application/json": {"schema": schema}}}


def _error(description: str) -> dict:
    return {"description": description, **_json(_ref("ApiError"))}


_TASK_ID_PARAM = {
    "name": "task_id",
    "in": "path",
    "required": True,
    "description": "ID returned when the task was created.",
    "schema": {"type": "string", "format": "uuid"},
}


def _common_components() -> dict[str, Any]:
    return {
        "TaskCreated": {
            "type": "object",
            "properties": {"task_ID": {"type": "string", "format": "uuid"}},
            "required": ["task_ID"],
        },
        "TaskStatus": {
            "type": "object",
            "properties": {"status": translate_node(STATUS_NODE)},
            "required": ["status"],
        },
        "ApiError": {
            "type": "object",
            "properties": {
                "detail": {
                    "oneOf": [
                        {"type": "string"},
                        {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "properties": {
                                    "loc": {"type": "string"},
                                    "msg": {"type": "string"},
                                },
                                "required": ["loc", "msg"],
                            },
                        },
                    ]
                }
            },
            "required": ["detail"],
        },
    }


def _auth_responses(auth_enabled: bool) -> dict:
    if not auth_enabled:
        return {}
    return {
        "401": _error("Missing, expired or invalid bearer token."),
        "403": _error("Token lacks a required claim."),
    }


def _endpoint_paths(tag: str, kind: EndpointKind, in_name: str, out_name: str,
                    auth_enabled: bool) -> dict:
    base = f"/{tag}/{kind.value}/"
    op = f"{tag}_{kind.value.replace('-', '_')}"
    auth = _auth_responses(auth_enabled)
    return {
        base: {
            "post": {
                "operationId": f"{op}_post",
                "summary": f"Create a {kind.value} task.",
                "tags": [tag],
                "requestBody": {"required": True, **_json(_ref(in_name))},
                "responses": {
                    "201": {"description": "Task created.", **_json(_ref("TaskCreated"))},
                    **auth,
                    "404": _error("Unknown version or endpoint."),
                    "413": _error("Request body too large."),
                    "422": _error("Input does not match the data model."),
                    "503": _error("Message broker unavailable."),
                },
            }
        },
        f"{base}{{task_id}}/status/": {
            "get": {
                "operationId": f"{op}_status",
                "summary": "Poll the processing state of a task.",
                "tags": [tag],
                "parameters": [_TASK_ID_PARAM],
                "responses": {
                    "200": {"description": "Current status.", **_json(_ref("TaskStatus"))},
                    **auth,
                    "404": _error("Unknown task."),
                },
            }
        },
        f"{base}{{task_id}}/result/": {
            "get": {
                "operationId": f"{op}_result",
                "summary": "Fetch the result once the status is ready.",
                "tags": [tag],
                "parameters": [_TASK_ID_PARAM],
                "responses": {
                    "200": {"description": "Computation succeeded.", **_json(_ref(out_name))},
                    **auth,
                    "404": _error("Unknown task."),
                    "409": _error("Result not ready yet."),
                    "500": _error("Computation failed."),
                },
            }
        },
    }


def emit_openapi(spec: ServiceSpec, auth_enabled: bool = False, version: str | None = None,
                 exempt_openapi: bool = True) -> dict:
    """Build the OpenAPI document for ``spec``, optionally limited to one version.

    Component names carry a ``{tag}_`` prefix only when more than one version
    ends up in the document.
    """
    if not isinstance(spec, ServiceSpec):
        raise SpecInvalid("expected a ServiceSpec")
    if version is not None:
        if version not in spec.versions:
            raise KeyError(version)
        tags = [version]
    else:
        tags = list(spec.versions)
    prefixed = len(tags) > 1

    paths: dict[str, Any] = {}
    schemas = _common_components()
    for tag in tags:
        entry = spec.versions[tag]
        for kind in entry.kinds():
            endpoint = entry.endpoint(kind)
            in_name, out_name = _COMPONENT_NAMES[kind]
            if prefixed:
                in_name, out_name = f"{tag}_{in_name}", f"{tag}_{out_name}"
            schemas[in_name] = translate_node(endpoint.input)
            schemas[out_name] = translate_node(endpoint.output)
            paths.update(_endpoint_paths(tag, kind, in_name, out_name, auth_enabled))
        doc_op = {
            "operationId": f"{tag}_openapi",
            "summary": "This document.",
            "tags": [tag],
            "responses": {
                "200": {"description": "OpenAPI document.", **_json({"type": "object"})},
                "404": _error("Unknown version."),
            },
        }
        if auth_enabled and exempt_openapi:
            doc_op["security"] = []
        paths[f"/{tag}/openapi.json"] = {"get": doc_op}

    info = {"title": spec.name, "version": ", ".join(tags)}
    if spec.description:
        info["description"] = spec.description
    doc: dict[str, Any] = {"openapi": OPENAPI_VERSION, "info": info, "paths": paths,
                           "components": {"schemas": schemas}}
    if auth_enabled:
        doc["components"]["securitySchemes"] = {
            "bearerAuth": {"type": "http", "scheme": "bearer", "bearerFormat": "JWT"}
        }
        doc["security"] = [{"bearerAuth": []}]
    return doc
