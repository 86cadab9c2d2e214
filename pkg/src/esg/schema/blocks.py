"""Reusable building blocks for service data models."""

from __future__ import annotations

from esg.schema.nodes import ArrayNode, NumberNode, ObjectNode, StringNode


def timestamp(description: str | None = None, **kw) -> StringNode:
    return StringNode(format="date-time", description=description, **kw)


def geographic_position(description: str | None = None, **kw) -> ObjectNode:
    """Latitude/longitude pair in degrees (WGS84)."""
    return ObjectNode(
        fields={
            "latitude": NumberNode(
                minimum=-90, maximum=90, description="Latitude in degrees, north positive.",
                example=49.01,
            ),
            "longitude": NumberNode(
                minimum=-180, maximum=180, description="Longitude in degrees, east positive.",
                example=8.40,
            ),
        },
        required={"latitude", "longitude"},
        description=description or "A geographic position.",
        **kw,
    )


def value_message_list(description: str | None = None, value_description: str | None = None,
                       **kw) -> ArrayNode:
    """Time series on the wire: ``[{"time": ..., "value": ...}, ...]``.

    Times must be strictly increasing. A ``null`` value marks a gap.
    """
    item = ObjectNode(
        fields={
            "time": timestamp("Time of the value (RFC 3339)."),
            "value": NumberNode(nullable=True, description=value_description or "The value; null marks a gap."),
        },
        required={"time", "value"},
    )
    return ArrayNode(
        item=item,
        increasing_by="time",
        description=description or "Time series as a list of time/value pairs.",
        **kw,
    )


GEOGRAPHIC_POSITION = geographic_position()
VALUE_MESSAGE_LIST = value_message_list()
