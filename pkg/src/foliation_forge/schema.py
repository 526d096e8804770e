"""Versioned JSON schema of the verification report."""

from __future__ import annotations

from .verify_suite import SCHEMA_VERSION

_NUM_OR_NULL = {"type": ["number", "null"]}

CHECK_SCHEMA = {
    "type": "object",
    "required": ["name", "paperRef", "status", "worstMargin", "worstResidual", "witnessPoint", "gridUsed"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "paperRef": {"type": "string", "minLength": 1},
        "status": {"enum": ["pass", "fail", "skipped", "vacuous"]},
        "worstMargin": _NUM_OR_NULL,
        "worstResidual": _NUM_OR_NULL,
        "witnessPoint": {"type": ["object", "null"], "additionalProperties": {"type": "number"}},
        "gridUsed": {"type": ["object", "null"]},
        "details": {"type": "object"},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$id": "foliation-forge/" + SCHEMA_VERSION,
    "title": "VerificationReport",
    "type": "object",
    "required": ["schema", "toolVersion", "configHash", "config", "triple", "environment", "overall", "checks"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "toolVersion": {"type": "string"},
        "configHash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "config": {"type": "object"},
        "triple": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 3, "maxItems": 3},
        "environment": {"type": "object"},
        "overall": {"enum": ["pass", "fail"]},
        "checks": {"type": "array", "items": CHECK_SCHEMA, "minItems": 1},
    },
}
