"""Emit a standalone C encoder for an EncoderTable.

Two styles:

``if_chain``
    one function per feature holding a balanced tree of nested ``if``
    statements, one comparison site per threshold and ``n`` comparisons per
    evaluation.
``binary_search``
    a ``static const float`` threshold table plus a shared search loop.

The emitted file needs no headers and exports
``void encode_features(const float* in, unsigned char* out)``.
"""
from __future__ import annotations

import re

import numpy as np

from ..core import MAX_BIT_WIDTH, MIN_BIT_WIDTH
from .table import EncoderTable

STYLES = ("if_chain", "binary_search")
FLOAT_BYTES = 4

_TOKEN = re.compile(r"0x[0-9a-fA-F.]+p[+-]?\d+f?|[A-Za-z_]\w*|\d+|>=|\+\+|[{}()\[\];,=<>+\-*/?:]")


def c_float(value) -> str:
    """Exact C99 hexadecimal float literal for a float32 value."""
    v = float(np.float32(value))
    return v.hex() + "f"


def _comment(text: str) -> str:
    return str(text).replace("*/", "* /")


def _check(table: EncoderTable, style: str):
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}; expected one of {STYLES}")
    if not MIN_BIT_WIDTH <= table.bits <= MAX_BIT_WIDTH:
        raise ValueError(f"unsupported bit width {table.bits}")


def _tree(lines: list[str], a, lo: int, hi: int, depth: int):
    pad = "    " * depth
    if lo == hi:
        lines.append(f"{pad}return {lo}u;")
        return
    m = (lo + hi + 1) // 2
    lines.append(f"{pad}if (x >= {c_float(a[m - 1])}) {{")
    _tree(lines, a, m, hi, depth + 1)
    lines.append(f"{pad}}} else {{")
    _tree(lines, a, lo, m - 1, depth + 1)
    lines.append(f"{pad}}}")


def _body_if_chain(table: EncoderTable, prefix: str) -> list[str]:
    lines = []
    for f in range(table.k):
        lines.append(f"/* feature {f}: {_comment(table.order[f])} */")
        lines.append(f"static unsigned char {prefix}_feature_{f}(float x)")
        lines.append("{")
        _tree(lines, table.thresholds_raw[f], 0, table.M, 1)
        lines.append("}")
        lines.append("")
    lines.append("void encode_features(const float* in, unsigned char* out)")
    lines.append("{")
    for f in range(table.k):
        lines.append(f"    out[{f}] = {prefix}_feature_{f}(in[{f}]);")
    lines.append("}")
    return lines


def _body_binary_search(table: EncoderTable, prefix: str) -> list[str]:
    K, M = table.k, table.M
    lines = [f"static const float {prefix}_thresholds[{K}][{M}] = {{"]
    for f in range(K):
        vals = ", ".join(c_float(v) for v in table.thresholds_raw[f])
        lines.append(f"    {{ {vals} }}, /* {_comment(table.order[f])} */")
    lines.append("};")
    lines.append("")
    lines.append("void encode_features(const float* in, unsigned char* out)")
    lines.append("{")
    lines.append("    unsigned int f;")
    lines.append(f"    for (f = 0; f < {K}u; ++f) {{")
    lines.append(f"        const float* t = {prefix}_thresholds[f];")
    lines.append("        const float x = in[f];")
    lines.append(f"        unsigned int lo = 0u, hi = {M}u;")
    lines.append("        while (lo < hi) {")
    lines.append("            unsigned int mid = (lo + hi + 1u) / 2u;")
    lines.append("            if (x >= t[mid - 1u]) {")
    lines.append("                lo = mid;")
    lines.append("            } else {")
    lines.append("                hi = mid - 1u;")
    lines.append("            }")
    lines.append("        }")
    lines.append("        out[f] = (unsigned char)lo;")
    lines.append("    }")
    lines.append("}")
    return lines


def footprint(table: EncoderTable, style: str, body: str | None = None) -> dict:
    """Static size figures for the generated encoder."""
    _check(table, style)
    if body is None:
        body = "\n".join(_body(table, style, "enc"))
    tokens = _TOKEN.findall(_strip_comments(body))
    return {
        "style": style,
        "k": table.k,
        "bits": table.bits,
        "thresholds": table.k * table.M,
        "threshold_bytes": table.k * table.M * FLOAT_BYTES,
        "comparison_sites": body.count(">="),
        "comparisons_per_feature": table.bits,
        "source_tokens": len(tokens),
        "payload_bytes": (table.k * table.bits + 7) // 8,
        "raw_bytes": table.k * FLOAT_BYTES,
    }


def _strip_comments(src: str) -> str:
    return re.sub(r"/\*.*?\*/", "", src, flags=re.S)


def _body(table: EncoderTable, style: str, prefix: str) -> list[str]:
    if style == "if_chain":
        return _body_if_chain(table, prefix)
    return _body_binary_search(table, prefix)


def emit_encoder_source(table: EncoderTable, style: str = "if_chain", name: str = "features") -> str:
    """Return the C source text; a footprint report is embedded as a comment."""
    _check(table, style)
    prefix = re.sub(r"\W", "_", name) or "enc"
    body = "\n".join(_body(table, style, prefix))
    fp = footprint(table, style, body)
    header = [
        f"/* {prefix}_encoder.c: generated threshold encoder, do not edit.",
        f" * features: {table.k}, bits per feature: {table.bits}, style: {style}",
    ]
    if table.source_hash:
        header.append(f" * checkpoint: {table.source_hash}")
    header += [
        " *",
        " * footprint",
        f" *   thresholds:           {fp['thresholds']}",
        f" *   threshold bytes:      {fp['threshold_bytes']}",
        f" *   comparison sites:     {fp['comparison_sites']}",
        f" *   comparisons/feature:  {fp['comparisons_per_feature']}",
        f" *   source tokens:        {fp['source_tokens']}",
        f" *   payload bytes/frame:  {fp['payload_bytes']} (raw float32: {fp['raw_bytes']})",
        " *",
        " * Each code counts the thresholds not above the input (ties go up).",
        " */",
        "",
    ]
    return "\n".join(header) + body + "\n"
