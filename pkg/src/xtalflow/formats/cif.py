"""CIF subset parser: data blocks, tag/value items, loops, semicolon text.

The document keeps its source lines verbatim; parsed items carry line
references so patching is line surgery and untouched lines stay
byte-identical. Deliberately small: no save frames, no dictionaries,
loop values are single-line tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

# Tags a publication-ready model file must carry. The gates and the mock
# validation engine share this list.
REQUIRED_CIF_TAGS = (
    "_cell_length_a",
    "_cell_length_b",
    "_cell_length_c",
    "_cell_angle_alpha",
    "_cell_angle_beta",
    "_cell_angle_gamma",
    "_cell_volume",
    "_cell_formula_units_Z",
    "_chemical_formula_sum",
    "_space_group_name_H-M_alt",
    "_diffrn_radiation_probe",
    "_exptl_crystal_description",
)


class CifParseError(ValueError):
    """Structurally invalid CIF text."""


@dataclass
class CifItem:
    tag: str
    value: str
    # Line span [start, end) in the document's line list.
    start: int
    end: int


@dataclass
class CifLoop:
    tags: list[str]
    rows: list[list[str]]
    start: int
    end: int


@dataclass
class CifBlock:
    name: str
    items: dict[str, CifItem]
    loops: list[CifLoop]
    start: int
    end: int


@dataclass
class CifDocument:
    lines: list[str]
    blocks: list[CifBlock]
    trailing_newline: bool = True


@dataclass(frozen=True)
class PatchRecord:
    tag: str
    old_value: str | None
    new_value: str
    block: str


_QUOTED = re.compile(r"""^(?:'([^']*)'|"([^"]*)")$""")


def _unquote(token: str) -> str:
    m = _QUOTED.match(token)
    if m:
        return m.group(1) if m.group(1) is not None else m.group(2)
    return token


def _quote(value: str) -> str:
    if value and not re.search(r"""[\s'"#]""", value) \
            and not value.startswith("_"):
        return value
    if "'" not in value:
        return f"'{value}'"
    if '"' not in value:
        return f'"{value}"'
    raise CifParseError(f"value not representable on one line: {value!r}")


def _split_tokens(line: str, lineno: int) -> list[str]:
    tokens: list[str] = []
    rest = line.strip()
    while rest:
        if rest[0] == "#":
            break
        if rest[0] in "'\"":
            quote = rest[0]
            close = rest.find(quote, 1)
            if close < 0:
                raise CifParseError(f"line {lineno}: unterminated quote")
            tokens.append(rest[:close + 1])
            rest = rest[close + 1:].lstrip()
        else:
            part, _, rest = rest.partition(" ")
            tokens.append(part)
            rest = rest.lstrip()
    return tokens


def parse_cif(data: bytes) -> CifDocument:
    text = data.decode("utf-8")
    trailing = text.endswith("\n")
    lines = text.split("\n")
    if trailing:
        lines = lines[:-1]

    blocks: list[CifBlock] = []
    block: CifBlock | None = None
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        stripped = line.strip()
        lineno = i + 1

        if not stripped or stripped.startswith("#"):
            i += 1
            continue

        if stripped.lower().startswith("data_"):
            if block is not None:
                block.end = i
            block = CifBlock(name=stripped[5:], items={}, loops=[],
                             start=i, end=n)
            blocks.append(block)
            i += 1
            continue

        if block is None:
            raise CifParseError(f"line {lineno}: content before any data_ block")

        if stripped.lower() == "loop_":
            i, loop = _parse_loop(lines, i, block)
            block.loops.append(loop)
            continue

        if stripped.startswith("_"):
            i = _parse_item(lines, i, block)
            continue

        raise CifParseError(f"line {lineno}: unexpected content {stripped!r}")

    if block is not None:
        block.end = n
    return CifDocument(lines=lines, blocks=blocks, trailing_newline=trailing)


def _parse_item(lines: list[str], i: int, block: CifBlock) -> int:
    lineno = i + 1
    tokens = _split_tokens(lines[i], lineno)
    tag = tokens[0]
    if tag in block.items:
        raise CifParseError(f"line {lineno}: duplicate tag {tag}")
    for loop in block.loops:
        if tag in loop.tags:
            raise CifParseError(
                f"line {lineno}: tag {tag} already defined in a loop")

    if len(tokens) >= 2:
        if len(tokens) > 2:
            raise CifParseError(
                f"line {lineno}: more than one value for tag {tag}")
        block.items[tag] = CifItem(tag=tag, value=_unquote(tokens[1]),
                                   start=i, end=i + 1)
        return i + 1

    # Value on following lines: a semicolon text field.
    j = i + 1
    if j >= len(lines) or not lines[j].startswith(";"):
        raise CifParseError(f"line {lineno}: tag {tag} has no value")
    body: list[str] = [lines[j][1:]]
    j += 1
    while j < len(lines) and not lines[j].startswith(";"):
        body.append(lines[j])
        j += 1
    if j >= len(lines):
        raise CifParseError(
            f"line {lineno}: unterminated semicolon field for {tag}")
    value = "\n".join(body)
    if value.startswith("\n"):
        value = value[1:]
    block.items[tag] = CifItem(tag=tag, value=value, start=i, end=j + 1)
    return j + 1


def _parse_loop(lines: list[str], i: int, block: CifBlock) -> tuple[int, CifLoop]:
    start = i
    i += 1
    tags: list[str] = []
    while i < len(lines):
        stripped = lines[i].strip()
        if stripped.startswith("_"):
            tags.append(stripped.split()[0])
            i += 1
        else:
            break
    if not tags:
        raise CifParseError(f"line {start + 1}: loop_ without tags")

    tokens: list[str] = []
    while i < len(lines):
        stripped = lines[i].strip()
        if (not stripped or stripped.startswith("#")
                or stripped.startswith("_")
                or stripped.lower().startswith(("loop_", "data_"))):
            break
        tokens.extend(_split_tokens(lines[i], i + 1))
        i += 1

    width = len(tags)
    if len(tokens) % width != 0:
        bad_row = len(tokens) // width + 1
        raise CifParseError(
            f"loop starting line {start + 1}: row {bad_row} has "
            f"{len(tokens) % width} of {width} values")
    rows = [[_unquote(t) for t in tokens[k:k + width]]
            for k in range(0, len(tokens), width)]
    return i, CifLoop(tags=tags, rows=rows, start=start, end=i)


def serialize_cif(doc: CifDocument) -> bytes:
    text = "\n".join(doc.lines)
    if doc.trailing_newline:
        text += "\n"
    return text.encode("utf-8")


def get_item(doc: CifDocument, tag: str, block: str | None = None) -> str | None:
    for b in doc.blocks:
        if block is not None and b.name != block:
            continue
        if tag in b.items:
            return b.items[tag].value
    return None


def missing_required_tags(doc: CifDocument,
                          required: tuple[str, ...] = REQUIRED_CIF_TAGS
                          ) -> list[str]:
    return [tag for tag in required if get_item(doc, tag) is None]


def patch_item(doc: CifDocument, tag: str, value: str,
               block: str | None = None) -> tuple[CifDocument, PatchRecord]:
    """Replace or insert one tag's value, preserving every other line."""
    if not doc.blocks:
        raise CifParseError("document has no data_ block to patch")
    target = None
    for b in doc.blocks:
        if block is None or b.name == block:
            target = b
            break
    if target is None:
        raise CifParseError(f"no data_ block named {block!r}")

    lines = list(doc.lines)
    new_line = f"{tag} {_quote(value)}"
    if tag in target.items:
        item = target.items[tag]
        old = item.value
        lines[item.start:item.end] = [new_line]
    else:
        old = None
        lines.insert(target.end, new_line)

    patched = parse_cif(("\n".join(lines)
                         + ("\n" if doc.trailing_newline else "")).encode())
    record = PatchRecord(tag=tag, old_value=old, new_value=value,
                         block=target.name)
    return patched, record
