"""Line-oriented text container used for datasets, label matrices and
oracle exports.

Layout (tab-separated):

    conplan-container 1 <kind>
    meta\t<key>\t<value>          (any number)
    section\t<name>\t<n_rows>[\t<extra tokens>]
    <n_rows data lines, fields tab-separated>
    ...
    end

Floats are serialized with ``repr`` (shortest round-trip decimal), so a
write/read cycle is exact and files are diff-able.
"""

from .errors import ParseError, UnsupportedVersionError

FORMAT_VERSION = 1


def fmt_float(v):
    return repr(float(v))


def fmt_floats(vals):
    return ",".join(repr(float(v)) for v in vals)


def parse_floats(s):
    if s == "":
        return []
    return [float(v) for v in s.split(",")]


def write_container(path, kind, meta, sections):
    """Write sections = [(name, extra_tokens, rows)] with rows of string fields."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"conplan-container {FORMAT_VERSION} {kind}\n")
        for key, value in meta:
            fh.write(f"meta\t{key}\t{value}\n")
        for name, extra, rows in sections:
            tokens = "".join(f"\t{t}" for t in extra)
            fh.write(f"section\t{name}\t{len(rows)}{tokens}\n")
            for row in rows:
                fh.write("\t".join(row) + "\n")
        fh.write("end\n")


def read_container(path, expect_kind=None):
    """Read a container; returns (meta_list, {name: (extra_tokens, rows)})."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", path=path, line=1)
    header = lines[0].split(" ")
    if len(header) < 3 or header[0] != "conplan-container":
        raise ParseError(f"not a conplan container: {lines[0]!r}", path=path, line=1)
    try:
        version = int(header[1])
    except ValueError:
        raise ParseError(f"bad version field {header[1]!r}", path=path, line=1) from None
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"container version {version} not supported (expected {FORMAT_VERSION})",
            path=path, line=1)
    kind = header[2]
    if expect_kind is not None and kind != expect_kind:
        raise ParseError(f"expected a {expect_kind} container, found {kind!r}",
                         path=path, line=1)
    meta = []
    sections = {}
    i = 1
    ended = False
    while i < len(lines):
        line = lines[i]
        if line == "end":
            ended = True
            i += 1
            break
        fields = line.split("\t")
        if fields[0] == "meta":
            if len(fields) != 3:
                raise ParseError("meta line needs key and value", path=path, line=i + 1)
            meta.append((fields[1], fields[2]))
            i += 1
        elif fields[0] == "section":
            if len(fields) < 3:
                raise ParseError("section line needs name and row count",
                                 path=path, line=i + 1)
            name = fields[1]
            try:
                n_rows = int(fields[2])
            except ValueError:
                raise ParseError(f"bad row count {fields[2]!r}",
                                 path=path, line=i + 1) from None
            extra = fields[3:]
            start = i + 1
            if start + n_rows > len(lines):
                raise ParseError(
                    f"section {name!r} declares {n_rows} rows but the file is truncated",
                    path=path, line=len(lines))
            rows = [lines[start + r].split("\t") for r in range(n_rows)]
            if name in sections:
                raise ParseError(f"duplicate section {name!r}", path=path, line=i + 1)
            sections[name] = (extra, rows)
            i = start + n_rows
        else:
            raise ParseError(f"unexpected line {line!r}", path=path, line=i + 1)
    if not ended:
        raise ParseError("missing 'end' marker (file truncated?)",
                         path=path, line=len(lines))
    return kind, meta, sections
