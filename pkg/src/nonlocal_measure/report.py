"""Run reports: a line-oriented key=value document or aligned text tables.

The key=value layout is described in ``docs/report_schema.md``.  Rendering
is a pure function of the report contents, so equal runs give byte-equal
output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

SCHEMA = "nonlocal-measure-report/1"


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    if isinstance(value, (list, tuple)):
        return ",".join(fmt(v) for v in value)
    return str(value)


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class Report:
    subcommand: str
    fields: list[tuple[str, object]] = field(default_factory=list)
    tables: list[Table] = field(default_factory=list)

    def add(self, key: str, value) -> None:
        self.fields.append((key, value))

    def table(self, name: str, columns: list[str]) -> Table:
        t = Table(name, columns)
        self.tables.append(t)
        return t

    def render(self, style: str = "table") -> str:
        if style == "kv":
            return self.render_kv()
        if style == "table":
            return self.render_text()
        raise ValueError(f"unknown report format {style!r}")

    def render_kv(self) -> str:
        lines = [f"# schema={SCHEMA}", f"subcommand={self.subcommand}"]
        lines += [f"{k}={fmt(v)}" for k, v in self.fields]
        for t in self.tables:
            key_col = t.columns[0]
            for row in t.rows:
                for col, value in zip(t.columns[1:], row[1:]):
                    lines.append(f"{t.name}.{key_col}[{fmt(row[0])}].{col}={fmt(value)}")
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        width = max([len(k) for k, _ in self.fields] + [10])
        lines = [f"{SCHEMA}  {self.subcommand}", ""]
        lines += [f"{k:<{width}}  {fmt(v)}" for k, v in self.fields]
        for t in self.tables:
            cells = [t.columns] + [[fmt(v) for v in row] for row in t.rows]
            widths = [max(len(r[i]) for r in cells) for i in range(len(t.columns))]
            lines += ["", f"[{t.name}]"]
            for i, row in enumerate(cells):
                lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip())
                if i == 0:
                    lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"
