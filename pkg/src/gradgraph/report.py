"""Line-oriented key-value experiment reports with CSV tables.

Reports are append-only: entries come out in the order they were recorded.
Every metric line carries the tolerance it was judged against, and the
wall-clock line goes last so deterministic reruns differ in at most that
line. Tables are written as separate CSV files next to report.txt.
"""

from __future__ import annotations

import csv
import os


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


class Report:
    def __init__(self, name: str):
        self.name = name
        self._lines: list[tuple[str, str]] = []
        self._tables: list[tuple[str, list, list]] = []
        self._metric_results: list[bool] = []
        self.add("experiment", name)

    def add(self, key: str, value) -> None:
        self._lines.append((key, format_value(value)))

    def add_metric(self, name: str, value: float, op: str, threshold: float) -> bool:
        """Record a judged metric; op is "<=" or ">="."""
        if op == "<=":
            ok = bool(value <= threshold)
        elif op == ">=":
            ok = bool(value >= threshold)
        else:
            raise ValueError(f"unknown comparison {op!r}")
        self.add(f"metric.{name}", value)
        self.add(f"metric.{name}.threshold", f"{op} {format_value(float(threshold))}")
        self.add(f"metric.{name}.pass", ok)
        self._metric_results.append(ok)
        return ok

    def add_check(self, name: str, ok: bool) -> bool:
        """Record a judged boolean condition."""
        ok = bool(ok)
        self.add(f"metric.{name}", ok)
        self.add(f"metric.{name}.threshold", "== true")
        self.add(f"metric.{name}.pass", ok)
        self._metric_results.append(ok)
        return ok

    def add_table(self, name: str, header: list, rows: list) -> None:
        self._tables.append((name, list(header), [list(r) for r in rows]))
        self.add(f"table.{name}", f"{self.name}_{name}.csv")

    @property
    def passed(self) -> bool:
        return all(self._metric_results)

    def render(self, wall_clock: float | None = None) -> str:
        lines = [f"{k} = {v}" for k, v in self._lines]
        lines.append(f"all_passed = {format_value(self.passed)}")
        if wall_clock is not None:
            lines.append(f"wall_clock_seconds = {format_value(float(wall_clock))}")
        return "\n".join(lines) + "\n"

    def write(self, outdir: str, wall_clock: float | None = None) -> None:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "report.txt"), "w", encoding="ascii") as fh:
            fh.write(self.render(wall_clock))
        for name, header, rows in self._tables:
            with open(os.path.join(outdir, f"{self.name}_{name}.csv"), "w", newline="", encoding="ascii") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([format_value(v) for v in row])
