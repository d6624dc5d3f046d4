"""File reports for the CLI: delimited data plus a rendered figure.

Each writer drops a ``.csv`` and a ``.png`` side by side in the target
directory and returns the paths it wrote.  Figures use the Agg backend so
the CLI works headless.
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .gateway import ContextCostReport  # noqa: E402
from .model import CoverageReport  # noqa: E402

MEASURE_COLUMNS = [
    "catalog_tool_count",
    "flat_advertisement_tokens",
    "codemode_surface_tokens",
    "interface_bytes_total",
    "bytes_per_tool",
    "reduction_ratio",
]

COVERAGE_COLUMNS = [
    "backend",
    "actual_tools",
    "declared_tools",
    "estimated_total",
    "reported_percent",
    "discrepancy",
]


def _ensure_dir(directory) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    return root


def write_measure_report(directory, reports: list[ContextCostReport]) -> list[Path]:
    """One CSV row per measured catalog plus a token-cost figure.

    With several catalog sizes the figure shows the scaling law: flat
    advertisement tokens growing with the catalog against the constant
    surface.  A single measurement renders as a two-bar comparison.
    """
    root = _ensure_dir(directory)
    csv_path = root / "measure.csv"
    png_path = root / "measure.png"

    rows = sorted((r.as_dict() for r in reports),
                  key=lambda r: r["catalog_tool_count"])
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MEASURE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)

    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.6))
    ns = [r["catalog_tool_count"] for r in rows]
    flat = [r["flat_advertisement_tokens"] for r in rows]
    surface = [r["codemode_surface_tokens"] for r in rows]
    if len(rows) > 1:
        left.plot(ns, flat, "o-", label="flat advertisement")
        left.plot(ns, surface, "s--", label="gateway surface")
        left.set_xscale("log")
        left.set_yscale("log")
        left.set_xlabel("tools in catalog")
        left.set_ylabel("tokens (chars/4)")
        left.legend()
        right.plot(ns, [r["reduction_ratio"] for r in rows], "o-", color="tab:green")
        right.set_xscale("log")
        right.set_xlabel("tools in catalog")
        right.set_ylabel("reduction ratio")
    else:
        row = rows[0] if rows else {c: 0 for c in MEASURE_COLUMNS}
        left.bar(["flat", "surface"],
                 [row["flat_advertisement_tokens"],
                  row["codemode_surface_tokens"]],
                 color=["tab:red", "tab:blue"])
        left.set_ylabel("tokens (chars/4)")
        left.set_title(f"{row['catalog_tool_count']} tools")
        right.bar(["ratio"], [row["reduction_ratio"]], color="tab:green")
        right.set_ylabel("reduction ratio")
    left.set_title(left.get_title() or "advertisement cost")
    right.set_title("flat / surface")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def write_coverage_report(directory, report: CoverageReport) -> list[Path]:
    """Per-backend coverage rows (plus a TOTAL row) and a bar chart.

    Backends whose declared tool count disagrees with the actual count are
    drawn in red so a stale coverage block stands out.
    """
    root = _ensure_dir(directory)
    csv_path = root / "coverage.csv"
    png_path = root / "coverage.png"

    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COVERAGE_COLUMNS)
        writer.writeheader()
        for s in report.summaries:
            writer.writerow({
                "backend": s.backend,
                "actual_tools": s.actual_tools,
                "declared_tools":
                    s.declared.tools_defined if s.declared else "",
                "estimated_total":
                    (s.declared.estimated_total or "") if s.declared else "",
                "reported_percent":
                    s.reported_percent if s.reported_percent is not None else "",
                "discrepancy": "yes" if s.discrepancy else "no",
            })
        writer.writerow({
            "backend": "TOTAL",
            "actual_tools": report.total_tools,
            "declared_tools": "",
            "estimated_total": report.total_declared_estimate or "",
            "reported_percent": "",
            "discrepancy": "",
        })

    names = [s.backend for s in report.summaries]
    counts = [s.actual_tools for s in report.summaries]
    colors = ["tab:red" if s.discrepancy else "tab:blue"
              for s in report.summaries]
    height = max(2.5, 0.4 * len(names) + 1.2)
    fig, ax = plt.subplots(figsize=(7, height))
    if names:
        ax.barh(names, counts, color=colors)
        ax.invert_yaxis()
    ax.set_xlabel("tools defined")
    ax.set_title(
        f"{report.total_tools} tools across {report.total_backends} backends")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]
