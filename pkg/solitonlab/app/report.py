# Soliton Lab - Report
# Verdict records, console table and the markdown/JSON summary

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

from rich.console import Console
from rich.table import Table

from solitonlab.shared.store import Provenance

PASS = "PASS"
FAIL = "FAIL"
SKIPPED = "n/a"

# Row order of the collated report
REPORT_ROWS = (
    ("H3", "ground state exists (positive, decaying)"),
    ("H4", "dM/domega > 0 along the branch"),
    ("H5", "L+ has exactly one negative eigenvalue"),
    ("H7", "internal mode with N lambda < omega < (N+1) lambda"),
    ("H9", "no other gap eigenvalues (gap only)"),
    ("FGR", "Fermi golden rule coefficient nondegenerate"),
    ("integral-bound", "running integral of |z|^(2N+2) self-converges"),
    ("omega-convergence", "omega(t) Cauchy tail shrinks"),
    ("radiation-decay", "weighted radiation norm below 0.2 of peak"),
    ("orbital-stability", "trajectory stays in the modulation tube"),
)


@dataclass
class Verdict:
    key: str
    passed: Optional[bool]
    detail: str = ""

    @property
    def status(self) -> str:
        if self.passed is None:
            return SKIPPED
        return PASS if self.passed else FAIL

    def to_dict(self) -> Dict:
        return dict(asdict(self), status=self.status)

    @classmethod
    def from_dict(cls, data: Dict) -> 'Verdict':
        return cls(key=data['key'], passed=data.get('passed'), detail=data.get('detail', ''))


def describe(key: str) -> str:
    return dict(REPORT_ROWS).get(key, key)


def verdict_table(verdicts: Sequence[Verdict], title: str = "Verdicts") -> Table:
    table = Table(title=title)
    table.add_column("Check", style="bold")
    table.add_column("Statement")
    table.add_column("Status", justify="center")
    table.add_column("Detail", overflow="fold")
    styles = {PASS: "green", FAIL: "red", SKIPPED: "dim"}
    for v in verdicts:
        table.add_row(v.key, describe(v.key), f"[{styles[v.status]}]{v.status}[/]", v.detail)
    return table


def print_verdicts(verdicts: Sequence[Verdict], title: str = "Verdicts", console: Optional[Console] = None):
    (console or Console()).print(verdict_table(verdicts, title))


def collate(found: Dict[str, Verdict]) -> List[Verdict]:
    """Verdicts in report order; rows without a result are marked not applicable."""
    rows = [found.get(key, Verdict(key, None, "not computed")) for key, _ in REPORT_ROWS]
    extras = [v for k, v in sorted(found.items()) if k not in dict(REPORT_ROWS)]
    return rows + extras


def render_markdown(verdicts: Sequence[Verdict], provenance: Provenance, scalars: Dict[str, float]) -> str:
    lines = [
        "# Soliton Lab report",
        "",
        f"- config hash: `{provenance.config_hash}`",
        f"- grid hash: `{provenance.grid_hash}`",
        "",
        "| Check | Statement | Status | Detail |",
        "|---|---|---|---|",
    ]
    for v in verdicts:
        lines.append(f"| {v.key} | {describe(v.key)} | {v.status} | {v.detail} |")
    if scalars:
        lines += ["", "## Key numbers", "", "| Quantity | Value |", "|---|---|"]
        for name, value in sorted(scalars.items()):
            lines.append(f"| {name} | {value!r} |")
    return "\n".join(lines) + "\n"
