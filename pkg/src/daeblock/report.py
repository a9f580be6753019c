"""Analysis reports: a plain-data summary of one system plus text rendering.

The report is built from an :class:`~daeblock.structure.Analysis` and holds
only JSON-friendly values, so ``from_dict(to_dict(r)) == r``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .btf import BlockStructure, coarse_btf, fine_btf, jacobian_pattern, sigma_pattern
from .convert import FixResult, block_reports
from .structure import Analysis

SCHEMA_FILE = "report.schema.json"


@dataclass
class BlockInfo:
    index: int  # 1-based
    rows: list[str]
    cols: list[str]
    size: int
    rank: int | None = None

    @property
    def singular(self) -> bool | None:
        return None if self.rank is None else self.rank < self.size

    def to_dict(self) -> dict:
        d = asdict(self)
        d["singular"] = self.singular
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BlockInfo":
        return cls(d["index"], list(d["rows"]), list(d["cols"]), d["size"], d.get("rank"))


@dataclass
class AnalysisReport:
    n: int
    rows: list[str]
    cols: list[str]
    sigma: list[list[int | None]]  # None is -inf
    hvt: list[tuple[int, int]]
    c: list[int]
    d: list[int]
    val_sigma: int
    structural_index: int
    verdict: str
    btf: str = "fine"
    row_perm: list[int] = field(default_factory=list)
    col_perm: list[int] = field(default_factory=list)
    blocks: list[BlockInfo] = field(default_factory=list)
    fine_sizes: list[int] = field(default_factory=list)
    coarse_sizes: list[int] = field(default_factory=list)
    conversions: list[dict] = field(default_factory=list)

    @property
    def sizes(self) -> list[int]:
        return [b.size for b in self.blocks]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "rows": list(self.rows),
            "cols": list(self.cols),
            "sigma": [list(r) for r in self.sigma],
            "hvt": [list(p) for p in self.hvt],
            "c": list(self.c),
            "d": list(self.d),
            "val_sigma": self.val_sigma,
            "structural_index": self.structural_index,
            "verdict": self.verdict,
            "btf": self.btf,
            "row_perm": list(self.row_perm),
            "col_perm": list(self.col_perm),
            "blocks": [b.to_dict() for b in self.blocks],
            "fine_sizes": list(self.fine_sizes),
            "coarse_sizes": list(self.coarse_sizes),
            "conversions": list(self.conversions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        return cls(
            n=d["n"],
            rows=list(d["rows"]),
            cols=list(d["cols"]),
            sigma=[list(r) for r in d["sigma"]],
            hvt=[tuple(p) for p in d["hvt"]],
            c=list(d["c"]),
            d=list(d["d"]),
            val_sigma=d["val_sigma"],
            structural_index=d["structural_index"],
            verdict=d["verdict"],
            btf=d.get("btf", "fine"),
            row_perm=list(d.get("row_perm", [])),
            col_perm=list(d.get("col_perm", [])),
            blocks=[BlockInfo.from_dict(b) for b in d.get("blocks", [])],
            fine_sizes=list(d.get("fine_sizes", [])),
            coarse_sizes=list(d.get("coarse_sizes", [])),
            conversions=list(d.get("conversions", [])),
        )

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))


def load_schema() -> dict:
    return json.loads(resources.files("daeblock").joinpath(SCHEMA_FILE).read_text(encoding="utf-8"))


def _structure(an: Analysis, btf: str) -> BlockStructure:
    if btf == "fine":
        return fine_btf(jacobian_pattern(an.sigma))
    if btf == "coarse":
        return coarse_btf(sigma_pattern(an.sigma))
    if btf == "none":
        return BlockStructure.trivial(an.system.n)
    raise ValueError(f"unknown BTF kind {btf!r}")


def build_report(an: Analysis, btf: str = "fine", fix: FixResult | None = None, rng=None) -> AnalysisReport:
    sig = an.sigma
    blocks = _structure(an, btf)
    infos = [
        BlockInfo(
            b.q + 1,
            [sig.rows[i] for i in b.rows],
            [sig.cols[j] for j in b.cols],
            b.size,
            b.rank,
        )
        for b in block_reports(an, blocks, rng=rng)
    ]
    fine = fine_btf(jacobian_pattern(sig))
    coarse = coarse_btf(sigma_pattern(sig))
    return AnalysisReport(
        n=sig.n,
        rows=list(sig.rows),
        cols=list(sig.cols),
        sigma=[[int(v) if np.isfinite(v) else None for v in row] for row in sig.sigma],
        hvt=[(int(i), int(j)) for i, j in sig.hvt],
        c=[int(v) for v in sig.c],
        d=[int(v) for v in sig.d],
        val_sigma=int(sig.val),
        structural_index=int(an.index),
        verdict=an.verdict.value,
        btf=btf,
        row_perm=list(blocks.row_perm),
        col_perm=list(blocks.col_perm),
        blocks=infos,
        fine_sizes=list(fine.sizes),
        coarse_sizes=list(coarse.sizes),
        conversions=[c.record.to_dict() for c in fix.conversions] if fix else [],
    )


# -- rendering --------------------------------------------------------------

def render_sigma(report: AnalysisReport) -> str:
    """Σ permuted to block form: ``*`` marks the HVT, ``-`` is -inf.

    Block boundaries are drawn as ``|`` between columns and a dashed line
    between rows; c sits in the right margin and d along the bottom.
    """
    rp = report.row_perm or list(range(report.n))
    cp = report.col_perm or list(range(report.n))
    sizes = report.sizes or [report.n]
    cuts = set(np.cumsum(sizes)[:-1].tolist())
    on_hvt = set(map(tuple, report.hvt))

    def cell(i, j):
        v = report.sigma[i][j]
        return ("-" if v is None else str(v)) + ("*" if (i, j) in on_hvt else "")

    body = [[cell(i, j) for j in cp] for i in rp]
    lab_w = max([len(report.rows[i]) for i in rp] + [1])
    w = max([len(x) for r in body for x in r] + [len(report.cols[j]) for j in cp] + [len(str(v)) for v in report.d] + [1])

    def line(label, cells, tail=""):
        parts = []
        for k, x in enumerate(cells):
            if k in cuts:
                parts.append("|")
            parts.append(x.rjust(w))
        return f"{label.ljust(lab_w)}  " + " ".join(parts) + (f"   {tail}" if tail != "" else "")

    out = [line("", [report.cols[j] for j in cp], "c")]
    width = len(line("", body[0] if body else []))
    for k, i in enumerate(rp):
        if k in cuts:
            out.append(" " * (lab_w + 2) + "-" * (width - lab_w - 2))
        out.append(line(report.rows[i], body[k], str(report.c[i])))
    out.append(line("d", [str(report.d[j]) for j in cp]))
    return "\n".join(out)


def blocks_from_render(text: str) -> list[int]:
    """Recover the diagonal block sizes from :func:`render_sigma` output."""
    lines = text.splitlines()
    header = lines[0].split()
    ncols = len([h for h in header if h not in ("|", "c")])
    sizes, run = [], 0
    for ln in lines[1:-1]:
        if set(ln.strip()) == {"-"}:
            sizes.append(run)
            run = 0
        else:
            run += 1
    sizes.append(run)
    if sum(sizes) != ncols:
        raise ValueError("rendered grid is not square")
    return sizes


def render_report(report: AnalysisReport) -> str:
    lines = [
        f"n = {report.n}",
        f"val(Sigma) = {report.val_sigma}",
        f"structural index = {report.structural_index}",
        f"c = {report.c}",
        f"d = {report.d}",
        f"System Jacobian: {report.verdict}",
        f"fine BTF sizes: {report.fine_sizes}",
        f"coarse BTF sizes: {report.coarse_sizes}",
        "",
        render_sigma(report),
        "",
    ]
    for b in report.blocks:
        state = "unknown" if b.singular is None else ("SINGULAR" if b.singular else "nonsingular")
        lines.append(
            f"block {b.index}: rows {', '.join(b.rows)}; cols {', '.join(b.cols)}; "
            f"rank {b.rank}/{b.size} {state}"
        )
    if report.conversions:
        lines.append("")
        lines.append("conversions:")
        for rec in report.conversions:
            lines.append(f"  {rec['kind']} on block {rec['block']}: val {rec['val_before']} -> {rec['val_after']}")
            for ln in rec["description"].splitlines():
                lines.append(f"    {ln}")
            if not rec["equivalence_guaranteed"]:
                lines.append("    equivalence not guaranteed (nonconstant pivot coefficient)")
    return "\n".join(lines)
