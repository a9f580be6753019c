"""Command-line front end: ``daeblock analyze`` and ``daeblock fix``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .convert import IterationLimit, NoApplicableConversion, fix_dae
from .modelfile import ModelSyntaxError, format_model, parse_model
from .report import build_report, render_report
from .structure import StructurallyIllPosed, analyze

EXIT_OK = 0
EXIT_ILL_POSED = 2
EXIT_UNFIXABLE = 3
EXIT_PARSE = 4


def bundled_models() -> list[str]:
    root = resources.files("daeblock").joinpath("models")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".dae"))


def read_model_text(path: str) -> str:
    """Read a model file; a bare bundled name such as ``robotarm`` also works."""
    p = Path(path)
    if p.exists():
        return p.read_text(encoding="utf-8")
    name = p.name[:-4] if p.name.endswith(".dae") else p.name
    if name in bundled_models():
        return resources.files("daeblock").joinpath("models", f"{name}.dae").read_text(encoding="utf-8")
    raise FileNotFoundError(f"no such model file: {path}")


def _load(path: str):
    return parse_model(read_model_text(path))


def cmd_analyze(args) -> int:
    sys_ = _load(args.model)
    an = analyze(sys_)
    report = build_report(an, btf=args.btf)
    if args.json:
        print(report.to_json())
    else:
        print(render_report(report))
    return EXIT_OK


def cmd_fix(args) -> int:
    sys_ = _load(args.model)
    result = fix_dae(sys_, method=args.method, max_iter=args.max_iter)
    header = f"converted by daeblock fix --method {args.method}" if result.conversions else None
    text = format_model(result.system, header=header)
    initial = build_report(result.initial, btf=args.btf)
    final = build_report(result.final, btf=args.btf, fix=result)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    if args.json:
        doc = final.to_dict()
        doc["initial"] = initial.to_dict()
        doc["output_model"] = text
        print(json.dumps(doc, indent=2))
        return EXIT_OK
    print(f"val(Sigma): {initial.val_sigma} -> {final.val_sigma}; conversions: {len(result.conversions)}")
    print()
    print(render_report(final))
    if not args.output:
        print()
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="daeblock", description="Block structural analysis and conversion of DAEs.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log conversion warnings")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="signature matrix, offsets, BTF and Jacobian verdict")
    a.add_argument("model", help="model file, or the name of a bundled model")
    a.add_argument("--btf", choices=("fine", "coarse", "none"), default="fine")
    a.add_argument("--json", action="store_true", help="emit the structured report")
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fix", help="apply conversions until the structural analysis succeeds")
    f.add_argument("model", help="model file, or the name of a bundled model")
    f.add_argument("--method", choices=("lc", "es", "auto"), default="auto")
    f.add_argument("--max-iter", type=int, default=10)
    f.add_argument("--btf", choices=("fine", "coarse", "none"), default="fine")
    f.add_argument("-o", "--output", help="write the converted model here")
    f.add_argument("--json", action="store_true", help="emit the structured report")
    f.set_defaults(func=cmd_fix)

    m = sub.add_parser("models", help="list bundled models")
    m.set_defaults(func=lambda args: print("\n".join(bundled_models())) or EXIT_OK)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ModelSyntaxError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except StructurallyIllPosed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ILL_POSED
    except (NoApplicableConversion, IterationLimit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNFIXABLE


if __name__ == "__main__":
    sys.exit(main())
