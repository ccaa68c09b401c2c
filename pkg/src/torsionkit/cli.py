"""Command-line front end.

Exit status: 0 when every check passes, 1 when a verification fails, 2 for
input errors (unreadable file, schema violation, violated hypotheses).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .cochain import CochainComplex, harmonic_structure, rho
from .cwlocal import LocalSystem, build_cochain, milnor_torsion
from .detline import rho_bar, rho_bar_LS
from .documents import Document, build, build_cw_coefficients, build_structure, load
from .errors import ParseError, TorsionError
from .fibration import FibrationModel, leray_serre, rho_LS, verify_fibration_formula
from .filtration import FilteredComplex, rho_fil, spectral, verify_filtered_torsion
from .suites import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def fmt(x: float) -> str:
    """Seven significant digits."""
    if x == 0:
        return "0"
    return f"{x:.7g}"


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual <= self.tolerance


@dataclass
class Report:
    command: str
    inputs: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self, wall_time: float) -> str:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        lines = [f"# torsionkit {__version__} {self.command} | generated {stamp} | wall {wall_time:.3f}s"]
        for k, v in self.inputs.items():
            lines.append(f"{k}: {v}")
        lines.extend(self.notes)
        for k, v in self.values.items():
            lines.append(f"{k} = {fmt(v)}")
        for c in self.checks:
            lines.append(f"check {c.name}: {'PASS' if c.passed else 'FAIL'} "
                         f"residual={fmt(c.residual)} tolerance={fmt(c.tolerance)}")
        if self.checks:
            lines.append(f"status: {'pass' if self.passed else 'fail'}")
        machine = {
            "command": self.command,
            "inputs": self.inputs,
            "values": {k: repr(float(v)) for k, v in self.values.items()},
            "checks": [{"name": c.name, "residual": repr(float(c.residual)),
                        "tolerance": repr(float(c.tolerance)), "passed": c.passed}
                       for c in self.checks],
            "passed": self.passed,
        }
        lines.append("--- machine-readable ---")
        lines.append(json.dumps(machine, sort_keys=True))
        return "\n".join(lines) + "\n"


def _expect(doc: Document, *kinds: str):
    if doc.kind not in kinds:
        raise ParseError("$.kind", f"this command accepts {', '.join(kinds)}, got {doc.kind}")


def _filtered_of(doc: Document) -> FilteredComplex:
    _expect(doc, "filtered", "fibration")
    obj = build(doc)
    return obj.filtered if isinstance(obj, FibrationModel) else obj


# --- commands ----------------------------------------------------------------------------------


def cmd_torsion(args) -> Report:
    doc = load(args.file)
    report = Report("torsion", {"file": str(args.file), "kind": doc.kind})
    if doc.kind == "cw":
        X = build(doc)
        coeff = build_cw_coefficients(doc.payload)
        report.values["rho"] = milnor_torsion(X, coeff)
        return report
    if doc.kind == "local_system":
        raise ParseError("$.kind", "a local system alone has no torsion; embed it in a cw document")
    obj = build(doc)
    if isinstance(obj, FibrationModel):
        C = obj.total
    elif isinstance(obj, FilteredComplex):
        C = obj.complex
    else:
        C = obj
    H = None
    if args.structure not in (None, "harmonic"):
        text = Path(args.structure).read_text(encoding="utf-8") if Path(args.structure).exists() else None
        if text is None:
            raise ParseError(args.structure, "structure file not found")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(args.structure, f"invalid JSON: {exc.msg}") from exc
        H = build_structure(raw, C, "$")
    elif doc.kind == "complex" and "structure" in doc.payload and args.structure is None:
        H = build_structure(doc.payload["structure"], C)
    report.inputs["structure"] = "harmonic" if H is None else "supplied"
    report.values["rho"] = rho(C, H)
    return report


def cmd_spectral(args) -> Report:
    doc = load(args.file)
    FC = _filtered_of(doc)
    S = spectral(FC)
    report = Report("spectral", {"file": str(args.file), "kind": doc.kind,
                                 "filtration_length": FC.length})
    if args.pages:
        for r in range(1, S.r_max + 1):
            dims = {s: k for s, k in S.page_dims(r).items() if k}
            report.notes.append(f"E_{r}: " + (", ".join(f"{s}={k}" for s, k in sorted(dims.items())) or "0"))
        inf = {s: S.dim_E_inf(*s) for s in S.spots() if S.dim_E_inf(*s)}
        report.notes.append("E_inf: " + (", ".join(f"{s}={k}" for s, k in sorted(inf.items())) or "0"))
    report.values["rho_fil"] = rho_fil(FC, S=S)
    return report


def cmd_verify(args) -> Report:
    if args.target == "suite":
        return cmd_suite(args)
    if args.file is None:
        raise ParseError("file", "a document is required")
    doc = load(args.file)
    if args.target == "filtered-torsion":
        FC = _filtered_of(doc)
        r = verify_filtered_torsion(FC)
        report = Report("verify filtered-torsion", {"file": str(args.file)})
        report.values.update(rho=r.rho, rho_fil=r.rho_fil)
        report.checks.append(Check("filtered_torsion", r.difference, r.tolerance))
        return report
    _expect(doc, "fibration")
    model = build(doc)
    r = verify_fibration_formula(model)
    report = Report("verify fibration", {"file": str(args.file)})
    report.values.update({"rho_E": r.rho_total, "euler_times_rho_F": r.euler_times_fiber,
                          "rho_base": r.base_term, "rho_LS": r.rho_LS})
    report.checks.append(Check("fibration_formula", r.residual, r.tolerance))
    return report


def cmd_suite(args) -> Report:
    if args.kind is None:
        raise ParseError("--kind", f"choose one of {', '.join(SUITES)}")
    result = run_suite(args.kind, args.count, args.seed)
    report = Report("verify suite", {"kind": args.kind, "count": args.count, "seed": args.seed})
    report.notes.append(f"{result.passed}/{result.count} pass")
    if result.failures:
        report.notes.append("failing instances: " + ", ".join(map(str, result.failures)))
    # residuals are normalized by their tolerance
    for name, worst in sorted(result.worst.items()):
        report.checks.append(Check(f"{name} (worst, normalized)", worst, 1.0))
    report.values["passed_instances"] = result.passed
    return report


def cmd_detline(args) -> Report:
    doc = load(args.file)
    report = Report("detline", {"file": str(args.file), "kind": doc.kind})
    tol = 1e-9
    if doc.kind == "fibration":
        data = leray_serre(build(doc))
        value, reference = rho_bar_LS(data).log_magnitude, rho_LS(data)
        report.values.update({"ln_norm_rho_bar_LS": value, "rho_LS": reference})
        report.checks.append(Check("rho_bar_LS_vs_rho_LS", abs(value - reference), tol))
        return report
    if doc.kind == "cw":
        coeff = build_cw_coefficients(doc.payload)
        if not isinstance(coeff, LocalSystem):
            raise ParseError("$.family", "detline accepts a single local system")
        C = build_cochain(build(doc), coeff)
    else:
        obj = build(doc)
        C = obj.complex if isinstance(obj, FilteredComplex) else obj
    if not isinstance(C, CochainComplex):
        raise ParseError("$.kind", "detline needs a complex, cw or fibration document")
    H = harmonic_structure(C)
    value, reference = rho_bar(C, H).log_magnitude, rho(C, H)
    report.values.update({"ln_norm_rho_bar": value, "rho": reference})
    report.checks.append(Check("rho_bar_vs_rho", abs(value - reference), tol * max(1.0, abs(reference))))
    return report


# --- entry point --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="torsionkit", description="Torsion of Hilbert cochain complexes.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("torsion", help="print the torsion of a document")
    p.add_argument("file")
    p.add_argument("--structure", default=None, help="'harmonic' or a JSON structure file")
    p.set_defaults(func=cmd_torsion)

    p = sub.add_parser("spectral", help="spectral sequence data and the filtered torsion")
    p.add_argument("file")
    p.add_argument("--pages", action="store_true", help="print page dimensions")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("verify", help="check an identity on a document or a random suite")
    p.add_argument("target", choices=["filtered-torsion", "fibration", "suite"])
    p.add_argument("file", nargs="?")
    p.add_argument("--kind", choices=sorted(SUITES))
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("detline", help="determinant-line norm and its cross-check")
    p.add_argument("file")
    p.set_defaults(func=cmd_detline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    raw_tol = os.environ.get("TORSION_TOL")
    if raw_tol:
        try:
            if not float(raw_tol) > 0:
                raise ValueError
        except ValueError:
            print(f"error: TORSION_TOL must be a positive number, got {raw_tol!r}", file=sys.stderr)
            return EXIT_INPUT
    start = time.perf_counter()
    try:
        report = args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TorsionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(report.render(time.perf_counter() - start))
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
