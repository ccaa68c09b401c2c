"""JSON documents describing complexes, filtrations, CW data and fibrations.

Matrices are row-major nested arrays whose entries are decimal strings (plain
JSON numbers are accepted on input). Every document has a top-level ``kind``.

complex
    ``{"kind": "complex", "lo": 0, "grams": [M, ...] | "dims": [k, ...],
    "differentials": [M, ...], "structure": {"reps": {"n": M}, "grams": {"n": M}}}``
filtered
    ``{"kind": "filtered", "complex": {...}, "levels": [{"n": M}, ...]}``
local_system
    ``{"kind": "local_system", "fiber_dim": d, "generators": {"t": M}, "fiber_gram": M}``
cw
    ``{"kind": "cw", "cells": {"0": ["v"], ...}, "boundary": {"e": [["1", "t", "v"], ...]},
    "system": {...} | "family": [{"sign": 1, "system": {...}}, ...]}``
fibration
    ``{"kind": "fibration", "model": "product" | "mapping_torus" | "twisted",
    "base": {...cw...}, "fiber": {...complex...}, "transports": {"t": {"n": M}}}``
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .cochain import ChainMap, CochainComplex, CohomologyStructure, check_structure
from .cwlocal import (AlternatingSystemFamily, BoundaryTerm, CWComplexData, LocalSystem,
                      circle, coerce_word)
from .errors import ParseError, TorsionError
from .fibration import FibrationModel
from .filtration import FilteredComplex
from .linalg import HilbertSpace

KINDS = ("complex", "filtered", "cw", "local_system", "fibration")


@dataclass(frozen=True)
class Document:
    kind: str
    payload: dict

    def __eq__(self, other) -> bool:
        return isinstance(other, Document) and self.kind == other.kind and \
            _canonical(self.payload) == _canonical(other.payload)


def _canonical(obj: Any) -> str:
    return json.dumps(_normalize(obj), sort_keys=True)


def _normalize(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return repr(float(obj))
    if isinstance(obj, str):
        try:
            return repr(float(obj))
        except ValueError:
            return obj
    return obj


# --- low-level readers ---------------------------------------------------------------------


def _number(value, path: str) -> float:
    if isinstance(value, bool):
        raise ParseError(path, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ParseError(path, f"expected a decimal string, got {value!r}")


def _matrix(value, path: str, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    if not isinstance(value, list):
        raise ParseError(path, "expected a matrix (array of rows)")
    data = []
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise ParseError(f"{path}[{i}]", "expected a row array")
        data.append([_number(x, f"{path}[{i}][{j}]") for j, x in enumerate(row)])
    widths = {len(r) for r in data}
    if len(widths) > 1:
        raise ParseError(path, "rows have different lengths")
    width = widths.pop() if widths else (cols or 0)
    m = np.array(data, dtype=float).reshape(len(data), width)
    if rows is not None and m.shape[0] != rows and m.size:
        raise ParseError(path, f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols and m.size:
        raise ParseError(path, f"expected {cols} columns, got {m.shape[1]}")
    if not m.size:
        m = np.zeros((rows if rows is not None else m.shape[0], cols if cols is not None else m.shape[1]))
    return m


def _gram(value, path: str, dim: int | None = None) -> HilbertSpace:
    m = _matrix(value, path, dim, dim)
    try:
        return HilbertSpace(m)
    except TorsionError as exc:
        raise ParseError(path, str(exc)) from exc


def _field(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise ParseError(path, "expected an object")
    if key not in obj:
        raise ParseError(f"{path}.{key}", "missing field")
    return obj[key]


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ParseError(path, "expected an integer")
    try:
        return int(value)
    except ValueError as exc:
        raise ParseError(path, "expected an integer") from exc


# --- builders --------------------------------------------------------------------------------


def build_complex(obj: dict, path: str = "$") -> CochainComplex:
    lo = _int(obj.get("lo", 0), f"{path}.lo")
    if "grams" in obj:
        grams = _field(obj, "grams", path)
        if not isinstance(grams, list) or not grams:
            raise ParseError(f"{path}.grams", "expected a non-empty array of matrices")
        spaces = []
        for i, g in enumerate(grams):
            if isinstance(g, list) and not g:
                spaces.append(HilbertSpace.euclidean(0))
            else:
                spaces.append(_gram(g, f"{path}.grams[{i}]"))
    else:
        dims = _field(obj, "dims", path)
        if not isinstance(dims, list) or not dims:
            raise ParseError(f"{path}.dims", "expected a non-empty array")
        spaces = [HilbertSpace.euclidean(_int(d, f"{path}.dims[{i}]")) for i, d in enumerate(dims)]
    diffs_raw = obj.get("differentials", [])
    if not isinstance(diffs_raw, list) or len(diffs_raw) != len(spaces) - 1:
        raise ParseError(f"{path}.differentials", f"expected {len(spaces) - 1} matrices")
    diffs = [_matrix(m, f"{path}.differentials[{i}]", spaces[i + 1].dim, spaces[i].dim)
             for i, m in enumerate(diffs_raw)]
    try:
        return CochainComplex(lo, spaces, diffs)
    except TorsionError as exc:
        raise ParseError(f"{path}.differentials", str(exc)) from exc


def build_structure(obj: dict, C: CochainComplex, path: str = "$.structure") -> CohomologyStructure:
    reps_raw = _field(obj, "reps", path)
    grams_raw = obj.get("grams", {})
    reps, grams = {}, {}
    for key, m in reps_raw.items():
        n = _int(key, f"{path}.reps")
        if n not in C.degrees:
            raise ParseError(f"{path}.reps.{key}", "degree outside the complex")
        reps[n] = _matrix(m, f"{path}.reps.{key}", C.dim(n))
    for key, m in grams_raw.items():
        n = _int(key, f"{path}.grams")
        grams[n] = _gram(m, f"{path}.grams.{key}").gram
    for n in C.degrees:
        reps.setdefault(n, np.zeros((C.dim(n), 0)))
        grams.setdefault(n, np.eye(reps[n].shape[1]))
    H = CohomologyStructure(reps, grams)
    try:
        check_structure(C, H)
    except TorsionError as exc:
        raise ParseError(path, str(exc)) from exc
    return H


def build_filtered(obj: dict, path: str = "$") -> FilteredComplex:
    C = build_complex(_field(obj, "complex", path), f"{path}.complex")
    levels_raw = _field(obj, "levels", path)
    if not isinstance(levels_raw, list):
        raise ParseError(f"{path}.levels", "expected an array")
    levels = []
    for p, lev in enumerate(levels_raw):
        if not isinstance(lev, dict):
            raise ParseError(f"{path}.levels[{p}]", "expected an object keyed by degree")
        levels.append({_int(k, f"{path}.levels[{p}]"): _matrix(v, f"{path}.levels[{p}].{k}", C.dim(_int(k, path)))
                       for k, v in lev.items()})
    try:
        return FilteredComplex(C, levels)
    except TorsionError as exc:
        raise ParseError(f"{path}.levels", str(exc)) from exc


def build_local_system(obj: dict, path: str = "$") -> LocalSystem:
    d = _int(_field(obj, "fiber_dim", path), f"{path}.fiber_dim")
    gens = {str(k): _matrix(v, f"{path}.generators.{k}", d, d)
            for k, v in obj.get("generators", {}).items()}
    gram = _gram(obj["fiber_gram"], f"{path}.fiber_gram", d).gram if "fiber_gram" in obj else None
    try:
        return LocalSystem(d, gens, gram)
    except TorsionError as exc:
        raise ParseError(f"{path}.generators", str(exc)) from exc


def build_cw(obj: dict, path: str = "$") -> CWComplexData:
    cells_raw = _field(obj, "cells", path)
    cells = {_int(k, f"{path}.cells"): [str(c) for c in v] for k, v in cells_raw.items()}
    boundary = {}
    for cell, terms in obj.get("boundary", {}).items():
        parsed = []
        for i, term in enumerate(terms):
            tp = f"{path}.boundary.{cell}[{i}]"
            if not isinstance(term, list) or len(term) != 3:
                raise ParseError(tp, "expected [coefficient, word, face]")
            try:
                parsed.append(BoundaryTerm(_int(term[0], tp), coerce_word(term[1]), str(term[2])))
            except ValueError as exc:
                raise ParseError(tp, str(exc)) from exc
        boundary[str(cell)] = parsed
    try:
        return CWComplexData(cells, boundary)
    except TorsionError as exc:
        raise ParseError(f"{path}.boundary", str(exc)) from exc


def build_cw_coefficients(obj: dict, path: str = "$") -> LocalSystem | AlternatingSystemFamily:
    if "family" in obj:
        members = []
        for i, m in enumerate(obj["family"]):
            sign = _int(_field(m, "sign", f"{path}.family[{i}]"), f"{path}.family[{i}].sign")
            members.append((sign, build_local_system(_field(m, "system", f"{path}.family[{i}]"),
                                                     f"{path}.family[{i}].system")))
        return AlternatingSystemFamily(members)
    if "system" in obj:
        return build_local_system(obj["system"], f"{path}.system")
    return LocalSystem.trivial(1)


def build_fibration(obj: dict, path: str = "$"):
    model = obj.get("model", "twisted")
    fiber = build_complex(_field(obj, "fiber", path), f"{path}.fiber")
    transports = {}
    for name, maps in obj.get("transports", {}).items():
        transports[str(name)] = {
            _int(k, f"{path}.transports.{name}"): _matrix(v, f"{path}.transports.{name}.{k}",
                                                          fiber.dim(_int(k, path)), fiber.dim(_int(k, path)))
            for k, v in maps.items()}
    try:
        chain_maps = {n: ChainMap(fiber, fiber, m) for n, m in transports.items()}
        if model == "product":
            return FibrationModel.product(build_cw(_field(obj, "base", path), f"{path}.base"), fiber)
        if model == "mapping_torus":
            if len(chain_maps) != 1:
                raise ParseError(f"{path}.transports", "a mapping torus needs exactly one transport")
            (name, T), = chain_maps.items()
            return FibrationModel(circle(name), fiber, {name: T})
        if model == "twisted":
            return FibrationModel(build_cw(_field(obj, "base", path), f"{path}.base"), fiber, chain_maps)
    except ParseError:
        raise
    except TorsionError as exc:
        raise ParseError(f"{path}.transports", str(exc)) from exc
    raise ParseError(f"{path}.model", f"unknown model {model!r}")


BUILDERS = {
    "complex": build_complex,
    "filtered": build_filtered,
    "cw": build_cw,
    "local_system": build_local_system,
    "fibration": build_fibration,
}


# --- parse / emit ------------------------------------------------------------------------------


def parse(text: str) -> Document:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("$", f"invalid JSON: {exc.msg} at line {exc.lineno}") from exc
    if not isinstance(obj, dict):
        raise ParseError("$", "top level must be an object")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise ParseError("$.kind", f"expected one of {', '.join(KINDS)}")
    doc = Document(kind, obj)
    build(doc)
    if kind == "cw":
        build_cw_coefficients(obj)
    if kind == "complex" and "structure" in obj:
        build_structure(obj["structure"], build_complex(obj))
    return doc


def load(path: str | Path) -> Document:
    p = Path(path)
    if not p.exists() and p.with_suffix(".json").exists():
        p = p.with_suffix(".json")
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(str(path), f"cannot read file: {exc}") from exc
    return parse(text)


def build(doc: Document):
    return BUILDERS[doc.kind](doc.payload)


def _stringify(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _stringify(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_stringify(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


def emit(doc: Document) -> str:
    """Serialize with every float as a decimal string."""
    return json.dumps(_stringify(doc.payload), indent=2, sort_keys=True, ensure_ascii=False)


def matrix_strings(m: np.ndarray) -> list[list[str]]:
    return [[repr(float(x)) for x in row] for row in np.atleast_2d(m)]


def complex_payload(C: CochainComplex) -> dict:
    return {"kind": "complex", "lo": C.lo,
            "grams": [matrix_strings(C.space(n).gram) if C.dim(n) else [] for n in C.degrees],
            "differentials": [matrix_strings(C.diff(n)) if C.diff(n).size else
                              [[] for _ in range(C.dim(n + 1))] for n in range(C.lo, C.hi)]}
