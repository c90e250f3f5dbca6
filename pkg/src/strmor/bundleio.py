"""On-disk bundles: Matrix Market matrices plus a JSON manifest.

A system bundle is a directory with one ``system.json`` manifest whose term
entries name coefficient expressions (documented text syntax) and relative
Matrix Market files. Mode-1 tensor unfoldings are coordinate files; their
sidecar data (state dimension, order, input count, symmetry flag) lives in
the manifest. Reduced bundles additionally carry the lifting bases as dense
array files and the provenance record.

Interpolation plans are JSON documents with either an explicit ``entries``
list or a compact ``grid`` block that is expanded deterministically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite

from .expr import parse_expr, to_text
from .model import (
    BilinTerm, InterpPlan, ParamMatrix, PlanEntry, PolyTerm, ReducedSystem,
    StructuredOperator, System, to_coo,
)

MANIFEST = "system.json"


class BundleError(RuntimeError):
    pass


def _write_matrix(mat, path: Path):
    if sp.issparse(mat):
        mmwrite(path, to_coo(mat))
    else:
        mmwrite(path, np.asarray(mat))


def _read_matrix(path: Path):
    out = mmread(path)
    if sp.issparse(out):
        return out.tocsr()
    return np.asarray(out, dtype=float)


def _dump_terms(terms, directory: Path, prefix: str):
    out = []
    for i, (coeff, mat) in enumerate(terms):
        fname = f"{prefix}_{i:02d}.mtx"
        _write_matrix(mat, directory / fname)
        out.append({"coeff": to_text(coeff), "matrix": fname})
    return out

def _load_terms(entries, directory: Path):
    return tuple(
        (parse_expr(t["coeff"]), _read_matrix(directory / t["matrix"]))
        for t in entries
    )


def save_system(sys_or_rom, directory) -> Path:
    """Write a system (or reduced system) bundle; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rom = sys_or_rom if isinstance(sys_or_rom, ReducedSystem) else None
    sys = rom.system if rom is not None else sys_or_rom
    doc = {
        "kind": "reduced-system" if rom is not None else "system",
        "n": sys.n,
        "m": sys.m,
        "p_out": sys.p_out,
        "q": sys.nparams,
        "degree": sys.degree,
        "operator": [
            {"kappa": to_text(k), "matrix": f"op_{i:02d}.mtx"}
            for i, (k, _) in enumerate(sys.operator.terms)
        ],
        "input": {
            "s_dependent": sys.input_map.s_dependent,
            "terms": _dump_terms(sys.input_map.terms, directory, "b"),
        },
        "output": {
            "s_dependent": sys.output_map.s_dependent,
            "terms": _dump_terms(sys.output_map.terms, directory, "c"),
        },
        "poly": [
            {
                "order": h.order,
                "n": h.n,
                "symmetric": h.symmetric,
                "terms": _dump_terms(h.terms, directory, f"h{h.order}"),
            }
            for h in sys.poly
        ],
        "bilinear": [
            {
                "order": b.order,
                "n": b.n,
                "m": b.m,
                "symmetric": b.symmetric,
                "terms": _dump_terms(b.terms, directory, f"n{b.order}"),
            }
            for b in sys.bilin
        ],
    }
    for i, (_, mat) in enumerate(sys.operator.terms):
        _write_matrix(mat, directory / f"op_{i:02d}.mtx")
    if rom is not None:
        _write_matrix(rom.V, directory / "V.mtx")
        _write_matrix(rom.W, directory / "W.mtx")
        doc["bases"] = {"V": "V.mtx", "W": "W.mtx"}
        doc["provenance"] = rom.provenance
    path = directory / MANIFEST
    path.write_text(json.dumps(doc, indent=2))
    return path


def load_system(directory):
    """Load a bundle; returns a System or ReducedSystem by manifest kind."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise BundleError(f"no manifest at {path}")
    doc = json.loads(path.read_text())
    op_terms = tuple(
        (parse_expr(t["kappa"]), _read_matrix(directory / t["matrix"]))
        for t in doc["operator"]
    )
    operator = StructuredOperator(n=doc["n"], terms=op_terms)
    input_map = ParamMatrix(
        terms=_load_terms(doc["input"]["terms"], directory),
        s_dependent=doc["input"]["s_dependent"],
    )
    output_map = ParamMatrix(
        terms=_load_terms(doc["output"]["terms"], directory),
        s_dependent=doc["output"]["s_dependent"],
    )
    poly = tuple(
        PolyTerm(
            order=h["order"], n=h["n"],
            terms=_load_terms(h["terms"], directory),
            symmetric=h["symmetric"],
        )
        for h in doc.get("poly", [])
    )
    bilin = tuple(
        BilinTerm(
            order=b["order"], n=b["n"], m=b["m"],
            terms=_load_terms(b["terms"], directory),
            symmetric=b["symmetric"],
        )
        for b in doc.get("bilinear", [])
    )
    sys = System(
        operator=operator, input_map=input_map, output_map=output_map,
        poly=poly, bilin=bilin, degree=doc["degree"], nparams=doc["q"],
    )
    if doc["kind"] == "reduced-system":
        V = np.asarray(_read_matrix(directory / doc["bases"]["V"]), dtype=float)
        W = np.asarray(_read_matrix(directory / doc["bases"]["W"]), dtype=float)
        return ReducedSystem(system=sys, V=V, W=W,
                             provenance=doc.get("provenance", {}))
    return sys


# ---------------------------------------------------------------------------
# interpolation plans

def _axis_values(spec: str) -> np.ndarray:
    kind, *rest = spec.split(":")
    if kind == "log":
        a, b, count = float(rest[0]), float(rest[1]), int(rest[2])
        return np.logspace(np.log10(a), np.log10(b), count)
    if kind == "lin":
        a, b, count = float(rest[0]), float(rest[1]), int(rest[2])
        return np.linspace(a, b, count)
    raise BundleError(f"unknown axis spec {spec!r}")


def _expand_grid(grid: dict, flags: dict, m: int, p_out: int) -> InterpPlan:
    freqs = _axis_values(grid["sigma"])
    axis = grid.get("axis", "imag")
    if axis == "imag":
        sigmas = 1j * freqs
    elif axis == "real":
        sigmas = freqs.astype(complex)
    else:
        raise BundleError(f"unknown frequency axis {axis!r}")
    seed = int(grid.get("seed", 0))
    rng = np.random.default_rng(seed)

    pspec = grid.get("p")
    pairing = grid.get("pairing", "product" if pspec else "none")
    points = []
    if pspec is None:
        points = [(s, ()) for s in sigmas]
    elif pspec.startswith("rand:"):
        _, a, b = pspec.split(":")
        draws = rng.uniform(float(a), float(b), size=len(sigmas))
        points = [(s, (float(pv),)) for s, pv in zip(sigmas, draws)]
    else:
        pvals = _axis_values(pspec)
        if pairing == "zip":
            if len(pvals) != len(sigmas):
                raise BundleError("zip pairing needs equal axis lengths")
            points = [(s, (float(pv),)) for s, pv in zip(sigmas, pvals)]
        else:
            points = [(s, (float(pv),)) for s in sigmas for pv in pvals]

    directions = grid.get("directions", "ones")
    entries = []
    for s, pv in points:
        if directions == "random":
            b = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            c = rng.standard_normal(p_out) + 1j * rng.standard_normal(p_out)
            b = b / np.linalg.norm(b)
            c = c / np.linalg.norm(c)
        else:
            b = np.ones(m, dtype=complex)
            c = np.ones(p_out, dtype=complex)
        entries.append(PlanEntry(sigma=s, mu=s, p=pv, b=tuple(b), c=tuple(c)))
    return InterpPlan(
        entries=tuple(entries),
        families=tuple(flags.get("families", ("L",))),
        galerkin=bool(flags.get("galerkin", False)),
        hermite=bool(flags.get("hermite", True)),
    )


def load_plan(path, m: int = 1, p_out: int = 1) -> InterpPlan:
    """Load a plan; grid documents need the direction sizes (m, p_out)."""
    doc = json.loads(Path(path).read_text())
    flags = doc.get("flags", {})
    if "grid" in doc:
        return _expand_grid(doc["grid"], flags, m, p_out)
    entries = []
    for e in doc["entries"]:
        sigma = complex(*e["sigma"])
        mu = complex(*e["mu"]) if "mu" in e else sigma
        entries.append(PlanEntry(
            sigma=sigma,
            mu=mu,
            p=tuple(e.get("p", ())),
            b=tuple(complex(*v) for v in e.get("b", [[1.0, 0.0]])),
            c=tuple(complex(*v) for v in e.get("c", [[1.0, 0.0]])),
        ))
    return InterpPlan(
        entries=tuple(entries),
        families=tuple(flags.get("families", ("L",))),
        galerkin=bool(flags.get("galerkin", False)),
        hermite=bool(flags.get("hermite", False)),
    )


def save_plan(plan: InterpPlan, path):
    Path(path).write_text(plan.canonical_json())
