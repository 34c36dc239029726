"""
Stable on-disk formats.

Operators
    ``<stem>.json`` holds a header (model description, ``V``, shift,
    extremal-space metadata and an index of arrays); ``<stem>.bin`` holds the
    arrays back to back, each column-major, little-endian IEEE-754
    (``float64``, or ``complex128`` as interleaved real/imaginary pairs;
    sparse index arrays are little-endian ``int64``).

Sampler records
    Newline-delimited JSON, one object per record with keys
    ``i, e_star, log_measure, p_gs, p_anti_gs, accepts, rejects``.

Tables
    CSV with a header row; floats written with 17 significant digits so the
    text round-trips exactly.

Run manifests
    JSON written before any data (``status: "running"``) and finalized with
    SHA-256 digests of every output file.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __version__
from .statespace import GroundSpace, Hamiltonian

__all__ = [
    "save_operator",
    "load_operator",
    "write_records",
    "read_records",
    "write_json",
    "write_csv",
    "read_csv",
    "RunManifest",
    "verify_manifest",
    "sha256",
]

_FORMAT = "eigencond-operator"


def _encode(value):
    """JSON-friendly scalars: non-finite floats become strings."""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    return value


def _decode_float(value):
    return float(value) if value is not None else None


# -- operators -------------------------------------------------------------

def _arrays_of(op):
    arrays = {}
    rep = op.representation
    if rep == "diagonal":
        arrays["spectrum"] = op.data
        if op.eigenvectors is not None:
            arrays["eigenvectors"] = op.eigenvectors
    elif rep == "tridiagonal":
        arrays["diag"], arrays["offdiag"] = op.data
    elif rep == "sparse":
        mat = op.data.tocsr()
        arrays["data"] = mat.data
        arrays["indices"] = mat.indices.astype(np.int64)
        arrays["indptr"] = mat.indptr.astype(np.int64)
    else:
        arrays["matrix"] = op.data
    for name, space in (("ground", op.ground), ("anti_ground",
                                                 op.anti_ground)):
        if space is not None and space.indices is None:
            arrays[f"{name}_basis"] = space.basis
    return arrays


def _dtype_tag(arr):
    if np.iscomplexobj(arr):
        return "complex128", "<c16"
    if np.issubdtype(arr.dtype, np.integer):
        return "int64", "<i8"
    return "float64", "<f8"


def _space_meta(space):
    if space is None:
        return None
    return {"degeneracy": space.degeneracy, "energy": space.energy,
            "gap": space.gap,
            "indices": None if space.indices is None
            else [int(i) for i in space.indices]}


def save_operator(op, stem):
    """Write ``op`` to ``<stem>.json`` and ``<stem>.bin``.

    Returns
    -------
    (Path, Path)
        Header and payload paths.
    """
    stem = Path(stem)
    header_path = stem.with_suffix(".json")
    payload_path = stem.with_suffix(".bin")
    index = []
    offset = 0
    with open(payload_path, "wb") as fh:
        for name, arr in _arrays_of(op).items():
            arr = np.asarray(arr)
            tag, code = _dtype_tag(arr)
            raw = np.asfortranarray(arr.astype(code, copy=False)).tobytes(
                order="F")
            fh.write(raw)
            index.append({"name": name, "dtype": tag, "shape":
                          list(arr.shape), "offset": offset,
                          "nbytes": len(raw)})
            offset += len(raw)
    header = {
        "format": _FORMAT,
        "version": 1,
        "tool_version": __version__,
        "representation": op.representation,
        "V": op.n_sites,
        "N": op.dim,
        "E0": op.shift,
        "model": op.meta,
        "ground": _space_meta(op.ground),
        "anti_ground": _space_meta(op.anti_ground),
        "pauli_terms": op.pauli_terms,
        "payload": payload_path.name,
        "arrays": index,
    }
    with open(header_path, "w") as fh:
        json.dump(_encode(header), fh, indent=2)
    return header_path, payload_path


def load_operator(stem):
    """Read an operator written by :func:`save_operator`."""
    stem = Path(stem)
    header_path = stem.with_suffix(".json")
    with open(header_path) as fh:
        header = json.load(fh)
    if header.get("format") != _FORMAT:
        raise ValueError(f"{header_path} is not an operator header")
    blob = (header_path.parent / header["payload"]).read_bytes()
    arrays = {}
    codes = {"float64": "<f8", "complex128": "<c16", "int64": "<i8"}
    for entry in header["arrays"]:
        chunk = blob[entry["offset"]:entry["offset"] + entry["nbytes"]]
        flat = np.frombuffer(chunk, dtype=codes[entry["dtype"]])
        arrays[entry["name"]] = flat.reshape(entry["shape"], order="F") \
            .astype(codes[entry["dtype"]][1:], copy=True)
    rep = header["representation"]
    n = header["N"]
    if rep == "diagonal":
        data = arrays["spectrum"]
    elif rep == "tridiagonal":
        data = (arrays["diag"], arrays["offdiag"])
    elif rep == "sparse":
        data = sp.csr_matrix((arrays["data"], arrays["indices"],
                              arrays["indptr"]), shape=(n, n))
    else:
        data = arrays["matrix"]

    def space(name):
        meta = header[name]
        if meta is None:
            return None
        gap = _decode_float(meta["gap"])
        if meta["indices"] is not None:
            idx = np.array(meta["indices"], dtype=np.int64)
            basis = np.zeros((n, idx.size))
            basis[idx, np.arange(idx.size)] = 1.0
            return GroundSpace(meta["energy"], basis, gap, indices=idx)
        return GroundSpace(meta["energy"], arrays[f"{name}_basis"], gap)

    pauli = header.get("pauli_terms")
    return Hamiltonian(data, rep, header["V"], shift=header["E0"],
                       ground=space("ground"),
                       anti_ground=space("anti_ground"),
                       eigenvectors=arrays.get("eigenvectors"),
                       pauli_terms=[tuple(t) for t in pauli] if pauli
                       else None,
                       meta=header.get("model") or {},
                       check_dimension=(n == 2 ** header["V"]))


# -- records and tables --------------------------------------------------------

def write_records(records, path, *, extra=None, append=False):
    """Write sampler records as newline-delimited JSON.

    ``extra`` is merged into every object (e.g. ``{"chain": 3}``); with
    ``append`` the records are added to an existing stream.
    """
    with open(path, "a" if append else "w") as fh:
        for rec in records:
            obj = rec.to_json()
            if extra:
                obj.update(extra)
            fh.write(json.dumps(_encode(obj)) + "\n")


def read_records(path):
    """Read newline-delimited JSON records into a list of dicts."""
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj):
    """Write a JSON document with sorted keys and non-finite floats as
    strings."""
    with open(path, "w") as fh:
        json.dump(_encode(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path, columns):
    """Write a mapping of equal-length columns to CSV."""
    names = list(columns)
    cols = [np.asarray(columns[n]).tolist() for n in names]
    rows = zip(*cols)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Read a numeric CSV written by :func:`write_csv` into arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [r for r in reader]
    out = {}
    for j, name in enumerate(names):
        vals = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


# -- manifests -------------------------------------------------------------

def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


class RunManifest:
    """Provenance record of one command invocation.

    The manifest is written to ``<out>/manifest.json`` as soon as the run
    starts, with status ``"running"``; :meth:`finalize` records the end time,
    final status and SHA-256 digests of the listed outputs.  A manifest left
    in the running state marks an interrupted run.
    """

    def __init__(self, out_dir, command, *, model=None, config=None,
                 seeds=None):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / "manifest.json"
        self.data = {
            "tool_version": __version__,
            "command": command,
            "model": model,
            "config": config,
            "seeds": seeds,
            "started": _now(),
            "finished": None,
            "status": "running",
            "outputs": {},
        }

    def write(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(_encode(self.data), fh, indent=2, sort_keys=True)
        os.replace(tmp, self.path)

    def start(self):
        self.write()
        return self

    def finalize(self, outputs, status="ok", **notes):
        self.data["outputs"] = {
            str(Path(p).relative_to(self.out_dir)): sha256(p)
            for p in outputs}
        self.data["finished"] = _now()
        self.data["status"] = status
        self.data.update(notes)
        self.write()


def verify_manifest(path):
    """Check that every output listed in a manifest exists with its digest.

    Returns
    -------
    list of str
        Problems found (empty when the manifest is consistent).
    """
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    problems = []
    if data.get("status") != "ok":
        problems.append(f"status is {data.get('status')!r}")
    for name, digest in data.get("outputs", {}).items():
        target = path.parent / name
        if not target.exists():
            problems.append(f"missing output {name}")
        elif sha256(target) != digest:
            problems.append(f"digest mismatch for {name}")
    return problems
