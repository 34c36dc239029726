import json
import math
import struct

import numpy as np
import pytest
import scipy.sparse as sp

from eigencond.io import (RunManifest, load_operator, read_csv, read_records,
                          save_operator, sha256, verify_manifest, write_csv,
                          write_json, write_records)
from eigencond.models import ModelSpec, build
from eigencond.sampler import SampleRecord
from eigencond.statespace import Hamiltonian, energy_expectation


def _same_operator(a, b, rng):
    assert a.representation == b.representation
    assert a.n_sites == b.n_sites and a.shift == b.shift
    x = rng.standard_normal(a.dim) + 1j * rng.standard_normal(a.dim)
    # Stored values are bit-exact; only BLAS summation order may differ.
    assert np.array_equal(a.to_dense(), b.to_dense())
    assert np.allclose(a.matvec(x), b.matvec(x), rtol=1e-14, atol=1e-14)
    for name in ("ground", "anti_ground"):
        sa, sb = getattr(a, name), getattr(b, name)
        assert sa.degeneracy == sb.degeneracy
        assert sa.energy == sb.energy
        assert np.array_equal(sa.basis, sb.basis)


@pytest.mark.parametrize("spec,kw", [
    (ModelSpec("TFIM1D", 6, {"h_x": 2.0}), {}),
    (ModelSpec("Heisenberg1D", 5), {}),
    (ModelSpec("GUE", 5, seed=2), {"diagonalize": False}),
    (ModelSpec("GOE", 5, seed=2), {}),
])
def test_operator_round_trip(tmp_path, rng, spec, kw):
    op = build(spec, **kw)
    header, payload = save_operator(op, tmp_path / "op")
    assert header.name == "op.json" and payload.name == "op.bin"
    back = load_operator(tmp_path / "op")
    _same_operator(op, back, rng)
    assert back.meta == json.loads(json.dumps(op.meta))


def test_eigenbasis_and_dense_round_trip(tmp_path, rng, tfim8_eig):
    save_operator(tfim8_eig, tmp_path / "eig")
    back = load_operator(tmp_path / "eig")
    _same_operator(tfim8_eig, back, rng)
    assert np.array_equal(back.eigenvectors, tfim8_eig.eigenvectors)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    dense = Hamiltonian(m + m.conj().T, "dense", 2,
                        shift=0.25).resolve_ground_spaces()
    save_operator(dense, tmp_path / "dense")
    back = load_operator(tmp_path / "dense")
    _same_operator(dense, back, rng)
    psi = np.ones(4) / 2
    assert energy_expectation(back, psi) == pytest.approx(
        energy_expectation(dense, psi), rel=1e-14)


def test_payload_byte_layout(tmp_path):
    mat = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, -1.0]]))
    op = Hamiltonian(mat, "sparse", 1, shift=0.5).resolve_ground_spaces()
    save_operator(op, tmp_path / "small")
    header = json.loads((tmp_path / "small.json").read_text())
    blob = (tmp_path / "small.bin").read_bytes()
    index = {a["name"]: a for a in header["arrays"]}
    data = index["data"]
    assert data["dtype"] == "float64"
    assert struct.unpack("<4d", blob[data["offset"]:data["offset"] + 32]) \
        == (1.0, 2.0, 2.0, -1.0)
    ptr = index["indptr"]
    assert ptr["dtype"] == "int64"
    assert struct.unpack("<3q", blob[ptr["offset"]:ptr["offset"] + 24]) \
        == (0, 2, 4)
    assert header["E0"] == op.shift and header["V"] == 1
    assert header["representation"] == "sparse"


def test_complex_matrix_is_column_major(tmp_path):
    m = np.array([[1.0, 2.0 - 1.0j], [2.0 + 1.0j, 3.0]])
    op = Hamiltonian(m, "dense", 1).resolve_ground_spaces()
    save_operator(op, tmp_path / "c")
    blob = (tmp_path / "c.bin").read_bytes()
    # Column 0 first: (1, 0), (2, 1); then column 1: (2, -1), (3, 0).
    assert struct.unpack("<8d", blob[:64]) == (1.0, 0.0, 2.0, 1.0,
                                               2.0, -1.0, 3.0, 0.0)


def test_not_an_operator(tmp_path):
    (tmp_path / "x.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValueError):
        load_operator(tmp_path / "x")


def test_records_round_trip(tmp_path):
    recs = [SampleRecord(1, 1.0 / 3.0, None, -0.6931471805599453, 4, 1,
                         0.125, 1e-300),
            SampleRecord(2, 0.1, None, -1.3862943611198906, 4, 0)]
    path = tmp_path / "r.ndjson"
    write_records(recs[:1], path, extra={"chain": 0})
    write_records(recs[1:], path, extra={"chain": 1}, append=True)
    back = read_records(path)
    assert len(back) == 2
    assert back[0]["e_star"] == 1.0 / 3.0
    assert back[0]["p_anti_gs"] == 1e-300
    assert back[0]["chain"] == 0 and back[1]["chain"] == 1
    assert back[1]["p_gs"] == "nan"
    assert set(back[0]) == {"i", "e_star", "log_measure", "p_gs",
                            "p_anti_gs", "accepts", "rejects", "chain"}


def test_csv_round_trip_is_exact(tmp_path, rng):
    cols = {"beta": rng.random(50) * 1e6, "p": rng.random(50) ** 9,
            "n": np.arange(50)}
    write_csv(tmp_path / "t.csv", cols)
    back = read_csv(tmp_path / "t.csv")
    assert list(back) == ["beta", "p", "n"]
    for k in cols:
        assert np.array_equal(back[k], cols[k])


def test_json_non_finite(tmp_path):
    write_json(tmp_path / "a.json", {"b": math.inf, "a": [np.float64(1.5),
                                                          math.nan]})
    text = (tmp_path / "a.json").read_text()
    assert json.loads(text) == {"a": [1.5, "nan"], "b": "inf"}
    assert text.index('"a"') < text.index('"b"')


def test_manifest_life_cycle(tmp_path):
    m = RunManifest(tmp_path / "run", "critical", model={"family": "GOE"},
                    config={"probes": 10}, seeds=[1, 2]).start()
    data = json.loads(m.path.read_text())
    assert data["status"] == "running" and data["finished"] is None
    out = tmp_path / "run" / "table.csv"
    write_csv(out, {"x": [1.0, 2.0]})
    m.finalize([out], note="done")
    data = json.loads(m.path.read_text())
    assert data["status"] == "ok" and data["note"] == "done"
    assert data["outputs"] == {"table.csv": sha256(out)}
    assert verify_manifest(m.path) == []
    out.write_text("x\n3.0\n")
    assert verify_manifest(m.path) == ["digest mismatch for table.csv"]
    out.unlink()
    assert verify_manifest(m.path) == ["missing output table.csv"]


def test_unfinished_manifest_is_reported(tmp_path):
    m = RunManifest(tmp_path, "sample").start()
    assert verify_manifest(m.path) == ["status is 'running'"]
