import json
import struct

import numpy as np
import pytest

from kgbench.errors import DataError, LoadError
from kgbench.models import MODELS, ModelSpec, init_params
from kgbench.persistence import MAGIC, VERSION, from_bytes, load_embeddings, save_embeddings, to_bytes, vocab_digest
from kgbench.synthetic import hierarchy_kg


@pytest.fixture(scope="module")
def kg():
    return hierarchy_kg(16)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_round_trip(tmp_path, kg, name):
    P = init_params(ModelSpec(name, 8), kg.num_entities, kg.num_relations, seed=4)
    rng = np.random.default_rng(0)
    for arr in P.tables.values():
        arr += rng.normal(scale=1e-3, size=arr.shape)
    manifest = save_embeddings(tmp_path / "m.bin", P, kg, norm=2)
    Q, header = load_embeddings(tmp_path / "m.bin", kg)
    assert Q.allclose(P) and Q.specs == P.specs
    assert (Q.model, Q.dim, Q.seed) == (name, 8, 4)
    assert header["norm"] == 2 and header["vocab_digest"] == vocab_digest(kg)
    info = json.loads(manifest.read_text())
    assert info["model"] == name and set(info["tables"]) == set(P.tables)


def test_header_layout(kg):
    P = init_params(ModelSpec("TransE", 4), kg.num_entities, kg.num_relations, seed=1)
    data = to_bytes(P, vocab_digest(kg))
    assert data[:4] == MAGIC
    assert struct.unpack("<I", data[4:8])[0] == VERSION
    (n,) = struct.unpack("<H", data[8:10])
    assert data[10 : 10 + n] == b"TransE"
    # entity then relation matrices come first
    first = data.index(b"ent")
    assert first < data.index(b"rel")


def test_corrupt_files_rejected(kg):
    P = init_params(ModelSpec("DistMult", 4), kg.num_entities, kg.num_relations, seed=1)
    data = to_bytes(P, vocab_digest(kg))
    with pytest.raises(LoadError, match="magic"):
        from_bytes(b"XXXX" + data[4:])
    with pytest.raises(LoadError, match="truncated"):
        from_bytes(data[:-8])
    with pytest.raises(LoadError, match="trailing"):
        from_bytes(data + b"\0")
    with pytest.raises(LoadError, match="version"):
        from_bytes(data[:4] + struct.pack("<I", 99) + data[8:])


def test_vocabulary_mismatch_refused(tmp_path, kg):
    P = init_params(ModelSpec("TransE", 4), kg.num_entities, kg.num_relations, seed=1)
    save_embeddings(tmp_path / "m.bin", P, kg)
    other = hierarchy_kg(16, node_type="Gene")
    with pytest.raises(DataError, match="refusing"):
        load_embeddings(tmp_path / "m.bin", other)
    with pytest.raises(LoadError):
        load_embeddings(tmp_path / "absent.bin")
