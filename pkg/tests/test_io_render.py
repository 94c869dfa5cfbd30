import json
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halr.cluster import DENSE, LOW_RANK, structural_equal
from halr.errors import HalrError
from halr.fileio import MAGIC, read_halr, write_halr, write_structure_json
from halr.render import render_svg
from util import random_halr, random_square_halr, random_tree


def test_halr1_roundtrip_exact(rng, tmp_path):
    a = random_square_halr(rng, 96, rank=3)
    path = tmp_path / "a.halr"
    write_halr(path, a)
    b = read_halr(path)
    assert structural_equal(a.cluster, b.cluster)
    assert np.array_equal(a.to_dense(), b.to_dense())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.integers(2, 40))
def test_halr1_roundtrip_random_shapes(seed, m, n):
    r = np.random.default_rng(seed)
    from halr.cluster import IndexBox

    a = random_halr(r, random_tree(r, IndexBox(1, m, 1, n), max_depth=3), rank=2)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "r.halr")
        write_halr(path, a)
        b = read_halr(path)
    assert np.array_equal(a.to_dense(), b.to_dense())


def test_halr1_magic_checked(tmp_path):
    path = tmp_path / "bad.halr"
    path.write_bytes(b"NOTHALR" + b"\x00" * 32)
    with pytest.raises(HalrError):
        read_halr(path)


def test_halr1_trailing_bytes_rejected(rng, tmp_path):
    a = random_square_halr(rng, 32, rank=2)
    path = tmp_path / "a.halr"
    write_halr(path, a)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(HalrError):
        read_halr(path)


def test_halr1_truncated_rejected(rng, tmp_path):
    a = random_square_halr(rng, 32, rank=2)
    path = tmp_path / "a.halr"
    write_halr(path, a)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 8])
    with pytest.raises(HalrError):
        read_halr(path)


def test_halr1_magic_prefix():
    assert MAGIC == b"HALR1\x00"


def test_structure_json_schema(rng, tmp_path):
    a = random_square_halr(rng, 64, rank=2)
    path = tmp_path / "a.structure.json"
    write_structure_json(path, a)
    doc = json.loads(path.read_text())

    def walk(node):
        assert set(node) >= {"kind", "box"}
        assert len(node["box"]) == 4
        if node["kind"] == "split":
            assert len(node["children"]) == 4
            for c in node["children"]:
                walk(c)
        elif node["kind"] == "lowrank":
            assert node["rank"] >= 0

    walk(doc)


def test_render_svg_deterministic(rng):
    a = random_square_halr(rng, 128, rank=4)
    assert render_svg(a) == render_svg(a)


def test_render_svg_content(rng):
    a = random_square_halr(rng, 128, rank=4)
    svg = render_svg(a)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    nleaves = sum(1 for _ in a.leaves())
    # one border rectangle plus one per leaf
    assert svg.count("<rect") == nleaves + 1
    kinds = {lf.kind for lf in a.leaves()}
    if LOW_RANK in kinds:
        # every labeled low-rank leaf prints its rank
        assert "<text" in svg
    if DENSE in kinds:
        assert "#3b6db4" in svg


def test_render_svg_dense_root():
    from halr.matrix import HalrMatrix

    svg = render_svg(HalrMatrix.from_dense(np.ones((8, 8))))
    assert svg.count("<rect") == 2 and "#3b6db4" in svg
