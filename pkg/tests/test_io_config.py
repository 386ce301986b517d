import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from homogenlab import io as hio
from homogenlab.config import SCHEMA, RunConfig, describe_schema, parse_text
from homogenlab.errors import ConfigError
from homogenlab.grid import BoxDomain, GridSpec, VectorFieldMAC

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=30, deadline=None)
@given(arr=arrays(np.float64, (3, 4, 2), elements=finite))
def test_vtk_cell_scalars_round_trip(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("vtk") / "f.vtk"
    hio.write_vtk(path, (4, 5, 3), (0.1, -2.0, 1.0 / 3.0), (0.5, 0.25, 1e-3), {"theta": arr})
    back = hio.read_vtk(path)
    assert back["scalars"]["theta"].tobytes() == arr.tobytes()
    assert back["origin"] == (0.1, -2.0, 1.0 / 3.0)
    assert back["spacing"] == (0.5, 0.25, 1e-3)
    assert back["location"] == "CELL"


def test_vtk_vectors_and_faces_round_trip(tmp_path):
    g = GridSpec(BoxDomain(), (4, 5, 6))
    rng = np.random.default_rng(0)
    u = VectorFieldMAC(g, tuple(rng.normal(size=g.face_shape(d)) for d in range(3)))
    hio.write_cell_fields(tmp_path / "c.vtk", g, {"p": rng.normal(size=g.n)}, {"u": u.cell_centered()})
    back = hio.read_vtk(tmp_path / "c.vtk")
    np.testing.assert_array_equal(back["vectors"]["u"], u.cell_centered())
    for d in range(3):
        hio.write_face_component(tmp_path / f"u{d}.vtk", g, u, d)
        face = hio.read_vtk(tmp_path / f"u{d}.vtk")
        assert face["location"] == "POINT"
        np.testing.assert_array_equal(face["scalars"]["u" + "xyz"[d]], u[d])


def test_vtk_shape_checked(tmp_path):
    with pytest.raises(ValueError):
        hio.write_vtk(tmp_path / "x.vtk", (3, 3, 3), (0, 0, 0), (1, 1, 1), {"a": np.zeros((3, 3, 3))})


@settings(max_examples=30, deadline=None)
@given(rows=st.lists(st.tuples(finite, st.integers(-10**6, 10**6), finite), min_size=1, max_size=5))
def test_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    hio.write_csv(path, ["a", "n", "b"], rows)
    header, back = hio.read_csv(path)
    assert header == ["a", "n", "b"]
    assert [tuple(r) for r in back] == [tuple(r) for r in rows]
    assert path.read_bytes().count(b"\r\n") == len(rows) + 1


def test_manifest_sorted_round_trip(tmp_path):
    entries = {"z.k": "1", "a.k": "0.10000000000000001", "m": "text"}
    hio.write_manifest(tmp_path / "m.txt", entries)
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines == sorted(lines)
    assert hio.read_manifest(tmp_path / "m.txt") == entries


def test_defaults_cover_schema():
    cfg = RunConfig.from_raw({})
    assert set(cfg.manifest()) == set(SCHEMA)
    assert len(describe_schema()) == len(SCHEMA)
    assert cfg["domain.epsilons"] == (0.5, 1 / 3, 0.25)


def test_parse_text_fractions_and_comments():
    raw = parse_text("# sweep\ndomain.epsilons = 1/2, 1/3  # two\n\ngrid.n = 32\n")
    cfg = RunConfig.from_raw(raw)
    assert cfg["domain.epsilons"] == (0.5, 1 / 3)
    assert cfg["grid.n"] == 32


@pytest.mark.parametrize(
    "text,key",
    [
        ("domain.gamma = 0", "domain.gamma"),
        ("domain.gamma = -1", "domain.gamma"),
        ("grid.n = 2", "grid.n"),
        ("grid.n = 3.5", "grid.n"),
        ("picard.relax = 1.5", "picard.relax"),
        ("physics.b = 0", "physics.b"),
        ("source.f.kind = cubic", "source.f.kind"),
        ("box.hi = 1, 0, 1", "box.hi"),
        ("nonsense.key = 1", "nonsense.key"),
        ("grid.n = 8\ngrid.n = 9", "grid.n"),
    ],
)
def test_validation_names_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_raw(parse_text(text))
    assert info.value.key == key
    assert key in str(info.value)


def test_overrides_and_typed_views(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("grid.n = 16\nphysics.a = 0.5\n")
    cfg = RunConfig.load(path, ["source.g.kind = product_sine", "solver.rel_tol=1e-6"])
    assert cfg.grid().n == (16, 16, 16)
    assert cfg.params().a == 0.5
    assert cfg.source("g").kind.value == "product_sine"
    assert cfg.solver().rel_tol == 1e-6
    assert cfg.with_values(grid__n=20)["grid.n"] == 20
    with pytest.raises(ConfigError):
        RunConfig.load(None, ["bogus=1"])


def test_manifest_formats_floats_exactly():
    cfg = RunConfig.from_raw({"domain.epsilons": "1/3, 1/5"})
    text = cfg.manifest()["domain.epsilons"]
    assert tuple(float(t) for t in text.split(",")) == (1 / 3, 1 / 5)
