import csv
import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lama_ct import container, regnet, solver, tomo
from lama_ct.container import BadMagic, ContainerError, DuplicateName, Truncated, VersionMismatch


def test_round_trip_preserves_order_and_bits(tmp_path, rng):
    entries = {
        "image": rng.standard_normal((5, 7)),
        "scalar": np.float64(np.pi),
        "empty": np.zeros((0, 3)),
        "cube": rng.standard_normal((2, 3, 4)),
        "special": np.array([np.inf, -0.0, 5e-324, np.nan]),
    }
    path = tmp_path / "x.lama"
    container.save(path, entries)
    back = container.load(path)
    assert list(back) == list(entries)
    for k, v in entries.items():
        assert back[k].shape == np.shape(v)
        assert np.asarray(v, dtype=np.float64).tobytes() == back[k].tobytes()


@given(
    arrays=st.lists(
        hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4), elements=st.floats(allow_nan=False)),
        max_size=4,
    )
)
def test_round_trip_property(arrays):
    entries = {f"e{i}": a for i, a in enumerate(arrays)}
    back = container.loads(container.dumps(entries))
    assert list(back) == list(entries)
    for k in entries:
        np.testing.assert_array_equal(back[k], entries[k])


def test_byte_layout():
    data = container.dumps({"a": 1.0})
    want = bytes.fromhex("4c414d41" "0100" "01000000" "01000000" "61" "00000000" "000000000000f03f")
    assert data == want
    data = container.dumps({"m": np.arange(2.0).reshape(1, 2)})
    assert data[15:27] == bytes.fromhex("02000000" "01000000" "02000000")
    assert len(data) == 4 + 2 + 4 + 4 + 1 + 4 + 8 + 16


def test_bad_magic():
    data = bytearray(container.dumps({"a": 1.0}))
    data[:4] = b"XAMA"
    with pytest.raises(BadMagic):
        container.loads(bytes(data))
    with pytest.raises(BadMagic):
        container.loads(b"")


def test_version_mismatch():
    data = bytearray(container.dumps({"a": 1.0}))
    data[4:6] = (2).to_bytes(2, "little")
    with pytest.raises(VersionMismatch):
        container.loads(bytes(data))


def test_truncation_at_every_length():
    data = container.dumps({"a": np.arange(3.0), "bb": 2.0})
    for cut in range(4, len(data)):
        with pytest.raises(Truncated):
            container.loads(data[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(ContainerError):
        container.loads(container.dumps({"a": 1.0}) + b"\0")


def test_duplicate_names():
    with pytest.raises(DuplicateName):
        container.dumps([("a", 1.0), ("a", 2.0)])
    one = container.dumps({"a": 1.0})
    # splice the entry twice and bump the count
    doubled = one[:6] + (2).to_bytes(4, "little") + one[10:] + one[10:]
    with pytest.raises(DuplicateName):
        container.loads(doubled)


def test_errors_are_value_errors():
    assert issubclass(BadMagic, ValueError) and issubclass(Truncated, ContainerError)


def test_net_round_trip(tmp_path):
    net = regnet.random_net(channels=(3, 2), seed=5, probe_shape=(8, 8))
    path = tmp_path / "w.lama"
    container.save_net(path, net)
    back = container.load_net(path)
    assert back.activation_knee == net.activation_knee
    for a, b in zip(net.layers, back.layers):
        np.testing.assert_array_equal(a.kernels, b.kernels)
    y = np.random.default_rng(0).standard_normal((8, 8))
    assert regnet.smoothed_value(back, y, 0.1) == regnet.smoothed_value(net, y, 0.1)
    with pytest.raises(ContainerError):
        container.net_from_entries({"x": np.zeros(1)})


def test_pgm_examples(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, 2.0]])
    path = tmp_path / "a.pgm"
    container.export_pgm(img, path, data_range=1.0, vmin=0.0)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n2 2\n65535\n")
    np.testing.assert_array_equal(container.read_pgm(path), [[0, 32768], [65535, 65535]])
    container.export_pgm(np.full((3, 3), 4.0), path)
    assert not container.read_pgm(path).any()
    with pytest.raises(ValueError):
        container.export_pgm(np.array([[np.nan]]), path)
    with pytest.raises(ValueError):
        container.export_pgm(np.zeros(3), path)


def test_pgm_quantization_bound(tmp_path):
    img = tomo.shepp_logan(32)
    path = tmp_path / "p.pgm"
    container.export_pgm(img, path, 1.0, 0.0)
    back = container.read_pgm(path) / 65535.0
    assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-15


def _trace():
    g = tomo.Geometry(8, 12)
    sel = tomo.ViewSelector(3, 12)
    x = tomo.shepp_logan(8)
    from lama_ct.objective import Problem

    p = Problem(g, sel, tomo.select(tomo.project(x, g), sel), 1.0, regnet.tv_net(0.5))
    return solver.lama_solve(p, np.zeros((8, 8)), np.zeros(g.sino_shape), solver.SolverConfig(max_iters=25)).trace


def test_csv_trace(tmp_path):
    path = tmp_path / "t.csv"
    container.export_csv_trace([], path)
    assert path.read_text() == ",".join(container.TRACE_COLUMNS) + "\n"

    trace = _trace()
    container.export_csv_trace(trace, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(trace) == 25
    for rec, row in zip(trace, rows):
        assert int(row["k"]) == rec.k and row["branch"] == rec.branch
        assert float(row["phi"]) == rec.phi and float(row["eps"]) == rec.eps
        assert row["eps_reduced"] == str(int(rec.eps_reduced))
    phis = [float(r["phi"]) for r in rows if float(r["eps"]) == float(rows[0]["eps"])]
    assert all(b <= a for a, b in zip(phis, phis[1:]))


def test_trace_columns_follow_record_fields():
    assert container.TRACE_COLUMNS == tuple(f.name for f in dataclasses.fields(solver.IterationRecord))
