import math

import numpy as np

from manevkit.output import format_value, read_csv, read_json, write_csv, write_json


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(np.bool_(False)) == "false"
    assert format_value(np.int64(7)) == "7"
    assert format_value(0.1) == "0.10000000000000001"
    assert float(format_value(math.pi)) == math.pi
    assert format_value("ok") == "ok"


def test_csv_carries_sorted_metadata(tmp_path):
    path = str(tmp_path / "table.csv")
    write_csv(path, ("x", "y"), [(1.0, 2), (np.float64(0.5), True)], {"seed": 3, "b": 0.25})
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[:3] == ["# b: 0.25", "# seed: 3", "x,y"]
    metadata, header, rows = read_csv(path)
    assert metadata == {"b": "0.25", "seed": "3"}
    assert header == ["x", "y"]
    assert rows == [["1", "2"], ["0.5", "true"]]


def test_writes_are_byte_identical(tmp_path):
    rows = [(k, math.sqrt(k)) for k in range(5)]
    first, second = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    write_csv(first, ("k", "root"), rows, {"seed": 0})
    write_csv(second, ("k", "root"), rows, {"seed": 0})
    with open(first, "rb") as f, open(second, "rb") as g:
        assert f.read() == g.read()


def test_json_is_sorted_and_plain(tmp_path):
    path = str(tmp_path / "summary.json")
    write_json(path, {"b": np.float64(1.5), "a": [np.int32(1), np.bool_(True)],
                      "c": {"z": (1.0, 2.0)}})
    with open(path) as f:
        text = f.read()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert read_json(path) == {"a": [1, True], "b": 1.5, "c": {"z": [1.0, 2.0]}}
