import json
import os

import pytest

from rdcbf.io import atomic_write_csv, atomic_write_json, atomic_write_text


def test_json_and_csv_round_trip(tmp_path):
    atomic_write_json(tmp_path / "a" / "b.json", {"z": 1, "a": [1.5, None]})
    assert json.loads((tmp_path / "a" / "b.json").read_text()) == {"a": [1.5, None], "z": 1}
    atomic_write_csv(tmp_path / "c.csv", ["x", "y"], [[1, "p,q"], [2, "r"]])
    assert (tmp_path / "c.csv").read_text() == 'x,y\n1,"p,q"\n2,r\n'


def test_overwrite_replaces_whole_file(tmp_path):
    p = tmp_path / "f.txt"
    atomic_write_text(p, "long old content\n")
    atomic_write_text(p, "new\n")
    assert p.read_text() == "new\n"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_failed_write_leaves_target_untouched(tmp_path):
    p = tmp_path / "f.json"
    atomic_write_json(p, {"ok": True})
    with pytest.raises(TypeError):
        atomic_write_json(p, {"bad": object()})
    assert json.loads(p.read_text()) == {"ok": True}
    assert os.listdir(tmp_path) == ["f.json"]


def test_interrupted_rename_cleans_up(tmp_path, monkeypatch):
    p = tmp_path / "f.txt"
    atomic_write_text(p, "old\n")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write_text(p, "new\n")
    assert p.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["f.txt"]
