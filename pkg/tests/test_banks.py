import dataclasses

import numpy as np
import pytest

from zoorank.banks import make_bank, read_bank, validate_bank, write_bank
from zoorank.errors import FormatError, ValidationError


def _simple_bank(**kwargs):
    feats = np.array([[1.0, 0.0], [1.1, 0.0], [0.0, 1.0], [0.0, 0.9]])
    labels = np.array([0, 0, 1, 1])
    return make_bank("m", "ds", feats, labels, **kwargs)


def test_round_trip_identity(tmp_path):
    bank = _simple_bank()
    write_bank(bank, tmp_path / "b")
    assert sorted(p.name for p in (tmp_path / "b").iterdir()) == [
        "features.mat", "labels.mat", "manifest.json",
    ]
    back = read_bank(tmp_path / "b")
    assert back.manifest == bank.manifest
    assert np.array_equal(back.features, bank.features)
    assert np.array_equal(back.labels, bank.labels)
    assert back.source_probs is None


def test_round_trip_with_source_probs(tmp_path):
    probs = np.array([[0.5, 0.5], [0.25, 0.75], [1.0, 0.0], [0.1, 0.9]])
    bank = _simple_bank(source_probs=probs)
    write_bank(bank, tmp_path / "b")
    back = read_bank(tmp_path / "b")
    assert np.array_equal(back.source_probs, bank.source_probs)


def test_valid_bank_empty_report():
    assert validate_bank(_simple_bank()) == []


def test_nan_feature_violation():
    bank = _simple_bank()
    feats = bank.features.copy()
    feats[2, 1] = np.nan
    bad = dataclasses.replace(bank, features=feats)
    assert any("non-finite feature" in v for v in validate_bank(bad))


def test_declared_but_absent_source_probs():
    bank = _simple_bank(source_probs=np.full((4, 2), 0.5))
    bad = dataclasses.replace(bank, source_probs=None)
    report = validate_bank(bad)
    assert any("absent" in v for v in report)


def test_label_out_of_range():
    bank = _simple_bank()
    labels = bank.labels.copy()
    labels[3] = bank.manifest.n_classes
    bad = dataclasses.replace(bank, labels=labels)
    assert any("label out of range at row 3" in v for v in validate_bank(bad))


def test_empty_class_violation():
    bank = _simple_bank()
    bad = dataclasses.replace(bank, labels=np.zeros(4, dtype=np.int64))
    assert any("empty class 1" in v for v in validate_bank(bad))


def test_source_probs_row_sum_violation():
    probs = np.array([[0.5, 0.5], [0.2, 0.2], [1.0, 0.0], [0.1, 0.9]])
    bad = _simple_bank(source_probs=probs)
    assert any("sum to 1" in v for v in validate_bank(bad))


def test_write_refuses_invalid_bank(tmp_path):
    bank = _simple_bank()
    bad = dataclasses.replace(bank, labels=np.zeros(4, dtype=np.int64))
    with pytest.raises(ValidationError):
        write_bank(bad, tmp_path / "b")


def test_truncated_features_file(tmp_path):
    write_bank(_simple_bank(), tmp_path / "b")
    path = tmp_path / "b" / "features.mat"
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError, match="short read"):
        read_bank(tmp_path / "b")


def test_header_manifest_dimension_mismatch(tmp_path):
    write_bank(_simple_bank(), tmp_path / "b")
    import json
    mpath = tmp_path / "b" / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["feat_dim"] = 3
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="dimension mismatch"):
        read_bank(tmp_path / "b")


def test_unknown_and_missing_manifest_keys(tmp_path):
    write_bank(_simple_bank(), tmp_path / "b")
    import json
    mpath = tmp_path / "b" / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["extra"] = 1
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="unknown manifest keys"):
        read_bank(tmp_path / "b")
    del manifest["extra"]
    del manifest["seed"]
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="missing manifest keys"):
        read_bank(tmp_path / "b")


def test_non_integer_label_rejected(tmp_path):
    write_bank(_simple_bank(), tmp_path / "b")
    from zoorank.codec import write_matrix
    write_matrix(tmp_path / "b" / "labels.mat", np.array([[0.0], [0.4], [1.0], [1.0]]))
    with pytest.raises(FormatError, match="non-integer label"):
        read_bank(tmp_path / "b")
