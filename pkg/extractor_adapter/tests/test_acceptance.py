"""Acceptance gate for the adapter: one pass/fail line for its criterion."""

import json

import numpy as np

from extractor_adapter import ExtractionJob, extract


def report(capsys, name, **conditions):
    failed = sorted(k for k, v in conditions.items() if not v)
    status = "FAIL" if failed else "PASS"
    detail = f"  (failed: {', '.join(failed)})" if failed else ""
    with capsys.disabled():
        print(f"[{status}] {name}{detail}", flush=True)
    assert not failed, f"{name}: failed {failed}"


def test_criterion_adapter_validity(capsys, toy_dataset, tmp_path):
    job = ExtractionJob(model="resnet18", dataset_root=str(toy_dataset),
                        out=str(tmp_path / "bank"), weights="random",
                        include_source_probs=True)
    out = extract(job)
    manifest = json.loads((out / "manifest.json").read_text())

    from zoorank.banks import read_bank, validate_bank
    from zoorank.cli import main as zoorank_main

    bank = read_bank(out)
    violations = validate_bank(bank)

    # run the consumer's score command end to end over a two-bank task dir
    task = tmp_path / "task"
    (task / "models").mkdir(parents=True)
    import shutil
    for mid in ("resnet18", "second"):
        dst = task / "models" / mid
        shutil.copytree(out, dst)
        meta = json.loads((dst / "manifest.json").read_text())
        meta["model_id"] = mid
        (dst / "manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    score_rc = zoorank_main(["score", "--task", str(task), "--method", "logme"])

    rerun = extract(ExtractionJob(model="resnet18", dataset_root=str(toy_dataset),
                                  out=str(tmp_path / "bank2"), weights="random",
                                  include_source_probs=True))
    bit_identical = all(
        (out / n).read_bytes() == (rerun / n).read_bytes()
        for n in ("features.mat", "labels.mat", "source_probs.mat")
    )

    report(
        capsys,
        "adapter validity: toy-folder bank passes validate_bank with zero "
        "violations, logme scoring runs end to end, repeated CPU extraction "
        "is bit-identical",
        structurally_valid=(manifest["n_samples"] == 4 and manifest["n_classes"] == 2),
        zero_violations=violations == [],
        logme_scoring_succeeds=score_rc == 0,
        cpu_extraction_bit_identical=bit_identical,
    )
