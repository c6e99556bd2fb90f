from __future__ import annotations

import numpy as np
import pytest

from conftest import make_set
from kpfusion.cli import main
from kpfusion.experiment import read_dataset, synthetic_subjects, write_dataset
from kpfusion.keypoints import load_keypoints, save_keypoints


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["synth", "--subjects", "3", "--seed", "5", "--out-dir", str(root)]) == 0
    return root


def test_synth_layout_and_repeatability(tmp_path, capsys):
    assert main(["synth", "--subjects", "2", "--out-dir", str(tmp_path / "a")]) == 0
    assert "seed=0" in capsys.readouterr().out
    main(["synth", "--subjects", "2", "--seed", "0", "--out-dir", str(tmp_path / "b")])
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.kpt"))
    assert len(files) == 8
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_rejects_zero_subjects(tmp_path):
    assert main(["synth", "--subjects", "0", "--out-dir", str(tmp_path)]) == 2


def test_synth_profile_file(tmp_path):
    prof = tmp_path / "p.txt"
    prof.write_text("n_face = 40\nn_palm=30\n")
    assert main(["synth", "--subjects", "1", "--profile", str(prof), "--out-dir", str(tmp_path / "d")]) == 0
    assert len(load_keypoints(tmp_path / "d" / "s000" / "face_ref.kpt")) == 40
    assert main(["synth", "--subjects", "1", "--profile", "nope", "--out-dir", str(tmp_path)]) == 2


def test_dataset_round_trip(tmp_path):
    subjects = synthetic_subjects(2, 1)
    write_dataset(subjects, tmp_path)
    back = read_dataset(tmp_path)
    assert [s.subject_id for s in back] == ["s000", "s001"]
    assert back[1].palm_probe == subjects[1].palm_probe


def test_enroll_reports_overwrite(dataset, tmp_path, capsys):
    s = dataset / "s000"
    args = ["enroll", str(s / "face_ref.kpt"), str(s / "palm_ref.kpt"), "--store-dir", str(tmp_path)]
    assert main(args) == 0
    first = (tmp_path / "s000.ftv").read_bytes()
    assert main(args) == 0
    assert "replaced existing template" in capsys.readouterr().out
    assert (tmp_path / "s000.ftv").read_bytes() == first


def test_enroll_missing_file(tmp_path):
    assert main(["enroll", str(tmp_path / "x.kpt"), str(tmp_path / "y.kpt"), "--store-dir", str(tmp_path)]) == 2


def test_enroll_bad_config_key(dataset, tmp_path):
    s = dataset / "s000"
    assert main(["enroll", str(s / "face_ref.kpt"), str(s / "palm_ref.kpt"), "--store-dir", str(tmp_path),
                 "--set", "bogus=1"]) == 2


def test_verify_self_unknown_and_zero_probe(dataset, tmp_path, capsys):
    s = dataset / "s001"
    face, palm = str(s / "face_ref.kpt"), str(s / "palm_ref.kpt")
    main(["enroll", face, palm, "--store-dir", str(tmp_path)])
    capsys.readouterr()
    assert main(["verify", face, palm, "--claim", "s001", "--threshold", "0.99", "--store-dir", str(tmp_path)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("ACCEPT score=") and "metric=correlation threshold=0.99" in line
    assert float(line.split()[1].split("=")[1]) == pytest.approx(1.0, abs=1e-12)
    assert main(["verify", face, palm, "--claim", "nobody", "--store-dir", str(tmp_path)]) == 1

    for name in ("face_ref", "palm_ref"):
        kset = load_keypoints(s / f"{name}.kpt")
        blank = make_set(kset.xy, np.zeros_like(kset.descriptors), modality=kset.modality.value,
                         subject_id=kset.subject_id)
        save_keypoints(blank, tmp_path / f"{name}_zero.kpt")
    capsys.readouterr()
    assert main(["verify", str(tmp_path / "face_ref_zero.kpt"), str(tmp_path / "palm_ref_zero.kpt"),
                 "--claim", "s001", "--store-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("REJECT")


def test_verify_knn_default_threshold(dataset, tmp_path, capsys):
    s = dataset / "s002"
    face, palm = str(s / "face_ref.kpt"), str(s / "palm_ref.kpt")
    main(["enroll", face, palm, "--store-dir", str(tmp_path)])
    capsys.readouterr()
    main(["verify", face, palm, "--claim", "s002", "--metric", "knn", "--store-dir", str(tmp_path)])
    assert capsys.readouterr().out.strip() == "ACCEPT score=0.0 metric=knn threshold=1.0"


def test_evaluate_writes_reports(dataset, tmp_path):
    out = tmp_path / "rep" / "report.roc"
    assert main(["evaluate", "--dataset-dir", str(dataset), "--out", str(out)]) == 0
    rocs = sorted(p.name for p in out.parent.glob("*.roc"))
    assert len(rocs) == 6 and "report_fused_correlation.roc" in rocs
    summary = (out.parent / "report_summary.txt").read_text()
    assert summary.startswith("modality metric auc eer") and "fused_knn_auc_ge_unimodal" in summary


def test_evaluate_domain_failures(dataset, tmp_path):
    assert main(["evaluate", "--dataset-dir", str(tmp_path / "empty")]) == 1
    (tmp_path / "one").mkdir()
    write_dataset(synthetic_subjects(1, 0), tmp_path / "one")
    assert main(["evaluate", "--dataset-dir", str(tmp_path / "one")]) == 1
    (tmp_path / "broken" / "s000").mkdir(parents=True)
    assert main(["evaluate", "--dataset-dir", str(tmp_path / "broken")]) == 1


def test_ingest_and_inspect(dataset, tmp_path, capsys):
    kpt = dataset / "s000" / "face_ref.kpt"
    clu = tmp_path / "f.clu"
    assert main(["ingest", str(kpt), "--clusters", str(clu)]) == 0
    assert "clusters k=4" in capsys.readouterr().out
    assert main(["inspect", str(clu)]) == 0
    assert capsys.readouterr().out.startswith("clustering k=4")
    assert main(["inspect", str(kpt)]) == 0
    assert capsys.readouterr().out.startswith("keypoints Face")
    main(["enroll", str(kpt), str(dataset / "s000" / "palm_ref.kpt"), "--store-dir", str(tmp_path)])
    capsys.readouterr()
    assert main(["inspect", str(tmp_path / "s000.ftv")]) == 0
    assert "k=4 p=8 length=4096" in capsys.readouterr().out
    (tmp_path / "junk.txt").write_text("hello\n")
    assert main(["inspect", str(tmp_path / "junk.txt")]) == 2


def test_ingest_bad_file(tmp_path):
    (tmp_path / "bad.kpt").write_text("KPT1 Face s0 c0 1\n1 2 3\n")
    assert main(["ingest", str(tmp_path / "bad.kpt")]) == 2


def test_no_subcommand():
    assert main([]) == 2
