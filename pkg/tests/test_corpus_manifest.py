from __future__ import annotations

from pathlib import Path

import pytest

from cbreason.corpus import (
    BankError,
    ConceptBank,
    ConceptEntry,
    DatasetManifest,
    ManifestError,
    SampleRecord,
    display_name_for_key,
    load_bank,
    load_manifest,
    save_bank,
    save_manifest,
)


def make_bank(n: int = 15) -> ConceptBank:
    keys = [f"concept_{i}" for i in range(n)]
    return ConceptBank.from_keys("testbank", [(k, "cat") for k in keys])


def write_manifest(path: Path, rows: list[str], header: str = "sample_id,patient_id,image_path,label,birads,concepts") -> Path:
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def touch_image(directory: Path, name: str) -> str:
    (directory / name).touch()
    return name


def test_well_formed_three_rows(tmp_path):
    bank = make_bank(15)
    rows = []
    for i in range(3):
        img = touch_image(tmp_path, f"img{i}.png")
        rows.append(f"s{i},p{i},{img},benign,2,{'0' * 15}")
    manifest = load_manifest(write_manifest(tmp_path / "m.csv", rows), bank)
    assert len(manifest) == 3
    assert manifest.records[0].concepts == (0,) * 15


def test_concept_length_mismatch_names_sample(tmp_path):
    bank = make_bank(15)
    img = touch_image(tmp_path, "img.png")
    path = write_manifest(tmp_path / "m.csv", [f"s0,p0,{img},benign,,{'0' * 14}"])
    with pytest.raises(ManifestError, match="s0"):
        load_manifest(path, bank)


def test_busbra_shaped_counts(tmp_path):
    # 1,875 records over 1,064 patients, patient ids reused across rows
    bank = make_bank(15)
    img = touch_image(tmp_path, "shared.png")
    rows = []
    for i in range(1875):
        patient = f"p{i % 1064:04d}"
        rows.append(f"s{i:04d},{patient},{img},{'malignant' if i % 2 else 'benign'},,{'01' * 7 + '0'}")
    manifest = load_manifest(write_manifest(tmp_path / "m.csv", rows), bank)
    assert len(manifest) == 1875
    assert len(manifest.patient_ids) == 1064


def test_duplicate_sample_id_rejected(tmp_path):
    bank = make_bank(4)
    img = touch_image(tmp_path, "img.png")
    path = write_manifest(tmp_path / "m.csv", [f"s0,p0,{img},benign,,0000", f"s0,p1,{img},benign,,0000"])
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(path, bank)


def test_unknown_label_names_row_and_field(tmp_path):
    bank = make_bank(4)
    img = touch_image(tmp_path, "img.png")
    path = write_manifest(tmp_path / "m.csv", [f"s0,p0,{img},weird,,0000"])
    with pytest.raises(ManifestError, match=r"row 2: field 'label'"):
        load_manifest(path, bank)


def test_missing_image_fails_validation(tmp_path):
    bank = make_bank(4)
    path = write_manifest(tmp_path / "m.csv", ["s0,p0,nothere.png,benign,,0000"])
    with pytest.raises(ManifestError, match="image_path"):
        load_manifest(path, bank)
    manifest = load_manifest(path, bank, check_images=False)
    assert len(manifest) == 1


def test_bad_birads_rejected(tmp_path):
    bank = make_bank(4)
    img = touch_image(tmp_path, "img.png")
    path = write_manifest(tmp_path / "m.csv", [f"s0,p0,{img},benign,7,0000"])
    with pytest.raises(ManifestError, match="birads"):
        load_manifest(path, bank)


def test_save_load_round_trip_identity(tmp_path):
    bank = make_bank(5)
    img = touch_image(tmp_path, "img.png")
    records = [
        SampleRecord("s0", "p0", tmp_path / img, (0, 1, 0, 1, 1), "malignant", "4A", None),
        SampleRecord("s1", "p0", tmp_path / img, (1, 0, 0, 0, 0), "benign", None, "train_only"),
    ]
    manifest = DatasetManifest(records=records, bank_id=bank.bank_id, corpus_name="round")
    save_manifest(manifest, tmp_path / "m.csv")
    reloaded = load_manifest(tmp_path / "m.csv", bank, corpus_name="round")
    assert [
        (r.sample_id, r.patient_id, r.concepts, r.label, r.birads, r.split_tag) for r in reloaded.records
    ] == [(r.sample_id, r.patient_id, r.concepts, r.label, r.birads, r.split_tag) for r in records]


def test_bank_round_trip_and_order(tmp_path):
    bank = ConceptBank.from_keys("b", [("spiculated", "margins"), ("hypoechoic", "echo")])
    save_bank(bank, tmp_path / "bank.csv")
    reloaded = load_bank(tmp_path / "bank.csv", bank_id="b")
    assert reloaded.keys == ("spiculated", "hypoechoic")
    assert reloaded.display_names == ("Spiculated", "Hypoechoic")


def test_display_name_rule():
    assert display_name_for_key("regular_shape") == "Regular shape"
    assert display_name_for_key("spiculated") == "Spiculated"
    assert display_name_for_key("skin_thickening") == "Skin thickening"


def test_bank_rejects_wrong_display_name():
    with pytest.raises(BankError, match="derivation rule"):
        ConceptBank("b", (ConceptEntry("spiculated", "SPICULATED", "margins"),))


def test_bank_rejects_duplicate_keys():
    with pytest.raises(BankError, match="duplicate"):
        ConceptBank.from_keys("b", [("a_key", "c"), ("a_key", "c")])


def test_packaged_banks_have_documented_sizes(ultrasound_bank):
    from cbreason.guidelines import packaged_bank_path

    assert ultrasound_bank.size == 15
    assert load_bank(packaged_bank_path("mammography")).size == 31
    assert load_bank(packaged_bank_path("cub_birds")).size == 112
