mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::fixtures;
use textforge_core::dataset::{read_manifest, write_manifest, Language, Method, Split, TamperRecord};
use textforge_core::imaging::BBox;
use textforge_core::robustness::Distortion;

fn copy_tree(from: &Path, to: &Path) {
    for sub in ["images", "masks"] {
        fs::create_dir_all(to.join(sub)).unwrap();
        for e in fs::read_dir(from.join(sub)).unwrap() {
            let e = e.unwrap();
            fs::copy(e.path(), to.join(sub).join(e.file_name())).unwrap();
        }
    }
}

fn records() -> Vec<TamperRecord> {
    let mut extra = BTreeMap::new();
    extra.insert("source_corpus".to_owned(), serde_json::json!("synthetic"));
    extra.insert(
        "op".to_owned(),
        serde_json::json!({"method": "copy_move", "dest_origin": [2, 2], "source_box": [9, 2, 13, 5], "blend": true}),
    );
    let cm = TamperRecord {
        id: "cm".into(),
        image: "images/cm.png".into(),
        mask: Some("masks/cm.png".into()),
        split: Split::Train,
        method: Method::CopyMove,
        blend: true,
        languages: vec![Language::En],
        gt_ocr: Some("LOT 7".into()),
        description: "The tampered text is \"LOT 7\". Edges are sharp.".into(),
        boxes: vec![BBox::new(2, 2, 6, 5)],
        distortion: None,
        extra,
    };
    let sp = TamperRecord {
        id: "sp".into(),
        image: "images/sp.png".into(),
        mask: Some("masks/sp.png".into()),
        split: Split::Cd,
        method: Method::Splicing,
        blend: false,
        languages: vec![Language::En, Language::Ch],
        gt_ocr: Some("PAID".into()),
        description: String::new(),
        boxes: vec![BBox::new(8, 1, 14, 7)],
        distortion: Some(Distortion::Resize { factor: 0.5 }),
        extra: BTreeMap::new(),
    };
    let mut au = TamperRecord::authentic("au", "images/au.png", Split::Test);
    au.languages.clear();
    vec![cm, sp, au]
}

#[test]
fn three_record_manifest_is_byte_stable() {
    let golden = fs::read_to_string(fixtures().join("manifest3/golden.jsonl")).unwrap();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        copy_tree(&fixtures().join("manifest3"), dir.path());
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&records(), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), golden);
    }
}

#[test]
fn read_then_write_reproduces_the_file() {
    let m = read_manifest(fixtures().join("manifest3/golden.jsonl")).unwrap();
    assert_eq!(m.records, records());
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixtures().join("manifest3"), dir.path());
    let path = dir.path().join("again.jsonl");
    write_manifest(&m.records, &path).unwrap();
    assert_eq!(
        fs::read(&path).unwrap(),
        fs::read(fixtures().join("manifest3/golden.jsonl")).unwrap()
    );
}
