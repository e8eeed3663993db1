use std::path::Path;

use reask_core::dataset::{load_dataset, subject_partition, ColumnMapping, DatasetError, DatasetFormat};

const PRO_SUBJECTS: [(&str, usize); 14] = [
    ("biology", 717),
    ("business", 789),
    ("chemistry", 1132),
    ("computer science", 410),
    ("economics", 844),
    ("engineering", 969),
    ("health", 818),
    ("history", 381),
    ("law", 1101),
    ("math", 1351),
    ("other", 924),
    ("philosophy", 499),
    ("physics", 1299),
    ("psychology", 798),
];

fn write_pro_csv(path: &Path) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["question_id", "question", "options", "answer", "answer_index", "cot_content", "category", "src"])
        .unwrap();
    let mut id = 70;
    for (subject, count) in PRO_SUBJECTS {
        for i in 0..count {
            // A small share of items carry fewer than ten options.
            let k = if i % 50 == 0 { 8 } else { 10 };
            let options: Vec<String> = (0..k).map(|j| format!("{subject} choice {j}, \"quoted\"")).collect();
            let gold = (id * 7) % k;
            let letter = ((b'A' + gold as u8) as char).to_string();
            w.write_record([
                id.to_string(),
                format!("{subject} question {i}\nwith a second line"),
                serde_json::to_string(&options).unwrap(),
                letter,
                gold.to_string(),
                String::new(),
                subject.to_string(),
                format!("ori_{subject}"),
            ])
            .unwrap();
            id += 1;
        }
    }
    w.flush().unwrap();
}

#[test]
fn ten_way_benchmark_export_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("test.csv");
    write_pro_csv(&path);
    let d = load_dataset(&path, &DatasetFormat::DelimitedTable(ColumnMapping::mmlu_pro())).unwrap();
    assert_eq!(d.len(), 12_032);
    assert_eq!(d.subjects().len(), 14);
    assert_eq!(d.k_mode(), 10);
    let parts = subject_partition(&d);
    assert_eq!(parts["biology"].len(), 717);
    assert_eq!(parts["law"].len(), 1101);
    assert_eq!(parts["math"].len(), 1351);
    assert_eq!(parts["history"].len(), 381);
    let q = d.get("70").unwrap();
    assert_eq!(q.options.len(), 8);
    assert_eq!(q.gold, 490 % 8);
    assert!(q.stem.contains('\n'));
    assert!(q.options[0].contains("\"quoted\""));

    // Canonical round trip keeps the digest.
    let canonical = dir.path().join("test.jsonl");
    std::fs::write(&canonical, d.to_canonical_string()).unwrap();
    let again = load_dataset(&canonical, &DatasetFormat::CanonicalLines).unwrap();
    assert_eq!(again.digest(), d.digest());
}

#[test]
fn four_way_benchmark_export_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mmlu.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(["question", "subject", "choices", "answer"]).unwrap();
    for i in 0..14_042 {
        let subject = format!("subject_{:02}", i % 57);
        let choices = serde_json::to_string(&["w", "x", "y", "z"]).unwrap();
        w.write_record([format!("item {i}"), subject, choices, (i % 4).to_string()]).unwrap();
    }
    w.flush().unwrap();
    drop(w);
    let d = load_dataset(&path, &DatasetFormat::DelimitedTable(ColumnMapping::mmlu())).unwrap();
    assert_eq!(d.len(), 14_042);
    assert_eq!(d.subjects().len(), 57);
    assert_eq!(d.k_mode(), 4);
    assert!(d.questions().iter().all(|q| q.k() == 4));
    assert_eq!(d.questions()[6].gold, 2);
}

#[test]
fn bad_files_fail_whole() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(
        &path,
        "{\"id\":\"a\",\"subject\":\"s\",\"question\":\"q\",\"options\":[\"x\",\"y\"],\"answer\":1}\n\
         {\"id\":\"b\",\"subject\":\"s\",\"question\":\"q\",\"options\":[\"x\",\"y\"],\"answer\":5}\n",
    )
    .unwrap();
    let err = load_dataset(&path, &DatasetFormat::CanonicalLines).unwrap_err();
    assert!(matches!(err, DatasetError::Validation { line: 2, .. }), "{err}");

    let missing = load_dataset(&dir.path().join("nope.jsonl"), &DatasetFormat::CanonicalLines).unwrap_err();
    assert!(matches!(missing, DatasetError::Io { .. }));

    std::fs::write(&path, "\n\n").unwrap();
    let empty = load_dataset(&path, &DatasetFormat::CanonicalLines).unwrap_err();
    assert!(matches!(empty, DatasetError::EmptyDataset));
}
