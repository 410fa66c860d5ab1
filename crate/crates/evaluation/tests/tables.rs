//! Accuracy-table serialization fixtures and the confidence-interval
//! statistics the protocol reports.

use evaluation::{AccuracyMatrix, EvalReport, Temperature, task_distribution};
use tempfile::tempdir;

#[test]
fn alternating_accuracies_hit_the_frozen_interval() {
    // 600 tasks alternating exactly right / exactly wrong: mean one half;
    // Bessel-corrected std sqrt(600*0.25/599); half-width 1.96 s / sqrt(600).
    let acc: Vec<f64> = (0..600).map(|i| f64::from(i % 2)).collect();
    let r = EvalReport::from_accuracies(acc).unwrap();
    assert_eq!(r.mean, 0.5);
    assert!((r.ci95 - 0.04004).abs() < 1e-5);
    assert!((r.ci95 - 0.040041714475826405).abs() < 1e-15, "frozen closed form");
}

#[test]
fn matrix_csv_has_the_exact_header_and_round_trips() {
    let a: [[f64; 5]; 5] = std::array::from_fn(|k| std::array::from_fn(|j| 50.0 + k as f64 + 0.25 * j as f64));
    let m = AccuracyMatrix::new(a).unwrap();
    let text = m.to_csv().unwrap();
    let first = text.lines().next().unwrap();
    assert_eq!(first, "train_shots,test_1,test_3,test_5,test_7,test_9");
    assert_eq!(text.lines().count(), 6);

    // Two-decimal data survives the trip bit-for-bit.
    let back = AccuracyMatrix::from_csv(&text).unwrap();
    assert_eq!(m, back);
}

#[test]
fn csv_files_round_trip_on_disk() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("matrix.csv");
    let m = AccuracyMatrix::new([[62.25; 5]; 5]).unwrap();
    m.write_csv(&path).unwrap();
    let back = AccuracyMatrix::read_csv(&path).unwrap();
    assert_eq!(m, back);
    // A second write is byte-identical.
    let once = std::fs::read(&path).unwrap();
    m.write_csv(&path).unwrap();
    assert_eq!(once, std::fs::read(&path).unwrap());
}

#[test]
fn published_reference_column_is_ingested_exactly() {
    // Testing accuracies of the five trained models at the 3-shot level,
    // as printed in the reference table.
    let csv = "\
train_shots,test_1,test_3,test_5,test_7,test_9
1,50.00,58.24,50.00,50.00,50.00
3,50.00,59.18,50.00,50.00,50.00
5,50.00,58.90,50.00,50.00,50.00
7,50.00,58.75,50.00,50.00,50.00
9,50.00,59.15,50.00,50.00,50.00
";
    let m = AccuracyMatrix::from_csv(csv).unwrap();
    let a3 = m.test_vector(3).unwrap();
    assert_eq!(a3, [58.24, 59.18, 58.90, 58.75, 59.15]);

    // And the column drives the distribution fixture end to end.
    let d = task_distribution(&a3, Temperature::Fixed(1.0)).unwrap().d;
    assert!((d[1] - 0.2654).abs() < 5e-5);
}

#[test]
fn malformed_tables_are_rejected_with_context() {
    let wrong_header = "shots,a,b,c,d,e\n1,1,1,1,1,1\n";
    assert!(AccuracyMatrix::from_csv(wrong_header).is_err());

    let wrong_key = "\
train_shots,test_1,test_3,test_5,test_7,test_9
2,50.00,50.00,50.00,50.00,50.00
3,50.00,50.00,50.00,50.00,50.00
5,50.00,50.00,50.00,50.00,50.00
7,50.00,50.00,50.00,50.00,50.00
9,50.00,50.00,50.00,50.00,50.00
";
    let err = AccuracyMatrix::from_csv(wrong_key).unwrap_err();
    assert!(err.to_string().contains("keyed 2"), "{err}");

    let short = "train_shots,test_1,test_3,test_5,test_7,test_9\n1,50,50,50,50,50\n";
    assert!(AccuracyMatrix::from_csv(short).is_err());

    let out_of_range = "\
train_shots,test_1,test_3,test_5,test_7,test_9
1,150.00,50.00,50.00,50.00,50.00
3,50.00,50.00,50.00,50.00,50.00
5,50.00,50.00,50.00,50.00,50.00
7,50.00,50.00,50.00,50.00,50.00
9,50.00,50.00,50.00,50.00,50.00
";
    assert!(AccuracyMatrix::from_csv(out_of_range).is_err());
}
