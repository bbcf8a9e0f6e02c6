use std::fs;
use std::io::BufReader;
use std::path::Path;

use intrinsic_frequency::model::{Domain, SampledCycle};
use intrinsic_frequency::pipeline::batch::{read_jsonl, run_batch, write_jsonl, BatchConfig, Mode, OutputLine};
use intrinsic_frequency::pipeline::generate::{
    generate, generate_to_file, noisy_model_cycle, read_truth, truth_path, GenerateSpec, RandomModelSpec, Synthesis,
};
use intrinsic_frequency::pipeline::grid_io::{export_grid, read_grid};
use intrinsic_frequency::pipeline::ingest::{ingest, write_batch, InputFormat};
use intrinsic_frequency::search::{brute_force_if, GridConfig};

fn spec(noise: f64) -> GenerateSpec {
    GenerateSpec {
        geometry: Default::default(),
        noise,
        id_prefix: "c".into(),
        synthesis: Synthesis::RandomModel(RandomModelSpec::default()),
    }
}

fn write_spec(dir: &Path, spec: &GenerateSpec) -> std::path::PathBuf {
    let path = dir.join("spec.json");
    fs::write(&path, serde_json::to_string(spec).unwrap()).unwrap();
    path
}

#[test]
fn generated_batch_reingests_to_identical_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let (records, truth) = generate(&spec(0.01), 8, 3).unwrap();
    let path = dir.path().join("batch.json");
    write_batch(&path, &records).unwrap();
    let report = ingest(&path, None).unwrap();
    assert!(report.rejected.is_empty());
    assert_eq!(report.records.len(), 8);
    for ((back, written), t) in report.records.iter().zip(&records).zip(&truth) {
        assert_eq!(back.id, written.id);
        assert_eq!(back.t0_rounding, 0.0);
        let n = back.cycle.n();
        assert_eq!(back.cycle, SampledCycle::new(written.samples.clone(), written.dt.unwrap(), n).unwrap());
        assert_eq!(back.sampling_rate, 500.0);
        // Without noise the same generator reproduces the samples bit for bit.
        let params = t.params.unwrap();
        let (clean, _) = noisy_model_cycle(&params, back.cycle.geometry(), 0.0, 0).unwrap();
        assert!(clean
            .samples()
            .iter()
            .zip(back.cycle.samples())
            .all(|(a, b)| (a - b).abs() <= 5.0 * t.noise_sigma + 1e-9));
    }
}

#[test]
fn same_seed_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = write_spec(dir.path(), &spec(0.02));
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    generate_to_file(&spec_path, 5, 42, &a).unwrap();
    generate_to_file(&spec_path, 5, 42, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(truth_path(&a)).unwrap(), fs::read(truth_path(&b)).unwrap());
    let c = dir.path().join("c.json");
    generate_to_file(&spec_path, 5, 43, &c).unwrap();
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn truth_sidecar_lies_in_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = write_spec(dir.path(), &spec(0.0));
    let out = dir.path().join("batch.json");
    let sidecar = generate_to_file(&spec_path, 50, 7, &out).unwrap();
    let truth = read_truth(&sidecar).unwrap();
    assert_eq!(truth.len(), 50);
    let d = Domain::default();
    for t in &truth {
        assert!(d.contains(t.u1, t.u2), "{} at ({}, {})", t.id, t.u1, t.u2);
        assert_eq!(t.noise_sigma, 0.0);
    }
}

#[test]
fn invalid_spec_is_refused() {
    let mut s = spec(0.0);
    s.synthesis = Synthesis::RandomModel(RandomModelSpec {
        amplitude: [5.0, 1.0],
        ..RandomModelSpec::default()
    });
    assert!(generate(&s, 3, 0).is_err());
    assert!(generate(&spec(-0.1), 3, 0).is_err());
    assert!(generate(&spec(0.0), 0, 0).is_err());
}

#[test]
fn noiseless_batch_is_recovered_in_fast_mode() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = write_spec(dir.path(), &spec(0.0));
    let out = dir.path().join("batch.json");
    let sidecar = generate_to_file(&spec_path, 100, 100, &out).unwrap();
    let truth = read_truth(&sidecar).unwrap();
    let report = ingest(&out, None).unwrap();
    let config = BatchConfig::default();
    let output = run_batch(&report, Mode::Fast, &config).unwrap();
    let summary = output.summary();
    assert_eq!(summary.accepted, 100);
    assert_eq!(summary.succeeded + summary.failed, 100);
    let tol = 2.0 * config.search.delta_tol;
    let mut converged = 0;
    let mut missed = Vec::new();
    for (r, t) in output.results().zip(&truth) {
        assert_eq!(r.id, t.id);
        converged += usize::from(r.converged);
        let err = (r.u1 - t.u1).abs().max((r.u2 - t.u2).abs());
        if err > tol {
            missed.push(format!("{} off by {err:.4}", r.id));
        }
    }
    assert!(
        converged == 100 && missed.is_empty(),
        "{converged}/100 converged, {} outside {tol}: {}",
        missed.len(),
        missed.join(", ")
    );
}

#[test]
fn compare_mode_populates_report_and_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let (records, _) = generate(&spec(0.01), 4, 9).unwrap();
    let path = dir.path().join("batch.json");
    write_batch(&path, &records).unwrap();
    let report = ingest(&path, None).unwrap();
    assert_eq!(report.sha256.len(), 64);
    let output = run_batch(&report, Mode::Compare, &BatchConfig::default()).unwrap();
    // fast, brute, comparison per record, then the summary.
    assert_eq!(output.lines.len(), 4 * 3 + 1);
    let s = output.summary();
    assert_eq!(s.input_sha256, report.sha256);
    let c = s.comparison.as_ref().unwrap();
    assert_eq!(c.compared, 4);
    assert!(c.mean_abs_diff_omega1.is_finite() && c.mean_abs_diff_omega2.is_finite());
    assert_eq!(c.max_mean_abs_diff, c.mean_abs_diff_omega1.max(c.mean_abs_diff_omega2));
    assert!(c.median_time_ratio > 0.0);
    assert_eq!(c.pass, c.max_mean_abs_diff < c.threshold);

    // JSONL output round-trips at full precision.
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &output.lines).unwrap();
    let back = read_jsonl(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back, output.lines);
    assert!(matches!(back.last(), Some(OutputLine::Summary(_))));
}

#[test]
fn bad_csv_in_a_directory_is_rejected_alone() {
    let dir = tempfile::tempdir().unwrap();
    let (records, _) = generate(&spec(0.0), 3, 5).unwrap();
    let csv = |samples: &[f64], bad_row: Option<usize>| {
        let mut s = String::from("time_s,pressure\n");
        for (i, p) in samples.iter().enumerate() {
            let t = i as f64 * 0.002;
            if bad_row == Some(i) {
                s.push_str(&format!("{t},n/a\n"));
            } else {
                s.push_str(&format!("{t},{p}\n"));
            }
        }
        s
    };
    let meta = r#"{"t0": 0.36, "period": 1.0}"#;
    // Header-carried metadata for the first file, sidecars for the others.
    fs::write(
        dir.path().join("a.csv"),
        format!("# t0=0.36 period=1.0 id=a\n{}", csv(&records[0].samples, None)),
    )
    .unwrap();
    fs::write(dir.path().join("b.csv"), csv(&records[1].samples, Some(40))).unwrap();
    fs::write(dir.path().join("b.meta.json"), meta).unwrap();
    fs::write(dir.path().join("c.csv"), csv(&records[2].samples, None)).unwrap();
    fs::write(dir.path().join("c.meta.json"), meta).unwrap();

    let report = ingest(dir.path(), Some(InputFormat::Csv)).unwrap();
    let ids: Vec<_> = report.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a", "c"]);
    assert_eq!(report.rejected.len(), 1);
    assert!(report.rejected[0].reason.contains("non-numeric pressure"), "{}", report.rejected[0].reason);
    for r in &report.records {
        assert_eq!((r.cycle.n(), r.cycle.m()), (181, 320));
    }
    assert_eq!(report.records[1].cycle.samples(), &records[2].samples[..]);
}

#[test]
fn batch_of_only_bad_records_has_nothing_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"records": [{"id": "x", "dt": 0.002, "t0": 0.002, "period": 0.01, "samples": [1, 2, 3, 4, 5, 6]}]}"#)
        .unwrap();
    let report = ingest(&path, None).unwrap();
    assert!(report.records.is_empty());
    assert_eq!(report.rejected.len(), 1);
    let output = run_batch(&report, Mode::Fast, &BatchConfig::default()).unwrap();
    assert_eq!(output.lines.len(), 1);
    assert_eq!(output.summary().accepted, 0);
}

#[test]
fn exported_grid_minimum_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let (records, truth) = generate(&spec(0.0), 2, 21).unwrap();
    let path = dir.path().join("batch.json");
    write_batch(&path, &records).unwrap();
    let report = ingest(&path, None).unwrap();
    let config = GridConfig::default();
    for (record, t) in report.records.iter().zip(&truth) {
        let out = dir.path().join(format!("{}.grid", record.id));
        let (outcome, _) = export_grid(record, &config, &out).unwrap();
        let (direct, _) = brute_force_if(&record.cycle, &config).unwrap();
        let grid = read_grid(&out).unwrap();
        assert_eq!(grid.id, record.id);
        let (i, j) = grid.argmin;
        assert_eq!((grid.u1[i], grid.u2[j]), (direct.u1, direct.u2));
        assert_eq!(grid.min_objective, direct.objective);
        assert_eq!(outcome.objective, direct.objective);
        assert!(grid.values.iter().all(|v| *v >= 0.0));
        assert_eq!(grid.nodes.len(), 2);
        // The minimum cell sits next to the generator.
        let cell1 = grid.u1[1] - grid.u1[0];
        let cell2 = grid.u2[1] - grid.u2[0];
        assert!((grid.u1[i] - t.u1).abs() <= 2.0 * cell1 && (grid.u2[j] - t.u2).abs() <= 2.0 * cell2);
    }
}
