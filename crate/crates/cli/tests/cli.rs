use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use spinlock::sync::{max_s, reference_rates, DriveParams};
use spinlock_cli::config::{parse_config_str, ExperimentConfig, ExperimentKind};
use spinlock_cli::error::{EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION};
use spinlock_cli::experiments::{run_bandwidth, run_deform, run_forced, run_sync_timeline, run_tongue};
use spinlock_cli::{execute, presets, REPORT_FILE};

fn config(text: &str) -> ExperimentConfig {
    parse_config_str(text, "test").unwrap().resolve(None).unwrap()
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spinlock"));
    c.env("RUST_LOG", "warn").env_remove("SPINLOCK_WORKERS");
    c
}

fn read_csvs(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn every_preset_runs_end_to_end_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    for name in presets::names() {
        let out = dir.path().join(name);
        let start = Instant::now();
        execute(presets::preset(name).unwrap(), None, Some(&out), 4, None).unwrap_or_else(|e| panic!("{name}: {e}"));
        let secs = start.elapsed().as_secs_f64();
        assert!(secs < 60.0, "{name} took {secs} s");
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();
        let files = report["files"].as_array().unwrap();
        assert!(!files.is_empty(), "{name} wrote no tables");
        for f in files {
            assert!(out.join(f.as_str().unwrap()).is_file());
        }
        assert!(report["config"]["rates"]["gamma_g"]["unit"].is_string());
        let stray: Vec<_> = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with('.')).collect();
        assert!(stray.is_empty(), "{name} left temporary files");
    }
}

#[test]
fn identical_config_and_seed_give_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [("a", 1), ("b", 1), ("c", 5)];
    for preset in ["fig3d", "figS2", "fig4c"] {
        let tables: Vec<_> = runs
            .iter()
            .map(|(tag, workers)| {
                let out = dir.path().join(format!("{preset}_{tag}"));
                execute(presets::preset(preset).unwrap(), None, Some(&out), *workers, Some(11)).unwrap();
                read_csvs(&out)
            })
            .collect();
        assert!(!tables[0].is_empty());
        assert_eq!(tables[0], tables[1], "{preset}: repeated run differs");
        assert_eq!(tables[0], tables[2], "{preset}: worker count changed the output");
    }
}

#[test]
fn seed_changes_sampled_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    execute(presets::preset("figS2").unwrap(), None, Some(&a), 1, Some(1)).unwrap();
    execute(presets::preset("figS2").unwrap(), None, Some(&b), 1, Some(2)).unwrap();
    assert_ne!(read_csvs(&a), read_csvs(&b));
}

#[test]
fn tongue_apex_and_column_maxima() {
    let c = config(r#"{"experiment": "tongue"}"#);
    let t = run_tongue(&c, 4).unwrap();
    assert_eq!(t.shape, vec![101, 60]);
    let rates = reference_rates();
    let g = rates.gamma_g();
    let deltas = t.sweep.axes[0].values.clone();
    let eps = t.sweep.axes[1].values.clone();
    let values = t.sweep.column("max_s").unwrap();
    let at = |i: usize, j: usize| values[i * eps.len() + j];
    // Below the critical strength every row peaks on resonance, and the
    // half-maximum band widens with the drive.
    let mut last_width = 0;
    for (j, &e) in eps.iter().enumerate().filter(|(_, e)| **e < 4.0) {
        let peak = (0..deltas.len()).max_by(|&a, &b| at(a, j).total_cmp(&at(b, j))).unwrap();
        assert!(deltas[peak].abs() < 1e-9, "row ε = {e} peaks at Δ = {}", deltas[peak]);
        let width = (0..deltas.len()).filter(|&i| at(i, j) >= 0.5 * at(peak, j)).count();
        assert!(width >= last_width, "row ε = {e} narrower than the previous one");
        last_width = width;
    }
    // Each column's maximum sits at the grid point nearest the continuous
    // maximizer found by golden-section search.
    let step = eps[1] - eps[0];
    for (i, &d) in deltas.iter().enumerate() {
        let f = |e: f64| max_s(&rates, &DriveParams::new(e * g, d * g, 0.5 * PI).unwrap()).unwrap();
        let (mut a, mut b) = (0.0, 200.0);
        for _ in 0..200 {
            let (c1, c2) = (b - 0.618_033_988_75 * (b - a), a + 0.618_033_988_75 * (b - a));
            if f(c1) > f(c2) {
                b = c2;
            } else {
                a = c1;
            }
        }
        let best = 0.5 * (a + b);
        let got = t.column_argmax_epsilon[i];
        let want = best.clamp(eps[0], *eps.last().unwrap());
        assert!((got - want).abs() <= 0.5 * step + 1e-9, "Δ = {d}: grid argmax {got}, continuous {best}");
    }
}

#[test]
fn numeric_tongue_matches_closed_form() {
    let c = config(
        r#"{"experiment": "tongue", "tongue": {"delta": {"min": {"gamma_g": -10}, "max": {"gamma_g": 10}, "points": 11},
            "epsilon": {"min": {"gamma_g": 0.5}, "max": {"gamma_g": 6}, "points": 12}, "check_numeric": true}}"#,
    );
    let t = run_tongue(&c, 3).unwrap();
    assert!(t.max_numeric_deviation.unwrap() < 1e-9);
}

#[test]
fn bandwidth_halves_near_eleven_gamma_g() {
    let b = run_bandwidth(&config(r#"{"experiment": "bandwidth"}"#), 2).unwrap();
    assert!((b.half_width / 10.7 - 1.0).abs() < 0.02, "{}", b.half_width);
    let grid = b.grid_half_width.unwrap();
    assert!((grid - b.half_width).abs() < 0.1, "{grid}");
}

#[test]
fn deformation_curve() {
    let d = run_deform(&config(r#"{"experiment": "deform"}"#), 2).unwrap();
    assert_eq!(d.sweep.column("deformation").unwrap()[0], 0.0);
    assert!((d.critical_epsilon / 4.18 - 1.0).abs() < 0.02, "{}", d.critical_epsilon);
    assert!((d.grid_peak_epsilon - d.critical_epsilon).abs() <= 0.05 + 1e-9);
    assert!((d.saturation - d.limit_cycle_mz).abs() < 0.005, "{}", d.saturation);
}

#[test]
fn forced_traces_settle_and_only_strong_drive_oscillates() {
    let f = run_forced(&config(r#"{"experiment": "forced"}"#), 3).unwrap();
    assert_eq!(f.traces.len(), 3);
    for t in &f.traces {
        assert!(t.final_deviation < 1e-3, "ε = {}: {}", t.epsilon, t.final_deviation);
    }
    assert!(f.traces[0].fitted_frequency.is_none());
    let strong = f.traces[2].fitted_frequency.unwrap();
    assert!((strong / 27.7 - 1.0).abs() < 0.05, "{strong}");
    assert!((strong - f.traces[2].predicted_frequency.unwrap()).abs() < 1e-3);
}

#[test]
fn sync_timeline_snapshots() {
    let s = run_sync_timeline(&config(r#"{"experiment": "sync"}"#)).unwrap();
    let [start, stage1, end] = [&s.snapshots[0], &s.snapshots[1], &s.snapshots[2]];
    assert_eq!(start.s_contrast, Some(0.0));
    assert!(start.s_phase.is_none());
    assert!((stage1.time - 200e-6).abs() < 1e-12 && (end.time - 400e-6).abs() < 1e-12);
    // The free stage relaxes at (Γ_g+Γ_d)/2 from m_z = 1.
    let r = reference_rates();
    let lc = -0.704_651_162_790_697_7;
    let want = lc + (1.0 - lc) * (-0.5 * (r.gamma_g() + r.gamma_d()) * 200e-6).exp();
    assert!((stage1.bloch.z - want).abs() < 1e-8, "{} vs {want}", stage1.bloch.z);
    assert!(s.final_phase_error.unwrap().abs() < 0.01);
    assert!((end.s_phase.unwrap() - PI).abs() < 0.01);
    for snap in &s.snapshots {
        assert!((snap.q_normalization - 1.0).abs() < 1e-6);
    }
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let ok = write("ok.json", r#"{"experiment": "deform", "deform": {"epsilon": {"min": {"gamma_g": 0}, "max": {"gamma_g": 5}, "points": 11}}}"#);
    let out = dir.path().join("out");
    let st = bin().args(["deform", "--config"]).arg(&ok).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("deform.csv").is_file() && out.join(REPORT_FILE).is_file());

    let negative = write(
        "neg.json",
        r#"{"experiment": "relax", "rates": {"gamma_g": {"2pi_kHz": -1.27}, "gamma_d": {"2pi_kHz": 7.33}, "gamma_z": {"2pi_kHz": 4.42}}}"#,
    );
    let st = bin().args(["relax", "--config"]).arg(&negative).arg("--out").arg(dir.path().join("neg")).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_VALIDATION));
    assert!(String::from_utf8_lossy(&st.stderr).contains("rates.gamma_g"));

    let unknown = write("unknown.json", r#"{"experiment": "relax", "relax": {"durration": {"us": 5}}}"#);
    let st = bin().args(["relax", "--config"]).arg(&unknown).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_VALIDATION));
    assert!(String::from_utf8_lossy(&st.stderr).contains("durration"));

    let st = bin().args(["sync", "--config"]).arg(&ok).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_VALIDATION));

    let st = bin().args(["tongue", "--preset", "fig2"]).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_VALIDATION));

    let st = bin().args(["relax"]).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_VALIDATION));

    // Balanced gain and damping leave no contrast to take a width of.
    let balanced = write(
        "balanced.json",
        r#"{"experiment": "bandwidth", "rates": {"gamma_g": {"2pi_kHz": 5}, "gamma_d": {"2pi_kHz": 5}, "gamma_z": {"2pi_kHz": 1}}}"#,
    );
    let st = bin().args(["bandwidth", "--config"]).arg(&balanced).arg("--out").arg(dir.path().join("bal")).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_NUMERICAL), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(!dir.path().join("bal").join(REPORT_FILE).exists());
}

#[test]
fn worker_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let st = bin().env("SPINLOCK_WORKERS", "1").args(["tongue", "--preset", "fig3d", "--out"]).arg(&a).output().unwrap().status;
    assert!(st.success());
    let st = bin().env("SPINLOCK_WORKERS", "7").args(["tongue", "--preset", "fig3d", "--out"]).arg(&b).output().unwrap().status;
    assert!(st.success());
    assert_eq!(read_csvs(&a), read_csvs(&b));
    let st = bin().env("SPINLOCK_WORKERS", "0").args(["tongue", "--preset", "fig3d", "--out"]).arg(dir.path().join("c")).output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_VALIDATION));
}

#[test]
fn defaults_are_echoed() {
    let c = ExperimentConfig::new(ExperimentKind::Forced).resolve(None).unwrap();
    let echo = serde_json::to_value(&c).unwrap();
    assert_eq!(echo["forced"]["epsilons"].as_array().unwrap().len(), 3);
    assert_eq!(echo["drive"]["epsilon"]["value"], 2.37);
    assert_eq!(echo["drive"]["epsilon"]["unit"], "2pi_kHz");
}
