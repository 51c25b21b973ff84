use std::path::Path;
use std::process::{Command, Output};

fn imex_stab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imex-stab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("IMEX_STAB_THREADS")
        .output()
        .expect("binary runs")
}

#[test]
fn configuration_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(imex_stab(&["--experiment", "nope"], dir.path()).status.code(), Some(4));
    assert_eq!(imex_stab(&[], dir.path()).status.code(), Some(4));
    assert_eq!(
        imex_stab(&["--experiment", "surfaces", "--m", "30", "--mode", "proj"], dir.path()).status.code(),
        Some(4)
    );
    assert_eq!(imex_stab(&["--experiment", "surfaces", "--bogus"], dir.path()).status.code(), Some(4));
    let threads = Command::new(env!("CARGO_BIN_EXE_imex-stab"))
        .args(["--experiment", "convergence", "--out"])
        .arg(dir.path())
        .env("IMEX_STAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(4));
}

#[test]
fn small_surface_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = imex_stab(
        &["--experiment", "surfaces", "--m", "7", "--eps0", "1e-2", "--eps0", "1e-3", "--k", "1", "--steps", "20"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for v in ["1e-2", "1e-3"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("surface_eps0_{v}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# params experiment=surfaces m=7"));
        assert!(lines.next().unwrap().starts_with("# structure valid=true"));
        assert_eq!(lines.next().unwrap(), "i,j,x,y,u");
        assert_eq!(lines.count(), 49);
    }
}

#[test]
fn config_file_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "experiment=energy-compare\nm=7\nk=0.5,0.25\nsteps=3\n").unwrap();
    let o = imex_stab(&["--config", cfg.to_str().unwrap(), "--steps", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("energy_compare.csv")).unwrap();
    assert!(csv.starts_with("# params experiment=energy-compare m=7 "));
    assert!(csv.contains(" steps=4,4 "));
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    // u0 plus four steps for each of the two timesteps
    assert_eq!(rows.len(), 10);
    assert!(rows[0].ends_with("eps0=1e-4;k=5e-1;N=4"));
}

#[test]
fn projection_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = imex_stab(
        &["--experiment", "shifted-decay", "--m", "15", "--mode", "proj", "--eps0", "1e-4", "--k", "1", "--steps", "30"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verification_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = imex_stab(&["--experiment", "verify-lemmas", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("seed=3"));
    assert_eq!(lines.next().unwrap(), "check_name,case_id,value,bound,pass");
    assert!(lines.all(|l| l.ends_with(",true")));
}
