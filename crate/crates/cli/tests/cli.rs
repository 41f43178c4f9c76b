use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fsi_cli::{bench, parse_config, parse_config_str, run_scenario, write_config, RunOptions, STATS_HEADER};
use fsi_core::fem::VelocityBc;
use fsi_core::geometry::{BoundingBox, Point};
use fsi_core::simulator::{Scenario, SolidShape};
use fsi_core::solid::SolidModel;
use fsi_core::solver::PrecondKind;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tiny(mut s: Scenario) -> Scenario {
    s.fluid_nx = 8;
    s.fluid_ny = 8;
    s.solid = match s.solid {
        SolidShape::Annulus { .. } => SolidShape::Annulus { nr: 2, ntheta: 6 },
        SolidShape::Rectangle { domain, .. } => SolidShape::Rectangle { domain, nx: 6, ny: 2 },
    };
    s.t_end = 3.0 * s.dt;
    s
}

#[test]
fn shipped_annulus_config_matches_preset() {
    let s = parse_config(&configs().join("annulus_linear.toml")).unwrap();
    assert_eq!(s.model, SolidModel::Linear { kappa: 10.0 });
    assert_eq!((s.viscosity, s.dt, s.t_end, s.density), (0.1, 0.01, 2.0, 1.0));
    assert_eq!(s.bc.left, VelocityBc::Slip);
    assert_eq!(s.bc.top, VelocityBc::NoSlip);
    assert_eq!(s, Scenario::annulus_linear(1));
}

#[test]
fn shipped_bar_config_matches_preset() {
    let s = parse_config(&configs().join("bar_nonlinear.toml")).unwrap();
    assert_eq!(s.model, SolidModel::Exponential { gamma: 1.333, eta: 9.242 });
    assert_eq!((s.viscosity, s.dt), (0.2, 0.002));
    assert_eq!(
        s.solid,
        SolidShape::Rectangle {
            domain: BoundingBox::new(Point::new(0.0, 0.45), Point::new(0.4, 0.55)),
            nx: 96,
            ny: 24
        }
    );
    assert_eq!(s, Scenario::bar_nonlinear(1));
}

#[test]
fn misspelled_key_is_rejected_with_its_line() {
    let text = fs::read_to_string(configs().join("annulus_linear.toml")).unwrap();
    let bad = text.replace("viscosity = 0.1", "vicsosity = 0.1");
    let line = bad.lines().position(|l| l.starts_with("vicsosity")).unwrap() + 1;
    let err = parse_config_str(&bad, "x").unwrap_err().to_string();
    assert!(err.contains("vicsosity"), "{err}");
    assert!(err.contains(&format!("line {line}")), "{err}");
}

#[test]
fn missing_section_is_an_error() {
    let text = fs::read_to_string(configs().join("annulus_linear.toml")).unwrap();
    let cut = text.split("[time]").next().unwrap().to_string() + "[solver]\nprecond = \"tri\"\n";
    let err = parse_config_str(&cut, "x").unwrap_err().to_string();
    assert!(err.contains("time"), "{err}");
}

#[test]
fn config_round_trip() {
    for s in [Scenario::annulus_linear(2), Scenario::bar_nonlinear(1), tiny(Scenario::annulus_linear(1))] {
        assert_eq!(parse_config_str(&write_config(&s), "x").unwrap(), s);
    }
}

fn read_vtk_counts(path: &Path) -> (usize, usize, Vec<String>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# vtk DataFile"));
    let mut points = 0;
    let mut cells = 0;
    let mut vectors = Vec::new();
    let all: Vec<&str> = text.lines().collect();
    for (i, l) in all.iter().enumerate() {
        let w: Vec<&str> = l.split_whitespace().collect();
        match w.first().copied() {
            Some("POINTS") => points = w[1].parse().unwrap(),
            Some("CELLS") => {
                cells = w[1].parse().unwrap();
                let total: usize = w[2].parse().unwrap();
                let listed: usize = all[i + 1..i + 1 + cells].iter().map(|c| c.split_whitespace().count()).sum();
                assert_eq!(listed, total);
            }
            Some("VECTORS") => vectors = all[i + 1..i + 1 + points].iter().map(|s| s.to_string()).collect(),
            _ => {}
        }
    }
    (points, cells, vectors)
}

#[test]
fn run_writes_stats_and_vtk() {
    let dir = tempfile::tempdir().unwrap();
    let s = tiny(Scenario::annulus_linear(1));
    let rows = run_scenario(
        &s,
        &RunOptions {
            precond: Some(PrecondKind::Diagonal),
            out: dir.path().to_path_buf(),
            steps: None,
            vtk: true,
        },
    )
    .unwrap();
    assert_eq!(rows.len(), 4);
    let csv = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], STATS_HEADER);
    assert_eq!(lines.len(), 1 + 1 + 3);

    let (points, cells, u) = read_vtk_counts(&dir.path().join("fluid_00000.vtk"));
    assert_eq!((points, cells), ((2 * 8 + 1) * (2 * 8 + 1), 64));
    assert!(u.iter().all(|l| l == "0 0 0"));
    let (points, cells, _) = read_vtk_counts(&dir.path().join("solid_00003.vtk"));
    assert_eq!((points, cells), (3 * 7, 12));
    let (_, _, u) = read_vtk_counts(&dir.path().join("fluid_00003.vtk"));
    assert!(u.iter().any(|l| l != "0 0 0"));
}

#[test]
fn bench_dofs_grow_about_fourfold() {
    let mut s = tiny(Scenario::annulus_linear(1));
    s.t_end = s.dt;
    let rows = bench(&s, 2, None).unwrap();
    assert_eq!(rows.len(), 4);
    let (d0, d1) = (rows[0].dofs, rows[2].dofs);
    assert!(d1 > d0);
    let ratio = d1 as f64 / d0 as f64;
    assert!((3.0..5.0).contains(&ratio), "{ratio}");
    assert!(bench(&s, 1, None).is_err());
}

#[test]
fn binary_validate_and_errors() {
    let exe = env!("CARGO_BIN_EXE_fsi");
    let ok = Command::new(exe)
        .args(["validate", configs().join("bar_nonlinear.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("21222 dofs"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(configs().join("annulus_linear.toml")).unwrap();
    fs::write(&bad, text.replace("viscosity", "vicsosity")).unwrap();
    let out = Command::new(exe).args(["validate", bad.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("vicsosity"));
}

#[test]
fn binary_run_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, write_config(&tiny(Scenario::bar_nonlinear(1)))).unwrap();
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_fsi"))
        .args(["run", cfg.to_str().unwrap(), "--precond", "tri", "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("stats.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1 + 3);
    assert!(out_dir.join("monitors.csv").exists());
}
