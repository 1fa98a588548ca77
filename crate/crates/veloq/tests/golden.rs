//! CSV schemas are part of the output contract: the set of files and their
//! header rows must match `golden/csv_headers.txt`.

use std::collections::BTreeMap;

use veloq::config::{Preset, RunConfig};
use veloq::runners::{run_all, Context};
use veloq_core::PulseProfile;

/// The pulse synthesized for the default Rydberg parameters, so the schema
/// check does not pay for the optimization.
fn cached_profile() -> PulseProfile {
    PulseProfile {
        duration_s: 2.427112882151404e-07,
        phase_coeffs: vec![
            0.1700703676633025,
            0.34966994190777234,
            -1.4595981505142084e-09,
            -0.5779160918854647,
            1.0784425553322617e-10,
            0.04490165803206494,
        ],
        z_correction_rad: -2.165417109006396,
    }
}

fn quick_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.shots = 400;
    cfg.run.rb_shots = 2000;
    cfg.noise.preset = Preset::Off;
    cfg
}

#[test]
fn csv_headers_match_golden() {
    let golden: BTreeMap<String, String> = include_str!("golden/csv_headers.txt")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (file, header) = l.split_once(": ").expect("golden line is `file: header`");
            (file.to_string(), header.to_string())
        })
        .collect();

    let ctx = Context::with_profile(quick_config(), cached_profile()).unwrap();
    let mut produced = BTreeMap::new();
    for out in run_all(&ctx).unwrap() {
        for (name, body) in &out.tables {
            let mut lines = body.lines();
            let header = lines.next().unwrap_or_default().to_string();
            assert!(lines.next().is_some(), "{name} has no data rows");
            assert!(produced.insert(name.clone(), header).is_none(), "{name} written twice");
        }
    }
    assert_eq!(produced, golden);
}

#[test]
fn cached_profile_is_still_a_cz() {
    let p = veloq::config::Physics::default().rydberg();
    assert!(veloq_core::rydberg::ideal_infidelity(&cached_profile(), &p) < 1e-4);
}

#[test]
fn noiseless_figures_pass_their_exact_checks() {
    // the logical-vs-physical margin is specified at 10⁴ shots
    let mut cfg = quick_config();
    cfg.run.shots = 10_000;
    let ctx = Context::with_profile(cfg, cached_profile()).unwrap();
    for id in ["fig4", "fig5", "figS3"] {
        let out = veloq::runners::run(id, &ctx).unwrap();
        assert!(out.passed(), "{id}:\n{}", out.diff_report());
    }
    let fig4 = veloq::runners::run("fig4", &ctx).unwrap();
    let rows: Vec<&str> = fig4.tables[0].1.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3], "1.0", "post-selected stabilizer in {row}");
    }
}
