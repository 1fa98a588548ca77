//! End-to-end acceptance: every figure is reproduced with the default
//! configuration (seed 7) and each criterion is mapped onto the checks the
//! runners embed. Prints one line per criterion.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use veloq::config::RunConfig;
use veloq::report::FigureOutput;
use veloq::runners::{self, Context, IDS};

struct Run {
    outputs: BTreeMap<String, FigureOutput>,
    times: BTreeMap<String, Duration>,
    total: Duration,
}

fn reproduce(dir: &Path, order: &[&str]) -> Run {
    let ctx = Context::new(RunConfig::default()).expect("default config is valid");
    let mut outputs = BTreeMap::new();
    let mut times = BTreeMap::new();
    let start = Instant::now();
    for id in order {
        let t = Instant::now();
        let out = runners::run(id, &ctx).unwrap_or_else(|e| panic!("{id}: {e:#}"));
        times.insert(id.to_string(), t.elapsed());
        out.write(dir).unwrap();
        outputs.insert(id.to_string(), out);
    }
    Run { outputs, times, total: start.elapsed() }
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

struct Criterion {
    n: usize,
    name: &'static str,
    checks: Vec<(&'static str, &'static str)>,
    figures: Vec<&'static str>,
    limit: Duration,
}

fn crit(n: usize, name: &'static str, checks: &[(&'static str, &'static str)], figures: &[&'static str], limit_s: u64) -> Criterion {
    Criterion { n, name, checks: checks.to_vec(), figures: figures.to_vec(), limit: Duration::from_secs(limit_s) }
}

fn main() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    // run 1 starts with figS2 so its time includes the pulse synthesis
    let mut order: Vec<&str> = vec!["figS2"];
    order.extend(IDS.iter().copied().filter(|id| *id != "figS2"));
    let run1 = reproduce(dir1.path(), &order);
    let run2 = reproduce(dir2.path(), IDS);

    let criteria = [
        crit(1, "zone-transfer arithmetic", &[("zones", "transfer_time"), ("zones", "transfer_distance")], &["zones"], 1),
        crit(2, "spectator infidelity law", &[("fig2d", "analytic_vs_numeric"), ("fig2d", "zeros_located"), ("fig2d", "unit_at_origin")], &["fig2d"], 10),
        crit(3, "first-zero velocity", &[("fig2d", "first_zero_velocity"), ("fig2d", "first_zero_vs_reported")], &["fig2d"], 1),
        crit(4, "Doppler spectroscopy", &[("fig2a", "slope")], &["fig2a"], 30),
        crit(5, "displacement phase", &[("fig3a", "phase_slope"), ("fig3a", "perpendicular_phase")], &["fig3a"], 30),
        crit(6, "on-the-fly rotation", &[("fig3c", "contrast_ratio")], &["fig3c"], 60),
        crit(
            7,
            "cluster state",
            &[
                ("fig4", "noiseless_stabilizers"),
                ("fig4", "postselected_mean"),
                ("fig4", "raw_mean"),
                ("fig4", "raw_below_postselected"),
                ("fig4", "witness"),
            ],
            &["fig4"],
            120,
        ),
        crit(
            8,
            "[[4,2,2]] protocol",
            &[("fig5", "noiseless_logical_fidelity"), ("fig5", "noiseless_discard"), ("fig5", "logical_beats_physical"), ("fig5", "bell_discard")],
            &["fig5"],
            180,
        ),
        crit(
            9,
            "time-optimal CZ",
            &[("figS2", "ideal_infidelity"), ("figS2", "rest_equals_static"), ("figS2", "even_in_velocity"), ("figS2", "first_lobe_monotone")],
            &["figS2"],
            300,
        ),
        crit(
            10,
            "flying ancilla",
            &[("fig5", "flying_noiseless_eigenstate"), ("figS3", "x_error_flagged"), ("fig5", "flying_success"), ("fig5", "flying_discard")],
            &["fig5", "figS3"],
            180,
        ),
        crit(
            12,
            "oracle recoveries",
            &[("figS1", "rb_error"), ("fig1f", "ssb_high"), ("fig1f", "ssb_calibrated"), ("figS1", "gaussian_n0")],
            &["figS1", "fig1f"],
            120,
        ),
    ];

    let mut lines: Vec<(usize, bool, String)> = Vec::new();
    for c in &criteria {
        let mut ok = true;
        let mut notes = Vec::new();
        for (fig, name) in &c.checks {
            match run1.outputs[*fig].check(name) {
                Some(ch) => {
                    ok &= ch.passed;
                    if !ch.passed {
                        notes.push(format!("{fig}/{name}: {}", ch.detail));
                    }
                }
                None => {
                    ok = false;
                    notes.push(format!("{fig}/{name}: missing"));
                }
            }
        }
        let elapsed: Duration = c.figures.iter().map(|f| run1.times[*f]).sum();
        if elapsed > c.limit {
            ok = false;
            notes.push(format!("runtime {:.1} s over {} s", elapsed.as_secs_f64(), c.limit.as_secs()));
        }
        let detail = if notes.is_empty() { format!("{} checks, {:.2} s", c.checks.len(), elapsed.as_secs_f64()) } else { notes.join("; ") };
        lines.push((c.n, ok, format!("{}: {detail}", c.name)));
    }

    let files1 = read_dir(dir1.path());
    let files2 = read_dir(dir2.path());
    let differing: Vec<&String> = files1.keys().chain(files2.keys()).filter(|k| files1.get(*k) != files2.get(*k)).collect();
    let total = run1.total.max(run2.total);
    let det_ok = differing.is_empty() && !files1.is_empty() && total < Duration::from_secs(600);
    let det_detail = if differing.is_empty() {
        format!("{} files byte-identical across two runs, slowest run {:.1} s", files1.len(), total.as_secs_f64())
    } else {
        format!("differing files: {differing:?}")
    };
    lines.push((11, det_ok, format!("determinism: {det_detail}")));
    lines.sort_by_key(|l| l.0);

    for (n, ok, text) in &lines {
        println!("criterion {n:2} {}  {text}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
