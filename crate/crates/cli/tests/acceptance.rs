//! Acceptance run: every criterion from its shipped config, one line each.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use tnlab_cli::{experiments, Config, Summary};

struct Criterion {
    id: u32,
    title: &'static str,
    config: &'static str,
    /// Checks deciding the criterion; empty means all checks of the run.
    checks: &'static [&'static str],
    limit: Option<Duration>,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "frequency split completeness and symmetry", config: "split.json", checks: &[], limit: Some(Duration::from_secs(1)) },
    Criterion { id: 2, title: "Kubo kernels", config: "kubo.json", checks: &[], limit: Some(Duration::from_secs(1)) },
    Criterion { id: 3, title: "time-normal basics", config: "tn-basics.json", checks: &[], limit: Some(Duration::from_secs(10)) },
    Criterion { id: 4, title: "in-field cancellation", config: "tn-in-field.json", checks: &[], limit: Some(Duration::from_secs(10)) },
    Criterion { id: 5, title: "causality probe", config: "causality.json", checks: &[], limit: Some(Duration::from_secs(60)) },
    Criterion { id: 6, title: "radiated-field identity", config: "radiated-check.json", checks: &[], limit: Some(Duration::from_secs(300)) },
    Criterion { id: 7, title: "consistency conditions", config: "consistency.json", checks: &[], limit: Some(Duration::from_secs(300)) },
    Criterion { id: 8, title: "path-space Fourier duality", config: "pfunctional.json", checks: &[], limit: Some(Duration::from_secs(5)) },
    Criterion { id: 9, title: "dressing toys", config: "dress-toy.json", checks: &[], limit: Some(Duration::from_secs(5)) },
    Criterion {
        id: 10,
        title: "end-to-end dressing",
        config: "dress-e2e.json",
        checks: &["dressing_residual"],
        limit: Some(Duration::from_secs(600)),
    },
    Criterion { id: 11, title: "Wiener discretization", config: "wiener.json", checks: &["increment_variance"], limit: Some(Duration::from_secs(5)) },
    Criterion { id: 12, title: "hbar invariance", config: "hbar-invariance.json", checks: &[], limit: None },
    Criterion { id: 13, title: "quantum-classical correspondence", config: "scatter-mc.json", checks: &[], limit: Some(Duration::from_secs(120)) },
];

fn verdict(c: &Criterion, s: &Summary) -> (bool, String) {
    let picked: Vec<_> = if c.checks.is_empty() {
        s.checks.iter().collect()
    } else {
        c.checks.iter().map(|n| s.check(n).unwrap_or_else(|| panic!("criterion {}: no check {n}", c.id))).collect()
    };
    let pass = !picked.is_empty() && picked.iter().all(|k| k.pass);
    let detail: Vec<String> = picked
        .iter()
        .map(|k| {
            if k.tol == 0.0 && k.expected != 0.0 {
                format!("{}={:.3e}>={:.1e}", k.name, k.value, k.expected)
            } else {
                format!("{}={:.3e} tol {:.1e}", k.name, k.value, k.tol)
            }
        })
        .collect();
    (pass, detail.join("; "))
}

/// Writes past the test harness's output capture so the lines show in every run.
macro_rules! report {
    ($($arg:tt)*) => {{
        let mut out = std::io::stdout().lock();
        writeln!(out, $($arg)*).unwrap();
        out.flush().unwrap();
    }};
}

#[test]
fn acceptance() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut failed = Vec::new();
    for c in CRITERIA {
        let cfg = Config::load(&dir.join(c.config)).expect("shipped config loads");
        let start = Instant::now();
        let result = experiments::run(&cfg);
        let took = start.elapsed();
        let (pass, detail) = match &result {
            Ok(out) => verdict(c, &out.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = c.limit.is_none_or(|l| took <= l);
        let limit = c.limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
        let ok = pass && in_time;
        report!(
            "criterion {:>2}: {} {} | {} | {:.1}s{}",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.title,
            detail,
            took.as_secs_f64(),
            limit
        );
        if let Ok(out) = &result {
            for k in out.summary.checks.iter().filter(|k| !k.pass && !c.checks.is_empty() && !c.checks.contains(&k.name.as_str())) {
                report!("              note: {} = {:.3e} outside {:.1e} (not part of this criterion)", k.name, k.value, k.tol);
            }
        }
        if !ok {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
