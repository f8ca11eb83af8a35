//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! runtime against the budget; the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use lambda_fv::cdi::{classify_measure, estimate_tm, urn_dominance_check, Verdict};
use lambda_fv::coalescent::{simulate_block_count, simulate_coalescent, RateTable};
use lambda_fv::harness::{run_experiment, ExperimentConfig};
use lambda_fv::lookdown::{empirical_support, recovered_coalescent, simulate_lookdown, Init, LookdownOptions};
use lambda_fv::measures::{Density, LambdaMeasure};
use lambda_fv::stats::chi2_homogeneity;
use lambda_fv::streams::StreamKey;
use lambda_fv::support::{
    box_counting_dimension, brownian_sup_exceedance, brownian_tail_bound, dyadic_scales, dyadic_times,
    modulus_envelope, range_times, range_union, theory_constant, ModulusReport, PointCloud,
};

const TOL: f64 = 1e-10;
const LEVEL: f64 = 0.01;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    name: &'static str,
    budget_secs: f64,
    check: fn() -> Outcome,
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn rate_correctness() -> Outcome {
    let quadrature = LambdaMeasure::custom(0.0, 0.0, Density::Function(std::sync::Arc::new(|_, _| 1.0)))?;
    let table = RateTable::build(&quadrature, 30, TOL)?;
    let mut worst = 0.0f64;
    for b in 2..=30 {
        for k in 2..=b {
            let exact = (ln_factorial(k - 2) + ln_factorial(b - k) - ln_factorial(b - 1)).exp();
            worst = worst.max((table.lambda(b, k) - exact).abs());
        }
    }
    let kingman = RateTable::build(&LambdaMeasure::kingman(1.3)?, 30, TOL)?;
    let kingman_exact = (2..=30).all(|b| kingman.lambda(b, 2) == 1.3 && (3..=b).all(|k| kingman.lambda(b, k) == 0.0));
    Ok((
        worst <= 1e-8 && kingman_exact,
        format!("uniform max |err| = {worst:.2e}, kingman exact = {kingman_exact}"),
    ))
}

fn consistency() -> Outcome {
    let measures = [
        ("kingman", LambdaMeasure::kingman(1.0)?),
        ("uniform", LambdaMeasure::uniform()),
        ("beta(0.5)", LambdaMeasure::beta(0.5)?),
        ("beta(1.5)", LambdaMeasure::beta(1.5)?),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, m) in &measures {
        let defect = RateTable::build(m, 51, TOL)?.consistency_defect();
        pass &= defect <= 3.0 * TOL;
        parts.push(format!("{name} {defect:.1e}"));
    }
    Ok((pass, format!("max defect: {}", parts.join(", "))))
}

fn tally(map: &mut BTreeMap<Vec<usize>, [u64; 2]>, key: Vec<usize>, side: usize) {
    map.entry(key).or_default()[side] += 1;
}

fn split(map: &BTreeMap<Vec<usize>, [u64; 2]>) -> (Vec<u64>, Vec<u64>) {
    map.values().map(|c| (c[0], c[1])).unzip()
}

fn restriction() -> Outcome {
    let table = RateTable::build(&LambdaMeasure::kingman(1.0)?, 6, TOL)?;
    let mut counts = BTreeMap::new();
    for r in 0..20_000u64 {
        let big = simulate_coalescent(&table, 6, 0.5, StreamKey::new(101, r))?;
        tally(&mut counts, big.final_partition().restrict(3)?.labels(), 0);
        let small = simulate_coalescent(&table, 3, 0.5, StreamKey::new(102, r))?;
        tally(&mut counts, small.final_partition().labels(), 1);
    }
    let (a, b) = split(&counts);
    let chi = chi2_homogeneity(&a, &b);
    Ok((
        chi.passes(LEVEL) && counts.len() == 5,
        format!("{} partitions, chi2 = {:.2}, dof = {}, p = {:.3}", counts.len(), chi.statistic, chi.dof, chi.p_value),
    ))
}

fn recovered_law() -> Outcome {
    let measure = LambdaMeasure::kingman(1.0)?;
    let table = RateTable::build(&measure, 6, TOL)?;
    let options = LookdownOptions::default();
    let mut counts = BTreeMap::new();
    for r in 0..10_000u64 {
        let traj = simulate_lookdown(&measure, 6, 1, 1.0, &Init::Origin, &options, StreamKey::new(201, r))?;
        tally(&mut counts, vec![recovered_coalescent(&traj)?.block_count_at(0.3)], 0);
        let direct = simulate_block_count(&table, 6, 1, 0.3, StreamKey::new(202, r))?;
        tally(&mut counts, vec![direct.final_count()], 1);
    }
    let (a, b) = split(&counts);
    let chi = chi2_homogeneity(&a, &b);
    Ok((
        chi.passes(LEVEL),
        format!("lookdown {a:?} vs direct {b:?}, chi2 = {:.2}, p = {:.3}", chi.statistic, chi.p_value),
    ))
}

fn tm_check() -> Outcome {
    let table = RateTable::build(&LambdaMeasure::kingman(1.0)?, 1000, TOL)?;
    let est = estimate_tm(&table, 10, 1000, None, 10_000, 301)?;
    let exact = 2.0 / 10.0 - 2.0 / 1000.0;
    let near = (est.mean - exact).abs() <= 3.0 * est.stderr;
    let below = est.mean <= est.lambda_bound + 3.0 * est.stderr;
    Ok((
        near && below && est.censored_fraction == 0.0,
        format!(
            "mean {:.5} +- {:.5} vs {exact}; rate-sum bound {:.5}; censored {}",
            est.mean, est.stderr, est.lambda_bound, est.censored_fraction
        ),
    ))
}

fn cdi_classification() -> Outcome {
    let cases = [
        ("kingman", LambdaMeasure::kingman(1.0)?, Verdict::ComesDown),
        ("beta(1.5)", LambdaMeasure::beta(1.5)?, Verdict::ComesDown),
        ("beta(0.5)", LambdaMeasure::beta(0.5)?, Verdict::StaysInfinite),
        ("uniform", LambdaMeasure::uniform(), Verdict::StaysInfinite),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, m, expected) in &cases {
        let c = classify_measure(m, TOL)?;
        pass &= c.agree && c.series.verdict == *expected && c.integral.verdict == *expected;
        parts.push(format!("{name} {}/{}", c.series.verdict.as_str(), c.integral.verdict.as_str()));
    }
    Ok((pass, parts.join(", ")))
}

fn urn_dominance() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, m)) in [("kingman", LambdaMeasure::kingman(1.0)?), ("beta(1.5)", LambdaMeasure::beta(1.5)?)]
        .into_iter()
        .enumerate()
    {
        let table = RateTable::build(&m, 50, TOL)?;
        let scale = estimate_tm(&table, 5, 50, None, 2, 0)?.lambda_bound;
        let grid: Vec<f64> = (1..=20).map(|i| scale * i as f64 / 10.0).collect();
        let report = urn_dominance_check(&table, 50, 5, 50_000, &grid, 401 + i as u64)?;
        let worst = report
            .rows
            .iter()
            .map(|r| (r.coalescent - r.urn) / r.stderr.max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        pass &= report.holds && report.rows.len() == 20;
        parts.push(format!("{name} worst excess {worst:.2} se"));
    }
    Ok((pass, parts.join(", ")))
}

fn brownian_tail() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(d, t, x)) in [(1usize, 1.0, 3.0), (2, 1.0, 3.0), (3, 0.5, 2.0)].iter().enumerate() {
        let est = brownian_sup_exceedance(d, t, x, 50_000, 1e-3, 501 + i as u64)?;
        let bound = brownian_tail_bound(d, t, x)?;
        pass &= est.probability < bound;
        parts.push(format!("({d},{t},{x}) {:.5} +- {:.5} < {bound:.5}", est.probability, est.stderr));
    }
    Ok((pass, parts.join(", ")))
}

fn modulus() -> Outcome {
    let measure = LambdaMeasure::kingman(1.0)?;
    let depth = 8;
    let options = LookdownOptions {
        sample_times: dyadic_times(1.0, depth),
        keep_event_log: false,
        ..LookdownOptions::default()
    };
    let parts = (0..200u64)
        .map(|r| {
            let traj = simulate_lookdown(&measure, 500, 2, 1.0, &Init::Origin, &options, StreamKey::new(601, r))?;
            modulus_envelope(std::slice::from_ref(&traj), depth, 1.0)
        })
        .collect::<lambda_fv::Result<Vec<_>>>()?;
    let report = ModulusReport::combine(parts)?;
    let fraction = report.all_scales_pass_fraction(4..=8);
    let scales: Vec<String> = report
        .scales
        .iter()
        .filter(|s| (4..=8).contains(&s.depth))
        .map(|s| format!("k={} c_hat {:.2} pass {:.3}", s.depth, s.c_hat, s.pass_fraction))
        .collect();
    Ok((
        fraction >= 0.95,
        format!("all-scale pass fraction {fraction:.3}, c_theory {:.2}; {}", report.c_theory, scales.join("; ")),
    ))
}

fn dimension() -> Outcome {
    let measure = LambdaMeasure::kingman(1.0)?;
    let mut sample_times = range_times(0.5, 1.0, 64);
    sample_times.push(1.0);
    let options = LookdownOptions {
        sample_times,
        keep_event_log: false,
        ..LookdownOptions::default()
    };
    let traj = simulate_lookdown(&measure, 2000, 3, 1.0, &Init::Origin, &options, StreamKey::new(701, 0))?;
    let support = empirical_support(&traj, 1.0, 0)?;
    let support_dim = box_counting_dimension(&support, &dyadic_scales(&support, 6))?;
    let range = range_union(&traj, 0.5, 1.0, 64, 0)?;
    let range_dim = box_counting_dimension(&range, &dyadic_scales(&range, 6))?;

    let point = PointCloud::from_points(&[vec![0.3, 0.3]])?;
    let point_dim = box_counting_dimension(&point, &dyadic_scales(&point, 6))?.slope;
    let cell = |k: usize| (k as f64 + 0.5) / 256.0;
    let grid: Vec<Vec<f64>> = (0..256 * 256).map(|k| vec![cell(k % 256), cell(k / 256)]).collect();
    let halving: Vec<f64> = (0..6).map(|i| 0.5 / f64::from(1 << i)).collect();
    let grid_dim = box_counting_dimension(&PointCloud::from_points(&grid)?, &halving)?.slope;
    let segment: Vec<Vec<f64>> = (0..4096).map(|i| vec![(i as f64 + 0.5) / 4096.0, 0.5]).collect();
    let segment = PointCloud::from_points(&segment)?;
    let segment_dim = box_counting_dimension(&segment, &dyadic_scales(&segment, 6))?.slope;

    let pass = support_dim.slope <= 2.5
        && range_dim.slope <= 4.5
        && point_dim == 0.0
        && (grid_dim - 2.0).abs() <= 0.1
        && (segment_dim - 1.0).abs() <= 0.15;
    Ok((
        pass,
        format!(
            "support {:.3} (ci {:.2}..{:.2}) <= 2.5, range {:.3} <= 4.5, point {point_dim}, grid {grid_dim:.3}, segment {segment_dim:.3}",
            support_dim.slope, support_dim.ci.0, support_dim.ci.1, range_dim.slope
        ),
    ))
}

fn csv_bytes(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path)?);
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir()?;
    let mut runs = Vec::new();
    for name in ["first", "second"] {
        let mut config = ExperimentConfig::from_json(
            r#"{
                "seed": 11,
                "output_dir": "unused",
                "measure": {"family": "beta", "beta": 1.5},
                "simulation": {"n": 40, "T": 0.5},
                "analysis": {"replicates": 4, "grid_depth": 4, "snapshot_count": 8}
            }"#,
        )?;
        config.output_dir = tmp.path().join(name);
        run_experiment(&config)?;
        runs.push(csv_bytes(&config.output_dir)?);
    }
    let identical = runs[0] == runs[1];
    Ok((identical && !runs[0].is_empty(), format!("{} CSV files, byte-identical = {identical}", runs[0].len())))
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "rate-correctness", budget_secs: 1.0, check: rate_correctness },
    Criterion { name: "consistency-relation", budget_secs: 5.0, check: consistency },
    Criterion { name: "restriction-consistency", budget_secs: 30.0, check: restriction },
    Criterion { name: "recovered-coalescent-law", budget_secs: 120.0, check: recovered_law },
    Criterion { name: "tm-quantitative", budget_secs: 120.0, check: tm_check },
    Criterion { name: "cdi-classification", budget_secs: 60.0, check: cdi_classification },
    Criterion { name: "urn-dominance", budget_secs: 120.0, check: urn_dominance },
    Criterion { name: "brownian-tail", budget_secs: 120.0, check: brownian_tail },
    Criterion { name: "modulus-envelope", budget_secs: 600.0, check: modulus },
    Criterion { name: "dimension-bounds", budget_secs: 600.0, check: dimension },
    Criterion { name: "determinism", budget_secs: 10.0, check: determinism },
];

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    println!("theory constant C(2, 1) = {:.4}", theory_constant(2, 1.0));
    let mut failures = 0;
    for c in CRITERIA.iter().filter(|c| filter.is_empty() || filter.iter().any(|f| c.name.contains(f.as_str()))) {
        let clock = Instant::now();
        let outcome = (c.check)();
        let secs = clock.elapsed().as_secs_f64();
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failures += 1;
        }
        let timing = format!("{secs:.1}s/{:.0}s", c.budget_secs);
        println!("{} {:<26} {timing:>12}  {detail}", if pass { "PASS" } else { "FAIL" }, c.name);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
