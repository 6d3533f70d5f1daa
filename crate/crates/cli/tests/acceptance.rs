//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Run with
//! `cargo test -p entcert-cli --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use entcert::classical_models::{lhv_to_convex_sum, DicePairEnsemble, Rational};
use entcert::hilbert::{
    conditional_covariance, lift_local, pauli, variance, ComplexMatrix, HermitianOperator, TensorStructure,
};
use entcert::inequalities::{
    chsh_value, maximize_chsh, ChshConfig, MeasurementSetting, PlanarAngles, CLASSICAL_BOUND,
};
use entcert::protocol_sim::{
    design_effect_from_stats, map_runs, test_h0, ProtocolSpec, SignalModel, Variant,
};
use entcert::rng::StreamRng;
use entcert::states::{negativity, random, singlet, to_density, werner};
use entcert::stat_tests::special::chi_square_sf;
use entcert::stat_tests::{audit_outcomes, simple_random_sample_audit, BATTERY_SIZE};
use entcert_cli::commands::{dice, torre};
use entcert_cli::config::{DiceSettings, TorreSettings};
use entcert_cli::Cli;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

// Pinned tolerances and limits.
const DICE_RUNS: u64 = 100;
const DICE_TRIALS: u64 = 1_000_000;
const DICE_MIN_INSIDE: usize = 99;
const DICE_TIME: Duration = Duration::from_secs(5);
const CHSH_GRID_LOW: f64 = 1e-3;
const CHSH_GRID_HIGH: f64 = 1e-6;
const CHSH_CANONICAL_TOL: f64 = 1e-10;
const CHSH_TIME: Duration = Duration::from_secs(10);
const CONVEX_STATES: usize = 500;
const CONVEX_CONFIGS: usize = 20;
const CONVEX_TOL: f64 = 1e-9;
const WERNER_NEG: f64 = 0.125;
const WERNER_TOL: f64 = 1e-9;
const IDENTITY_STATES: usize = 200;
const IDENTITY_TOL: f64 = 1e-9;
const TORRE_TOL: f64 = 1e-12;
const Z_BAND: (f64, f64) = (0.03, 0.07);
const BLOCK_Z_FRACTION: f64 = 0.5;
const POOLED_P: f64 = 1e-4;
const IID_PASS_RATE: f64 = 0.93;
const LOOPHOLE_TIME: Duration = Duration::from_secs(60);
const CHI_SQUARE_REL: f64 = 1e-8;
const BRIDGE_TOL: f64 = 1e-12;

// (statistic, dof, Q) from a 40-digit mpmath evaluation.
#[allow(clippy::excessive_precision)]
const CHI_SQUARE_TABLE: [(f64, f64, f64); 12] = [
    (0.5, 1.0, 0.479_500_122_186_953_462_32),
    (3.841_458_820_694_124, 1.0, 0.050_000_000_000_000_057_435),
    (6.634_896_601_021_214, 1.0, 0.010_000_000_000_000_008_685),
    (10.0, 2.0, 0.006_737_946_999_085_467_096_6),
    (1.0, 5.0, 0.962_565_773_247_296_368_96),
    (30.0, 10.0, 8.566_412_107_753_003_921_1e-4),
    (3.0, 10.0, 0.981_424_063_777_859_325_7),
    (720.0, 1.0, 1.338_625_893_657_619_166_7e-158),
    (50.0, 20.0, 2.214_766_382_487_835_812_2e-4),
    (150.0, 100.0, 9.039_320_423_540_090_857_6e-4),
    (0.01, 3.0, 0.999_734_834_941_344_390_16),
    (25.0, 4.0, 5.030_981_782_306_205_840_4e-5),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn dice_exactness() -> Outcome {
    let start = Instant::now();
    let settings = DiceSettings {
        trials: DICE_TRIALS,
        runs: DICE_RUNS,
    };
    let (exact, rows) = match dice::evaluate(&settings, SEED) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let exact_ok = exact.e_a == Rational::new(5, 8) && exact.e_b == Rational::new(5, 8) && exact.e_ab == Rational::new(19, 48);
    let inside = rows.iter().filter(|r| r.within_4_sem).count();
    outcome(
        exact_ok && inside >= DICE_MIN_INSIDE && elapsed < DICE_TIME,
        format!(
            "E(A) = {}, E(B) = {}, E(AB) = {}; {inside}/{DICE_RUNS} runs within 4 SEM; {}",
            exact.e_a,
            exact.e_b,
            exact.e_ab,
            secs(elapsed)
        ),
    )
}

fn chsh_singlet() -> Outcome {
    let start = Instant::now();
    let rho = singlet();
    let grid = maximize_chsh(&rho, PI / 180.0).map(|o| o.s_value);
    let canonical = chsh_value(&rho, &ChshConfig::planar(PlanarAngles::canonical())).map(|r| r.s_value);
    let elapsed = start.elapsed();
    let (Ok(grid), Ok(canonical)) = (grid, canonical) else {
        return outcome(false, "evaluation failed".into());
    };
    let t = 2.0 * SQRT_2;
    let pass = grid >= t - CHSH_GRID_LOW
        && grid <= t + CHSH_GRID_HIGH
        && (canonical - t).abs() <= CHSH_CANONICAL_TOL
        && elapsed < CHSH_TIME;
    outcome(
        pass,
        format!(
            "grid S = {grid:.12}, canonical |S - 2√2| = {:.1e}; {}",
            (canonical - t).abs(),
            secs(elapsed)
        ),
    )
}

/// r·(n̂·σ) with n̂ uniform on the sphere; half the settings have r = 1.
fn random_setting(rng: &mut StreamRng) -> MeasurementSetting {
    let z = 2.0 * rng.uniform() - 1.0;
    let phi = 2.0 * PI * rng.uniform();
    let r = if rng.uniform() < 0.5 { 1.0 } else { rng.uniform() };
    let s = (1.0 - z * z).sqrt();
    let m: ComplexMatrix = &(&pauli::sigma_x().scale(r * s * phi.cos()) + &pauli::sigma_y().scale(r * s * phi.sin()))
        + &pauli::sigma_z().scale(r * z);
    MeasurementSetting::new(HermitianOperator::new(m).expect("Hermitian")).expect("bounded")
}

fn convex_sum_bound() -> Outcome {
    let mut states = ChaCha8Rng::seed_from_u64(SEED);
    let mut settings = StreamRng::new(SEED, 3);
    let (mut worst, mut violations) = (f64::NEG_INFINITY, 0);
    for _ in 0..CONVEX_STATES {
        let rho = to_density(&random::convex_sum(&mut states, 4));
        for _ in 0..CONVEX_CONFIGS {
            let cfg = ChshConfig {
                a: random_setting(&mut settings),
                a_prime: random_setting(&mut settings),
                b: random_setting(&mut settings),
                b_prime: random_setting(&mut settings),
            };
            let s = chsh_value(&rho, &cfg).expect("two-qubit state").s_value;
            worst = worst.max(s);
            violations += usize::from(s > CLASSICAL_BOUND + CONVEX_TOL);
        }
    }
    outcome(
        violations == 0,
        format!(
            "{violations} of {} evaluations above 2 + {CONVEX_TOL:e}; max S = {worst:.6}",
            CONVEX_STATES * CONVEX_CONFIGS
        ),
    )
}

fn werner_gap() -> Outcome {
    let rho = werner(0.5).expect("valid weight");
    let neg = negativity(&rho).expect("two qubits");
    let s = maximize_chsh(&rho, PI / 180.0).expect("two qubits").s_value;
    outcome(
        (neg - WERNER_NEG).abs() <= WERNER_TOL && s <= CLASSICAL_BOUND,
        format!("negativity = {neg:.12}, max S = {s:.9}"),
    )
}

fn bilinear_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut coeff = StreamRng::new(SEED, 5);
    let mut worst: f64 = 0.0;
    for i in 0..IDENTITY_STATES {
        let (d1, d2) = (2 + i % 3, 2 + (i / 3) % 3);
        let s = TensorStructure::bipartite(d1, d2).expect("dims");
        let rho = random::product_state(&mut rng, d1, d2);
        let a = lift_local(&random::hermitian(&mut rng, d1), 0, &s).expect("site 0");
        let b = lift_local(&random::hermitian(&mut rng, d2), 1, &s).expect("site 1");
        let [k, n, m, l]: [f64; 4] = std::array::from_fn(|_| 4.0 * coeff.uniform() - 2.0);
        let f = HermitianOperator::linear_combination(&[(k, &a), (n, &b)]).expect("same dim");
        let g = HermitianOperator::linear_combination(&[(m, &a), (l, &b)]).expect("same dim");
        let lhs = conditional_covariance(&rho, &f, &g).expect("commuting");
        let rhs = k * m * variance(&rho, &a).expect("var") + n * l * variance(&rho, &b).expect("var");
        worst = worst.max((lhs - rhs).abs());
    }
    let rows = match torre::evaluate(&TorreSettings::default(), SEED) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let torre_worst = rows
        .iter()
        .filter(|r| r.case.starts_with("position"))
        .map(|r| (r.covariance - (r.var_a - r.var_b)).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= IDENTITY_TOL && torre_worst <= TORRE_TOL,
        format!("max residual {worst:.2e} over {IDENTITY_STATES} states; position case |cov - (var X1 - var X2)| = {torre_worst:.2e}"),
    )
}

fn loophole() -> Outcome {
    let start = Instant::now();
    let model = SignalModel::loophole_default();

    // (a) IID calibration, reusing the same runs for the audit pass rate in (d).
    let iid = ProtocolSpec::new(Variant::Iid, 4, 2500).expect("valid");
    let iid_runs = map_runs(&model, &iid, SEED, 1000, |s| {
        let z = test_h0(&s, &model).expect("nonzero sem").z_score;
        let pass = simple_random_sample_audit(&s, 100, 0.05).expect("long enough").overall_homogeneous;
        (z, pass)
    })
    .expect("valid");
    let z_frac = iid_runs.iter().filter(|r| r.0.abs() > 1.96).count() as f64 / 1000.0;
    let a = (Z_BAND.0..=Z_BAND.1).contains(&z_frac);

    // (b)
    let blk = ProtocolSpec::new(Variant::BlockFixedM, 4, 2500).expect("valid");
    let blk_runs = map_runs(&model, &blk, SEED, 100, |s| (test_h0(&s, &model).expect("nonzero sem").z_score, s.outcomes))
        .expect("valid");
    let big = blk_runs.iter().filter(|r| r.0.abs() > 10.0).count() as f64 / 100.0;
    let b = big >= BLOCK_Z_FRACTION;

    // (c)
    let mut des = Vec::new();
    for n2 in [10, 100, 1000] {
        let p = ProtocolSpec::new(Variant::BlockFixedM, 10, n2).expect("valid");
        let stats = map_runs(&model, &p, SEED, 200, |s| (s.mean(), s.naive_sem())).expect("valid");
        des.push(design_effect_from_stats(&stats).expect("enough runs"));
    }
    let c = des.windows(2).all(|w| w[1] > w[0]);

    // (d) pools of ten consecutive block runs, and the IID pass rate.
    let pooled_p: Vec<f64> = blk_runs
        .chunks(10)
        .map(|g| {
            let x: Vec<f64> = g.iter().flat_map(|r| r.1.iter().copied()).collect();
            audit_outcomes(&x, 100, 0.05).expect("long enough").overall_p_value
        })
        .collect();
    let worst_pool = pooled_p.iter().copied().fold(0.0, f64::max);
    let pass_rate = iid_runs.iter().filter(|r| r.1).count() as f64 / 1000.0;
    let d = worst_pool < POOLED_P && pass_rate >= IID_PASS_RATE;

    let elapsed = start.elapsed();
    outcome(
        a && b && c && d && elapsed < LOOPHOLE_TIME,
        format!(
            "(a) IID |z|>1.96 in {:.1}% {}; (b) block |z|>10 in {:.0}% {}; (c) design effect {:.2}, {:.2}, {:.2} {}; \
             (d) max pooled p {worst_pool:.1e}, IID pass rate {pass_rate:.3} {}; {}",
            100.0 * z_frac,
            mark(a),
            100.0 * big,
            mark(b),
            des[0],
            des[1],
            des[2],
            mark(c),
            mark(d),
            secs(elapsed)
        ),
    )
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn statistical_calibration() -> Outcome {
    let worst_rel = CHI_SQUARE_TABLE
        .iter()
        .map(|&(x, k, q)| ((chi_square_sf(x, k) - q) / q).abs())
        .fold(0.0, f64::max);
    let model = SignalModel::loophole_default();
    let p = ProtocolSpec::new(Variant::Iid, 1, 2000).expect("valid");
    let rejected = map_runs(&model, &p, SEED, 1000, |s| {
        simple_random_sample_audit(&s, 10, 0.05)
            .expect("long enough")
            .tests
            .iter()
            .map(|t| t.p_value < 0.05)
            .collect::<Vec<_>>()
    })
    .expect("valid");
    let rates: Vec<f64> = (0..BATTERY_SIZE)
        .map(|i| rejected.iter().filter(|r| r[i]).count() as f64 / 1000.0)
        .collect();
    let rates_ok = rates.iter().all(|r| (Z_BAND.0..=Z_BAND.1).contains(r));
    outcome(
        worst_rel <= CHI_SQUARE_REL && rates_ok,
        format!("max relative chi-square error {worst_rel:.1e}; null rejection rates {rates:?}"),
    )
}

fn dice_bridge() -> Outcome {
    let model = DicePairEnsemble::two_dice().to_lhv();
    let rho = match lhv_to_convex_sum(&model) {
        Ok(c) => to_density(&c),
        Err(e) => return outcome(false, e.to_string()),
    };
    let s = TensorStructure::qubits(2);
    let proj = HermitianOperator::new(ComplexMatrix::diagonal(&[0.0, 1.0])).expect("diagonal");
    let a = lift_local(&proj, 0, &s).expect("site 0");
    let b = lift_local(&proj, 1, &s).expect("site 1");
    let cov = conditional_covariance(&rho, &a, &b).expect("commuting");
    let neg = negativity(&rho).expect("two qubits");
    outcome(
        (cov - 1.0 / 192.0).abs() <= BRIDGE_TOL && neg == 0.0,
        format!("cov = {cov:.15} (1/192 = {:.15}), negativity = {neg}", 1.0 / 192.0),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("file"))
        })
        .collect()
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let cli = Cli::try_parse_from(std::iter::once("entcert").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    entcert_cli::run(&cli).map(|_| ()).map_err(|e| e.to_string())
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = tmp.path();
    let input = root.join("outcomes.txt");
    let model = SignalModel::loophole_default();
    let s = entcert::protocol_sim::generate(&model, &ProtocolSpec::new(Variant::Iid, 1, 1000).expect("valid"), SEED, 0)
        .expect("valid");
    let text: String = s.outcomes.iter().map(|x| format!("{x}\n")).collect();
    std::fs::write(&input, text).expect("write input");
    let input = input.to_string_lossy().into_owned();

    let cases: [(&str, Vec<&str>); 5] = [
        ("chsh", vec!["chsh", "--state", "werner:0.8", "--optimize", "--grid-step-deg", "5"]),
        ("dice", vec!["dice", "--runs", "4", "--trials", "20000"]),
        ("torre", vec!["torre", "--samples", "3"]),
        (
            "protocol",
            vec!["protocol", "--variant", "blockn", "--n1", "4", "--n2", "250", "--runs", "40", "--pool", "8", "--bins", "10"],
        ),
        ("audit", vec!["audit", "--input", input.as_str(), "--bins", "20"]),
    ];
    let mut failures = Vec::new();
    for (name, args) in &cases {
        let dirs: Vec<_> = ["w1", "w2", "cfg"].iter().map(|d| root.join(format!("{name}-{d}"))).collect();
        let d: Vec<String> = dirs.iter().map(|p| p.to_string_lossy().into_owned()).collect();
        let sidecar = dirs[0].join("run_config.toml").to_string_lossy().into_owned();
        let runs = [
            [&["--workers", "1", "--out", &d[0]][..], &args[..]].concat(),
            [&["--workers", "2", "--out", &d[1]][..], &args[..]].concat(),
            vec![args[0], "--config", &sidecar, "--out", &d[2]],
        ];
        if let Some(e) = runs.iter().find_map(|r| run_cli(r).err()) {
            failures.push(format!("{name}: {e}"));
            continue;
        }
        let first = read_dir(&dirs[0]);
        if first.len() < 2 || dirs[1..].iter().any(|p| read_dir(p) != first) {
            failures.push(format!("{name}: outputs differ"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} subcommands byte-identical across --workers 1/2 and sidecar reruns", cases.len())
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 9] = [
        ("dice exactness", dice_exactness),
        ("CHSH singlet", chsh_singlet),
        ("convex-sum CHSH bound", convex_sum_bound),
        ("Werner gap", werner_gap),
        ("covariance identity", bilinear_identity),
        ("homogeneity loophole", loophole),
        ("statistical calibration", statistical_calibration),
        ("dice LHV bridge", dice_bridge),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let r = check();
        failed += usize::from(!r.pass);
        println!("{} {} {name}: {}", if r.pass { "PASS" } else { "FAIL" }, i + 1, r.detail);
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
