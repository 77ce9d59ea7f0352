//! Acceptance suite: one PASS or FAIL line per criterion, nonzero exit on any
//! failure. Criteria that exercise the command line run the built binary.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng as _;
use shiftcal_core::calibrator::{argmax, default_temperature_config, fit_temperature, weighted_brier, CalibrationBatch, CalibrationMode};
use shiftcal_core::discriminator::{calibrate_discriminator, clamp_g, tempered_loss, weight_from_g, DiscriminationSet};
use shiftcal_core::metrics::{bound_chain, brier_decomposition, ece, ece_with_edges, random_instance};
use shiftcal_core::numerics::gradcheck::check_gradients;
use shiftcal_core::numerics::{sigmoid, softmax, Activation, DenseNet, Layer, LossKind, TrainData};
use shiftcal_core::scenarios::{Measure, Scenario};
use shiftcal_core::seed;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn shiftcal(args: &[&str]) -> Result<(i32, Duration, String), String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_shiftcal"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot start shiftcal: {e}"))?;
    let code = out.status.code().unwrap_or(-1);
    Ok((code, start.elapsed(), String::from_utf8_lossy(&out.stderr).into_owned()))
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Rows of a CSV with a header line, as string fields.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn num(field: &str) -> Result<f64, String> {
    field.parse().map_err(|_| format!("not a number: {field}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn grid_domain() -> Scenario {
    Scenario::builtin("grid-K3").expect("built-in scenario")
}

fn bound_suite() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let (code, elapsed, stderr) = shiftcal(&["verify-bound", "--scenario", "grid-K3", "--trials", "100", "--out", out])?;
    ensure(code == 0, || format!("exit code {code}: {stderr}"))?;
    ensure(elapsed <= Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    let table = rows(&read(&dir.path().join("bound.csv"))?);
    let trials: Vec<&Vec<String>> = table.iter().filter(|r| r[0].parse::<u64>().is_ok()).collect();
    ensure(trials.len() == 100, || format!("{} random instances reported", trials.len()))?;
    let mut min_slack = f64::INFINITY;
    for r in &trials {
        min_slack = min_slack.min(num(&r[3])?);
    }
    ensure(min_slack >= -1e-9, || format!("min slack {min_slack:e}"))?;
    let tight = table.iter().find(|r| r[0] == "tight").ok_or("no tight instance row")?;
    let tight_slack = num(&tight[3])?;
    ensure(tight_slack.abs() <= 1e-12, || format!("tight slack {tight_slack:e}"))?;

    let (code, _, _) = shiftcal(&["verify-bound", "--trials", "5", "--debug-lambda", "1", "--out", out])?;
    ensure(code == 2, || format!("unit multiplier exited with {code}, expected 2"))?;
    Ok(format!(
        "100 instances, min slack {min_slack:.3}, tight slack {tight_slack:.1e}, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn inequality_chain() -> Outcome {
    let scenario = grid_domain();
    let domain = scenario.require_domain().map_err(|e| e.to_string())?;
    let u = domain.max_weight();
    let mut worst_identity: f64 = 0.0;
    for trial in 0..100u64 {
        let inst = random_instance(domain, u, seed::derive(0, trial)).map_err(|e| e.to_string())?;
        let chain = bound_chain(domain, &inst.forecasts, &inst.g_hat, u).map_err(|e| e.to_string())?;
        let links = chain.links();
        let identity = (links[0].lesser - links[0].greater).abs();
        ensure(identity <= 1e-12, || format!("trial {trial}: importance identity off by {identity:e}"))?;
        worst_identity = worst_identity.max(identity);
        let broken = chain.violations();
        ensure(broken.is_empty(), || format!("trial {trial}: broken links {broken:?}"))?;
    }
    Ok(format!("100 instances, identity error ≤ {worst_identity:.1e}, every link ordered"))
}

fn brier_decomposition_check() -> Outcome {
    let scenario = grid_domain();
    let domain = scenario.require_domain().map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let mut rng = seed::rng(seed::derive(3, trial));
        let scale = rng.random_range(0.1..4.0);
        let forecasts: Vec<Vec<f64>> = (0..domain.len())
            .map(|_| {
                let z: Vec<f64> = (0..3).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
                softmax(&z).unwrap()
            })
            .collect();
        for measure in [Measure::Source, Measure::Target] {
            let parts = brier_decomposition(domain, &forecasts, measure).map_err(|e| e.to_string())?;
            worst = worst.max(parts.residual().abs());
        }
    }
    ensure(worst <= 1e-10, || format!("residual {worst:e}"))?;

    for measure in [Measure::Source, Measure::Target] {
        let constant = vec![domain.base_rate(measure); domain.len()];
        let parts = brier_decomposition(domain, &constant, measure).map_err(|e| e.to_string())?;
        ensure(parts.calibration_error == 0.0, || {
            format!("{measure:?} base-rate calibration error {:e}", parts.calibration_error)
        })?;
    }
    Ok(format!("50 forecasters, residual ≤ {worst:.1e}, base rate exactly calibrated"))
}

fn ece_oracle() -> Outcome {
    let report = ece(&[0.4, 0.6, 0.8, 0.9], &[false, true, true, false], 2).map_err(|e| e.to_string())?;
    ensure(report.ece == 0.175 && report.overconfident_ece == 0.175, || {
        format!("four-point example gave {} and {}", report.ece, report.overconfident_ece)
    })?;
    let mut rng = seed::rng(44);
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let bins = rng.random_range(1..20);
        let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let correct: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let r = ece(&conf, &correct, bins).map_err(|e| e.to_string())?;
        ensure(0.0 <= r.overconfident_ece && r.overconfident_ece <= r.ece && r.ece <= 1.0, || {
            format!("case {case}: ece {} over {}", r.ece, r.overconfident_ece)
        })?;
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.rotate_left(n / 3);
        let pc: Vec<f64> = order.iter().map(|&i| conf[i]).collect();
        let pk: Vec<bool> = order.iter().map(|&i| correct[i]).collect();
        let p = ece_with_edges(&pc, &pk, &r.edges).map_err(|e| e.to_string())?;
        ensure(
            (p.ece - r.ece).abs() <= 1e-12 && (p.overconfident_ece - r.overconfident_ece).abs() <= 1e-12,
            || format!("case {case}: permutation changed ece {} to {}", r.ece, p.ece),
        )?;
    }
    Ok("four-point example exact, 1000 fuzz cases ordered and permutation invariant".into())
}

fn gradient_instance(kind: LossKind, instance: u64) -> (DenseNet, TrainData) {
    let mut rng = seed::rng(seed::derive(5, instance));
    let input = rng.random_range(1..=4);
    let hidden = rng.random_range(2..=5);
    let outputs = match kind {
        LossKind::SigmoidSquared => 1,
        _ => rng.random_range(2..=4),
    };
    let act = if instance % 2 == 0 { Activation::Tanh } else { Activation::Identity };
    let mut net = DenseNet::init(&[input, hidden, outputs], &[act, Activation::Identity], &mut rng).unwrap();
    let params: Vec<f64> = net.params().iter().map(|p| p + rng.random_range(-0.3..0.3)).collect();
    net.set_params(&params).unwrap();
    let n = rng.random_range(1..=6);
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..input).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let targets: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut t = vec![0.0; outputs];
            if outputs == 1 {
                t[0] = f64::from(rng.random_range(0..2u8));
            } else {
                t[rng.random_range(0..outputs)] = 1.0;
            }
            t
        })
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    (net, TrainData::new(inputs, targets, weights).unwrap())
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for kind in [LossKind::SoftmaxSquared, LossKind::SigmoidSquared, LossKind::SoftmaxCrossEntropy] {
        for instance in 0..50 {
            let (net, data) = gradient_instance(kind, instance);
            let check = check_gradients(&net, &data, kind, 1e-5).map_err(|e| e.to_string())?;
            ensure(check.max_rel_error <= 1e-4, || {
                format!("{kind:?} instance {instance}: relative error {:e}", check.max_rel_error)
            })?;
            worst = worst.max(check.max_rel_error);
        }
    }
    Ok(format!("3 loss kinds × 50 instances, worst relative error {worst:.1e}"))
}

fn weight_round_trip() -> Outcome {
    for w in [0.0, 1e-6, 1.0, 10.0, 1e6] {
        let back = weight_from_g(1.0 / (1.0 + w)).map_err(|e| e.to_string())?;
        ensure((back - w).abs() <= 1e-12 * w.max(1.0), || format!("w = {w} came back as {back}"))?;
    }
    let mut rng = seed::rng(66);
    for _ in 0..100_000 {
        let u = rng.random_range(0.5..1e4);
        let raw = sigmoid(rng.random_range(-40.0..40.0) * rng.random_range(0.01..10.0));
        let w = weight_from_g(clamp_g(raw, u)).map_err(|e| e.to_string())?;
        ensure((0.0..=u * (1.0 + 1e-12)).contains(&w), || format!("weight {w} outside [0, {u}]"))?;
    }
    Ok("round trip exact on 5 weights, 100000 clamped weights in range".into())
}

fn grid_search(loss: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::INFINITY, 1.0);
    for i in 10..=5000 {
        let t = i as f64 * 1e-3;
        let l = loss(t);
        if l < best.0 {
            best = (l, t);
        }
    }
    best.1
}

fn temperature_optimality() -> Outcome {
    let mut worst: f64 = 0.0;
    for batch_index in 0..10u64 {
        let mut rng = seed::rng(seed::derive(7, batch_index));
        let scale = rng.random_range(0.4..3.0);
        let n = 400;
        let mut logits = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = softmax(&z).unwrap();
            let u: f64 = rng.random();
            labels.push(if u < p[0] { 0 } else if u < p[0] + p[1] { 1 } else { 2 });
            logits.push(z.iter().map(|v| v * scale).collect::<Vec<f64>>());
        }
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let batch = CalibrationBatch::new(logits.clone(), labels, weights).map_err(|e| e.to_string())?;
        for mode in [CalibrationMode::Full, CalibrationMode::Recalibration] {
            let fit = fit_temperature(&batch, &default_temperature_config(batch_index), mode).map_err(|e| e.to_string())?;
            let oracle = grid_search(|t| weighted_brier(&batch, t, mode).unwrap());
            let gap = (fit.scale - oracle).abs();
            ensure(gap <= 0.01, || format!("batch {batch_index} {mode:?}: fitted {} vs grid {oracle}", fit.scale))?;
            worst = worst.max(gap);
            for z in &logits {
                let scaled: Vec<f64> = z.iter().map(|v| v * fit.scale).collect();
                ensure(argmax(&softmax(&scaled).unwrap()) == argmax(z), || "temperature moved an argmax".into())?;
            }
        }

        // Discriminator temperature: a linear head whose optimal scale is 1/slope.
        let slope = rng.random_range(0.4..2.5);
        let mut layer = Layer::zeros(1, 1, Activation::Identity);
        layer.weights[0] = slope;
        let head = DenseNet::new(vec![layer]).map_err(|e| e.to_string())?;
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let s: Vec<f64> = inputs.iter().map(|x| f64::from(rng.random_bool(sigmoid(x[0])))).collect();
        let set = DiscriminationSet { inputs, s };
        let fit = calibrate_discriminator(&head, &set, &default_temperature_config(batch_index)).map_err(|e| e.to_string())?;
        let oracle = grid_search(|t| tempered_loss(&head, &set, t).unwrap());
        let gap = (fit.scale - oracle).abs();
        ensure(gap <= 0.01, || format!("batch {batch_index} discriminator: fitted {} vs grid {oracle}", fit.scale))?;
        worst = worst.max(gap);
    }
    Ok(format!("10 batches, both temperatures within {worst:.1e} of the grid, argmax unchanged"))
}

fn write_config(path: &Path, scenario: &str, seeds: &[u64], methods: &[&str], sizes: Option<[usize; 4]>) -> Result<(), String> {
    let sizes = sizes.map_or(String::new(), |[a, b, c, d]| {
        format!(
            r#""sizes": {{"source_train": {a}, "source_validation": {b}, "target_unlabeled": {c}, "target_eval": {d}}},"#
        )
    });
    let text = format!(
        r#"{{"scenario": "{scenario}", {sizes} "data_seed": 1, "seeds": {seeds:?}, "methods": {methods:?}}}"#
    );
    std::fs::write(path, text).map_err(|e| e.to_string())
}

/// Median target ECE per method from `results.csv`.
fn medians(results: &str) -> Result<Vec<(String, f64)>, String> {
    let mut by_method: Vec<(String, Vec<f64>)> = Vec::new();
    for r in rows(results) {
        let e = num(&r[2])?;
        match by_method.iter_mut().find(|(m, _)| *m == r[0]) {
            Some((_, v)) => v.push(e),
            None => by_method.push((r[0].clone(), vec![e])),
        }
    }
    Ok(by_method.into_iter().map(|(m, v)| (m, median(v))).collect())
}

fn lookup(medians: &[(String, f64)], method: &str) -> Result<f64, String> {
    medians.iter().find(|(m, _)| m == method).map(|(_, v)| *v).ok_or(format!("no rows for {method}"))
}

fn run_scenario(dir: &Path, scenario: &str, methods: &[&str]) -> Result<Vec<(String, f64)>, String> {
    let config = dir.join(format!("{scenario}.json"));
    let out = dir.join(scenario);
    let seeds: Vec<u64> = (0..10).collect();
    write_config(&config, scenario, &seeds, methods, None)?;
    let (code, _, stderr) = shiftcal(&["run", "-c", config.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    ensure(code == 0, || format!("{scenario}: exit code {code}: {stderr}"))?;
    let results = read(&out.join("results.csv"))?;
    ensure(rows(&results).len() == 10 * methods.len(), || format!("{scenario}: wrong row count"))?;
    medians(&results)
}

fn directional_analog() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let shift = run_scenario(dir.path(), "box-shift", &["Temp", "IW+Temp", "FL+Temp", "FL+IW+Temp"])?;
    let same = run_scenario(dir.path(), "box-same", &["Temp", "FL+IW+Temp"])?;
    let elapsed = start.elapsed();
    let temp = lookup(&shift, "Temp")?;
    let iw = lookup(&shift, "IW+Temp")?;
    let fl_iw = lookup(&shift, "FL+IW+Temp")?;
    let same_temp = lookup(&same, "Temp")?;
    let same_fl_iw = lookup(&same, "FL+IW+Temp")?;
    let summary = format!(
        "box-shift medians Temp {temp:.4}, IW+Temp {iw:.4}, FL+IW+Temp {fl_iw:.4}; box-same Temp {same_temp:.4}, FL+IW+Temp {same_fl_iw:.4}; {:.0} s",
        elapsed.as_secs_f64()
    );
    ensure(iw <= temp, || format!("IW+Temp above Temp: {summary}"))?;
    ensure(fl_iw <= temp, || format!("FL+IW+Temp above Temp: {summary}"))?;
    ensure(same_fl_iw - same_temp <= 0.02, || format!("unshifted gap too large: {summary}"))?;
    ensure(elapsed <= Duration::from_secs(300), || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn iw_variance_report() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("iw.json");
    let out = dir.path().join("iw");
    let seeds: Vec<u64> = (0..10).collect();
    write_config(&config, "box-shift", &seeds, &["IW+Temp"], None)?;
    let (code, _, stderr) = shiftcal(&["iw-report", "-c", config.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    ensure(code == 0, || format!("exit code {code}: {stderr}"))?;
    let ranked = rows(&read(&out.join("iw_report.csv"))?);
    ensure(ranked.len() == 15, || format!("{} ranked examples", ranked.len()))?;
    let mut widest: f64 = 0.0;
    for r in &ranked {
        let (median, min, max) = (num(&r[3])?, num(&r[4])?, num(&r[5])?);
        ensure(min <= median && median <= max, || format!("rank {}: median outside range", r[0]))?;
        widest = widest.max(max - min);
    }
    ensure(widest > 0.0, || "distinct seeds produced no spread".into())?;

    let same = dir.path().join("same.json");
    let same_out = dir.path().join("same");
    write_config(&same, "box-shift", &[4, 4, 4], &["IW+Temp"], Some([600, 400, 600, 800]))?;
    let (code, _, stderr) = shiftcal(&["iw-report", "-c", same.to_str().unwrap(), "--out", same_out.to_str().unwrap()])?;
    ensure(code == 0, || format!("identical seeds: exit code {code}: {stderr}"))?;
    for r in rows(&read(&same_out.join("iw_report.csv"))?) {
        let (min, max) = (num(&r[4])?, num(&r[5])?);
        ensure(min == max, || format!("identical seeds: rank {} spread {}", r[0], max - min))?;
    }
    Ok(format!("15 ranked examples, widest spread {widest:.3}, zero spread for identical seeds"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("det.json");
    write_config(
        &config,
        "box-shift",
        &[0, 1],
        &["Temp", "IW+Temp", "FL+Temp", "FL+IW+Temp"],
        Some([600, 400, 600, 800]),
    )?;
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let (code, _, stderr) = shiftcal(&["run", "-c", config.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
        ensure(code == 0, || format!("{name} run: exit code {code}: {stderr}"))?;
        outputs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || "results.csv differs between runs".into())?;
    Ok(format!("two runs, {} identical bytes", outputs[0].len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("bound suite", bound_suite),
        ("inequality chain", inequality_chain),
        ("Brier decomposition", brier_decomposition_check),
        ("ECE oracle", ece_oracle),
        ("gradient correctness", gradient_correctness),
        ("discriminator weight round trip", weight_round_trip),
        ("temperature optimality", temperature_optimality),
        ("directional shift analog", directional_analog),
        ("weight variance report", iw_variance_report),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
