use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::json;

use gmcs::compose::{parallel_build, CoresetTree, ParallelMode, TreeParams};
use gmcs::coreset::{build_coreset_with_report, theorem2_size_bound, Coreset};
use gmcs::dataset::{
    generate_gmm_sample, load_points, preset, save_points, save_weighted, PointStream,
};
use gmcs::eval::{rows_to_csv, rows_to_table, run_eval, EvalConfig};
use gmcs::gmm::fit_best_of;
use gmcs::{rng, CoresetParams, DataSet, EmConfig, GmmParams, PointSet};

use crate::args::{
    BuildArgs, BuildMode, Common, EvalArgs, FitArgs, GenArgs, Reduce, StreamDemoArgs,
};
use crate::manifest::{sha256_file, Manifest};
use crate::{CliError, CliResult};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn load_input(common: &Common, path: &Path) -> CliResult<DataSet> {
    let format = common.format_for(path);
    Ok(load_points(path, format.into(), common.weighted)?)
}

fn check_unit_interval(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

pub fn gen(a: &GenArgs, argv: &[String]) -> CliResult<()> {
    a.common.check()?;
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let theta = match (&a.preset, &a.mixture) {
        (Some(p), _) => preset((*p).into(), a.n, a.dim, a.common.lambda)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            GmmParams::from_text(&text)?
        }
        (None, None) => return Err(usage("one of --preset or --mixture is required")),
    };
    let x = generate_gmm_sample(&theta, a.n, a.common.seed)?;
    let format = a.common.format_for(&a.output);
    save_points(&a.output, &x, format.into(), false)?;

    let mut m = Manifest::new("gen", argv, a);
    m.output(&a.output)?;
    m.result("n", x.len());
    m.result("dim", x.dim());
    m.result("mixture", theta.to_text());
    m.write(&a.common, Some(&a.output))?;
    Ok(())
}

fn coreset_params(a: &BuildArgs, m: usize) -> CliResult<CoresetParams> {
    let mut p = CoresetParams::new(a.k, m);
    p.delta = a.delta;
    p.epsilon = a.epsilon;
    p.seeding = a.seeding.into();
    p.validate()?;
    Ok(p)
}

pub fn build(a: &BuildArgs, argv: &[String]) -> CliResult<()> {
    a.common.check()?;
    check_unit_interval("epsilon", a.epsilon)?;
    check_unit_interval("delta", a.delta)?;
    let params = coreset_params(a, a.m)?;
    if a.mode != BuildMode::Stream && (a.checkpoint.is_some() || a.resume.is_some()) {
        return Err(usage("--checkpoint and --resume need --mode stream"));
    }
    let mut manifest = Manifest::new("build", argv, a);
    let start = Instant::now();
    let (coreset, dim) = match a.mode {
        BuildMode::Batch => {
            let x = load_input(&a.common, &a.input)?;
            let (c, report) =
                build_coreset_with_report(&x, &params, &mut rng::from_seed(a.common.seed))?;
            manifest.result("n", x.len());
            manifest.result("phi", report.phi);
            manifest.result("alpha", report.alpha);
            manifest.result("beta", report.beta);
            manifest.result("identity_residual", report.identity_residual);
            manifest.result("distinct", report.distinct);
            (c, x.dim())
        }
        BuildMode::Parallel => {
            let x = load_input(&a.common, &a.input)?;
            let mode = match a.reduce {
                Reduce::Tree => ParallelMode::Tree,
                Reduce::Union => ParallelMode::UnionThenCompress,
            };
            let (c, report) = parallel_build(&x, a.partitions, &params, a.common.seed, mode)?;
            manifest.result("n", x.len());
            manifest.result("partition_sizes", &report.partition_sizes);
            manifest.result("merge_depth", report.depth);
            (c, x.dim())
        }
        BuildMode::Stream => {
            let (c, dim) = build_stream(a, &mut manifest)?;
            (c, dim)
        }
    };
    let build_s = start.elapsed().as_secs_f64();
    if coreset.is_empty() {
        return Err(CliError::Data("the input produced an empty coreset".into()));
    }
    let format = a.common.format_for(&a.output);
    save_weighted(&a.output, &coreset, format.into())?;

    manifest.output(&a.output)?;
    manifest.result("coreset_points", coreset.len());
    manifest.result("source_n", coreset.meta.source_n);
    manifest.result("epsilon_budget", coreset.meta.epsilon_budget);
    manifest.result(
        "theorem2_m_advisory",
        theorem2_size_bound(dim, a.k, a.epsilon, a.delta, a.common.lambda, 1.0).ok(),
    );
    manifest.result("build_s", build_s);
    manifest.write(&a.common, Some(&a.output))?;
    Ok(())
}

fn build_stream(a: &BuildArgs, manifest: &mut Manifest) -> CliResult<(Coreset, usize)> {
    let format = a.common.format_for(&a.input);
    let stream = PointStream::open(&a.input, format.into(), a.common.weighted)?;
    let dim = stream.dim();
    let mut tree = match &a.resume {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            let tree = CoresetTree::load(&mut BufReader::new(file))?;
            if tree.dim() != dim {
                return Err(CliError::Data(format!(
                    "checkpoint has dimension {}, input has {dim}",
                    tree.dim()
                )));
            }
            tree
        }
        None => {
            let mut p = TreeParams::new(a.k, a.m_leaf.unwrap_or(a.m), a.common.seed);
            p.delta = a.delta;
            p.epsilon = a.epsilon;
            p.seeding = a.seeding.into();
            if let Some(n) = a.n_estimate {
                p.n_estimate = n;
            }
            CoresetTree::new(p, dim)?
        }
    };
    for row in stream {
        let (x, w) = row?;
        tree.insert_weighted(&x, w)?;
    }
    if let Some(path) = &a.checkpoint {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        tree.save(&mut w)?;
        w.flush().map_err(|e| io_err(path, e))?;
        manifest.output(path)?;
    }
    let (c, report) = tree.finalize(a.m)?;
    manifest.result("n", tree.n_seen());
    manifest.result("block_size", tree.block_size());
    manifest.result("high_water_points", tree.high_water());
    manifest.result("occupied_levels", tree.occupied_levels());
    manifest.result("eps_prime", tree.eps_prime());
    manifest.result(
        "finalize",
        json!({
            "levels_merged": report.levels_merged,
            "compressed": report.compressed,
            "epsilon": report.epsilon,
        }),
    );
    Ok((c, dim))
}

pub fn fit(a: &FitArgs, argv: &[String]) -> CliResult<()> {
    a.common.check()?;
    if a.restarts == 0 {
        return Err(usage("--restarts must be at least 1"));
    }
    let x = load_input(&a.common, &a.input)?;
    let cfg = EmConfig {
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        ..EmConfig::new(a.k, a.common.lambda)
    };
    let start = Instant::now();
    let best = fit_best_of(&x, &cfg, a.restarts, a.common.seed)?;
    let fit_s = start.elapsed().as_secs_f64();
    fs::write(&a.output, best.theta.to_text()).map_err(|e| io_err(&a.output, e))?;

    let mut m = Manifest::new("fit", argv, a);
    m.output(&a.output)?;
    m.result("points", x.len());
    m.result("total_weight", x.total_weight());
    m.result("restart_nlls", &best.restart_nlls);
    m.result("best_restart", best.best_restart);
    m.result("nll_trace", &best.report.nll_trace);
    m.result("iterations", best.report.iterations);
    m.result("converged", best.report.converged);
    m.result(
        "floor_active_iterations",
        best.report.floor_active.iter().filter(|f| **f).count(),
    );
    m.result(
        "rescue_iterations",
        best.report.rescued.iter().filter(|f| **f).count(),
    );
    m.result("fit_s", fit_s);
    m.write(&a.common, Some(&a.output))?;
    Ok(())
}

pub fn eval(a: &EvalArgs, argv: &[String]) -> CliResult<()> {
    a.common.check()?;
    let x = load_input(&a.common, &a.input)?;
    let cfg = EvalConfig {
        k: a.k,
        lambda: a.common.lambda,
        sizes: a.sizes.clone(),
        trials: a.trials,
        baseline_restarts: a.restarts,
        fit_restarts: a.fit_restarts,
        probe_thetas: a.probe_thetas,
        train_fraction: a.train_fraction,
        delta: a.delta,
        seeding: a.seeding.into(),
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        seed: a.common.seed,
    };
    let out = run_eval(&x, &cfg)?;
    print!("{}", rows_to_table(&out.rows));

    let mut m = Manifest::new("eval", argv, a);
    if let Some(path) = &a.output {
        fs::write(path, rows_to_csv(&out.rows)).map_err(|e| io_err(path, e))?;
        m.output(path)?;
    }
    m.result("n_train", out.n_train);
    m.result("n_holdout", out.n_holdout);
    m.result("baseline_holdout_nll", out.baseline_holdout_nll);
    m.result("baseline_restart_nlls", &out.baseline_restart_nlls);
    let rows: Vec<_> = out
        .rows
        .iter()
        .map(|r| {
            json!({
                "m": r.m,
                "method": r.method.name(),
                "median_eta": r.median_eta,
                "p90_eta": r.p90_eta,
                "probe_max_ratio": r.probe_max_ratio,
                "build_s": r.build_s,
                "fit_s": r.fit_s,
            })
        })
        .collect();
    m.result("rows", rows);
    m.write(&a.common, a.output.as_deref())?;
    Ok(())
}

pub fn stream_demo(a: &StreamDemoArgs, argv: &[String]) -> CliResult<()> {
    a.common.check()?;
    check_unit_interval("epsilon", a.epsilon)?;
    let x = match &a.input {
        Some(path) => load_input(&a.common, path)?,
        None => {
            let theta = preset(a.preset.into(), a.n, None, a.common.lambda)?;
            generate_gmm_sample(&theta, a.n, a.common.seed)?
        }
    };
    let mut p = TreeParams::new(a.k, a.m_leaf, a.common.seed);
    p.epsilon = a.epsilon;
    p.n_estimate = (x.len() as u64).max(2);
    let mut tree = CoresetTree::new(p, x.dim())?;
    let b = tree.block_size();
    let half = x.len() / 2;
    let mut checkpoint = Vec::new();
    let mut blocks = Vec::new();
    println!("block size {b}, leaf size {}, n {}", a.m_leaf, x.len());
    for i in 0..x.len() {
        tree.insert_weighted(x.point(i), x.weight(i))?;
        if i + 1 == half {
            tree.save(&mut checkpoint)?;
        }
        if (i + 1) % b == 0 {
            let levels = tree.occupied_levels();
            println!(
                "block {:>5}: levels {:?}, stored {}, high water {}",
                (i + 1) / b,
                levels,
                tree.stored_points(),
                tree.high_water()
            );
            blocks.push(json!({
                "block": (i + 1) / b,
                "levels": levels,
                "stored": tree.stored_points(),
            }));
        }
    }
    let (c, report) = tree.finalize(a.m)?;

    // replay the second half from the mid-stream checkpoint
    let mut resumed = CoresetTree::load(&mut checkpoint.as_slice())?;
    for i in half..x.len() {
        resumed.insert_weighted(x.point(i), x.weight(i))?;
    }
    let (again, _) = resumed.finalize(a.m)?;
    let resume_identical = again == c;

    let n = x.len() as f64;
    let bound = b + a.m_leaf * ((n / b as f64).log2().ceil().max(0.0) as usize + 1);
    println!(
        "final coreset {} points, ε {:.4}, high water {} (bound {bound}), checkpoint resume identical: {resume_identical}",
        c.len(),
        report.epsilon,
        tree.high_water()
    );

    let mut m = Manifest::new("stream-demo", argv, a);
    if let Some(path) = &a.output {
        let format = a.common.format_for(path);
        save_weighted(path, &c, format.into())?;
        m.output(path)?;
        log::info!("coreset sha256 {}", sha256_file(path)?);
    }
    m.result("n", x.len());
    m.result("block_size", b);
    m.result("blocks", blocks);
    m.result("high_water_points", tree.high_water());
    m.result("high_water_bound", bound);
    m.result("coreset_points", c.len());
    m.result("epsilon", report.epsilon);
    m.result("resume_identical", resume_identical);
    m.write(&a.common, a.output.as_deref())?;
    if !resume_identical {
        return Err(CliError::Numerical(
            "resumed stream diverged from the uninterrupted one".into(),
        ));
    }
    Ok(())
}
