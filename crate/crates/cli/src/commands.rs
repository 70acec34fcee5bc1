use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use sigdistill_core::{
    cross_arch_matrix, dm_distill, evaluate, generate_dataset, load_sigds, mdm_distill, save_sigds,
    split_train_test, take_per_class, EvalConfig, EvalResult, LabeledSignalSet, LossReport,
};

use crate::manifest::{ExperimentManifest, Method};
use crate::plot::{self, Group};

/// Fails if any output already exists and `force` is not set.
fn guard(outputs: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    if let Some(existing) = outputs.iter().find(|p| p.exists()) {
        bail!(
            "refusing to overwrite existing output {} (pass --force to replace it)",
            existing.display()
        );
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_required(path: &Path, hint: &str) -> Result<LabeledSignalSet> {
    if !path.exists() {
        bail!("expected dataset {} does not exist; {hint}", path.display());
    }
    Ok(load_sigds(path)?)
}

fn manifest_copy(m: &ExperimentManifest, tag: &str) -> PathBuf {
    m.out_dir.join(format!("manifest.{tag}.toml"))
}

pub fn gen(m: &ExperimentManifest, force: bool) -> Result<()> {
    let copy = manifest_copy(m, "gen");
    guard(&[m.train_path(), m.test_path(), copy.clone()], force)?;
    ensure_dir(&m.out_dir)?;
    let full = generate_dataset(&m.gen)?;
    let (train, test) = split_train_test(&full, m.test_fraction, m.split_seed)?;
    save_sigds(&train, m.train_path())?;
    save_sigds(&test, m.test_path())?;
    write_file(&copy, &m.to_toml()?)?;
    println!(
        "generated {} classes: {} train records ({:?} per class), {} test records -> {}",
        full.num_classes(),
        train.len(),
        train.class_counts(),
        test.len(),
        m.out_dir.display()
    );
    Ok(())
}

fn loss_csv(reports: &[LossReport]) -> String {
    let mut out = String::from(LossReport::csv_header());
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn distill(m: &ExperimentManifest, force: bool) -> Result<()> {
    let method = m.method;
    let synth_path = m.synth_path(method);
    let loss_path = m.loss_path(method);
    let copy = manifest_copy(m, &format!("distill_{method}_{}", m.distill.spc));
    guard(&[synth_path.clone(), loss_path.clone(), copy.clone()], force)?;
    let train = load_required(&m.train_path(), "run `sigdistill gen` first")?;
    let progress = |r: &LossReport| {
        info!(
            "iter {:>6}  l_td {:.6e}  l_fd {:.6e}  l_total {:.6e}",
            r.iteration, r.l_td, r.l_fd, r.l_total
        )
    };
    let (synth, reports) = match method {
        Method::Random => (take_per_class(&train, m.distill.spc, m.distill.seed)?, Vec::new()),
        Method::Dm => dm_distill(&train, &m.distill, progress)?,
        Method::Mdm => mdm_distill(&train, &m.distill, progress)?,
    };
    save_sigds(&synth, &synth_path)?;
    write_file(&loss_path, &loss_csv(&reports))?;
    write_file(&copy, &m.to_toml()?)?;
    println!(
        "{method}: {} synthetic records ({} per class) -> {}",
        synth.len(),
        synth.spc(),
        synth_path.display()
    );
    Ok(())
}

fn result_row(name: &str, r: &EvalResult) -> String {
    let mut row = format!("{name},{:.4},{:.4}", r.mean_accuracy, r.std_accuracy);
    for acc in &r.per_run {
        let _ = write!(row, ",{acc:.4}");
    }
    row
}

fn result_header(first: &str, runs: usize) -> String {
    let mut h = format!("{first},mean_accuracy,std_accuracy");
    for k in 1..=runs {
        let _ = write!(h, ",run_{k}");
    }
    h
}

fn print_table(title: &str, rows: &[(String, &EvalResult)]) {
    println!("{title}");
    for (name, r) in rows {
        println!("  {name:<16} {:6.2} ± {:.2}", r.mean_accuracy, r.std_accuracy);
    }
}

pub fn eval(m: &ExperimentManifest, force: bool) -> Result<()> {
    let csv_path = m.out_dir.join(format!("eval_{}_{}.csv", m.eval.arch, m.distill.spc));
    let copy = manifest_copy(m, &format!("eval_{}_{}", m.eval.arch, m.distill.spc));
    guard(&[csv_path.clone(), copy.clone()], force)?;
    let test = load_required(&m.test_path(), "run `sigdistill gen` first")?;
    let mut sets = Vec::new();
    for &method in &m.compare {
        let path = m.synth_path(method);
        let hint = format!("run `sigdistill distill --method {method}` first");
        sets.push((method, load_required(&path, &hint)?));
    }
    let mut results = Vec::new();
    for (method, set) in &sets {
        info!("evaluating {method} on {}", m.eval.arch);
        results.push((method.to_string(), evaluate(set, &test, &m.eval)?));
    }
    let mut csv = result_header("method", m.eval.n_runs);
    csv.push('\n');
    for (name, r) in &results {
        csv.push_str(&result_row(name, r));
        csv.push('\n');
    }
    write_file(&csv_path, &csv)?;
    write_file(&copy, &m.to_toml()?)?;
    let rows: Vec<(String, &EvalResult)> = results.iter().map(|(n, r)| (n.clone(), r)).collect();
    print_table(
        &format!(
            "test accuracy (%), {} x{} runs, spc {}:",
            m.eval.arch, m.eval.n_runs, m.distill.spc
        ),
        &rows,
    );
    Ok(())
}

pub fn crossarch(m: &ExperimentManifest, force: bool) -> Result<()> {
    let block = &m.crossarch;
    let spc = m.distill.spc;
    let mut outputs: Vec<PathBuf> = block
        .distill_archs
        .iter()
        .flat_map(|c| {
            [
                m.out_dir.join(format!("crossarch_{c}.csv")),
                m.out_dir.join(format!("synth_crossarch_{c}_{spc}.sigds")),
            ]
        })
        .collect();
    if block.include_random {
        outputs.push(m.out_dir.join("crossarch_random.csv"));
    }
    let copy = manifest_copy(m, "crossarch");
    outputs.push(copy.clone());
    guard(&outputs, force)?;
    let train = load_required(&m.train_path(), "run `sigdistill gen` first")?;
    let test = load_required(&m.test_path(), "run `sigdistill gen` first")?;

    let matrix = cross_arch_matrix(
        &train,
        &test,
        &block.distill_archs,
        &block.eval_archs,
        &m.distill,
        &m.eval,
    )?;
    for (c, (row, synth)) in matrix.distill_archs.iter().zip(matrix.cells.iter().zip(&matrix.synthetic)) {
        save_sigds(synth, m.out_dir.join(format!("synth_crossarch_{c}_{spc}.sigds")))?;
        let mut csv = result_header("target", m.eval.n_runs);
        csv.push('\n');
        for (t, r) in matrix.eval_archs.iter().zip(row) {
            csv.push_str(&result_row(t, r));
            csv.push('\n');
        }
        write_file(&m.out_dir.join(format!("crossarch_{c}.csv")), &csv)?;
        let rows: Vec<(String, &EvalResult)> = matrix.eval_archs.iter().cloned().zip(row).collect();
        print_table(&format!("distilled with {c} (spc {spc}):"), &rows);
    }
    if block.include_random {
        let random = take_per_class(&train, spc, m.distill.seed)?;
        let mut csv = result_header("target", m.eval.n_runs);
        csv.push('\n');
        let mut results = Vec::new();
        for t in &block.eval_archs {
            let cfg = EvalConfig {
                arch: t.clone(),
                ..m.eval.clone()
            };
            let r = evaluate(&random, &test, &cfg)?;
            csv.push_str(&result_row(t, &r));
            csv.push('\n');
            results.push((t.clone(), r));
        }
        write_file(&m.out_dir.join("crossarch_random.csv"), &csv)?;
        let rows: Vec<(String, &EvalResult)> = results.iter().map(|(n, r)| (n.clone(), r)).collect();
        print_table(&format!("random selection (spc {spc}):"), &rows);
    }
    write_file(&copy, &m.to_toml()?)?;
    Ok(())
}

pub struct PlotArgs {
    pub dataset: PathBuf,
    pub class: String,
    pub output: PathBuf,
    pub compare: Option<PathBuf>,
    pub records: usize,
}

pub fn plot(args: &PlotArgs, force: bool) -> Result<()> {
    guard(std::slice::from_ref(&args.output), force)?;
    let set = load_required(&args.dataset, "check the dataset path")?;
    let mut groups = vec![Group {
        label: "real",
        records: plot::select(&set, &args.class, args.records)?,
    }];
    let other;
    if let Some(path) = &args.compare {
        other = load_required(path, "check the --compare path")?;
        groups[0].label = "train";
        groups.push(Group {
            label: "synthetic",
            records: plot::select(&other, &args.class, args.records)?,
        });
    }
    let title = format!("{}: time and frequency domain", args.class);
    write_file(&args.output, &plot::render(&title, &groups)?)?;
    println!("wrote {}", args.output.display());
    Ok(())
}
