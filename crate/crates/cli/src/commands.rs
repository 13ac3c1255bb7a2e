use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use bitshield::campaign::{self, CampaignConfig, ScanMode};
use bitshield::container::{load_image, load_model, save_image, save_model, ModelMetadata, StoredModel};
use bitshield::evalharness::{accuracy, gen_dataset, train_model_with, EvalSet, TinyModel, TrainConfig};
use bitshield::oracle;
use bitshield::schemes::{overhead_report, pack_image};
use bitshield::{FloatLayout, SchemeConfig, SchemeKind, StorageFloat};
use half::f16;

use crate::error::{CliError, CliResult};
use crate::results::{read_rows, rows_from, write_rows, ResultsRow};
use crate::{svg, Dtype, Mode, ModelArgs, SchemeArgs};

fn layout_of(d: Dtype) -> FloatLayout {
    match d {
        Dtype::Fp16 => FloatLayout::FP16,
        Dtype::Fp32 => FloatLayout::FP32,
    }
}

/// An explicit seed, or a fresh one that is announced so the run can be repeated.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s} (pass --seed {s} to reproduce)");
        s
    })
}

fn parse_scheme(name: &str, line_width: u32, chunk_size: u32, layout: FloatLayout) -> CliResult<SchemeConfig> {
    let kind: SchemeKind = name
        .parse()
        .map_err(|e: bitshield::Error| CliError::usage(e.to_string()))?;
    let scheme = SchemeConfig::new(kind, line_width).with_chunk_size(chunk_size);
    scheme.validate(layout)?;
    Ok(scheme)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(e.to_string()).context(path.display()))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

struct Loaded {
    model: StoredModel,
    eval: EvalSet,
}

fn load(args: &ModelArgs) -> CliResult<Loaded> {
    let (model, manifest) = load_model(&args.model).map_err(|e| CliError::from(e).context(args.model.display()))?;
    let seed = args.dataset_seed.or(manifest.metadata.dataset_seed).ok_or_else(|| {
        CliError::precondition(format!(
            "{}: no dataset seed recorded in the model, pass --dataset-seed",
            args.model.display()
        ))
    })?;
    Ok(Loaded {
        model,
        eval: gen_dataset(seed).eval,
    })
}

pub fn gen_model(seed: Option<u64>, out: &Path, hidden: Vec<usize>, epochs: usize) -> CliResult<()> {
    if hidden.contains(&0) || epochs == 0 {
        return Err(CliError::usage("hidden widths and epochs must be positive"));
    }
    // Fail on an unwritable destination before spending time on training.
    drop(create(out)?);
    let seed = resolve_seed(seed);
    let data = gen_dataset(seed);
    let cfg = TrainConfig {
        hidden: hidden.clone(),
        epochs,
        ..TrainConfig::default()
    };
    let trained = train_model_with(&data.train, seed, &cfg)?;
    let acc32 = accuracy(&trained.model, &data.eval)?;
    let acc16 = accuracy(&trained.model.cast::<f16>(), &data.eval)?;
    let mut meta = ModelMetadata {
        dataset_seed: Some(seed),
        train_seed: Some(seed),
        hidden,
        clean_accuracy: Some(acc32),
        ..ModelMetadata::default()
    };
    meta.extra.insert("epochs".into(), epochs.into());
    meta.extra
        .insert("learning_rate".into(), f64::from(trained.learning_rate).into());
    save_model(out, &trained.model, &meta).map_err(|e| CliError::from(e).context(out.display()))?;
    println!(
        "wrote {} ({} parameters)",
        out.display(),
        trained.model.parameter_count()
    );
    println!("clean accuracy: {acc32:.4} (fp32), {acc16:.4} (fp16)");
    Ok(())
}

pub fn encode(model: &Path, args: &SchemeArgs, out: &Path) -> CliResult<()> {
    let layout = layout_of(args.dtype);
    let scheme = parse_scheme(&args.scheme, args.line_width, args.chunk_size, layout)?;
    let (stored, _) = load_model(model).map_err(|e| CliError::from(e).context(model.display()))?;
    let image = match args.dtype {
        Dtype::Fp16 => pack_image(&stored.to_fp16().tensors(), &scheme)?,
        Dtype::Fp32 => pack_image(&stored.to_fp32().tensors(), &scheme)?,
    };
    save_image(out, &image).map_err(|e| CliError::from(e).context(out.display()))?;
    println!("wrote {} ({} lines)", out.display(), image.lines.len());
    println!("{}", overhead_report(&scheme, image.word_count() as u64, layout));
    Ok(())
}

pub struct CampaignArgs {
    pub model: ModelArgs,
    pub schemes: String,
    pub line_width: u32,
    pub chunk_size: u32,
    pub dtype: Dtype,
    pub image: Option<PathBuf>,
    pub bers: Vec<f64>,
    pub seed: Option<u64>,
    pub min_iterations: usize,
    pub max_iterations: usize,
    pub out: Option<PathBuf>,
}

fn sweep<T: StorageFloat>(
    model: &TinyModel<T>,
    eval: &EvalSet,
    config: &CampaignConfig,
    image: Option<&bitshield::schemes::MemoryImage>,
) -> CliResult<Vec<ResultsRow>> {
    let packed;
    let image = match image {
        Some(i) => i,
        None => {
            packed = pack_image(&model.tensors(), &config.scheme)?;
            &packed
        }
    };
    let result = campaign::run_campaign(config, model, eval, image)?;
    Ok(rows_from(&result))
}

pub fn campaign(args: CampaignArgs) -> CliResult<()> {
    let loaded = load(&args.model)?;
    let image = match &args.image {
        Some(p) => Some(load_image(p).map_err(|e| CliError::from(e).context(p.display()))?),
        None => None,
    };
    let layout = image.as_ref().map_or(layout_of(args.dtype), |i| i.layout);
    let schemes: Vec<SchemeConfig> = match &image {
        Some(i) => vec![i.scheme],
        None => args
            .schemes
            .split(',')
            .map(|s| parse_scheme(s, args.line_width, args.chunk_size, layout))
            .collect::<CliResult<_>>()?,
    };
    let seed = resolve_seed(args.seed);
    let mut rows = Vec::new();
    for scheme in schemes {
        let mut config = CampaignConfig::new(scheme, args.bers.clone(), seed);
        config.min_iterations = args.min_iterations;
        config.max_iterations = args.max_iterations;
        config.validate()?;
        let mut part = match layout.total_bits() {
            16 => sweep(&loaded.model.to_fp16(), &loaded.eval, &config, image.as_ref())?,
            _ => sweep(&loaded.model.to_fp32(), &loaded.eval, &config, image.as_ref())?,
        };
        for r in &part {
            eprintln!(
                "{}/{} ber={:.3e} accuracy={:.4} std={:.4} iterations={}",
                r.scheme, r.line_width, r.ber, r.mean_accuracy, r.std, r.iterations
            );
        }
        rows.append(&mut part);
    }
    write_rows(output(args.out.as_deref())?, &rows)
}

#[allow(clippy::too_many_arguments)]
pub fn bitscan(
    model: &ModelArgs,
    dtype: Dtype,
    bit: Option<u32>,
    all_bits: bool,
    reps: usize,
    mode: Mode,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<()> {
    let loaded = load(model)?;
    let n = layout_of(dtype).total_bits();
    let bits: Vec<u32> = if all_bits {
        (0..n).collect()
    } else {
        bit.into_iter().collect()
    };
    let modes: &[ScanMode] = match mode {
        Mode::Unprotected => &[ScanMode::Unprotected],
        Mode::Mset => &[ScanMode::Mset],
        Mode::Both => &[ScanMode::Unprotected, ScanMode::Mset],
    };
    let seed = resolve_seed(seed);
    let mut results = Vec::new();
    for &m in modes {
        results.extend(match dtype {
            Dtype::Fp16 => campaign::bitscan(&loaded.model.to_fp16(), &loaded.eval, &bits, reps, seed, m)?,
            Dtype::Fp32 => campaign::bitscan(&loaded.model.to_fp32(), &loaded.eval, &bits, reps, seed, m)?,
        });
    }

    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record([
        "bit",
        "mode",
        "dtype",
        "clean_accuracy",
        "reps",
        "mean",
        "std",
        "min",
        "p10",
        "median",
        "p90",
        "max",
        "below_clean_minus_5pt",
        "within_0p5pt",
    ])?;
    for r in &results {
        let mut s = r.samples.clone();
        s.sort_by(f64::total_cmp);
        let q = |f: f64| s[((s.len() - 1) as f64 * f).round() as usize];
        let mean = r.mean();
        let std = if s.len() > 1 {
            (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mode = match r.mode {
            ScanMode::Unprotected => "unprotected",
            ScanMode::Mset => "mset",
        };
        w.write_record([
            r.bit_index.to_string(),
            mode.to_string(),
            layout_of(dtype).to_string(),
            r.clean_accuracy.to_string(),
            s.len().to_string(),
            mean.to_string(),
            std.to_string(),
            q(0.0).to_string(),
            q(0.1).to_string(),
            q(0.5).to_string(),
            q(0.9).to_string(),
            q(1.0).to_string(),
            r.fraction_below(0.05).to_string(),
            r.fraction_within(0.005).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn chunk_explore(
    model: &ModelArgs,
    dtype: Dtype,
    ber: f64,
    line_width: u32,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<()> {
    let loaded = load(model)?;
    let layout = layout_of(dtype);
    let base_scheme = parse_scheme("cep", line_width, bitshield::schemes::DEFAULT_CHUNK_SIZE, layout)?;
    let base = CampaignConfig::new(base_scheme, vec![ber], resolve_seed(seed));
    base.validate()?;
    let report = match dtype {
        Dtype::Fp16 => campaign::chunk_explore(&base, &loaded.model.to_fp16(), &loaded.eval)?,
        Dtype::Fp32 => campaign::chunk_explore(&base, &loaded.model.to_fp32(), &loaded.eval)?,
    };
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record([
        "chunk_size",
        "dtype",
        "line_width",
        "ber",
        "clean_accuracy",
        "mean_accuracy",
        "std",
        "iterations",
        "mean_flips",
        "due",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.chunk_size.to_string(),
            layout.to_string(),
            line_width.to_string(),
            ber.to_string(),
            r.clean_accuracy.to_string(),
            r.result.mean_accuracy.to_string(),
            r.result.sample_std.to_string(),
            r.result.iterations_run.to_string(),
            r.result.mean_flips.to_string(),
            r.result.due_count.to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!(
        "best chunk size c={}; monotone: {}; default within noise: {}; flagged: {}",
        report.best_chunk, report.monotone, report.default_within_noise, report.flagged
    );
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

pub fn verify(args: &SchemeArgs, lines: usize, seed: Option<u64>) -> CliResult<()> {
    let layout = layout_of(args.dtype);
    let scheme = parse_scheme(&args.scheme, args.line_width, args.chunk_size, layout)?;
    if lines == 0 {
        return Err(CliError::usage("--lines must be positive"));
    }
    let report = oracle::verify(&scheme, layout, lines, resolve_seed(seed))?;
    println!(
        "verify {} {} over {} random lines",
        scheme.label(),
        layout,
        report.lines_tested
    );
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.passed() {
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::precondition(format!(
            "{failed} of {} oracle checks failed",
            report.checks.len()
        )))
    }
}

pub fn report(input: &Path, svg_path: &Path, title: &str) -> CliResult<()> {
    let file = File::open(input).map_err(|e| CliError::io(e.to_string()).context(input.display()))?;
    let rows = read_rows(file).map_err(|e| e.context(input.display()))?;
    let mut w = create(svg_path)?;
    w.write_all(svg::render(&rows, title).as_bytes())?;
    w.flush()?;
    let mut series: Vec<(&str, u32, &str)> = rows
        .iter()
        .map(|r| (r.scheme.as_str(), r.line_width, r.dtype.as_str()))
        .collect();
    series.sort_unstable();
    series.dedup();
    println!(
        "wrote {} ({} series, {} points)",
        svg_path.display(),
        series.len(),
        rows.len()
    );
    Ok(())
}
