use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use grainkit::analysis::{Analyzer, AnalysisOutput};
use grainkit::bench::bench;
use grainkit::frame::write_y4m;
use grainkit::metrics::MetricReport;
use grainkit::sei::{
    decode_sei, encode_sei, read_sidecar, validate, FgcParams, Interval, IntervalModel, SidecarRecord,
    SidecarWriter, COMPONENT_NAMES,
};
use grainkit::synthesis::{BlendReport, GrainPatternDb, SynthesisConfig, Synthesizer};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, ExitKind};
use crate::video::{self, VideoSink};
use crate::{
    AnalyzeArgs, BenchArgs, Command, ConfigArgs, InspectArgs, MetricsArgs, ReportFormat, RoundtripArgs,
    SynthesizeArgs,
};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze(a) => analyze(a),
        Command::Synthesize(a) => synthesize(a),
        Command::InspectSei(a) => inspect(a),
        Command::Roundtrip(a) => roundtrip(a),
        Command::Metrics(a) => metrics(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

/// Loads the config and sizes the global worker pool.
fn setup(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let cfg = args.load()?;
    if cfg.synthesis.threads > 0 {
        // only fails if already initialised, which is harmless here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.synthesis.threads)
            .build_global();
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    emit(path, &text)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => video::write_file(p, format!("{}\n", text.trim_end()).as_bytes()),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

fn load_db(cfg: &SynthesisConfig, cache: Option<&Path>) -> Result<Arc<GrainPatternDb>, CliError> {
    let db = match cache {
        Some(p) => GrainPatternDb::load_or_build(p, cfg.database_seed).map_err(|e| CliError::from(e).at(p))?,
        None => GrainPatternDb::build(cfg.database_seed),
    };
    Ok(Arc::new(db))
}

fn write_params(path: &Path, params: &[FgcParams]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = SidecarWriter::new(BufWriter::new(file));
    for (i, p) in params.iter().enumerate() {
        let payload = encode_sei(p)?;
        let index = u32::try_from(i).map_err(|_| CliError::validation("more than 2^32 frames"))?;
        w.write_record(index, &payload)?;
    }
    w.finish().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let mut cfg = setup(&a.config)?;
    if let Some(d) = a.denoiser {
        cfg.denoise.method = d;
    }
    if let Some(e) = a.cutoff_estimator {
        cfg.analysis.cutoff_estimator = e;
    }
    if let Some(s) = a.stride {
        cfg.analysis.analysis_stride_frames = s;
    }
    if let Some(m) = a.max_intervals {
        cfg.analysis.max_intervals = m;
    }
    let analyzer = Analyzer::new(cfg.denoise, cfg.analysis)?;
    let input = video::open(&a.input, &a.raw)?;
    let path = input.path.clone();
    let out = analyzer
        .analyze_sequence(input.frames)
        .map_err(|e| CliError::from(e).at(&path))?;
    write_params(&a.output, &out.params)?;
    if let Some(d) = &a.diagnostics {
        write_json(Some(d), &out.epochs)?;
    }
    summarize(&out);
    Ok(())
}

fn summarize(out: &AnalysisOutput) {
    for e in &out.epochs {
        let comps: Vec<String> = e
            .components
            .iter()
            .zip(COMPONENT_NAMES)
            .map(|(c, name)| {
                if c.present {
                    format!("{name} cutoffs {:?}", c.cutoffs)
                } else {
                    format!("{name} off")
                }
            })
            .collect();
        log::info!(
            "epoch at frame {}: log2_scale_factor {}, {}",
            e.frame_index,
            e.log2_scale_factor,
            comps.join(", ")
        );
    }
    eprintln!("analyzed {} frames in {} epochs", out.params.len(), out.epochs.len());
}

fn synthesize(a: SynthesizeArgs) -> Result<(), CliError> {
    let mut cfg = setup(&a.config)?;
    if let Some(s) = a.seed {
        cfg.synthesis.master_seed = s;
    }
    if let Some(d) = a.deblock {
        cfg.synthesis.deblock_enabled = d != "none";
        cfg.synthesis.deblock_filter = d;
    }
    let records = read_sidecar(video::read_file(&a.sidecar)?.as_slice()).map_err(|e| CliError::from(e).at(&a.sidecar))?;
    let db = load_db(&cfg.synthesis, a.db_cache.as_deref())?;
    let synth = Synthesizer::new(db, cfg.synthesis)?;
    let input = video::open(&a.input, &a.raw)?;
    let mut sink = VideoSink::create(&a.output, input.format, input.y4m)?;
    let path = input.path.clone();
    let mut reports: Vec<BlendReport> = Vec::new();
    // frames are read lazily; a read error ends the stream with an error
    let mut read_error = None;
    let frames = input.frames.map_while(|f| match f {
        Ok(f) => Some(f),
        Err(e) => {
            read_error = Some(e);
            None
        }
    });
    for item in synth.synthesize_sequence(frames, records) {
        let (frame, report) = item?;
        sink.write(&frame)?;
        reports.push(report);
    }
    if let Some(e) = read_error {
        return Err(CliError::from(e).at(&path));
    }
    sink.finish()?;
    let grained = reports
        .iter()
        .filter(|r| r.components.iter().any(|c| c.blocks_grained > 0))
        .count();
    eprintln!("synthesized {} frames, {grained} with grain", reports.len());
    if let Some(p) = &a.report {
        write_json(Some(p), &reports)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InspectedRecord {
    frame_index: u32,
    payload_bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<FgcParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn inspect(a: InspectArgs) -> Result<(), CliError> {
    let records = read_sidecar(video::read_file(&a.sidecar)?.as_slice()).map_err(|e| CliError::from(e).at(&a.sidecar))?;
    let mut bad = 0;
    let inspected: Vec<InspectedRecord> = records
        .iter()
        .map(|r| {
            let decoded = decode_sei(&r.payload);
            if decoded.is_err() {
                bad += 1;
            }
            InspectedRecord {
                frame_index: r.frame_index,
                payload_bytes: r.payload.len(),
                error: decoded.as_ref().err().map(ToString::to_string),
                params: decoded.ok(),
            }
        })
        .collect();
    if a.json {
        write_json(None, &inspected)?;
    } else {
        let mut out = String::new();
        for r in &inspected {
            out.push_str(&format!("record frame {} ({} bytes)\n", r.frame_index, r.payload_bytes));
            match (&r.params, &r.error) {
                (Some(p), _) => out.push_str(&p.to_string()),
                (_, Some(e)) => out.push_str(&format!("undecodable: {e}\n")),
                _ => {}
            }
            if !out.ends_with('\n') {
                out.push('\n');
            }
        }
        print!("{out}");
    }
    if bad > 0 {
        return Err(CliError::validation(format!("{bad} of {} records failed to decode", records.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct Injected {
    scaling_factor: i32,
    h_cutoff: i32,
    v_cutoff: i32,
    log2_scale_factor: u8,
}

#[derive(Serialize)]
struct Recovered {
    present: bool,
    log2_scale_factor: u8,
    intervals: Vec<Interval>,
    /// Interval factors weighted by interval width, rescaled to the
    /// injected `log2_scale_factor`.
    scaling_factor: Option<f64>,
    cutoffs: Option<(i32, i32)>,
}

#[derive(Serialize)]
struct RoundtripReport {
    frames: usize,
    injected: Injected,
    recovered: Recovered,
    /// `recovered / injected - 1`; absent when either is zero or absent.
    scaling_factor_relative_error: Option<f64>,
    /// Scaling factor within 25 % and cutoffs within 2.
    within_tolerance: bool,
}

fn roundtrip(a: RoundtripArgs) -> Result<(), CliError> {
    let mut cfg = setup(&a.config)?;
    if let Some(s) = a.seed {
        cfg.synthesis.master_seed = s;
    }
    let injected = FgcParams {
        log2_scale_factor: a.log2_scale_factor,
        components: [
            Some(IntervalModel::new(3, vec![Interval::new(0, 255, a.sf, (a.h_cutoff, a.v_cutoff))])),
            None,
            None,
        ],
        ..FgcParams::default()
    };
    let violations = validate(&injected);
    if !violations.is_empty() {
        let v: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(CliError::usage(format!("injected parameters invalid: {}", v.join("; "))));
    }
    let (format, clean) = video::read_all(&a.input, &a.raw)?;
    let db = load_db(&cfg.synthesis, None)?;
    let synth = Synthesizer::new(db, cfg.synthesis.clone())?;
    let grained = clean
        .iter()
        .enumerate()
        .map(|(i, f)| synth.blend_frame(f, &injected, i as u64).map(|(f, _)| f))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(p) = &a.grained {
        let file = File::create(p).map_err(|e| CliError::io(p, e))?;
        write_y4m(format, &grained, BufWriter::new(file)).map_err(|e| CliError::from(e).at(p))?;
    }
    cfg.analysis.database_seed = cfg.synthesis.database_seed;
    let analyzer = Analyzer::new(cfg.denoise, cfg.analysis)?;
    let out = analyzer.analyze_sequence(grained.into_iter().map(Ok))?;
    let first = out.params.first().cloned().unwrap_or_else(FgcParams::no_grain);
    let luma = first.components[0].as_ref();
    let rescale = 2f64.powi(i32::from(a.log2_scale_factor) - i32::from(first.log2_scale_factor));
    let recovered_sf = luma.map(|m| {
        let width: f64 = m.intervals.iter().map(|i| f64::from(i.upper_bound - i.lower_bound) + 1.0).sum();
        m.intervals
            .iter()
            .map(|i| f64::from(i.scaling_factor) * (f64::from(i.upper_bound - i.lower_bound) + 1.0))
            .sum::<f64>()
            / width
            * rescale
    });
    let cutoffs = luma.and_then(|m| m.intervals.first()).map(|i| (i.h_cutoff, i.v_cutoff));
    let rel = recovered_sf.filter(|_| a.sf > 0).map(|s| s / f64::from(a.sf) - 1.0);
    let within = if a.sf == 0 {
        luma.is_none()
    } else {
        rel.is_some_and(|r| r.abs() <= 0.25)
            && cutoffs.is_some_and(|(h, v)| (h - a.h_cutoff).abs() <= 2 && (v - a.v_cutoff).abs() <= 2)
    };
    let report = RoundtripReport {
        frames: out.params.len(),
        injected: Injected {
            scaling_factor: a.sf,
            h_cutoff: a.h_cutoff,
            v_cutoff: a.v_cutoff,
            log2_scale_factor: a.log2_scale_factor,
        },
        recovered: Recovered {
            present: luma.is_some(),
            log2_scale_factor: first.log2_scale_factor,
            intervals: luma.map(|m| m.intervals.clone()).unwrap_or_default(),
            scaling_factor: recovered_sf,
            cutoffs,
        },
        scaling_factor_relative_error: rel,
        within_tolerance: within,
    };
    write_json(a.output.as_deref(), &report)
}

fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let cfg = setup(&a.config)?;
    let reference = video::open(&a.reference, &a.raw)?;
    let test = video::open(&a.test, &a.raw)?;
    let report = MetricReport::compare(reference.frames, test.frames, &cfg.analysis)?;
    match a.format {
        ReportFormat::Json => write_json(a.output.as_deref(), &report),
        ReportFormat::Csv => emit(a.output.as_deref(), &report.to_csv()),
    }
}

fn default_bench_records(frames: usize) -> Result<Vec<SidecarRecord>, CliError> {
    let model = || Some(IntervalModel::new(3, vec![Interval::new(0, 255, 40, (8, 8))]));
    let params = FgcParams {
        log2_scale_factor: 3,
        components: [model(), model(), model()],
        ..FgcParams::default()
    };
    let payload = encode_sei(&params)?;
    Ok((0..frames as u32)
        .map(|i| SidecarRecord {
            frame_index: i,
            payload: payload.clone(),
        })
        .collect())
}

fn bench_cmd(a: BenchArgs) -> Result<(), CliError> {
    let cfg = a.config.load()?;
    let (format, mut frames) = video::read_all(&a.input, &a.raw)?;
    if let Some(n) = a.frames {
        frames.truncate(n);
    }
    let mut y4m = Vec::new();
    write_y4m(format, &frames, &mut y4m)?;
    let records = match &a.sidecar {
        Some(p) => read_sidecar(video::read_file(p)?.as_slice()).map_err(|e| CliError::from(e).at(p))?,
        None => default_bench_records(frames.len())?,
    };
    let db = load_db(&cfg.synthesis, None)?;
    let report = bench(&y4m, &records, db, &cfg.synthesis, &a.thread_counts, a.repeats)?;
    let mut table = format!(
        "{}x{} {}-bit, {} frames, best of {} ({} {}, {} cores)\n",
        report.width,
        report.height,
        report.bit_depth,
        report.frames,
        report.repeats,
        report.machine.os,
        report.machine.arch,
        report.machine.available_parallelism
    );
    table.push_str("threads  pass fps  grain fps  pass ms/f  grain ms/f  overhead\n");
    for r in &report.rows {
        table.push_str(&format!(
            "{:>7}  {:>8.2}  {:>9.2}  {:>9.3}  {:>10.3}  {:>7.1}%\n",
            r.threads,
            r.passthrough_fps,
            r.synthesis_fps,
            r.passthrough_ms_per_frame,
            r.synthesis_ms_per_frame,
            r.overhead_percent
        ));
    }
    let mut err = std::io::stderr();
    err.write_all(table.as_bytes())
        .map_err(|e| CliError::new(ExitKind::Io, e.to_string()))?;
    write_json(a.output.as_deref(), &report)
}
