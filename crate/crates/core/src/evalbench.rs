//! Experiment harness: image metrics, the step-length brightness experiment
//! and the configuration table with sample counts and wall times.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::raymarch::{IntegrationMode, JitterMode};
use crate::renderer::{
    render_frame, render_sequence_with, BufferScale, RenderedFrame, SceneConfig,
};

/// Minimum repeats per timed experiment; wall time is the median over them.
pub const MIN_REPEATS: usize = 5;

/// Step counts swept by [`fig2_experiment`].
pub const FIG2_STEP_COUNTS: [u32; 5] = [8, 16, 32, 64, 128];

/// Root mean square difference over all pixels and channels.
pub fn rmse(a: &Image<Rgb>, b: &Image<Rgb>) -> Result<f64> {
    a.check_same_size(b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| {
            let d = *p - *q;
            d.r * d.r + d.g * d.g + d.b * d.b
        })
        .sum();
    Ok((sum / (a.pixels().len() * 3) as f64).sqrt())
}

/// Mean Rec. 709 luminance of a linear-light image.
pub fn mean_luminance(image: &Image<Rgb>) -> f64 {
    image.mean_luminance()
}

/// `(max - min) / mean` of a set of measurements.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        (max - min) / mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub scene: SceneConfig,
    pub n_frames: u32,
    /// Name of the spec whose final frame serves as ground truth.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMetrics {
    /// Primary density samples in the final frame.
    pub density_samples: u64,
    /// Lighting density samples in the final frame.
    pub light_samples: u64,
    /// Median over repeats of the mean per-frame wall time.
    pub median_wall_time: Duration,
    pub wall_times: Vec<Duration>,
    /// RMSE of the final frame against the reference's final frame.
    pub rmse_vs_reference: Option<f64>,
    pub mean_luminance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub name: String,
    pub outcome: std::result::Result<ExperimentMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub rows: Vec<ExperimentRow>,
}

/// Column order of [`RunReport::to_csv`].
pub const REPORT_COLUMNS: [&str; 7] = [
    "name",
    "status",
    "density_samples",
    "light_samples",
    "rmse_vs_reference",
    "mean_luminance",
    "error",
];

/// Column order of [`RunReport::timings_csv`].
pub const TIMING_COLUMNS: [&str; 4] = ["name", "status", "median_wall_time_ms", "repeats"];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl RunReport {
    pub fn get(&self, name: &str) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn metrics(&self, name: &str) -> Option<&ExperimentMetrics> {
        self.get(name).and_then(|r| r.outcome.as_ref().ok())
    }

    /// Deterministic metrics, one row per experiment. Wall times live in
    /// [`RunReport::timings_csv`] so this file is byte-stable across runs.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            let line = match &row.outcome {
                Ok(m) => format!(
                    "{},ok,{},{},{},{:.9},",
                    csv_field(&row.name),
                    m.density_samples,
                    m.light_samples,
                    m.rmse_vs_reference
                        .map_or(String::new(), |r| format!("{r:.9}")),
                    m.mean_luminance,
                ),
                Err(e) => format!("{},failed,,,,,{}", csv_field(&row.name), csv_field(e)),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = TIMING_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            match &row.outcome {
                Ok(m) => writeln!(
                    out,
                    "{},ok,{:.3},{}",
                    csv_field(&row.name),
                    ms(m.median_wall_time),
                    m.wall_times.len()
                ),
                Err(_) => writeln!(out, "{},failed,,", csv_field(&row.name)),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }

    /// Aligned plain-text table of every column, wall time included.
    pub fn to_table(&self) -> String {
        let header = [
            "experiment",
            "density samples",
            "light samples",
            "median ms",
            "rmse",
            "mean luminance",
        ];
        let mut cells: Vec<[String; 6]> = vec![header.map(String::from)];
        for row in &self.rows {
            cells.push(match &row.outcome {
                Ok(m) => [
                    row.name.clone(),
                    m.density_samples.to_string(),
                    m.light_samples.to_string(),
                    format!("{:.2}", ms(m.median_wall_time)),
                    m.rmse_vs_reference
                        .map_or("-".into(), |r| format!("{r:.6}")),
                    format!("{:.6}", m.mean_luminance),
                ],
                Err(e) => [
                    row.name.clone(),
                    format!("FAILED: {e}"),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ],
            });
        }
        let widths: Vec<usize> = (0..6)
            .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}

/// Rejects duplicate names, references between specs of different display
/// resolutions and reference cycles between distinct specs. A spec may name
/// itself as its reference. Unknown reference names are left to
/// [`run_experiments`], which reports them per row.
pub fn check_references(specs: &[ExperimentSpec]) -> Result<()> {
    let mut index = HashMap::new();
    for (i, s) in specs.iter().enumerate() {
        if index.insert(s.name.as_str(), i).is_some() {
            return Err(Error::Experiment {
                name: s.name.clone(),
                message: "duplicate experiment name".into(),
            });
        }
    }
    for s in specs {
        if let Some(&j) = s.reference.as_deref().and_then(|r| index.get(r)) {
            let (a, b) = (
                s.scene.display_resolution,
                specs[j].scene.display_resolution,
            );
            if a != b {
                return Err(Error::Experiment {
                    name: s.name.clone(),
                    message: format!(
                        "display resolution {a:?} differs from reference `{}` at {b:?}",
                        specs[j].name
                    ),
                });
            }
        }
    }
    for start in specs {
        let mut seen = vec![start.name.as_str()];
        let mut cur = start;
        while let Some(next) = cur.reference.as_deref() {
            if next == cur.name {
                break;
            }
            let Some(&j) = index.get(next) else { break };
            if seen.contains(&next) {
                return Err(Error::Experiment {
                    name: start.name.clone(),
                    message: format!("reference cycle: {} -> {next}", seen.join(" -> ")),
                });
            }
            seen.push(next);
            cur = &specs[j];
        }
    }
    Ok(())
}

struct Executed {
    final_frame: RenderedFrame,
    wall_times: Vec<Duration>,
}

fn execute(spec: &ExperimentSpec, repeats: usize) -> Result<Executed> {
    let mut final_frame = None;
    let mut wall_times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let mut last = None;
        render_sequence_with(&spec.scene, spec.n_frames, None, |_, f| {
            last = Some(f);
            Ok(())
        })?;
        wall_times.push(start.elapsed() / spec.n_frames);
        if final_frame.is_none() {
            final_frame = last;
        }
    }
    let final_frame = final_frame.ok_or_else(|| Error::Experiment {
        name: spec.name.clone(),
        message: "no frames".into(),
    })?;
    Ok(Executed {
        final_frame,
        wall_times,
    })
}

fn median(mut times: Vec<Duration>) -> Duration {
    times.sort();
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2
    }
}

/// Runs every spec `repeats` times in order, timing each repeat, then
/// compares final frames against their references at display resolution.
/// A failing spec becomes a failure row; the batch keeps going.
pub fn run_experiments(specs: &[ExperimentSpec], repeats: usize) -> Result<RunReport> {
    run_experiments_with(specs, repeats, |_, _| Ok(()))
}

/// [`run_experiments`], also handing each successful spec's final frame to
/// `visit` (for dumping images). An error from `visit` aborts the batch.
pub fn run_experiments_with<F>(
    specs: &[ExperimentSpec],
    repeats: usize,
    mut visit: F,
) -> Result<RunReport>
where
    F: FnMut(&ExperimentSpec, &RenderedFrame) -> Result<()>,
{
    if repeats < MIN_REPEATS {
        return Err(Error::invalid(
            "repeats",
            format!("at least {MIN_REPEATS} are required, got {repeats}"),
        ));
    }
    check_references(specs)?;

    let executed: Vec<std::result::Result<Executed, String>> = specs
        .iter()
        .map(|s| execute(s, repeats).map_err(|e| e.to_string()))
        .collect();
    for (spec, run) in specs.iter().zip(&executed) {
        if let Ok(run) = run {
            visit(spec, &run.final_frame)?;
        }
    }
    let by_name: HashMap<&str, usize> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();

    let rows = specs
        .iter()
        .zip(&executed)
        .map(|(spec, run)| {
            let outcome = run.as_ref().map_err(Clone::clone).and_then(|run| {
                let image = &run.final_frame.final_image;
                let rmse_vs_reference = match spec.reference.as_deref() {
                    None => None,
                    Some(r) => {
                        let j = by_name
                            .get(r)
                            .ok_or_else(|| format!("unknown reference `{r}`"))?;
                        let reference = executed[*j]
                            .as_ref()
                            .map_err(|_| format!("reference `{r}` failed"))?;
                        Some(
                            rmse(image, &reference.final_frame.final_image)
                                .map_err(|e| e.to_string())?,
                        )
                    }
                };
                Ok(ExperimentMetrics {
                    density_samples: run.final_frame.stats.density_samples,
                    light_samples: run.final_frame.stats.light_samples,
                    median_wall_time: median(run.wall_times.clone()),
                    wall_times: run.wall_times.clone(),
                    rmse_vs_reference,
                    mean_luminance: mean_luminance(image),
                })
            });
            ExperimentRow {
                name: spec.name.clone(),
                outcome,
            }
        })
        .collect();
    Ok(RunReport { rows })
}

/// Names of the six standard configurations, in table order.
pub const CANONICAL_NAMES: [&str; 6] = [
    "full_128",
    "half_128",
    "half_8",
    "half_8_jitter",
    "half_8_jitter_taa",
    "quarter_8_jitter_taa",
];

/// The six standard configurations derived from `base`: full and half
/// resolution at 128 steps, then 8 steps at half resolution adding jitter
/// and TAA, and finally the same at quarter resolution. Every spec is
/// compared against `full_128`. TAA specs run `taa_frames` frames.
pub fn canonical_specs(base: &SceneConfig, taa_frames: u32) -> Vec<ExperimentSpec> {
    let rows = [
        (BufferScale::Full, 128, JitterMode::Off, false),
        (BufferScale::Half, 128, JitterMode::Off, false),
        (BufferScale::Half, 8, JitterMode::Off, false),
        (BufferScale::Half, 8, JitterMode::PerPixel, false),
        (BufferScale::Half, 8, JitterMode::PerPixel, true),
        (BufferScale::Quarter, 8, JitterMode::PerPixel, true),
    ];
    CANONICAL_NAMES
        .iter()
        .zip(rows)
        .map(|(name, (scale, steps, jitter, taa))| {
            let mut scene = *base;
            scene.cloud_buffer_scale = scale;
            scene.raymarch.n_steps = steps;
            scene.raymarch.jitter = jitter;
            scene.taa.enabled = taa;
            ExperimentSpec {
                name: name.to_string(),
                scene,
                n_frames: if taa { taa_frames.max(1) } else { 1 },
                reference: Some(CANONICAL_NAMES[0].to_string()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Run {
    pub integration: IntegrationMode,
    pub n_steps: u32,
    /// Mean luminance of the premultiplied cloud color.
    pub mean_luminance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Report {
    pub runs: Vec<Fig2Run>,
    pub naive_spread: f64,
    pub analytic_spread: f64,
}

impl Fig2Report {
    pub fn luminances(&self, mode: IntegrationMode) -> Vec<(u32, f64)> {
        self.runs
            .iter()
            .filter(|r| r.integration == mode)
            .map(|r| (r.n_steps, r.mean_luminance))
            .collect()
    }

    /// Relative spread over the runs of `mode` whose step count is in `steps`.
    pub fn spread_over(&self, mode: IntegrationMode, steps: &[u32]) -> f64 {
        let v: Vec<f64> = self
            .luminances(mode)
            .into_iter()
            .filter(|(n, _)| steps.contains(n))
            .map(|(_, l)| l)
            .collect();
        relative_spread(&v)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("steps  naive        analytic\n");
        let naive = self.luminances(IntegrationMode::Naive);
        let analytic = self.luminances(IntegrationMode::Analytic);
        for ((n, a), (_, b)) in naive.iter().zip(&analytic) {
            writeln!(out, "{n:>5}  {a:<11.6}  {b:.6}").expect("writing to a String cannot fail");
        }
        writeln!(
            out,
            "spread {:<11.6}  {:.6}",
            self.naive_spread, self.analytic_spread
        )
        .expect("writing to a String cannot fail");
        out
    }
}

/// Renders `scene` once per integration mode and step count, without jitter
/// or TAA, and measures how cloud brightness depends on step length.
pub fn fig2_experiment(scene: &SceneConfig) -> Result<Fig2Report> {
    let mut runs = Vec::new();
    for integration in [IntegrationMode::Naive, IntegrationMode::Analytic] {
        for n_steps in FIG2_STEP_COUNTS {
            let mut s = *scene;
            s.raymarch.integration = integration;
            s.raymarch.n_steps = n_steps;
            s.raymarch.jitter = JitterMode::Off;
            s.taa.enabled = false;
            let (frame, _) = render_frame(&s, None, 0)?;
            let clouds = frame.cloud_buffer.map(|c| c.color);
            runs.push(Fig2Run {
                integration,
                n_steps,
                mean_luminance: mean_luminance(&clouds),
            });
        }
    }
    let spread = |mode| {
        let v: Vec<f64> = runs
            .iter()
            .filter(|r: &&Fig2Run| r.integration == mode)
            .map(|r| r.mean_luminance)
            .collect();
        relative_spread(&v)
    };
    let naive_spread = spread(IntegrationMode::Naive);
    let analytic_spread = spread(IntegrationMode::Analytic);
    Ok(Fig2Report {
        runs,
        naive_spread,
        analytic_spread,
    })
}
