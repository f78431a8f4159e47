use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use cloudmarch::config::{canonical_scene, load_config, LoadedConfig, Override};
use cloudmarch::evalbench::{
    canonical_specs, fig2_experiment, mean_luminance, run_experiments_with, MIN_REPEATS,
};
use cloudmarch::ppm::{write_ppm, BitDepth};
use cloudmarch::renderer::{render_frame, render_sequence_with};
use cloudmarch::{Error, Result};

/// Volumetric cloud renderer and benchmark runner.
#[derive(Debug, Parser)]
#[command(name = "cloudmarch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render one frame to render.ppm.
    Render(Common),
    /// Render numbered frames plus a per-frame stats.csv.
    Sequence(Common),
    /// Run the benchmark specs and write report.csv, timings.csv and report.txt.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Also write each experiment's final frame as <name>.ppm.
        #[arg(long)]
        dump_frames: bool,
    },
    /// Measure how brightness depends on step count in both integration modes.
    Fig2(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scene file (TOML). Defaults to the built-in canonical scene.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override a config value, e.g. --set raymarch.n_steps=8. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Frames to render (sequence length; TAA frames per bench spec).
    #[arg(long, default_value_t = 8)]
    frames: u32,
    /// Timed repeats per bench spec.
    #[arg(long, default_value_t = MIN_REPEATS)]
    repeats: usize,
    /// Write 16-bit instead of 8-bit PPM files.
    #[arg(long)]
    sixteen_bit: bool,
}

impl Common {
    fn load(&self) -> Result<LoadedConfig> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| Override::parse(s))
            .collect::<Result<Vec<_>>>()?;
        match &self.config {
            Some(path) => load_config(path, &overrides),
            None => Ok(LoadedConfig {
                scene: canonical_scene(&overrides)?,
                experiments: Vec::new(),
            }),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| io_error(&self.out, "creating", e))?;
        Ok(&self.out)
    }

    fn depth(&self) -> BitDepth {
        if self.sixteen_bit {
            BitDepth::Sixteen
        } else {
            BitDepth::Eight
        }
    }
}

fn io_error(path: &Path, what: &str, source: std::io::Error) -> Error {
    Error::Io {
        context: format!("{what} {}", path.display()),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, "writing", e))
}

fn render(c: &Common) -> Result<()> {
    let scene = c.load()?.scene;
    let out = c.out_dir()?;
    let (frame, _) = render_frame(&scene, None, 0)?;
    let path = out.join("render.ppm");
    write_ppm(&path, &frame.final_image, c.depth())?;
    let (w, h) = frame.final_image.resolution();
    println!(
        "{}: {w}x{h}, density_samples={}, light_samples={}, wall_ms={:.2}",
        path.display(),
        frame.stats.density_samples,
        frame.stats.light_samples,
        frame.stats.wall_time.as_secs_f64() * 1e3
    );
    Ok(())
}

fn sequence(c: &Common) -> Result<()> {
    let scene = c.load()?.scene;
    let out = c.out_dir()?;
    let mut csv = String::from("frame,density_samples,light_samples,mean_luminance\n");
    render_sequence_with(&scene, c.frames, None, |i, frame| {
        write_ppm(
            &out.join(format!("frame_{i:04}.ppm")),
            &frame.final_image,
            c.depth(),
        )?;
        let lum = mean_luminance(&frame.final_image);
        csv.push_str(&format!(
            "{i},{},{},{lum:.9}\n",
            frame.stats.density_samples, frame.stats.light_samples
        ));
        println!(
            "frame {i}: {:.2} ms",
            frame.stats.wall_time.as_secs_f64() * 1e3
        );
        Ok(())
    })?;
    write_text(&out.join("stats.csv"), &csv)
}

fn bench(c: &Common, dump_frames: bool) -> Result<()> {
    let loaded = c.load()?;
    let out = c.out_dir()?;
    let specs = if loaded.experiments.is_empty() {
        canonical_specs(&loaded.scene, c.frames)
    } else {
        loaded.experiments
    };
    let report = run_experiments_with(&specs, c.repeats, |spec, frame| {
        if dump_frames {
            write_ppm(
                &out.join(format!("{}.ppm", spec.name)),
                &frame.final_image,
                c.depth(),
            )?;
        }
        Ok(())
    })?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    write_text(&out.join("timings.csv"), &report.timings_csv())?;
    let table = report.to_table();
    write_text(&out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn fig2(c: &Common) -> Result<()> {
    let scene = c.load()?.scene;
    let out = c.out_dir()?;
    let report = fig2_experiment(&scene)?;
    let mut csv = String::from("integration,n_steps,mean_luminance\n");
    for run in &report.runs {
        let mode = format!("{:?}", run.integration).to_lowercase();
        csv.push_str(&format!(
            "{mode},{},{:.9}\n",
            run.n_steps, run.mean_luminance
        ));
    }
    write_text(&out.join("fig2.csv"), &csv)?;
    let table = report.to_table();
    write_text(&out.join("fig2.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let result = match &cli.command {
        Command::Render(c) => render(c),
        Command::Sequence(c) => sequence(c),
        Command::Bench {
            common,
            dump_frames,
        } => bench(common, *dump_frames),
        Command::Fig2(c) => fig2(c),
    };
    match result {
        Ok(()) => {
            eprintln!("done in {:.2}s", start.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
