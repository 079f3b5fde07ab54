//! `polyfield` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or format error,
//! 3 numerical failure. Every failure prints a single
//! `error: <kind>: <reason>` line to standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{self, SampleSpec};
use crate::geometry::Scene;
use crate::groundtruth::{self, FieldParams};
use crate::metrics;
use crate::polyvector::{decode, Coefficients, PolyVectorField};
use crate::raster::RasterImage;
use crate::variational::{self, SolveConfig};

pub const THREADS_ENV: &str = "POLYFIELD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "polyfield", version, about = "2-PolyVector fields for line drawings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset of drawings and ground-truth fields.
    Synth {
        /// Master seed; every record derives its own stream from it.
        #[arg(long)]
        seed: u64,
        /// Total number of records.
        #[arg(long)]
        count: u64,
        /// Records in the training split; the rest go to validation.
        #[arg(long)]
        train: u64,
        /// Canvas side in pixels.
        #[arg(long)]
        size: u32,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// JSON sample spec; `--size` overrides its canvas.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Render one scene and write its image and ground-truth field.
    Gt {
        /// Scene JSON file.
        #[arg(long)]
        scene: PathBuf,
        /// Output prefix; writes PREFIX.png and PREFIX.pvf.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: FieldArgs,
    },
    /// Estimate a field from an image with the variational solver.
    Solve {
        /// PNG with bright ink on a dark background.
        #[arg(long)]
        image: PathBuf,
        /// Smoothness weight.
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        /// Iteration cap.
        #[arg(long, default_value_t = 500)]
        iters: usize,
        /// Output prefix; writes PREFIX.pvf.
        #[arg(long)]
        out: PathBuf,
        /// Write the energy trace as `iter,energy` CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Ink threshold for the stroke mask.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Relative energy decrease at which a converged run stops.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Compare a predicted field with ground truth.
    Eval {
        /// Predicted field (PVF1).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth field (PVF1).
        #[arg(long)]
        gt: PathBuf,
        /// Weight of the smoothness term in the regularized score.
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
    },
    /// Render a field as an SVG quiver plot.
    Viz {
        /// Field to draw (PVF1).
        #[arg(long)]
        field: PathBuf,
        /// Optional PNG drawn underneath the glyphs.
        #[arg(long)]
        image: Option<PathBuf>,
        /// SVG output path.
        #[arg(long)]
        out: PathBuf,
        /// Draw glyphs on every `stride`-th pixel.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        stride: u32,
    },
}

#[derive(Debug, Args)]
struct FieldArgs {
    /// Junction distance below which the crossing field is used unblended.
    #[arg(long, default_value_t = 2.0)]
    d_near: f64,
    /// Junction distance beyond which only the local tangent counts.
    #[arg(long, default_value_t = 6.0)]
    d_far: f64,
    /// Gaussian smoothing width in pixels.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Ink threshold for the stroke mask.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Stroke width in pixels.
    #[arg(long, default_value_t = 1.5)]
    stroke_width: f64,
    /// Distance under which two primitives count as meeting.
    #[arg(long, default_value_t = 0.5)]
    intersection_tol: f64,
}

impl From<&FieldArgs> for FieldParams {
    fn from(a: &FieldArgs) -> Self {
        FieldParams {
            d_near: a.d_near,
            d_far: a.d_far,
            sigma: a.sigma,
            threshold: a.threshold,
            stroke_width: a.stroke_width,
            intersection_tol: a.intersection_tol,
        }
    }
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Io(m) => ("io", m),
            CliError::Numerical(m) => ("numerical", m),
        };
        format!("error: {kind}: {}", msg.replace('\n', " ").trim())
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn num_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Runs the command line with process stdio.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            let _ = writeln!(stderr, "{}", err.line());
            return err.exit_code();
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "{}", err.line());
            err.exit_code()
        }
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: no such file", path.display())))
    }
}

fn require_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(CliError::Io(format!(
            "{}: directory does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn thread_limit() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Synth {
            seed,
            count,
            train,
            size,
            out,
            spec,
        } => {
            if train > count {
                return Err(CliError::Usage(format!("--train {train} exceeds --count {count}")));
            }
            let threads = thread_limit()?;
            let mut sample_spec = match &spec {
                Some(path) => {
                    require_file(path)?;
                    let text = fs::read_to_string(path).map_err(io_err)?;
                    serde_json::from_str::<SampleSpec>(&text)
                        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
                }
                None => SampleSpec::default(),
            };
            sample_spec.canvas = size;
            sample_spec
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            let manifest = dataset::generate(seed, count, train, &sample_spec, &out, threads)
                .map_err(|e| match e {
                    dataset::DatasetError::Generation { .. }
                    | dataset::DatasetError::GroundTruth { .. }
                    | dataset::DatasetError::EmptyField { .. } => num_err(e),
                    other => io_err(other),
                })?;
            for r in &manifest.records {
                for w in &r.warnings {
                    let _ = writeln!(stderr, "warning: record {}: {w}", r.index);
                }
            }
            writeln!(
                stdout,
                "{{\"count\":{},\"train\":{},\"val\":{},\"manifest\":{}}}",
                manifest.count,
                manifest.train_count,
                manifest.val_count,
                serde_json::to_string(&out.join(dataset::DatasetManifest::FILE_NAME))
                    .expect("path serializes")
            )
            .map_err(io_err)?;
        }
        Command::Gt { scene, out, params } => {
            require_file(&scene)?;
            require_parent(&out)?;
            let params = FieldParams::from(&params);
            params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let text = fs::read_to_string(&scene).map_err(io_err)?;
            let scene = Scene::from_json(&text)
                .map_err(|e| CliError::Io(format!("{}: {e}", scene.display())))?;
            let gt = groundtruth::build_field(&scene, &params).map_err(num_err)?;
            for w in &gt.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            gt.image
                .write_png(&with_extension(&out, "png"))
                .map_err(io_err)?;
            dataset::write_field(&gt.field, &with_extension(&out, "pvf")).map_err(io_err)?;
        }
        Command::Solve {
            image,
            gamma,
            iters,
            out,
            trace,
            threshold,
            tol,
        } => {
            require_file(&image)?;
            require_parent(&out)?;
            if let Some(t) = &trace {
                require_parent(t)?;
            }
            let config = SolveConfig {
                gamma,
                max_iters: iters,
                tol,
                threshold,
                sigma: None,
            };
            config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let img = RasterImage::read_png(&image)
                .map_err(|e| CliError::Io(format!("{}: {e}", image.display())))?;
            let result = variational::solve(&img, &config).map_err(num_err)?;
            dataset::write_field(&result.field, &with_extension(&out, "pvf")).map_err(io_err)?;
            if let Some(t) = &trace {
                let file = fs::File::create(t).map_err(io_err)?;
                result
                    .write_trace_csv(std::io::BufWriter::new(file))
                    .map_err(io_err)?;
            }
            let summary = serde_json::json!({
                "gamma": result.gamma,
                "iterations": result.iterations,
                "energy": result.final_energy(),
                "gradient_norm": result.gradient_norm,
                "converged": result.converged,
            });
            writeln!(stdout, "{summary}").map_err(io_err)?;
        }
        Command::Eval { pred, gt, gamma } => {
            require_file(&pred)?;
            require_file(&gt)?;
            let p = dataset::read_field(&pred)
                .map_err(|e| CliError::Io(format!("{}: {e}", pred.display())))?;
            let g = dataset::read_field(&gt)
                .map_err(|e| CliError::Io(format!("{}: {e}", gt.display())))?;
            let report = metrics::regularized_loss(&p, &g, gamma).map_err(num_err)?;
            writeln!(stdout, "{}", report.to_json()).map_err(io_err)?;
        }
        Command::Viz {
            field,
            image,
            out,
            stride,
        } => {
            require_file(&field)?;
            if let Some(i) = &image {
                require_file(i)?;
            }
            require_parent(&out)?;
            let f = dataset::read_field(&field)
                .map_err(|e| CliError::Io(format!("{}: {e}", field.display())))?;
            let img = match &image {
                Some(path) => Some(
                    RasterImage::read_png(path)
                        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
                ),
                None => None,
            };
            if let Some(i) = &img {
                if (i.width(), i.height()) != f.dims() {
                    return Err(CliError::Usage(format!(
                        "image is {}x{} but field is {}x{}",
                        i.width(),
                        i.height(),
                        f.width(),
                        f.height()
                    )));
                }
            }
            fs::write(&out, quiver_svg(&f, img.as_ref(), stride)).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Pixels of SVG output per field pixel.
const SVG_SCALE: u32 = 8;

/// SVG quiver plot: two line glyphs, `0.8·stride` long, centered on every
/// defined pixel whose coordinates are multiples of `stride`. The first
/// decoded direction is drawn opaque, the second at half opacity.
pub fn quiver_svg(field: &PolyVectorField, image: Option<&RasterImage>, stride: u32) -> String {
    let stride = stride.max(1);
    let (w, h) = field.dims();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {w} {h}">"#,
        w * SVG_SCALE,
        h * SVG_SCALE
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    if let Some(img) = image {
        let _ = writeln!(svg, r#"<g shape-rendering="crispEdges">"#);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = img.get(x, y);
                if v > 0.0 {
                    let g = 255 - (255.0 * v).round() as u8;
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{x}" y="{y}" width="1" height="1" fill="rgb({g},{g},{g})"/>"#
                    );
                }
            }
        }
        let _ = writeln!(svg, "</g>");
    }
    let half = 0.4 * f64::from(stride);
    let _ = writeln!(
        svg,
        r##"<g stroke="#c0392b" stroke-width="0.12" stroke-linecap="round">"##
    );
    for y in (0..h).step_by(stride as usize) {
        for x in (0..w).step_by(stride as usize) {
            let Some(c) = field.get(x, y) else { continue };
            let pair = decode(c);
            let (cx, cy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            for (angle, opacity) in [(pair.alpha, "1"), (pair.beta, "0.5")] {
                let (dx, dy) = (half * angle.cos(), half * angle.sin());
                let _ = writeln!(
                    svg,
                    r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke-opacity="{opacity}"/>"#,
                    cx - dx,
                    cy - dy,
                    cx + dx,
                    cy + dy
                );
            }
        }
    }
    let _ = writeln!(svg, "</g>\n</svg>");
    svg
}

/// Coefficients of every glyph-bearing pixel, in drawing order.
pub fn quiver_samples(field: &PolyVectorField, stride: u32) -> Vec<(u32, u32, Coefficients)> {
    let stride = stride.max(1) as usize;
    let mut out = Vec::new();
    for y in (0..field.height()).step_by(stride) {
        for x in (0..field.width()).step_by(stride) {
            if let Some(c) = field.get(x, y) {
                out.push((x, y, c));
            }
        }
    }
    out
}
