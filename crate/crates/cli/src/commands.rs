//! The pipeline subcommands. Each one reads the experiment config, does its
//! stage and writes JSON artifacts into the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use radonseis::inversion::{error_stats, RoundtripReport};
use radonseis::io::{
    field_csv, phantom_document, read_sinogram, report_document, sinogram_csv, write_document,
    write_field, write_sinogram, ExperimentConfig, Provenance,
};
use radonseis::seismic::forward_sinogram_with;
use radonseis::{
    du_n_filter, invert, roundtrip_report, Field, FilterMethod, Phantom, RadonError, ReconRequest,
    Result, Sinogram,
};

/// Where to write and what to stamp into every file.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub version: String,
    pub seed: u64,
}

impl RunContext {
    fn provenance(&self, cfg: &ExperimentConfig) -> Provenance {
        Provenance::new(self.version.clone(), Some(cfg)).with_seed(self.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| {
            RadonError::Io(e).context(format!("creating {}", self.out_dir.display()))
        })
    }
}

fn timed<T>(label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let v = f()?;
    eprintln!("{label}: {:.3} s", t.elapsed().as_secs_f64());
    Ok(v)
}

fn csv_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RadonError::Io(e).context(path.display().to_string()))
}

fn write_sinogram_csv(path: &Path, sino: &Sinogram) -> Result<()> {
    sinogram_csv(sino, &mut csv_file(path)?).map_err(|e| RadonError::Io(e).context(path.display().to_string()))
}

fn write_field_csv(path: &Path, field: &Field, reference: &Field) -> Result<()> {
    field_csv(field, Some(reference), &mut csv_file(path)?)
        .map_err(|e| RadonError::Io(e).context(path.display().to_string()))
}

fn csv_name(json: &str) -> String {
    match json.strip_suffix(".json") {
        Some(stem) => format!("{stem}.csv"),
        None => format!("{json}.csv"),
    }
}

fn write_phantom(cfg: &ExperimentConfig, ctx: &RunContext, phantom: &Phantom) -> Result<()> {
    write_document(&ctx.path(&cfg.outputs.phantom), &phantom_document(phantom, &ctx.provenance(cfg)))
}

/// Output of one stage that wrote a file.
#[derive(Debug, Clone)]
pub struct Written {
    pub paths: Vec<PathBuf>,
}

/// Forward sweep of the configured phantom.
pub fn cmd_forward(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Written> {
    ctx.prepare()?;
    let phantom = cfg.phantom()?;
    let sino = timed("forward", || {
        forward_sinogram_with(&phantom, &cfg.params, cfg.kind, &cfg.sinogram_grid, &cfg.quadrature, &cfg.sweep)
            .map_err(|e| e.context("forward"))
    })?;
    write_phantom(cfg, ctx, &phantom)?;
    let path = ctx.path(&cfg.outputs.sinogram);
    write_sinogram(&path, &sino, &ctx.provenance(cfg))?;
    let mut paths = vec![ctx.path(&cfg.outputs.phantom), path];
    if cfg.outputs.csv {
        let csv = ctx.path(&csv_name(&cfg.outputs.sinogram));
        write_sinogram_csv(&csv, &sino)?;
        paths.push(csv);
    }
    Ok(Written { paths })
}

fn filter_sinogram(cfg: &ExperimentConfig, sino: &Sinogram, method: FilterMethod) -> Result<Sinogram> {
    let phantom = match method {
        FilterMethod::ExactDy => Some(cfg.phantom()?),
        FilterMethod::FiniteDifference => None,
    };
    timed("filter", || du_n_filter(sino, method, phantom.as_ref()).map_err(|e| e.context("filter")))
}

/// `d^n/du^n` of a raw sinogram file (default: the configured sinogram output).
pub fn cmd_filter(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    input: Option<&Path>,
    method: Option<FilterMethod>,
) -> Result<Written> {
    ctx.prepare()?;
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| ctx.path(&cfg.outputs.sinogram));
    let (sino, _) = read_sinogram(&input)?;
    let filtered = filter_sinogram(cfg, &sino, method.unwrap_or(cfg.filter))?;
    let path = ctx.path(&cfg.outputs.filtered);
    write_sinogram(&path, &filtered, &ctx.provenance(cfg))?;
    Ok(Written { paths: vec![path] })
}

/// Inversion of a filtered sinogram file; a raw sinogram is filtered first
/// with the configured method. Writes the field and an error report against
/// the configured phantom.
pub fn cmd_invert(cfg: &ExperimentConfig, ctx: &RunContext, input: Option<&Path>) -> Result<Written> {
    ctx.prepare()?;
    let mut paths = Vec::new();
    let input = match input {
        Some(p) => p.to_path_buf(),
        None if ctx.path(&cfg.outputs.filtered).exists() => ctx.path(&cfg.outputs.filtered),
        None => ctx.path(&cfg.outputs.sinogram),
    };
    let (mut sino, _) = read_sinogram(&input)?;
    if sino.derivative_order == 0 {
        sino = filter_sinogram(cfg, &sino, cfg.filter)?;
        let path = ctx.path(&cfg.outputs.filtered);
        write_sinogram(&path, &sino, &ctx.provenance(cfg))?;
        paths.push(path);
    }
    let phantom = cfg.phantom()?;
    let req = ReconRequest {
        sino: &sino,
        recon_grid: cfg.recon_grid.clone(),
        s_truncation: cfg.s_truncation,
        report_clamps: true,
        s_refine: cfg.s_refine,
        s_extrapolation: cfg.s_extrapolation,
    };
    let (field, recon) = timed("invert", || invert(&req))?;
    let reference = Field::from_fn(cfg.recon_grid.clone(), |x, y| phantom.eval(x, y))?;
    let report = RoundtripReport {
        kind: cfg.kind,
        errors: error_stats(&field.values, &reference.values),
        recon,
        truncation_radius: cfg.quadrature.truncation_radius.clone(),
        u_span: (sino.grid.u_axis.min, sino.grid.u_axis.max),
        filtered_u_count: sino.grid.u_axis.count,
        timings: Vec::new(),
    };
    paths.extend(write_results(cfg, ctx, &field, &reference, &report)?);
    Ok(Written { paths })
}

fn write_results(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    field: &Field,
    reference: &Field,
    report: &RoundtripReport,
) -> Result<Vec<PathBuf>> {
    let prov = ctx.provenance(cfg);
    let field_path = ctx.path(&cfg.outputs.field);
    write_field(&field_path, field, &prov)?;
    let report_path = ctx.path(&cfg.outputs.report);
    write_document(&report_path, &report_document(report, &prov))?;
    let mut paths = vec![field_path, report_path];
    if cfg.outputs.csv {
        let csv = ctx.path(&csv_name(&cfg.outputs.field));
        write_field_csv(&csv, field, reference)?;
        paths.push(csv);
    }
    eprintln!(
        "rel L-inf {:.4e}, rel L2 {:.4e}, clamped lookups {}/{}",
        report.errors.rel_linf, report.errors.rel_l2, report.recon.clamped_lookups, report.recon.total_lookups
    );
    Ok(paths)
}

/// Forward, filter and invert in one process, writing every artifact.
pub fn cmd_roundtrip(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(Written, RoundtripReport)> {
    ctx.prepare()?;
    let phantom = cfg.phantom()?;
    let out = roundtrip_report(&phantom, &cfg.roundtrip_setup())?;
    for (stage, t) in &out.report.timings {
        eprintln!("{stage}: {:.3} s", t.as_secs_f64());
    }
    let prov = ctx.provenance(cfg);
    write_phantom(cfg, ctx, &phantom)?;
    let sino_path = ctx.path(&cfg.outputs.sinogram);
    write_sinogram(&sino_path, &out.sinogram, &prov)?;
    let filtered_path = ctx.path(&cfg.outputs.filtered);
    write_sinogram(&filtered_path, &out.filtered, &prov)?;
    let mut paths = vec![ctx.path(&cfg.outputs.phantom), sino_path, filtered_path];
    if cfg.outputs.csv {
        let csv = ctx.path(&csv_name(&cfg.outputs.sinogram));
        write_sinogram_csv(&csv, &out.sinogram)?;
        paths.push(csv);
    }
    paths.extend(write_results(cfg, ctx, &out.field, &out.reference, &out.report)?);
    Ok((Written { paths }, out.report))
}
