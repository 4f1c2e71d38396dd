//! JSON artifacts, experiment configuration and CSV export.
//!
//! Every artifact is one JSON document
//! `{"schema": "radonseis/<type>/v1", "meta": {...}, "axes": [...], "data": [...]}`
//! with `data` flattened row-major over `axes`. Floats are written in
//! shortest round-trip form, so reading a written file gives back the exact
//! same values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{RadonError, Result};
use crate::inversion::{RoundtripReport, RoundtripSetup, STruncation};
use crate::phantom::{make_phantom, AxisProfile, FunctionSpace, Parity, Phantom, PhantomWidths};
use crate::quadrature::QuadratureRule;
use crate::seismic::SweepOptions;
use crate::types::{
    validate_params, Field, FieldGrid, FilterMethod, Grid1D, Sinogram, SinogramGrid,
    SinogramMeta, TransformKind, TransformParams, VanishingOrders,
};

pub const SCHEMA_SINOGRAM: &str = "radonseis/sinogram/v1";
pub const SCHEMA_FIELD: &str = "radonseis/field/v1";
pub const SCHEMA_REPORT: &str = "radonseis/report/v1";
pub const SCHEMA_PHANTOM: &str = "radonseis/phantom/v1";

/// One named uniform axis of an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    fn new(name: impl Into<String>, g: &Grid1D) -> Self {
        AxisSpec {
            name: name.into(),
            min: g.min,
            max: g.max,
            count: g.count,
        }
    }

    fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.min, self.max, self.count)
    }
}

/// The on-disk document shared by all artifact types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub schema: String,
    pub meta: Map<String, Value>,
    pub axes: Vec<AxisSpec>,
    pub data: Vec<f64>,
}

/// Version string and configuration embedded in every written artifact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    #[serde(default)]
    pub config: Option<Value>,
    /// Seed for randomized checks, when the run used one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(version: impl Into<String>, config: Option<&ExperimentConfig>) -> Self {
        Provenance {
            version: version.into(),
            config: config.map(|c| serde_json::to_value(c).expect("config serializes")),
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("artifact metadata serializes")
}

fn from_meta<T: DeserializeOwned>(meta: &Map<String, Value>, key: &str) -> Result<T> {
    let v = meta
        .get(key)
        .ok_or_else(|| RadonError::Format(format!("meta.{key} is missing")))?;
    serde_json::from_value(v.clone()).map_err(|e| RadonError::Format(format!("meta.{key}: {e}")))
}

fn provenance_of(meta: &Map<String, Value>) -> Provenance {
    meta.get("provenance")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

fn expect_schema(doc: &Document, schema: &str) -> Result<()> {
    if doc.schema != schema {
        return Err(RadonError::Format(format!(
            "expected schema {schema}, found {}",
            doc.schema
        )));
    }
    Ok(())
}

impl Sinogram {
    pub fn to_document(&self, prov: &Provenance) -> Document {
        let mut meta = Map::new();
        meta.insert("kind".into(), to_value(&self.kind));
        meta.insert("params".into(), to_value(&self.params));
        meta.insert("derivative_order".into(), to_value(&self.derivative_order));
        meta.insert("sinogram".into(), to_value(&self.meta));
        meta.insert("provenance".into(), to_value(prov));
        let mut axes: Vec<AxisSpec> = self
            .grid
            .s_axes
            .iter()
            .enumerate()
            .map(|(i, g)| AxisSpec::new(format!("s{i}"), g))
            .collect();
        axes.push(AxisSpec::new("u", &self.grid.u_axis));
        Document {
            schema: SCHEMA_SINOGRAM.into(),
            meta,
            axes,
            data: self.values.clone(),
        }
    }

    pub fn from_document(doc: Document) -> Result<(Sinogram, Provenance)> {
        expect_schema(&doc, SCHEMA_SINOGRAM)?;
        let kind: TransformKind = from_meta(&doc.meta, "kind")?;
        let params: TransformParams = from_meta(&doc.meta, "params")?;
        let order: usize = from_meta(&doc.meta, "derivative_order")?;
        let meta: SinogramMeta = from_meta(&doc.meta, "sinogram")?;
        let Some((u, s)) = doc.axes.split_last() else {
            return Err(RadonError::Format("sinogram without axes".into()));
        };
        let s_axes = s.iter().map(AxisSpec::grid).collect::<Result<Vec<_>>>()?;
        let grid = SinogramGrid::new(s_axes, u.grid()?);
        let prov = provenance_of(&doc.meta);
        let sino = Sinogram::new(kind, params, grid, doc.data, order, meta)?;
        Ok((sino, prov))
    }
}

impl Field {
    pub fn to_document(&self, prov: &Provenance) -> Document {
        let mut meta: Map<String, Value> = self.meta.clone().into_iter().collect();
        meta.insert("provenance".into(), to_value(prov));
        let mut axes: Vec<AxisSpec> = self
            .grid
            .x_axes
            .iter()
            .enumerate()
            .map(|(i, g)| AxisSpec::new(format!("x{i}"), g))
            .collect();
        axes.push(AxisSpec::new("y", &self.grid.y_axis));
        Document {
            schema: SCHEMA_FIELD.into(),
            meta,
            axes,
            data: self.values.clone(),
        }
    }

    pub fn from_document(doc: Document) -> Result<(Field, Provenance)> {
        expect_schema(&doc, SCHEMA_FIELD)?;
        let prov = provenance_of(&doc.meta);
        let Some((y, x)) = doc.axes.split_last() else {
            return Err(RadonError::Format("field without axes".into()));
        };
        let x_axes = x.iter().map(AxisSpec::grid).collect::<Result<Vec<_>>>()?;
        let grid = FieldGrid::new(x_axes, y.grid()?);
        let mut meta = doc.meta;
        meta.remove("provenance");
        let mut field = Field::new(grid, doc.data)?;
        field.meta = meta.into_iter().collect();
        Ok((field, prov))
    }
}

/// Document holding only metadata (reports, phantoms).
fn meta_document(schema: &str, key: &str, value: Value, prov: &Provenance) -> Document {
    let mut meta = Map::new();
    meta.insert(key.into(), value);
    meta.insert("provenance".into(), to_value(prov));
    Document {
        schema: schema.into(),
        meta,
        axes: Vec::new(),
        data: Vec::new(),
    }
}

pub fn report_document(report: &RoundtripReport, prov: &Provenance) -> Document {
    meta_document(SCHEMA_REPORT, "report", to_value(report), prov)
}

pub fn phantom_document(phantom: &Phantom, prov: &Provenance) -> Document {
    meta_document(SCHEMA_PHANTOM, "phantom", to_value(phantom), prov)
}

pub fn read_report(path: &Path) -> Result<(RoundtripReport, Provenance)> {
    let doc = read_document(path)?;
    expect_schema(&doc, SCHEMA_REPORT)?;
    Ok((from_meta(&doc.meta, "report")?, provenance_of(&doc.meta)))
}

/// Reads a phantom and re-runs its certification.
pub fn read_phantom(path: &Path) -> Result<(Phantom, Provenance)> {
    let doc = read_document(path)?;
    expect_schema(&doc, SCHEMA_PHANTOM)?;
    let p: Phantom = from_meta(&doc.meta, "phantom")?;
    Ok((p.certify()?, provenance_of(&doc.meta)))
}

pub fn write_document(path: &Path, doc: &Document) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| RadonError::Format(format!("serializing {}: {e}", doc.schema)))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_context(e, path))
}

pub fn read_document(path: &Path) -> Result<Document> {
    let text = fs::read_to_string(path).map_err(|e| io_context(e, path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| RadonError::Format(format!(
        "{}: at `{}`: {}",
        path.display(),
        e.path(),
        e.inner()
    )))
}

fn io_context(e: std::io::Error, path: &Path) -> RadonError {
    RadonError::Io(e).context(path.display().to_string())
}

pub fn write_sinogram(path: &Path, sino: &Sinogram, prov: &Provenance) -> Result<()> {
    write_document(path, &sino.to_document(prov))
}

pub fn read_sinogram(path: &Path) -> Result<(Sinogram, Provenance)> {
    Sinogram::from_document(read_document(path)?)
}

pub fn write_field(path: &Path, field: &Field, prov: &Provenance) -> Result<()> {
    write_document(path, &field.to_document(prov))
}

pub fn read_field(path: &Path) -> Result<(Field, Provenance)> {
    Field::from_document(read_document(path)?)
}

/// CSV rows `s0,..,u,value`.
pub fn sinogram_csv(sino: &Sinogram, out: &mut impl Write) -> std::io::Result<()> {
    let n = sino.grid.n();
    let mut header: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    header.push("u".into());
    header.push("value".into());
    writeln!(out, "{}", header.join(","))?;
    for (k, v) in sino.values.iter().enumerate() {
        let (s, u) = sino.grid.point(k);
        for si in s {
            write!(out, "{si},")?;
        }
        writeln!(out, "{u},{v}")?;
    }
    Ok(())
}

/// CSV rows `x0,..,y,value` or, with a reference, `x0,..,y,value,reference,abs_error`.
pub fn field_csv(field: &Field, reference: Option<&Field>, out: &mut impl Write) -> std::io::Result<()> {
    let n = field.grid.n();
    let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    header.push("value".into());
    if reference.is_some() {
        header.push("reference".into());
        header.push("abs_error".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (k, v) in field.values.iter().enumerate() {
        let (x, y) = field.grid.point(k);
        for xi in x {
            write!(out, "{xi},")?;
        }
        write!(out, "{y},{v}")?;
        if let Some(r) = reference {
            let rv = r.values[k];
            write!(out, ",{rv},{}", (v - rv).abs())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Phantom description in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub widths: PhantomWidths,
    /// Space to certify against; defaults to what the transform kind requires.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<FunctionSpace>,
    /// Per-axis exponents; default is the minimal choice for the vanishing orders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_exponents: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_exponent: Option<u32>,
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_sinogram")]
    pub sinogram: String,
    #[serde(default = "default_filtered")]
    pub filtered: String,
    #[serde(default = "default_field")]
    pub field: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_phantom")]
    pub phantom: String,
    /// Also write CSV next to the sinogram and field files.
    #[serde(default)]
    pub csv: bool,
}

fn default_sinogram() -> String {
    "sinogram.json".into()
}
fn default_filtered() -> String {
    "filtered.json".into()
}
fn default_field() -> String {
    "field.json".into()
}
fn default_report() -> String {
    "report.json".into()
}
fn default_phantom() -> String {
    "phantom.json".into()
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            sinogram: default_sinogram(),
            filtered: default_filtered(),
            field: default_field(),
            report: default_report(),
            phantom: default_phantom(),
            csv: false,
        }
    }
}

fn one() -> usize {
    1
}

/// Everything a forward / filter / invert run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: TransformKind,
    pub params: TransformParams,
    /// Vanishing orders; defaults to `m_i = max(0, ceil(alpha_i - 2))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<VanishingOrders>,
    pub phantom: PhantomSpec,
    pub sinogram_grid: SinogramGrid,
    pub recon_grid: FieldGrid,
    pub quadrature: QuadratureRule,
    #[serde(default)]
    pub sweep: SweepOptions,
    pub filter: FilterMethod,
    #[serde(default)]
    pub s_truncation: STruncation,
    #[serde(default = "one")]
    pub s_refine: usize,
    #[serde(default = "one")]
    pub s_extrapolation: usize,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn config_err(path: &str, message: impl Into<String>) -> RadonError {
    RadonError::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending JSON path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_context(e, path))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn orders(&self) -> VanishingOrders {
        self.orders
            .clone()
            .unwrap_or_else(|| VanishingOrders::minimal_for(&self.params))
    }

    /// Cross-field checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let n = self.params.n;
        self.params
            .check()
            .map_err(|e| config_err("params", e.to_string()))?;
        if self.kind == TransformKind::XStandard {
            return Err(config_err("kind", "experiments run kinds P, Q or R"));
        }
        if self.kind == TransformKind::R && self.params.beta.is_none() {
            return Err(config_err("params.beta", "kind R needs beta"));
        }
        let report = validate_params(&self.params, &self.orders());
        if !report.is_ok() {
            return Err(config_err("orders", report.to_string()));
        }
        if self.phantom.widths.x.len() != n {
            return Err(config_err(
                "phantom.widths.x",
                format!("{} widths for n = {n}", self.phantom.widths.x.len()),
            ));
        }
        if let Some(e) = &self.phantom.x_exponents {
            if e.len() != n {
                return Err(config_err(
                    "phantom.x_exponents",
                    format!("{} exponents for n = {n}", e.len()),
                ));
            }
        }
        if self.sinogram_grid.n() != n {
            return Err(config_err(
                "sinogram_grid.s_axes",
                format!("{} axes for n = {n}", self.sinogram_grid.n()),
            ));
        }
        if self.recon_grid.n() != n {
            return Err(config_err(
                "recon_grid.x_axes",
                format!("{} axes for n = {n}", self.recon_grid.n()),
            ));
        }
        if self.quadrature.dim() != n {
            return Err(config_err(
                "quadrature",
                format!("rule of dimension {} for n = {n}", self.quadrature.dim()),
            ));
        }
        self.quadrature
            .check()
            .map_err(|e| config_err("quadrature", e.to_string()))?;
        if self.filter == FilterMethod::ExactDy && self.kind == TransformKind::R {
            return Err(config_err("filter", "exact_dy is not available for kind R"));
        }
        if let Some(dz) = self.sweep.nested_table_step {
            if !(dz.is_finite() && dz > 0.0) {
                return Err(config_err("sweep.nested_table_step", "must be positive"));
            }
        }
        if let STruncation::Fixed(s) = self.s_truncation {
            if !(s.is_finite() && s > 0.0) {
                return Err(config_err("s_truncation.fixed", "must be positive"));
            }
        }
        if self.s_refine == 0 {
            return Err(config_err("s_refine", "must be >= 1"));
        }
        if self.s_extrapolation == 0 || self.s_extrapolation > 3 {
            return Err(config_err("s_extrapolation", "must be 1, 2 or 3"));
        }
        Ok(())
    }

    /// Builds and certifies the configured phantom.
    pub fn phantom(&self) -> Result<Phantom> {
        let space = self
            .phantom
            .space
            .or_else(|| FunctionSpace::required_by(self.kind))
            .ok_or_else(|| config_err("phantom.space", "no space for this kind"))?;
        let orders = self.orders();
        let base = make_phantom(&self.params, &orders, space, &self.phantom.widths)?;
        if self.phantom.x_exponents.is_none() && self.phantom.y_exponent.is_none() {
            return Ok(base);
        }
        let axis_profiles = match &self.phantom.x_exponents {
            Some(exps) => exps
                .iter()
                .zip(&base.axis_profiles)
                .map(|(&e, p)| AxisProfile::new(e, p.width, p.parity))
                .collect::<Result<Vec<_>>>()?,
            None => base.axis_profiles.clone(),
        };
        let y_profile = match self.phantom.y_exponent {
            Some(e) => AxisProfile::new(e, base.y_profile.width, Parity::EvenForced)
                .map_err(|err| config_err("phantom.y_exponent", err.to_string()))?,
            None => base.y_profile,
        };
        Phantom::from_profiles(self.params.clone(), orders, axis_profiles, y_profile, space)?
            .certify()
    }

    pub fn roundtrip_setup(&self) -> RoundtripSetup {
        RoundtripSetup {
            kind: self.kind,
            sinogram_grid: self.sinogram_grid.clone(),
            quadrature: self.quadrature.clone(),
            sweep: self.sweep,
            filter: self.filter,
            recon_grid: self.recon_grid.clone(),
            s_truncation: self.s_truncation,
            s_refine: self.s_refine,
            s_extrapolation: self.s_extrapolation,
        }
    }
}

/// A small n = 1 configuration for kind `kind`; handy as a template.
pub fn example_config(kind: TransformKind) -> ExperimentConfig {
    let (alpha, beta) = match kind {
        TransformKind::Q => (3.0, None),
        TransformKind::R => (2.0, Some(2.0)),
        _ => (2.0, None),
    };
    let params = TransformParams::centered(vec![alpha], beta).expect("valid params");
    ExperimentConfig {
        kind,
        params,
        orders: None,
        phantom: PhantomSpec {
            widths: PhantomWidths::uniform(1, 1.0),
            space: None,
            x_exponents: None,
            y_exponent: None,
        },
        sinogram_grid: SinogramGrid::new(
            vec![Grid1D::new(-8.0, 8.0, 81).expect("grid")],
            Grid1D::new(-24.0, 24.0, 241).expect("grid"),
        ),
        recon_grid: FieldGrid::new(
            vec![Grid1D::new(-1.9, 2.1, 11).expect("grid")],
            Grid1D::new(-2.0, 2.0, 11).expect("grid"),
        ),
        quadrature: QuadratureRule::trapezoid(1, 6.0, 601),
        sweep: SweepOptions::default(),
        filter: FilterMethod::FiniteDifference,
        s_truncation: STruncation::Full,
        s_refine: 1,
        s_extrapolation: 1,
        outputs: OutputPaths::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrips_exactly() {
        for kind in [TransformKind::P, TransformKind::Q, TransformKind::R] {
            let cfg = example_config(kind);
            let back = ExperimentConfig::from_json_str(&cfg.to_json_string()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_json_string(), cfg.to_json_string());
        }
    }

    #[test]
    fn malformed_config_names_the_path() {
        let cfg = example_config(TransformKind::P);
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["sinogram_grid"]["u_axis"]["count"] = Value::from(1);
        let err = ExperimentConfig::from_json_str(&v.to_string()).unwrap_err();
        match err {
            RadonError::Config { path, .. } => assert_eq!(path, "sinogram_grid.u_axis"),
            other => panic!("{other}"),
        }
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["filter"] = Value::from("spectral");
        let err = ExperimentConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, RadonError::Config { ref path, .. } if path == "filter"), "{err}");
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["recon_grid"]["x_axes"] = serde_json::json!([]);
        let err = ExperimentConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, RadonError::Config { ref path, .. } if path == "recon_grid.x_axes"));
    }

    #[test]
    fn configured_exponents_are_certified() {
        let mut cfg = example_config(TransformKind::R);
        cfg.phantom.y_exponent = Some(4);
        let p = cfg.phantom().unwrap();
        assert_eq!(p.y_profile.exponent, 4);
        assert!(p.is_certified());
        cfg.phantom.y_exponent = Some(3);
        assert!(cfg.phantom().is_err());
    }

    #[test]
    fn sinogram_document_roundtrip() {
        let params = TransformParams::centered(vec![2.0], None).unwrap();
        let grid = SinogramGrid::new(
            vec![Grid1D::new(-1.0, 1.0, 3).unwrap()],
            Grid1D::new(0.0, 1.0, 4).unwrap(),
        );
        let values: Vec<f64> = (0..12).map(|k| (k as f64).sqrt() / 3.0 - 0.1).collect();
        let sino = Sinogram::new(TransformKind::P, params, grid, values, 1, SinogramMeta::default())
            .unwrap();
        let prov = Provenance::new("test", None);
        let text = serde_json::to_string(&sino.to_document(&prov)).unwrap();
        let doc: Document = serde_json::from_str(&text).unwrap();
        let (back, p) = Sinogram::from_document(doc).unwrap();
        assert_eq!(back, sino);
        assert_eq!(p, prov);
        let mut csv = Vec::new();
        sinogram_csv(&sino, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().next(), Some("s0,u,value"));
        assert_eq!(csv.lines().count(), 13);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let grid = FieldGrid::new(
            vec![Grid1D::new(-1.0, 1.0, 2).unwrap()],
            Grid1D::new(-1.0, 1.0, 2).unwrap(),
        );
        let field = Field::new(grid, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let doc = field.to_document(&Provenance::default());
        assert!(Sinogram::from_document(doc.clone()).is_err());
        let (back, _) = Field::from_document(doc).unwrap();
        assert_eq!(back, field);
    }
}
