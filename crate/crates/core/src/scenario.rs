//! Scenario files: loading, suite execution, report assembly and field export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ambient::AmbientSpace;
use crate::body::{BodyGrid, FdOrder, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::geometry::AffineCoeffs;
use crate::holonomy::{defect_density_field, DefectField};
use crate::invariance::{frame_invariance_deviation, minimality_counterexample, orbit_deviation, MinimalityTarget};
use crate::placement::{
    builtin_placement, holonomic_lift, validate_embedding, validate_physically_acceptable, AcceptabilityReport,
    FirstOrderPlacement, ParamValue, PunctualPlacement, DEFAULT_EPS_EMBED,
};
use crate::pullback::{cauchy_green, principal_invariants, pullback_checks, InvariantQuadruplet, INVARIANT_NAMES};

pub const SUITES: [&str; 5] = ["validate", "pullback", "invariance", "minimality", "holonomy"];
pub const INVARIANCE_SAMPLES: usize = 20;
pub const DEFAULT_OUT_DIR: &str = "microkin-out";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub grid: GridSpec,
    pub placement: PlacementSpec,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dim: usize,
    pub count: Count,
    pub origin: Option<Vec<f64>>,
    pub extent: Option<Vec<f64>>,
    pub order: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dim: 3, count: Count::Uniform(DEFAULT_POINTS), origin: None, extent: None, order: 4 }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<BodyGrid> {
        let n = self.dim;
        let per_axis = |v: &Option<Vec<f64>>, default: f64, what: &str| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![default; n]),
                Some(v) if v.len() == n => Ok(v.clone()),
                Some(v) => Err(Error::Scenario(format!("grid.{what} has {} entries for dimension {n}", v.len()))),
            }
        };
        let origin = per_axis(&self.origin, 0.0, "origin")?;
        let extent = per_axis(&self.extent, 1.0, "extent")?;
        let counts = match &self.count {
            Count::Uniform(c) => vec![*c; n],
            Count::PerAxis(c) if c.len() == n => c.clone(),
            Count::PerAxis(c) => {
                return Err(Error::Scenario(format!("grid.count has {} entries for dimension {n}", c.len())))
            }
        };
        if extent.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Scenario("grid.extent must be positive".into()));
        }
        let spacing = extent.iter().zip(&counts).map(|(e, c)| e / (c.max(&2) - 1) as f64).collect();
        BodyGrid::new(origin, spacing, counts, FdOrder::from_int(self.order)?)
    }
}

/// Either a built-in family or analytic fields. Missing couplings in the
/// analytic form are taken from the gradient of the shadow.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub family: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
    pub phi_bar: Option<Vec<String>>,
    pub phi_v: Option<Vec<Vec<String>>>,
    pub t_v: Option<Vec<String>>,
    #[serde(rename = "Lc")]
    pub lc: Option<Vec<Vec<Vec<String>>>>,
    #[serde(rename = "Tc")]
    pub tc: Option<Vec<Vec<String>>>,
}

impl PlacementSpec {
    pub fn describe(&self) -> String {
        match &self.family {
            Some(f) if self.params.is_empty() => f.clone(),
            Some(f) => format!("{f}{}", serde_json::to_string(&self.params).unwrap_or_default()),
            None => "expressions".into(),
        }
    }

    pub fn build(&self, grid: &BodyGrid) -> Result<FirstOrderPlacement> {
        let analytic = self.phi_bar.is_some() || self.phi_v.is_some() || self.t_v.is_some();
        let analytic = analytic || self.lc.is_some() || self.tc.is_some();
        match (&self.family, analytic) {
            (Some(_), true) => Err(Error::Scenario("placement mixes a family with field expressions".into())),
            (Some(name), false) => builtin_placement(name, &self.params, grid),
            (None, _) => {
                if !self.params.is_empty() {
                    return Err(Error::Scenario("placement.params needs placement.family".into()));
                }
                self.build_fields(grid)
            }
        }
    }

    fn build_fields(&self, grid: &BodyGrid) -> Result<FirstOrderPlacement> {
        let n = grid.dim();
        let parse = |what: &str, texts: &[String], len: usize| -> Result<Vec<Expr>> {
            if texts.len() != len {
                return Err(Error::Scenario(format!("{what} needs {len} entries, found {}", texts.len())));
            }
            texts
                .iter()
                .map(|t| {
                    let e = parse_expression(t)?;
                    if e.arity() > n {
                        return Err(Error::Scenario(format!("{what}: '{t}' uses X{} on a {n}-dimensional body", e.arity())));
                    }
                    Ok(e)
                })
                .collect()
        };
        let matrix = |what: &str, rows: &[Vec<String>], cols: usize| -> Result<Vec<Expr>> {
            if rows.len() != 3 {
                return Err(Error::Scenario(format!("{what} needs 3 rows, found {}", rows.len())));
            }
            Ok(rows.iter().map(|r| parse(what, r, cols)).collect::<Result<Vec<_>>>()?.concat())
        };
        let phi_bar = parse("phi_bar", self.phi_bar.as_deref().ok_or_else(|| missing("phi_bar"))?, 3)?;
        let phi_v = matrix("phi_v", self.phi_v.as_deref().ok_or_else(|| missing("phi_v"))?, 3)?;
        let zeros = vec!["0".to_string(); 3];
        let t_v = parse("t_v", self.t_v.as_deref().unwrap_or(&zeros), 3)?;
        let tc = self.tc.as_deref().map(|rows| matrix("Tc", rows, n)).transpose()?;
        let lc = match &self.lc {
            None => None,
            Some(m) if m.len() == n => Some(m.iter().map(|rows| matrix("Lc", rows, 3)).collect::<Result<Vec<_>>>()?),
            Some(m) => return Err(Error::Scenario(format!("Lc needs {n} matrices, found {}", m.len()))),
        };

        let eval = |es: &[Expr], x: &[f64]| -> Result<Vec<f64>> { es.iter().map(|e| e.eval(x)).collect() };
        let mut punctual = PunctualPlacement { phi_bar: vec![], phi_v: vec![], t_v: vec![] };
        for idx in 0..grid.len() {
            let x = grid.coords(idx);
            punctual.phi_bar.push(Vector3::from_vec(eval(&phi_bar, &x)?));
            punctual.phi_v.push(Matrix3::from_row_slice(&eval(&phi_v, &x)?));
            punctual.t_v.push(Vector3::from_vec(eval(&t_v, &x)?));
        }
        let mut f = holonomic_lift(grid, &punctual)?;
        for idx in 0..grid.len() {
            let x = grid.coords(idx);
            if let Some(tc) = &tc {
                f.blocks[idx].tc = DMatrix::from_row_slice(3, n, &eval(tc, &x)?);
            }
            if let Some(lc) = &lc {
                for (j, m) in lc.iter().enumerate() {
                    f.blocks[idx].lc[j] = Matrix3::from_row_slice(&eval(m, &x)?);
                }
            }
        }
        Ok(f)
    }
}

fn missing(what: &str) -> Error {
    Error::Scenario(format!("placement needs either family or {what}"))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    /// Export CSV fields; on unless set to `false`.
    pub fields: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub algebraic: f64,
    pub fd: f64,
    pub embed: f64,
    pub routes: f64,
    pub reference: f64,
    pub kernel_angle: f64,
    pub roundtrip: f64,
    pub minimality_change: f64,
    pub flat: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            algebraic: 1e-9,
            fd: 1e-6,
            embed: DEFAULT_EPS_EMBED,
            routes: 1e-10,
            reference: 1e-9,
            kernel_angle: 1e-7,
            roundtrip: 1e-9,
            minimality_change: 1e-3,
            flat: 1e-6,
        }
    }
}

impl Tolerances {
    /// Every acceptance bound multiplied by `s`; the embedding threshold and
    /// the minimal targeted change are lower bounds and stay as they are.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            algebraic: self.algebraic * s,
            fd: self.fd * s,
            embed: self.embed,
            routes: self.routes * s,
            reference: self.reference * s,
            kernel_angle: self.kernel_angle * s,
            roundtrip: self.roundtrip * s,
            minimality_change: self.minimality_change,
            flat: self.flat * s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunFlags {
    pub seed: Option<u64>,
    pub suites: Vec<String>,
    pub out: Option<PathBuf>,
    pub tol_scale: f64,
    pub allow_invalid: bool,
}

impl Default for RunFlags {
    fn default() -> Self {
        Self { seed: None, suites: vec![], out: None, tol_scale: 1.0, allow_invalid: false }
    }
}

/// Requested names expanded in canonical order; empty means all.
pub fn resolve_suites(names: &[String]) -> Result<Vec<&'static str>> {
    let mut want = [false; SUITES.len()];
    for name in names {
        if name == "all" {
            want = [true; SUITES.len()];
            continue;
        }
        let k = SUITES
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Scenario(format!("unknown suite '{name}'")))?;
        want[k] = true;
    }
    if names.is_empty() {
        want = [true; SUITES.len()];
    }
    Ok(SUITES.iter().zip(want).filter(|(_, w)| *w).map(|(s, _)| *s).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub dim: usize,
    pub counts: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub order: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Validation {
    pub acceptability: AcceptabilityReport,
    pub embedding_min_singular_value: f64,
    pub eps_embed: f64,
    pub embedding_pass: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub pass: bool,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        let dbg = format!("{e:?}");
        let kind = dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string();
        Self { kind, message: e.to_string() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub placement: Option<String>,
    pub seed: Option<u64>,
    pub tol_scale: f64,
    pub grid: Option<GridSummary>,
    pub tolerances: Option<Tolerances>,
    pub validation: Option<Validation>,
    pub suites: Vec<SuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    pub pass: bool,
    pub exit_code: i32,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: Report,
    pub out_dir: PathBuf,
}

/// Named field sampled at every node, entries in row-major order.
struct FieldExport {
    name: &'static str,
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn matrix_headers(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows).flat_map(|r| (0..cols).map(move |c| format!("{prefix}_{}{}", r + 1, c + 1))).collect()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect()
}

fn row_major3(m: &Matrix3<f64>) -> Vec<f64> {
    (0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect()
}

fn coeff_export(name: &'static str, prefix: &str, field: &[AffineCoeffs]) -> FieldExport {
    let n = field.first().map_or(0, |c| c.base_dim());
    let mut headers = matrix_headers(&format!("{prefix}0"), 3, n);
    for j in 0..n {
        headers.extend(matrix_headers(&format!("{prefix}{}", j + 1), 3, 3));
    }
    let rows = field
        .iter()
        .map(|c| {
            let mut v = row_major(&c.c0);
            c.c1.iter().for_each(|m| v.extend(row_major3(m)));
            v
        })
        .collect();
    FieldExport { name, headers, rows }
}

fn invariant_exports(f: &FirstOrderPlacement, q: &InvariantQuadruplet, amb: &AmbientSpace) -> Vec<FieldExport> {
    let n = f.grid().dim();
    vec![
        FieldExport {
            name: "Gbar",
            headers: matrix_headers("Gbar", n, n),
            rows: f.blocks.iter().map(|b| row_major(&cauchy_green(&b.fhh, amb))).collect(),
        },
        FieldExport {
            name: "Gvv",
            headers: matrix_headers("Gvv", 3, 3),
            rows: q.micro_metric.iter().map(row_major3).collect(),
        },
        coeff_export("Theta", "Theta", &q.solder.iter().map(|s| s.coeffs().clone()).collect::<Vec<_>>()),
        coeff_export("Gamma", "Gamma", &q.connection.iter().map(|c| c.0.clone()).collect::<Vec<_>>()),
        coeff_export("GammaHolo", "GammaHolo", &q.holonomic_connection.iter().map(|c| c.0.clone()).collect::<Vec<_>>()),
    ]
}

fn defect_export(grid: &BodyGrid, d: &DefectField) -> FieldExport {
    let mut rows = vec![vec![f64::NAN, f64::NAN]; grid.len()];
    for (k, &i) in d.nodes.iter().enumerate() {
        rows[i] = vec![d.curvature[k], d.dislocation[k]];
    }
    FieldExport { name: "defects", headers: vec!["curvature".into(), "dislocation".into()], rows }
}

fn write_fields(dir: &Path, grid: &BodyGrid, fields: &[FieldExport]) -> std::io::Result<()> {
    let dir = dir.join("fields");
    fs::create_dir_all(&dir)?;
    let n = grid.dim();
    for field in fields {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", field.name)))?;
        let mut header: Vec<String> = (1..=n).map(|a| format!("X{a}")).collect();
        header.extend(field.headers.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in field.rows.iter().enumerate() {
            let rec: Vec<String> = grid.coords(i).iter().chain(row).map(|v| v.to_string()).collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn max4(d: &[f64; 4]) -> Value {
    json!(INVARIANT_NAMES.iter().zip(d).map(|(k, v)| (k.to_string(), json!(v))).collect::<BTreeMap<_, _>>())
}

fn within(d: &[f64; 4], tol: &Tolerances) -> bool {
    d[..3].iter().all(|v| *v <= tol.algebraic) && d[3] <= tol.fd
}

struct Context<'a> {
    f: &'a FirstOrderPlacement,
    amb: AmbientSpace,
    seed: u64,
    tol: Tolerances,
    validation: &'a Validation,
}

fn run_suite(name: &str, cx: &Context<'_>, exports: &mut Vec<FieldExport>) -> Result<SuiteReport> {
    let tol = &cx.tol;
    let (pass, details) = match name {
        "validate" => (cx.validation.pass, serde_json::to_value(cx.validation).expect("plain data")),
        "pullback" => {
            let c = pullback_checks(cx.f, &cx.amb, cx.seed)?;
            let pass = c.connection_routes <= tol.routes
                && c.pseudo_metric_routes <= tol.routes
                && c.reference_change <= tol.reference
                && c.kernel_dim_failures == 0
                && c.kernel_angle <= tol.kernel_angle
                && c.roundtrip <= tol.roundtrip
                && c.macro_metric <= tol.routes;
            (pass, serde_json::to_value(&c).expect("plain data"))
        }
        "invariance" => {
            let d = frame_invariance_deviation(cx.f, INVARIANCE_SAMPLES, cx.seed)?;
            let comps = d.components();
            (within(&comps, tol), json!({ "samples": INVARIANCE_SAMPLES, "deviation": max4(&comps) }))
        }
        "minimality" => {
            let mut pass = true;
            let mut out = BTreeMap::new();
            for target in MinimalityTarget::ALL {
                let d = orbit_deviation(cx.f, &minimality_counterexample(cx.f, target))?;
                let k = target.component();
                let mut others = d;
                others[k] = 0.0;
                let ok = d[k] >= tol.minimality_change && within(&others, tol);
                pass &= ok;
                out.insert(target.name().to_string(), json!({ "deviation": max4(&d), "pass": ok }));
            }
            (pass, json!(out))
        }
        "holonomy" => {
            let grid = cx.f.grid();
            if grid.dim() < 2 {
                (true, json!({ "skipped": "one-dimensional body has no loops" }))
            } else {
                let side = 4.0 * grid.spacing().iter().cloned().fold(0.0, f64::max);
                let d = defect_density_field(cx.f, side)?;
                let curv = d.curvature.iter().cloned().fold(0.0, f64::max);
                let disl = d.dislocation.iter().cloned().fold(0.0, f64::max);
                let finite = curv.is_finite() && disl.is_finite();
                exports.push(defect_export(grid, &d));
                let details = json!({
                    "loop_side": side,
                    "nodes": d.nodes.len(),
                    "max_curvature_density": curv,
                    "max_dislocation_density": disl,
                    "flat_material_connection": curv <= tol.flat,
                });
                (finite, details)
            }
        }
        other => return Err(Error::Scenario(format!("unknown suite '{other}'"))),
    };
    Ok(SuiteReport { name: name.to_string(), pass, details })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))
}

fn empty_report(tol_scale: f64) -> Report {
    Report {
        placement: None,
        seed: None,
        tol_scale,
        grid: None,
        tolerances: None,
        validation: None,
        suites: vec![],
        error: None,
        pass: false,
        exit_code: EXIT_INVALID,
    }
}

fn execute(scenario: &Scenario, flags: &RunFlags, report: &mut Report, out_dir: &Path) -> Result<i32> {
    let seed = flags.seed.unwrap_or(scenario.seed);
    report.seed = Some(seed);
    report.placement = Some(scenario.placement.describe());
    let names = if flags.suites.is_empty() { &scenario.suites } else { &flags.suites };
    let suites = resolve_suites(names)?;
    if !(flags.tol_scale.is_finite() && flags.tol_scale > 0.0) {
        return Err(Error::Scenario(format!("tolerance scale {} must be positive", flags.tol_scale)));
    }
    let tol = scenario.tolerances.scaled(flags.tol_scale);
    report.tolerances = Some(tol);
    let grid = scenario.grid.build()?;
    report.grid = Some(GridSummary {
        dim: grid.dim(),
        counts: grid.counts().to_vec(),
        origin: grid.origin().to_vec(),
        spacing: grid.spacing().to_vec(),
        order: grid.order().as_int(),
    });
    let f = scenario.placement.build(&grid)?;

    let acceptability = validate_physically_acceptable(&f);
    let embedding = validate_embedding(&f, tol.embed);
    let validation = Validation {
        pass: acceptability.pass && embedding.pass,
        acceptability,
        embedding_min_singular_value: embedding.min_interior,
        eps_embed: embedding.eps_embed,
        embedding_pass: embedding.pass,
    };
    report.validation = Some(validation.clone());
    let mut exports = vec![FieldExport {
        name: "embedding",
        headers: vec!["min_singular_value".into()],
        rows: embedding.min_singular_value.iter().map(|v| vec![*v]).collect(),
    }];
    let write = scenario.output.fields.unwrap_or(true);
    if !validation.embedding_pass {
        if write {
            write_fields(out_dir, &grid, &exports).map_err(|e| Error::Scenario(e.to_string()))?;
        }
        return Err(Error::InadmissibleParams(format!(
            "placement is not an embedding: minimal singular value {:e} below {:e}",
            embedding.min_interior, tol.embed
        )));
    }
    if !validation.pass && !flags.allow_invalid {
        return Err(Error::InadmissibleParams("placement is not physically acceptable".into()));
    }

    let amb = AmbientSpace::default();
    exports.extend(invariant_exports(&f, &principal_invariants(&f)?, &amb));
    let cx = Context { f: &f, amb, seed, tol, validation: &validation };
    for name in suites {
        let r = run_suite(name, &cx, &mut exports)?;
        report.suites.push(r);
    }
    if write {
        write_fields(out_dir, &grid, &exports).map_err(|e| Error::Scenario(e.to_string()))?;
    }
    report.pass = report.suites.iter().all(|s| s.pass);
    Ok(if report.pass { EXIT_PASS } else { EXIT_FAIL })
}

/// Runs the scenario at `path`, writes `report.json` and field exports, and
/// returns the process exit code with the report.
pub fn run_scenario(path: &Path, flags: &RunFlags) -> RunOutcome {
    let mut report = empty_report(flags.tol_scale);
    let scenario = load_scenario(path);
    let out_dir = flags
        .out
        .clone()
        .or_else(|| scenario.as_ref().ok().and_then(|s| s.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let result = fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Scenario(format!("{}: {e}", out_dir.display())))
        .and_then(|_| scenario.and_then(|s| execute(&s, flags, &mut report, &out_dir)));
    report.exit_code = match result {
        Ok(code) => code,
        Err(e) => {
            report.error = Some(ErrorInfo::from(&e));
            report.pass = false;
            EXIT_INVALID
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = fs::write(out_dir.join("report.json"), text + "\n") {
        report.error.get_or_insert(ErrorInfo { kind: "Io".into(), message: e.to_string() });
        report.exit_code = EXIT_INVALID;
    }
    RunOutcome { exit_code: report.exit_code, report, out_dir }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_resolve_in_order() {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(resolve_suites(&[]).unwrap(), SUITES.to_vec());
        assert_eq!(resolve_suites(&names(&["holonomy", "validate", "holonomy"])).unwrap(), vec!["validate", "holonomy"]);
        assert_eq!(resolve_suites(&names(&["all"])).unwrap(), SUITES.to_vec());
        assert!(resolve_suites(&names(&["nope"])).is_err());
    }

    #[test]
    fn grid_spec_defaults() {
        let g: GridSpec = serde_json::from_str("{}").unwrap();
        let b = g.build().unwrap();
        assert_eq!(b.counts(), &[17, 17, 17]);
        assert!((b.spacing()[0] - 1.0 / 16.0).abs() < 1e-15);
        let g: GridSpec = serde_json::from_str(r#"{"dim": 2, "count": [5, 9], "extent": [2.0, 1.0]}"#).unwrap();
        assert_eq!(g.build().unwrap().spacing(), &[0.5, 0.125]);
        assert!(serde_json::from_str::<GridSpec>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn expression_placement_matches_builtin() {
        let grid = BodyGrid::unit_cube(3, 9, FdOrder::Fourth).unwrap();
        let spec: PlacementSpec = serde_json::from_str(
            r#"{"phi_bar": ["X1 + 0.3*X2", "X2", "X3"],
                "phi_v": [["1","0","0"],["0","1","0"],["0","0","1"]]}"#,
        )
        .unwrap();
        let f = spec.build(&grid).unwrap();
        let g = builtin_placement("SHEAR", &BTreeMap::new(), &grid).unwrap();
        for (a, b) in f.blocks.iter().zip(&g.blocks) {
            assert!((&a.fhh - &b.fhh).amax() < 1e-12);
            assert!((&a.tc - &b.tc).amax() < 1e-12);
        }
    }

    #[test]
    fn expression_placement_errors() {
        let grid = BodyGrid::unit_cube(2, 5, FdOrder::Second).unwrap();
        let bad = |text: &str| serde_json::from_str::<PlacementSpec>(text).unwrap().build(&grid);
        assert!(matches!(bad(r#"{"phi_bar": ["X1", "X2", "X3"], "phi_v": [["1","0","0"],["0","1","0"],["0","0","1"]]}"#), Err(Error::Scenario(_))));
        assert!(matches!(bad(r#"{"phi_bar": ["X1 +", "X2", "0"], "phi_v": [["1","0","0"],["0","1","0"],["0","0","1"]]}"#), Err(Error::Syntax { .. })));
        assert!(matches!(bad(r#"{"phi_bar": ["X1", "X2"]}"#), Err(Error::Scenario(_))));
        assert!(matches!(bad(r#"{"family": "SHEAR", "phi_bar": ["X1", "X2", "0"]}"#), Err(Error::Scenario(_))));
    }
}
