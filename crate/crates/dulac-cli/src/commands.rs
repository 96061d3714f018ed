//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use dulac_core::extract::{
    extract_horn_maps, fatou_from_germ, roundtrip, Extraction, HornMapFit, TailModel,
};
use dulac_core::moduli::{check_symmetry, check_uniform_bounds, SymmetryReport};
use dulac_core::normal_form::{f0, f0_inverse, psi_nf, psi_nf_derivative, psi_nf_inverse, ModelGerm, ZGerm};
use dulac_core::realize::{iterate_fatou, recover_germ, run_report, RunReport};
use dulac_core::surface::petal_contains;
use dulac_core::{FormalClass, HornMapSequence, OrbitConfig, PetalId, RealizedGerm, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{resolve, FileConfig, Overrides, Resolved};
use crate::output::{complex_fields, csv_writer, fmt17, to_json, write_json};

/// A failed input check; exits with status 1.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ValidationError(msg.into()).into()
}

fn load_moduli(path: &Path) -> Result<HornMapSequence> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(HornMapSequence::from_json(&text)?)
}

fn moduli_path(flag: &Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| file.moduli.clone())
        .ok_or_else(|| invalid("no moduli file given (--moduli or `moduli` in the config)"))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `re` or `re,im`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| invalid(format!("bad number {p:?} in {s:?}")));
    match parts.as_slice() {
        [re] => Ok(C64::new(num(re)?, 0.0)),
        [re, im] => Ok(C64::new(num(re)?, num(im)?)),
        _ => Err(invalid(format!("complex value must be `re` or `re,im`, got {s:?}"))),
    }
}

/// Rectangular grid `x0:x1:nx,y0:y1:ny`.
pub fn parse_grid(s: &str) -> Result<Vec<C64>> {
    let axis = |a: &str| -> Result<Vec<f64>> {
        let p: Vec<&str> = a.split(':').map(str::trim).collect();
        let [lo, hi, n] = p.as_slice() else {
            return Err(invalid(format!("grid axis must be lo:hi:n, got {a:?}")));
        };
        let lo: f64 = lo.parse().map_err(|_| invalid(format!("bad grid bound {lo:?}")))?;
        let hi: f64 = hi.parse().map_err(|_| invalid(format!("bad grid bound {hi:?}")))?;
        let n: usize = n.parse().map_err(|_| invalid(format!("bad grid count {n:?}")))?;
        if n == 0 {
            return Err(invalid("grid counts must be positive"));
        }
        Ok((0..n)
            .map(|k| if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect())
    };
    let (xs, ys) = s
        .split_once(',')
        .ok_or_else(|| invalid(format!("grid must be x0:x1:nx,y0:y1:ny, got {s:?}")))?;
    let xs = axis(xs)?;
    let ys = axis(ys)?;
    Ok(ys.iter().flat_map(|&y| xs.iter().map(move |&x| C64::new(x, y))).collect())
}

/// Inputs and report of a realization, enough to rebuild the atlas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFile {
    pub moduli: serde_json::Value,
    pub params: Resolved,
    pub report: RunReport,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn rebuild(&self) -> Result<(HornMapSequence, RealizedGerm)> {
        let moduli = HornMapSequence::from_json(&self.moduli.to_string())?;
        let p = &self.params;
        let fatou = iterate_fatou(&moduli, p.class, p.domain, &p.iteration)?;
        Ok((moduli, recover_germ(fatou)))
    }
}

#[derive(Debug, Args)]
pub struct RealizeArgs {
    /// Moduli JSON file
    #[arg(long)]
    pub moduli: Option<PathBuf>,
    /// Reject moduli that are not symmetric
    #[arg(long)]
    pub require_symmetry: bool,
    /// Tolerance of the symmetry check
    #[arg(long, default_value_t = 1e-9)]
    pub symmetry_tol: f64,
    /// Skip the Gevrey verification
    #[arg(long)]
    pub no_gevrey: bool,
    /// Germ samples per petal row of germ.csv
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    /// Random displacement of the germ samples, as a fraction of their spacing
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Seed of the jitter
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Debug, Serialize)]
struct RealizeSummary<'a> {
    symmetry: &'a SymmetryReport,
    report: &'a RunReport,
    files: Vec<String>,
}

pub fn cmd_realize(args: &RealizeArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let mut params = resolve(&file, &args.common)?;
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    let path = moduli_path(&args.moduli, &file)?;
    let moduli = load_moduli(&path)?;
    let symmetry = check_symmetry(&moduli, args.symmetry_tol);
    if args.require_symmetry && !symmetry.symmetric {
        return Err(invalid(format!(
            "moduli are not symmetric (max deviation {:e}, partial window {:?})",
            symmetry.max_deviation, symmetry.partial_window
        )));
    }
    let fatou = iterate_fatou(&moduli, params.class, params.domain, &params.iteration)?;
    let germ = recover_germ(fatou);
    let gevrey = (!args.no_gevrey).then_some(&params.gevrey);
    let report = run_report(&germ, symmetry.symmetric, gevrey)?;

    prepare_out(&params.out)?;
    let run = RunFile {
        moduli: serde_json::from_str(&moduli.to_json())?,
        params: params.clone(),
        report: report.clone(),
    };
    let run_path = params.out.join("run.json");
    write_json(&run_path, &run)?;
    let atlas_path = params.out.join("atlas.csv");
    write_atlas_csv(&atlas_path, &germ, None)?;
    let germ_path = params.out.join("germ.csv");
    write_germ_csv(&germ_path, &germ, args.samples, args.jitter, params.seed)?;

    let summary = RealizeSummary {
        symmetry: &symmetry,
        report: &report,
        files: [run_path, atlas_path, germ_path]
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    print!("{}", to_json(&summary)?);
    Ok(())
}

/// Grid points of every big petal of the window.
fn petal_grids(germ: &RealizedGerm) -> Vec<(PetalId, C64)> {
    let f = &germ.fatou;
    f.big_petals()
        .into_iter()
        .flat_map(|p| f.grid.points(&f.domain, &f.class, p).into_iter().map(move |z| (p, z)))
        .collect()
}

/// Columns `petal, re_zeta, im_zeta, re_r, im_r`.
fn write_atlas_csv(path: &Path, germ: &RealizedGerm, points: Option<Vec<(PetalId, C64)>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["petal", "re_zeta", "im_zeta", "re_r", "im_r"])?;
    for (p, z) in points.unwrap_or_else(|| petal_grids(germ)) {
        let r = germ.fatou.r(p, z)?;
        let [zr, zi] = complex_fields(z);
        let [rr, ri] = complex_fields(r);
        w.write_record([p.to_string(), zr, zi, rr, ri])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `petal, re_zeta, im_zeta, re_f, im_f, re_f0, im_f0, abel_residual`.
fn write_germ_csv(path: &Path, germ: &RealizedGerm, samples: usize, jitter: f64, seed: u64) -> Result<()> {
    let f = &germ.fatou;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = csv_writer(path)?;
    w.write_record(["petal", "re_zeta", "im_zeta", "re_f", "im_f", "re_f0", "im_f0", "abel_residual"])?;
    let grid = dulac_core::realize::GridSpec {
        n_re: samples.max(1),
        ..f.grid
    };
    for p in f.big_petals() {
        let spacing = grid.width / grid.n_re as f64;
        for z in grid.points(&f.domain, &f.class, p) {
            let z = if jitter > 0.0 {
                let dx = rng.gen_range(-0.5..0.5) * jitter * spacing;
                let dy = rng.gen_range(-0.5..0.5) * jitter * spacing;
                let moved = z + C64::new(dx, dy);
                if petal_contains(&f.domain, p, moved, grid.margin) {
                    moved
                } else {
                    z
                }
            } else {
                z
            };
            let fz = germ.apply_on(p, z)?;
            let model = f0(&f.class, z)?;
            let abel = germ.abel_residual(p, z)?;
            let [zr, zi] = complex_fields(z);
            let [fr, fi] = complex_fields(fz);
            let [mr, mi] = complex_fields(model);
            w.write_record([p.to_string(), zr, zi, fr, fi, mr, mi, fmt17(abel)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    None,
    InverseZeta,
    Exponential,
}

impl From<TailArg> for TailModel {
    fn from(t: TailArg) -> Self {
        match t {
            TailArg::None => TailModel::None,
            TailArg::InverseZeta => TailModel::InverseZeta,
            TailArg::Exponential => TailModel::Exponential,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// `model` (the model germ) or `poly:a2,a3,…` for f(z) = z + a2 z² + a3 z³ + …
    #[arg(long, conflicts_with = "run")]
    pub germ: Option<String>,
    /// Extract from the germ realized in a saved run.json instead
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Horn-map window J
    #[arg(long, default_value_t = 1)]
    pub window: i32,
    /// Orbit iterations before the tail estimate
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stop orbits once a defect falls below this
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Orbit tail model
    #[arg(long, value_enum)]
    pub tail: Option<TailArg>,
    /// Degree of the recovered horn maps
    #[arg(long)]
    pub degree: Option<usize>,
    /// Points on the sampling circle
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sampling radius; chosen from the domain when absent
    #[arg(long)]
    pub radius: Option<f64>,
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Debug, Serialize)]
struct ExtractReport<'a> {
    fits: &'a [HornMapFit],
    moduli: serde_json::Value,
}

fn poly_germ(spec: &str) -> Result<Vec<f64>> {
    let coeffs = spec
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| invalid(format!("bad coefficient {c:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if coeffs.is_empty() {
        bail!(invalid("poly germ needs at least one coefficient"));
    }
    Ok(coeffs)
}

fn eval_poly(coeffs: &[f64], z: C64) -> C64 {
    // z + a2 z² + a3 z³ + …
    let mut acc = C64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        acc = (acc + a) * z;
    }
    z + acc * z
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let params = resolve(&file, &args.common)?;
    let mut horn = params.horn;
    if let Some(d) = args.degree {
        horn.degree = d;
    }
    if let Some(q) = args.samples {
        horn.samples = q;
    }
    if args.radius.is_some() {
        horn.radius = args.radius;
    }
    let orbit_for = |base: OrbitConfig| -> Result<OrbitConfig> {
        let mut o = params.orbit.unwrap_or(base);
        if let Some(n) = args.max_iter {
            o.max_iter = n;
        }
        if let Some(t) = args.threshold {
            o.threshold = t;
        }
        if let Some(t) = args.tail {
            o.tail = t.into();
        }
        o.validate()?;
        Ok(o)
    };
    let extraction: Extraction = match (&args.run, args.germ.as_deref()) {
        (Some(run), _) => {
            let run = RunFile::load(run)?;
            let (moduli, germ) = run.rebuild()?;
            let orbit = orbit_for(OrbitConfig::slow_decay())?;
            let fatou = &germ.fatou;
            extract_horn_maps(&germ, &fatou.class, &fatou.domain, moduli.window, &orbit, &horn)?
        }
        (None, Some("model") | None) => {
            let germ = ModelGerm(params.class);
            let orbit = orbit_for(OrbitConfig::default())?;
            extract_horn_maps(&germ, &params.class, &params.domain, args.window, &orbit, &horn)?
        }
        (None, Some(spec)) => {
            let Some(rest) = spec.strip_prefix("poly:") else {
                return Err(invalid(format!("germ must be `model` or `poly:a2,a3,…`, got {spec:?}")));
            };
            let coeffs = poly_germ(rest)?;
            let germ = ZGerm::new(move |z| eval_poly(&coeffs, z));
            let orbit = orbit_for(OrbitConfig::default())?;
            extract_horn_maps(&germ, &params.class, &params.domain, args.window, &orbit, &horn)?
        }
    };
    prepare_out(&params.out)?;
    let moduli_json: serde_json::Value = serde_json::from_str(&extraction.sequence.to_json())?;
    write_json(&params.out.join("extracted.json"), &moduli_json)?;
    let report = ExtractReport {
        fits: &extraction.fits,
        moduli: moduli_json,
    };
    write_json(&params.out.join("extract.json"), &report)?;
    print!("{}", to_json(&report)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    /// Moduli JSON file
    #[arg(long)]
    pub moduli: Option<PathBuf>,
    #[command(flatten)]
    pub common: Overrides,
}

pub fn cmd_roundtrip(args: &RoundtripArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let params = resolve(&file, &args.common)?;
    let moduli = load_moduli(&moduli_path(&args.moduli, &file)?)?;
    let report = roundtrip(&moduli, params.class, params.domain, &params.roundtrip())?;
    prepare_out(&params.out)?;
    write_json(&params.out.join("roundtrip.json"), &report)?;
    println!("{:>3} {:>6} {:>2} {:>25} {:>25} {:>24} {:>24}", "j", "which", "k", "input", "extracted", "abs_error", "rel_error");
    for e in &report.errors {
        let which = match e.which {
            dulac_core::Which::Zero => "zero",
            dulac_core::Which::Infty => "infty",
        };
        println!(
            "{:>3} {:>6} {:>2} {:>25} {:>25} {:>24} {:>24}",
            e.j,
            which,
            e.k,
            format!("{:.3e}{:+.3e}i", e.input.re, e.input.im),
            format!("{:.3e}{:+.3e}i", e.extracted.re, e.extracted.im),
            fmt17(e.abs_error),
            fmt17(e.rel_error)
        );
    }
    println!("equivalent: {}", report.equivalent);
    println!("max abs error: {}", fmt17(report.max_error));
    println!("max rel error: {}", fmt17(report.max_rel_error));
    println!("max raw cocycle error: {}", fmt17(report.max_raw_error));
    Ok(())
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Moduli JSON file
    pub moduli: PathBuf,
    /// Tolerance of the symmetry check
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Use the linear-domain radius bound (index |j| instead of √|j|)
    #[arg(long)]
    pub linear: bool,
    #[arg(long, default_value_t = 1.0)]
    pub k1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    valid: bool,
    symmetry: SymmetryReport,
    /// Suprema of `|h(t) − c₁t|/|t|²` and `|h'(t) − c₁|/|t|` over all maps.
    uniform_bounds: (f64, f64),
    radii_ok: bool,
    pass: bool,
}

pub fn cmd_verify_moduli(args: &VerifyArgs) -> Result<()> {
    let moduli = load_moduli(&args.moduli)?;
    let symmetry = check_symmetry(&moduli, args.tol);
    let bounds = check_uniform_bounds(&moduli);
    let radii_ok = moduli.check_radii(args.linear, args.k1, args.k, args.c);
    let report = VerifyReport {
        valid: true,
        pass: radii_ok && bounds.0.is_finite() && bounds.1.is_finite(),
        symmetry,
        uniform_bounds: bounds,
        radii_ok,
    };
    print!("{}", to_json(&report)?);
    if !report.pass {
        return Err(invalid("moduli fail the radius or bound checks"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModelEval {
    PsiNf,
    PsiNfDerivative,
    PsiNfInverse,
    F0,
    F0Inverse,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 0)]
    pub m: i32,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub rho: f64,
    /// Function to evaluate
    #[arg(long, value_enum, default_value = "psi_nf")]
    pub eval: ModelEval,
    /// Point `re` or `re,im`
    #[arg(long, allow_hyphen_values = true, conflicts_with = "grid")]
    pub zeta: Option<String>,
    /// Grid `x0:x1:nx,y0:y1:ny`; prints CSV `re_zeta,im_zeta,re,im`
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
}

fn model_eval(class: &FormalClass, which: ModelEval, z: C64) -> Result<C64> {
    Ok(match which {
        ModelEval::PsiNf => psi_nf(class, z),
        ModelEval::PsiNfDerivative => psi_nf_derivative(class, z),
        ModelEval::PsiNfInverse => {
            // leading term Ψ_nf ≈ e^ζ
            let seed = z.ln();
            psi_nf_inverse(class, z, C64::new(seed.re.max(1.0), seed.im))?
        }
        ModelEval::F0 => f0(class, z)?,
        ModelEval::F0Inverse => f0_inverse(class, z)?,
    })
}

pub fn cmd_model(args: &ModelArgs) -> Result<()> {
    let class = FormalClass::new(args.m, args.rho);
    match (&args.zeta, &args.grid) {
        (Some(z), _) => {
            let v = model_eval(&class, args.eval, parse_complex(z)?)?;
            println!("{} {}", fmt17(v.re), fmt17(v.im));
        }
        (None, Some(g)) => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["re_zeta", "im_zeta", "re", "im"])?;
            for z in parse_grid(g)? {
                let v = model_eval(&class, args.eval, z)?;
                let [zr, zi] = complex_fields(z);
                let [vr, vi] = complex_fields(v);
                w.write_record([zr, zi, vr, vi])?;
            }
            w.flush()?;
        }
        (None, None) => return Err(invalid("model needs --zeta or --grid")),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    /// Petal functions R on a grid
    Atlas,
    /// The germ f and the model f0 on a grid
    Germ,
    /// One orbit-sum trace of the realized germ
    Orbit,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Saved run.json from `realize`
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub what: ExportWhat,
    /// Petal, e.g. `plus:0`
    #[arg(long, default_value = "plus:0")]
    pub petal: String,
    /// Grid `x0:x1:nx,y0:y1:ny` for atlas and germ exports; the run grid by default
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Orbit start `re,im`
    #[arg(long, allow_hyphen_values = true)]
    pub zeta: Option<String>,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_export(args: &ExportArgs) -> Result<()> {
    let run = RunFile::load(&args.run)?;
    let petal: PetalId = args.petal.parse()?;
    let (_, germ) = run.rebuild()?;
    let points = |germ: &RealizedGerm| -> Result<Vec<(PetalId, C64)>> {
        Ok(match &args.grid {
            Some(g) => parse_grid(g)?.into_iter().map(|z| (petal, z)).collect(),
            None => {
                let f = &germ.fatou;
                f.grid.points(&f.domain, &f.class, petal).into_iter().map(|z| (petal, z)).collect()
            }
        })
    };
    match args.what {
        ExportWhat::Atlas => write_atlas_csv(&args.out, &germ, Some(points(&germ)?))?,
        ExportWhat::Germ => {
            let mut w = csv_writer(&args.out)?;
            w.write_record(["petal", "re_zeta", "im_zeta", "re_f", "im_f", "re_f0", "im_f0"])?;
            for (p, z) in points(&germ)? {
                let fz = germ.apply_on(p, z)?;
                let model = f0(&germ.fatou.class, z)?;
                let [zr, zi] = complex_fields(z);
                let [fr, fi] = complex_fields(fz);
                let [mr, mi] = complex_fields(model);
                w.write_record([p.to_string(), zr, zi, fr, fi, mr, mi])?;
            }
            w.flush()?;
        }
        ExportWhat::Orbit => {
            let zeta = parse_complex(
                args.zeta
                    .as_deref()
                    .ok_or_else(|| invalid("orbit export needs --zeta"))?,
            )?;
            let class = germ.fatou.class;
            let fatou = fatou_from_germ(&germ, class, petal, OrbitConfig::slow_decay())?;
            let trace = fatou.trace(zeta)?;
            let mut w = csv_writer(&args.out)?;
            w.write_record(["k", "re_zeta", "im_zeta", "re_defect", "im_defect", "re_partial", "im_partial"])?;
            for s in &trace.steps {
                let [zr, zi] = complex_fields(s.zeta);
                let [dr, di] = complex_fields(s.defect);
                let [pr, pi] = complex_fields(s.partial);
                w.write_record([s.k.to_string(), zr, zi, dr, di, pr, pi])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
