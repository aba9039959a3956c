//! Command-line front end: configuration merge, subcommand dispatch and
//! JSON/CSV artifact emission.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bethe::{self, find_all_solutions};
use crate::config::{Cx, RunConfig};
use crate::correlators::{self, Method, ScalarProductSpec};
use crate::density;
use crate::ed_oracle;
use crate::error::{Error, Result};
use crate::model::{c64, ModelParams, C64, POLE_TOL};
use crate::nlie::solve_nlie;
use crate::verify;

pub const JSON_SCHEMA: &str = "openxxz-json/1";
pub const CSV_SCHEMA: &str = "openxxz-csv/1";
pub const CSV_COLUMNS: &str = "re(z),im(z),re(f),im(f)";

#[derive(Parser, Debug, Clone)]
#[command(name = "openxxz", version, about = "Open XXZ chain: Bethe roots, NLIE, density and correlators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// TOML run configuration; flags below override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Chain length (even).
    #[arg(long = "L", global = true)]
    pub l: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Boundary parameter as "re+imi".
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub xi_plus: Option<Cx>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub xi_minus: Option<Cx>,
    /// ed_brute, finite_sum, multiple_integral or thermo_limit.
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// Largest step of the homogeneous-limit regularization.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// NLIE iteration tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Exact diagonalization: S^z = 0 spectrum and magnetization profile.
    Ed,
    /// Bethe roots and hole-type solutions.
    Bethe,
    /// Auxiliary function on the contour.
    Nlie,
    /// Density function G on the contour for m points ν in the strip.
    Density,
    /// Determinant scalar product against operator contraction.
    ScalarProduct,
    /// Generating function ⟨Q_m(φ)⟩ and optionally the magnetization profile.
    Qgen {
        /// Also compute ⟨σ^z_m⟩ site by site.
        #[arg(long)]
        profile: bool,
    },
    /// Run the self-verification suite.
    Verify {
        #[arg(long, default_value = "full")]
        level: verify::Level,
        /// Restrict to these criteria (repeatable).
        #[arg(long)]
        criterion: Vec<u8>,
    },
    /// Roots and holes along a sweep of Im ξ⁻.
    Rootscan {
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

/// Config file (or defaults) with flag overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let o = &cli.overrides;
    let mut c = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = o.l {
        c.model.l = v;
    }
    if let Some(v) = o.gamma {
        c.model.gamma = v;
    }
    if let Some(v) = o.xi_plus {
        c.model.xi_plus = v;
    }
    if let Some(v) = o.xi_minus {
        c.model.xi_minus = v;
    }
    if let Some(v) = &o.method {
        c.qgen.method = v.clone();
    }
    if let Some(v) = o.m {
        c.qgen.m = v;
    }
    if let Some(v) = o.phi {
        c.qgen.phi = v;
    }
    if let Some(v) = o.delta {
        c.solver.delta = Some(v);
    }
    if let Some(v) = o.tol {
        c.solver.tol = v;
    }
    if let Some(v) = &o.out {
        c.output.dir = v.to_string_lossy().into_owned();
    }
    match &cli.command {
        Command::Qgen { profile } => c.qgen.profile |= *profile,
        Command::Rootscan { from, to, steps } => {
            if let Some(v) = from {
                c.rootscan.from = *v;
            }
            if let Some(v) = to {
                c.rootscan.to = *v;
            }
            if let Some(v) = steps {
                c.rootscan.steps = *v;
            }
        }
        _ => {}
    }
    Ok(c)
}

/// One sampled function f(z).
pub struct Samples {
    pub name: String,
    pub rows: Vec<(C64, C64)>,
}

/// Emitted artifacts of a subcommand.
pub struct Artifacts {
    pub name: &'static str,
    pub result: Value,
    pub samples: Vec<Samples>,
}

fn tolerances(c: &RunConfig) -> Value {
    json!({
        "solver": c.solver,
        "pole_tol": POLE_TOL,
    })
}

/// The JSON document for `art`, byte-stable for a fixed config.
pub fn json_document(c: &RunConfig, art: &Artifacts) -> Result<String> {
    let doc = json!({
        "schema": JSON_SCHEMA,
        "subcommand": art.name,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": c.hash(),
        "config": c,
        "tolerances": tolerances(c),
        "result": art.result,
    });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Consistency(e.to_string()))
}

pub fn csv_document(c: &RunConfig, s: &Samples) -> String {
    let tol = serde_json::to_string(&tolerances(c)).unwrap_or_default();
    let mut out = format!(
        "# {CSV_SCHEMA} columns={CSV_COLUMNS} function={} config_hash={} tolerances={tol}\n{CSV_COLUMNS}\n",
        s.name,
        c.hash()
    );
    for (z, f) in &s.rows {
        out.push_str(&format!("{:e},{:e},{:e},{:e}\n", z.re, z.im, f.re, f.im));
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Writes `<name>.json` and `<name>_<function>.csv` into the output directory;
/// returns the JSON text.
pub fn emit(c: &RunConfig, art: &Artifacts) -> Result<String> {
    let dir = PathBuf::from(&c.output.dir);
    fs::create_dir_all(&dir)?;
    let doc = json_document(c, art)?;
    if c.output.json {
        write_file(&dir.join(format!("{}.json", art.name)), &doc)?;
    }
    if c.output.csv {
        for s in &art.samples {
            write_file(&dir.join(format!("{}_{}.csv", art.name, s.name)), &csv_document(c, s))?;
        }
    }
    Ok(doc)
}

/// Error record file written next to the artifacts on failure.
pub fn emit_error(dir: &Path, e: &Error) -> Result<String> {
    let text = serde_json::to_string_pretty(&e.record()).map_err(|x| Error::Consistency(x.to_string()))?;
    fs::create_dir_all(dir)?;
    write_file(&dir.join("error.json"), &text)?;
    Ok(text)
}

fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Consistency(e.to_string()))
}

/// ν points in the strip around η/2: ξ̄_1..ξ̄_n when the inhomogeneities
/// keep them distinct, otherwise η/2 + 0.1k.
fn strip_points(p: &ModelParams, n: usize) -> Vec<C64> {
    let xb = p.xi_bar(n);
    let distinct = (0..n).all(|a| (a + 1..n).all(|b| (xb[a] - xb[b]).norm() > 1e-8));
    if !p.is_homogeneous() && distinct {
        xb
    } else {
        (1..=n).map(|k| p.eta() / 2.0 + 0.1 * k as f64).collect()
    }
}

fn site(k: usize) -> C64 {
    c64(k as f64, 0.0)
}

// ---------------------------------------------------------------------------
// subcommands

pub fn cmd_ed(c: &RunConfig) -> Result<Artifacts> {
    let p = c.params()?;
    let g = ed_oracle::lowest_zero_mag_state(&p)?;
    let st = g
        .state
        .as_ref()
        .ok_or_else(|| Error::Consistency("ED ground state unavailable".into()))?;
    let prof = ed_oracle::sigma_z_profile(st, p.l);
    Ok(Artifacts {
        name: "ed",
        result: json!({ "ground": g, "sigma_z": prof }),
        samples: vec![Samples {
            name: "sigma_z".into(),
            rows: prof.iter().enumerate().map(|(k, v)| (site(k + 1), c64(*v, 0.0))).collect(),
        }],
    })
}

pub fn cmd_bethe(c: &RunConfig) -> Result<Artifacts> {
    let p = c.params()?;
    let sol = find_all_solutions(&p, None)?;
    let energy = bethe::ground_energy_from_roots(&sol, &p)?;
    let one_plus_a = |z: &C64| bethe::aux_eval(*z, &sol.roots, &p).map(|a| a + 1.0);
    let roots = sol.roots.iter().map(|z| Ok((*z, one_plus_a(z)?))).collect::<Result<Vec<_>>>()?;
    let holes = sol.holes.iter().map(|z| Ok((*z, one_plus_a(z)?))).collect::<Result<Vec<_>>>()?;
    let hole_res = bethe::hole_residual(&sol, &p);
    Ok(Artifacts {
        name: "bethe",
        result: json!({
            "roots": sol.roots,
            "holes": sol.holes,
            "region": sol.region,
            "max_residual": sol.max_residual,
            "hole_residual": hole_res,
            "energy": energy,
        }),
        samples: vec![
            Samples {
                name: "roots".into(),
                rows: roots,
            },
            Samples {
                name: "holes".into(),
                rows: holes,
            },
        ],
    })
}

pub fn cmd_nlie(c: &RunConfig) -> Result<Artifacts> {
    let p = c.params()?;
    let bs = find_all_solutions(&p, None).ok();
    let sol = solve_nlie(&p, &c.nlie_options(), bs.as_ref())?;
    let mut rows: Vec<(C64, C64)> = sol.upper_nodes().into_iter().zip(sol.upper.iter().copied()).collect();
    rows.extend(sol.lower_nodes().into_iter().zip(sol.lower.iter().copied()));
    Ok(Artifacts {
        name: "nlie",
        result: json!({
            "region": sol.region,
            "hole_positions": sol.hole_positions,
            "iterations": sol.iterations,
            "final_update_norm": sol.final_update_norm,
            "mirror_defect": sol.mirror_defect(),
            "spacing": sol.spacing(),
            "half_width": sol.half_width(),
            "cutoff": sol.contour.cutoff,
            "nodes_per_arm": sol.arm_x.len(),
            "bethe_hint": bs.is_some(),
        }),
        samples: vec![Samples {
            name: "log_a".into(),
            rows,
        }],
    })
}

pub fn cmd_density(c: &RunConfig) -> Result<Artifacts> {
    let p = c.params()?;
    let bs = find_all_solutions(&p, None).ok();
    let sol = solve_nlie(&p, &c.nlie_options(), bs.as_ref())?;
    let nus = strip_points(&p, c.qgen.m.max(1));
    let t = density::solve_g(&nus, &sol)?;
    let nodes = t.nodes();
    let samples = (0..nus.len())
        .map(|k| Samples {
            name: format!("G_{}", k + 1),
            rows: nodes.iter().copied().zip(t.values(k)).collect(),
        })
        .collect();
    Ok(Artifacts {
        name: "density",
        result: json!({
            "nu": nus,
            "residual": t.residual,
            "spacing": t.spacing,
            "half_width": t.half_width,
            "excluded": t.excluded,
        }),
        samples,
    })
}

pub fn cmd_scalar_product(c: &RunConfig) -> Result<Artifacts> {
    let p = c.params()?;
    let bs = find_all_solutions(&p, None)?;
    let lam = bs.roots.clone();
    let m = lam.len();
    let xb = strip_points(&p, m);
    // replace the first k roots by strip points, then one generic point
    let mut sets = vec![];
    for k in 0..=m {
        let mut mu = lam.clone();
        mu[..k].copy_from_slice(&xb[..k]);
        sets.push(mu);
    }
    if m > 0 {
        let mut mu = lam.clone();
        mu[0] = c64(0.3, 0.1);
        sets.push(mu);
    }
    let mut rows = vec![];
    let mut worst = 0.0f64;
    for mu in sets {
        let spec = ScalarProductSpec {
            lambda_set: lam.clone(),
            mu_set: mu.clone(),
        };
        let formula = correlators::normalized_scalar_product(&spec, &p)?;
        let oracle = if p.l <= ed_oracle::MAX_DENSE_L {
            Some(correlators::ed_scalar_product(&lam, &mu, &p)?)
        } else {
            None
        };
        let rel = oracle.map(|o| (formula - o).norm() / o.norm().max(1.0));
        if let Some(r) = rel {
            worst = worst.max(r);
        }
        rows.push(json!({ "mu": mu, "formula": formula, "oracle": oracle, "relative_error": rel }));
    }
    Ok(Artifacts {
        name: "scalar_product",
        result: json!({ "lambda": lam, "cases": rows, "max_relative_error": worst }),
        samples: vec![],
    })
}

pub fn cmd_qgen(c: &RunConfig) -> Result<Artifacts> {
    let p = c.params()?;
    let method = c.method()?;
    let o = c.correlator_options();
    let poly = correlators::generating_poly(method, c.qgen.m, &p, &o)?;
    let r = poly.result(c.qgen.phi);
    let mut samples = vec![];
    let mut result = json!({
        "m": r.m,
        "phi": r.phi,
        "value": r.value,
        "method": r.method,
        "quadrature_meta": r.quadrature_meta,
    });
    if c.qgen.profile {
        let m_max = match method {
            Method::EdBrute | Method::FiniteSum => None,
            _ => Some(c.qgen.m.clamp(1, 3)),
        };
        let prof = correlators::magnetization_profile(&p, method, m_max, &o)?;
        samples.push(Samples {
            name: "sigma_z".into(),
            rows: prof
                .sigma_z
                .iter()
                .enumerate()
                .map(|(k, v)| (site(k + 1), c64(*v, 0.0)))
                .collect(),
        });
        result["profile"] = to_json(&prof)?;
    }
    Ok(Artifacts {
        name: "qgen",
        result,
        samples,
    })
}

pub fn cmd_rootscan(c: &RunConfig) -> Result<Artifacts> {
    let base = c.params()?;
    let s = &c.rootscan;
    if s.steps < 1 {
        return Err(Error::invalid("steps", "need at least one step"));
    }
    let mut steps = vec![];
    let (mut roots, mut holes) = (vec![], vec![]);
    let mut guess: Option<Vec<C64>> = None;
    for k in 0..s.steps {
        let t = if s.steps == 1 {
            s.from
        } else {
            s.from + (s.to - s.from) * k as f64 / (s.steps - 1) as f64
        };
        let xi = c64(base.xi_minus.re, t);
        let p = ModelParams {
            xi_minus: xi,
            ..base.clone()
        };
        match p.clone().validate().and_then(|p| find_all_solutions(&p, guess.as_deref())) {
            Ok(sol) => {
                roots.extend(sol.roots.iter().map(|z| (*z, xi)));
                holes.extend(sol.holes.iter().map(|z| (*z, xi)));
                guess = Some(sol.roots.clone());
                steps.push(json!({
                    "xi_minus": Cx(xi),
                    "region": sol.region,
                    "roots": sol.roots,
                    "holes": sol.holes,
                    "max_residual": sol.max_residual,
                }));
            }
            Err(e) => {
                guess = None;
                steps.push(json!({ "xi_minus": Cx(xi), "error": e.record() }));
            }
        }
    }
    Ok(Artifacts {
        name: "rootscan",
        result: json!({ "steps": steps }),
        samples: vec![
            Samples {
                name: "roots".into(),
                rows: roots,
            },
            Samples {
                name: "holes".into(),
                rows: holes,
            },
        ],
    })
}

/// Runs the suite, printing one line per check; exit status 0 when every
/// gating check passes.
pub fn cmd_verify(level: verify::Level, only: &[u8]) -> Result<(Artifacts, bool)> {
    let report = verify::run(level, only, |s| {
        eprintln!("-- criterion {} ({}) {:.1}s", s.criterion, s.title, s.seconds);
        for ch in &s.checks {
            eprintln!("{}", ch.line());
        }
    });
    let ok = report.ok();
    // timings vary run to run and stay out of the JSON artifact
    let checks: Vec<Value> = report
        .checks()
        .filter(|ch| !ch.id.ends_with(".runtime"))
        .map(to_json)
        .collect::<Result<_>>()?;
    let runtime_ok = report
        .checks()
        .filter(|ch| ch.id.ends_with(".runtime"))
        .all(|ch| ch.pass);
    Ok((
        Artifacts {
            name: "verify",
            result: json!({
                "level": level,
                "checks": checks,
                "runtime_within_budget": runtime_ok,
                "known_unattainable": verify::KNOWN_UNATTAINABLE,
                "ok": ok,
            }),
            samples: vec![],
        },
        ok,
    ))
}

/// Dispatch; returns the process exit status.
pub fn run(cli: &Cli) -> Result<i32> {
    let c = resolve_config(cli)?;
    let (art, status) = match &cli.command {
        Command::Ed => (cmd_ed(&c)?, 0),
        Command::Bethe => (cmd_bethe(&c)?, 0),
        Command::Nlie => (cmd_nlie(&c)?, 0),
        Command::Density => (cmd_density(&c)?, 0),
        Command::ScalarProduct => (cmd_scalar_product(&c)?, 0),
        Command::Qgen { .. } => (cmd_qgen(&c)?, 0),
        Command::Rootscan { .. } => (cmd_rootscan(&c)?, 0),
        Command::Verify { level, criterion } => {
            let (a, ok) = cmd_verify(*level, criterion)?;
            (a, if ok { 0 } else { 1 })
        }
    };
    let doc = emit(&c, &art)?;
    println!("{doc}");
    Ok(status)
}

/// Caps the rayon pool from OPENXXZ_THREADS.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("OPENXXZ_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("OPENXXZ_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Config("OPENXXZ_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}
