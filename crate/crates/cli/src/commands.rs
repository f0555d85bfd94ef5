use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use cocycle_spectra::exact::{format_rational, parse_rational};
use cocycle_spectra::grassmann_dynamics::{dirac_convergence_experiment, CocycleSource};
use cocycle_spectra::holonomy::{stable_holonomy, unstable_holonomy, HolonomyMap};
use cocycle_spectra::hyperplane_combinatorics::{self as hc, ExponentTuple};
use cocycle_spectra::lyapunov::{estimate_spectrum, verify_inducing_rescale, EstimatorConfig, ZorichOrbit};
use cocycle_spectra::rauzy_zorich::{write_orbit_csv, zorich_orbit, PermutationPair, SimplexPoint};
use cocycle_spectra::shift_space::{build_induced, induce_cocycle};
use cocycle_spectra::simplicity::{check_simple_spec, SimplicityOptions, DEFAULT_ZERO_TOL};
use cocycle_spectra::{CocycleSpec, Error, RandomSource};

use crate::report::{matrix_json, num, CommandResult, Outcome};
use crate::Global;

pub type Run = anyhow::Result<(Value, CommandResult)>;

fn load_spec(path: &Path) -> anyhow::Result<CocycleSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CocycleSpec::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn estimator(g: &Global, default_iters: u64) -> EstimatorConfig {
    EstimatorConfig::new(g.iters.unwrap_or(default_iters)).with_renorm(g.renorm)
}

#[derive(Args, Debug, Serialize)]
pub struct SimplicityArgs {
    /// Cocycle spec (JSON) with periodic_point and homoclinic_point.
    pub spec: PathBuf,
}

pub fn simplicity(g: &Global, a: &SimplicityArgs) -> Run {
    let spec = load_spec(&a.spec)?;
    let opts = SimplicityOptions {
        exact: g.exact_mode(),
        zero_tol: g.tol.unwrap_or(DEFAULT_ZERO_TOL),
        ..SimplicityOptions::default()
    };
    let v = check_simple_spec(&spec, opts)?;
    let table = vec![
        vec!["check".into(), "ok".into(), "value".into()],
        vec!["pinching".into(), v.pinching.ok.to_string(), num(v.pinching.gap)],
        vec!["twisting".into(), v.twisting.ok.to_string(), num(v.twisting.smallest_minor)],
        vec!["simple".into(), v.simple.to_string(), String::new()],
    ];
    let mut result = v.to_json();
    result["exact"] = json!(v.twisting.exact && v.pinching.exact);
    result["dim"] = json!(spec.dim());
    let effective = json!({ "exact": opts.exact, "zero_tol": opts.zero_tol, "rel_gap_tol": opts.rel_gap_tol });
    Ok((
        effective,
        CommandResult {
            outcome: if v.simple { Outcome::Success } else { Outcome::Failed },
            result,
            table,
        },
    ))
}

#[derive(Args, Debug, Serialize)]
pub struct ZorichArgs {
    /// Number of intervals; the reversal pair is used unless --top/--bottom are given.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, value_delimiter = ',', requires = "bottom")]
    pub top: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', requires = "top")]
    pub bottom: Option<Vec<usize>>,
    /// Estimate on all of R^d instead of the range of Ω.
    #[arg(long)]
    pub full: bool,
    /// Fresh starting points tried after a length tie.
    #[arg(long, default_value_t = 3)]
    pub retries: u64,
    /// Cap on Rauzy steps grouped into one Zorich step.
    #[arg(long, default_value_t = u64::MAX)]
    pub cap: u64,
    /// Also write an orbit trace (step, type, n, log_norm_z, lambdas) here.
    #[arg(long)]
    pub orbit_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub orbit_steps: u64,
}

pub fn zorich(g: &Global, a: &ZorichArgs) -> Run {
    let pair = match (&a.top, &a.bottom) {
        (Some(t), Some(b)) => PermutationPair::new(t.clone(), b.clone())?,
        _ => PermutationPair::reversal(a.d)?,
    };
    let cfg = estimator(g, 100_000);
    let sigmas = 3.0;
    let abs_tol = g.tol.unwrap_or(1e-9);
    let mut attempt = 0;
    let est = loop {
        let mut orbit = ZorichOrbit::random(pair.clone(), RandomSource::new(g.seed, attempt), !a.full, a.cap);
        match estimate_spectrum(&mut orbit, &cfg) {
            Err(Error::Precondition(msg)) if msg.contains("tie") && attempt < a.retries => attempt += 1,
            other => break other?,
        }
    };
    let k = est.len();
    let gaps: Vec<Value> = (0..k.saturating_sub(1))
        .map(|i| {
            let (v, se) = est.gap(i);
            json!({ "i": i + 1, "gap": v, "se": se, "separated": v > sigmas * se })
        })
        .collect();
    let half = k / 2;
    let positive = half > 0 && est.exponents[half - 1] > sigmas * est.standard_errors[half - 1];
    let mut table = vec![vec!["index".into(), "exponent".into(), "se".into(), "gap".into(), "gap_se".into()]];
    for i in 0..k {
        let (gv, gs) = if i + 1 < k { est.gap(i) } else { (f64::NAN, f64::NAN) };
        table.push(vec![
            (i + 1).to_string(),
            num(est.exponents[i]),
            num(est.standard_errors[i]),
            num(gv),
            num(gs),
        ]);
    }
    if let Some(path) = &a.orbit_csv {
        let lam = SimplexPoint::random_float(&mut RandomSource::new(g.seed, attempt).substream(1).rng(), pair.d());
        let recs = zorich_orbit(&pair, &lam, a.orbit_steps, a.cap)?;
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_orbit_csv(&recs, pair.d(), f)?;
    }
    let result = json!({
        "pair": { "top": pair.top(), "bottom": pair.bottom() },
        "restricted": !a.full,
        "spectrum": est.to_json(),
        "symmetric": est.is_symmetric(sigmas, abs_tol),
        "middle_exponent_positive": positive,
        "gap_table": gaps,
        "attempts": attempt + 1,
    });
    let effective = json!({ "estimator": cfg, "sigmas": sigmas, "abs_tol": abs_tol });
    Ok((
        effective,
        CommandResult {
            outcome: Outcome::Success,
            result,
            table,
        },
    ))
}

#[derive(Args, Debug, Serialize)]
pub struct DiracArgs {
    /// Cocycle spec (JSON).
    #[arg(long, required_unless_present = "zorich_d", conflicts_with = "zorich_d")]
    pub spec: Option<PathBuf>,
    /// Use the reversal Zorich cocycle on d intervals instead of a spec.
    #[arg(long)]
    pub zorich_d: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub ell: usize,
    /// Backward orbit length.
    #[arg(long, default_value_t = 200)]
    pub length: usize,
    /// Atoms of the initial empirical measure.
    #[arg(long, default_value_t = 64)]
    pub atoms: usize,
}

pub fn dirac(g: &Global, a: &DiracArgs) -> Run {
    let spec = a.spec.as_deref().map(load_spec).transpose()?;
    let source = match (&spec, a.zorich_d) {
        (Some(s), _) => CocycleSource::Spec(s),
        (None, Some(d)) => CocycleSource::Zorich(PermutationPair::reversal(d)?),
        (None, None) => bail!("either --spec or --zorich-d is required"),
    };
    let tol = g.tol.unwrap_or(1e-6);
    let trace = dirac_convergence_experiment(&source, a.ell, a.length, a.atoms, RandomSource::new(g.seed, 0))?;
    let fin = trace.final_dispersion();
    let converged = fin < tol;
    let location = trace.dirac_location().map(|p| {
        p.plucker()
            .coeffs()
            .iter()
            .map(|z| json!([z.re, z.im]))
            .collect::<Vec<_>>()
    });
    let mut table = vec![vec![
        "step".into(),
        "dispersion".into(),
        "log_eccentricity".into(),
        "fs_increment".into(),
    ]];
    for r in &trace.rows {
        table.push(vec![r.step.to_string(), num(r.dispersion), num(r.log_eccentricity), num(r.fs_increment)]);
    }
    let result = json!({
        "final_dispersion": fin,
        "converged": converged,
        "conclusion": if converged { "converges to a Dirac measure" } else { "no convergence" },
        "dirac_location": location,
        "final_log_eccentricity": trace.rows.last().map(|r| r.log_eccentricity),
        "dim": source.dim(),
    });
    Ok((
        json!({ "tol": tol }),
        CommandResult {
            outcome: Outcome::Success,
            result,
            table,
        },
    ))
}

#[derive(Args, Debug, Serialize)]
pub struct VandermondeArgs {
    /// Strictly increasing exponents, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m: Vec<u32>,
    /// Points, comma separated ("p/q" allowed in exact mode).
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub x: Vec<String>,
}

pub fn vandermonde(g: &Global, a: &VandermondeArgs) -> Run {
    let m = ExponentTuple::new(a.m.clone())?;
    let (result, row) = if g.exact_mode() {
        let x = a.x.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>()?;
        let r = hc::vandermonde_exact(&m, &x)?;
        let schur = r.schur_part.as_ref().map(format_rational);
        (
            json!({
                "det": format_rational(&r.det),
                "product_part": format_rational(&r.product_part),
                "schur_part": schur,
                "exact": true,
            }),
            vec![format_rational(&r.det), format_rational(&r.product_part), schur.unwrap_or_default()],
        )
    } else {
        let x = a
            .x
            .iter()
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("not a number: {s:?}")))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let r = hc::vandermonde(&m, &x)?;
        (
            json!({ "det": r.det, "product_part": r.product_part, "schur_part": r.schur_part, "exact": false }),
            vec![num(r.det), num(r.product_part), r.schur_part.map(num).unwrap_or_default()],
        )
    };
    let table = vec![vec!["det".into(), "product_part".into(), "schur_part".into()], row];
    Ok((
        json!({ "exact": g.exact_mode() }),
        CommandResult {
            outcome: Outcome::Success,
            result,
            table,
        },
    ))
}

#[derive(Args, Debug, Serialize)]
pub struct InduceArgs {
    /// Locally constant cocycle spec (JSON).
    pub spec: PathBuf,
    /// Base cylinder word, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub base: Vec<u32>,
    /// Longest first-return word enumerated.
    #[arg(long, default_value_t = 40)]
    pub max_return: usize,
}

pub fn induce(g: &Global, a: &InduceArgs) -> Run {
    let spec = load_spec(&a.spec)?;
    let system = build_induced(spec.measure(), &a.base, a.max_return)?;
    let induced = induce_cocycle(&spec, &system)?;
    let cfg = estimator(g, 100_000);
    let rep = verify_inducing_rescale(&spec, &induced, &system, &cfg, RandomSource::new(g.seed, 0))?;
    let ok = rep.rescale_ok && rep.kac_ok;
    let mut table = vec![vec![
        "index".into(),
        "base".into(),
        "base_se".into(),
        "induced".into(),
        "induced_se".into(),
        "expected".into(),
        "z".into(),
    ]];
    for i in 0..rep.expected.len() {
        table.push(vec![
            (i + 1).to_string(),
            num(rep.base.exponents[i]),
            num(rep.base.standard_errors[i]),
            num(rep.induced.exponents[i]),
            num(rep.induced.standard_errors[i]),
            num(rep.expected[i]),
            num(rep.z_scores[i]),
        ]);
    }
    let result = json!({
        "base_word": system.base,
        "base_mass": rep.base_mass,
        "captured_mass": system.captured_mass,
        "return_words": system.return_words.len(),
        "truncated": system.truncated,
        "enumerated_mean_return_time": system.mean_return_time(),
        "base_spectrum": rep.base.to_json(),
        "induced_spectrum": rep.induced.to_json(),
        "expected": rep.expected,
        "z_scores": rep.z_scores,
        "rescale_ok": rep.rescale_ok,
        "mean_return_time": rep.mean_return_time,
        "kac": rep.kac,
        "kac_ok": rep.kac_ok,
        "inconclusive": rep.inconclusive,
    });
    Ok((
        json!({ "estimator": cfg }),
        CommandResult {
            outcome: if ok || rep.inconclusive { Outcome::Success } else { Outcome::Failed },
            result,
            table,
        },
    ))
}

#[derive(Args, Debug, Serialize)]
pub struct HolonomyArgs {
    /// Cocycle spec (JSON) with periodic_point and homoclinic_point.
    pub spec: PathBuf,
    /// Iteration cap for each limit.
    #[arg(long, default_value_t = 10_000)]
    pub cap: usize,
}

fn holonomy_json(h: &HolonomyMap) -> Value {
    json!({
        "matrix": matrix_json(&h.matrix),
        "residual": h.residual,
        "iterations": h.iterations_used,
        "fitted_ratio": h.fitted_ratio(),
        "increments": h.increments,
    })
}

/// Stable holonomy from f^l(z) to p and unstable holonomy from p to z, for
/// the spec's periodic point p and homoclinic point z.
pub fn holonomy(g: &Global, a: &HolonomyArgs) -> Run {
    let spec = load_spec(&a.spec)?;
    let tol = g.tol.unwrap_or(1e-12);
    let p = spec.periodic_point().context("spec has no periodic_point")?;
    let (z, l) = spec.homoclinic_point().context("spec has no homoclinic_point")?;
    let fz = z.shift(l as i64);
    let mut table = vec![vec!["direction".into(), "step".into(), "increment".into()]];
    let mut result = json!({ "locally_constant": spec.is_locally_constant() });
    let mut outcome = Outcome::Success;
    for (name, h) in [
        ("stable", stable_holonomy(&spec, &fz, &p, tol, a.cap)),
        ("unstable", unstable_holonomy(&spec, &p, &z, tol, a.cap)),
    ] {
        match h {
            Ok(h) => {
                for (i, inc) in h.increments.iter().enumerate() {
                    table.push(vec![name.into(), (i + 1).to_string(), num(*inc)]);
                }
                result[name] = holonomy_json(&h);
            }
            Err(Error::HolonomyDiverged { increments }) => {
                outcome = Outcome::Failed;
                result[name] = json!({ "diverged": true, "increments": increments });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((
        json!({ "tol": tol, "cap": a.cap }),
        CommandResult { outcome, result, table },
    ))
}
