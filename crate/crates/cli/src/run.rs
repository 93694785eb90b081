//! Command execution. Every input is validated and every result computed
//! before the output directory is touched.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use transducer_core::Error;
use transducer_core::analysis::{find_peaks, fwhm_lobe, power_law_fit, spectrum_linecut};
use transducer_core::finite::{EmitterArray, FieldMap, ON_SITE_TOL, evaluate_field, solve_sites};
use transducer_core::io::{
    self, Assumed, Command, Config, CsvOut, MANIFEST_FILE, MANIFEST_FORMAT, NamedGrid, OutputFile,
    RunManifest, Series, fmt_f64,
};
use transducer_core::lattice::{Branch, Sense, find_critical_frequencies};
use transducer_core::selfenergy::SelfEnergyCache;
use transducer_core::smatrix::{
    Mixing, OutPolarization, Prepared, SweepParameter, efficiency_sweep, optimize_prepared,
};

pub struct Options {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub output: PathBuf,
    pub threads: Option<usize>,
    pub rwa: Option<bool>,
    pub zero_real_part: bool,
    pub eta: Option<f64>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
}

pub struct Outcome {
    pub row_errors: usize,
}

/// 2 for input errors, 3 for numerical failures, 4 for I/O, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(ce) = cause.downcast_ref::<Error>() {
            return match ce {
                Error::InvalidParameter(_) | Error::Config(_) | Error::PointOnEmitter { .. } => 2,
                Error::SingularSystem { .. } | Error::NonConvergence(_) => 3,
                Error::Io(_) => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    1
}

struct Table {
    name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

enum Product {
    Table(Table),
    Field { stem: String, map: FieldMap },
}

fn clean(msg: &str) -> String {
    msg.replace([',', '\n', '\r', '"'], ";")
}

fn resolve(cmd: Command, opts: &Options) -> Result<(Config, Option<String>, Vec<Assumed>)> {
    let (mut config, preset, assumed) = match (&opts.config, &opts.preset) {
        (Some(path), _) => {
            let l = io::load(path).with_context(|| format!("reading {}", path.display()))?;
            if let Some(c) = l.command
                && c != cmd
            {
                log::warn!(
                    "manifest was recorded for '{}', running '{}'",
                    c.name(),
                    cmd.name()
                );
            }
            (l.config, l.preset, l.assumed)
        }
        (None, Some(name)) => {
            let p = io::preset(name)?;
            (p.config, Some(p.name), p.assumed)
        }
        (None, None) => (Config::default(), None, Vec::new()),
    };
    if let Some(r) = opts.rwa {
        config.scenario.rwa = r;
    }
    if opts.zero_real_part {
        config.scenario.zero_real_part = true;
        for s in &mut config.series {
            s.zero_real_part = None;
        }
    }
    if let Some(eta) = opts.eta {
        config.scenario.eta = eta;
    }
    Ok((config, preset, assumed))
}

fn check_off_sites(arr: &EmitterArray, grids: &[NamedGrid]) -> Result<()> {
    for g in grids {
        for k in 0..g.grid.len() {
            let p = g.grid.point(k);
            for (i, s) in arr.positions().iter().enumerate() {
                let d2 = (p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2) + (p[2] - s[2]).powi(2);
                if d2.sqrt() <= ON_SITE_TOL {
                    return Err(Error::PointOnEmitter { index: i })
                        .with_context(|| format!("grid '{}' point {k} at {p:?}", g.name));
                }
            }
        }
    }
    Ok(())
}

fn single_scenario(cmd: Command, series: &[Series], config: &Config) -> Result<Series> {
    if !config.series.is_empty() {
        return Err(Error::Config(format!(
            "{} runs one scenario; remove the series list",
            cmd.name()
        ))
        .into());
    }
    Ok(series[0].clone())
}

fn unit_of(p: SweepParameter) -> &'static str {
    match p {
        SweepParameter::Omega => "omega[2pi/d]",
        SweepParameter::DeltaOmega => "delta_omega[2pi/d]",
        SweepParameter::MixingSquared => "abs_a_sq[1]",
        SweepParameter::Detuning => "detuning[2pi/d]",
        SweepParameter::ThetaDeg => "theta[deg]",
    }
}

fn sweep(config: &Config, series: &[Series], row_errors: &mut usize) -> Result<Vec<Product>> {
    let sw = config.sweep.as_ref().expect("validated");
    let grid = sw.grid()?;
    let filters = config.filters()?;
    let mut header = vec!["series".to_string(), unit_of(sw.parameter).to_string()];
    header.extend(["abs_a[1]", "efficiency_b[1]", "survival_a[1]"].map(String::from));
    header.extend(filters.iter().map(|f| format!("efficiency_{}[1]", f.name)));
    header.push("error".into());
    let mut t = Table {
        name: "sweep.csv".into(),
        header,
        rows: Vec::new(),
    };
    for s in series {
        let rows = efficiency_sweep(&s.scenario, sw.parameter, &grid, sw.optimize, &filters)?;
        for r in rows {
            let mut row = vec![
                s.label.clone(),
                fmt_f64(r.value),
                fmt_f64(r.a_abs),
                fmt_f64(r.efficiency),
                fmt_f64(r.survival),
            ];
            row.extend(r.filtered.iter().map(|x| fmt_f64(*x)));
            if let Some(e) = &r.error {
                *row_errors += 1;
                row.push(clean(e));
            } else {
                row.push(String::new());
            }
            t.rows.push(row);
        }
    }
    Ok(vec![Product::Table(t)])
}

fn modeweights(config: &Config, series: &[Series]) -> Result<Vec<Product>> {
    let optimize = config.modeweights.as_ref().is_some_and(|m| m.optimize);
    let mut modes = Table::new(
        "modes.csv",
        &[
            "series",
            "branch",
            "m",
            "n",
            "sense",
            "polarization",
            "kx[2pi/d]",
            "ky[2pi/d]",
            "kz[2pi/d]",
            "re_t[1]",
            "im_t[1]",
            "probability[1]",
            "critical",
        ],
    );
    let mut summary = Table::new(
        "modeweights.csv",
        &[
            "series",
            "omega[2pi/d]",
            "delta_omega[2pi/d]",
            "abs_a[1]",
            "efficiency_b[1]",
            "survival_a[1]",
            "mode_sum[1]",
        ],
    );
    for s in series {
        let prep = Prepared::new(&s.scenario)?;
        let mix = if optimize {
            Mixing::from_magnitude(optimize_prepared(&prep, None)?.a_abs)?
        } else {
            s.scenario.mixing
        };
        let critical = prep.critical_orders();
        for c in &critical {
            log::warn!(
                "series {}: order ({}, {}) is critical",
                s.label,
                c.order.m,
                c.order.n
            );
        }
        let list = prep.modes(&mix)?;
        for m in &list {
            let is_crit = critical.contains(&m.mode);
            modes.rows.push(vec![
                s.label.clone(),
                match m.mode.branch {
                    Branch::A => "a",
                    Branch::B => "b",
                }
                .into(),
                m.mode.order.m.to_string(),
                m.mode.order.n.to_string(),
                match m.mode.sense {
                    Sense::Up => "up",
                    Sense::Down => "down",
                }
                .into(),
                match m.polarization {
                    OutPolarization::S => "s",
                    OutPolarization::P => "p",
                }
                .into(),
                fmt_f64(m.k_out[0]),
                fmt_f64(m.k_out[1]),
                fmt_f64(m.k_out[2]),
                fmt_f64(m.flux_amplitude.re),
                fmt_f64(m.flux_amplitude.im),
                fmt_f64(m.probability),
                u8::from(is_crit).to_string(),
            ]);
        }
        let total: f64 = list
            .iter()
            .filter(|m| m.mode.branch == Branch::B)
            .map(|m| m.probability)
            .sum();
        summary.rows.push(vec![
            s.label.clone(),
            fmt_f64(s.scenario.omega),
            fmt_f64(s.scenario.delta_omega),
            fmt_f64(mix.a.norm()),
            fmt_f64(prep.efficiency(&mix, None)?),
            fmt_f64(prep.survival(&mix)?),
            fmt_f64(total),
        ]);
    }
    Ok(vec![Product::Table(summary), Product::Table(modes)])
}

fn criticality(config: &Config, series: &[Series]) -> Result<Vec<Product>> {
    let c = config.criticality.clone().unwrap_or_default();
    let mut t = Table::new(
        "critical.csv",
        &["series", "omega[2pi/d]", "m", "n", "gx[2pi/d]", "gy[2pi/d]"],
    );
    for s in series {
        let scn = &s.scenario;
        let pts = find_critical_frequencies(
            scn.incidence,
            scn.delta_omega,
            scn.grating,
            (c.range[0], c.range[1]),
            config.scenario.g_cutoff,
        )?;
        for p in pts {
            let g = p.order.vec();
            t.rows.push(vec![
                s.label.clone(),
                fmt_f64(p.omega),
                p.order.m.to_string(),
                p.order.n.to_string(),
                fmt_f64(g[0]),
                fmt_f64(g[1]),
            ]);
        }
    }
    Ok(vec![Product::Table(t)])
}

fn solve_table(sol: &transducer_core::finite::SiteSolution) -> Table {
    let mut t = Table::new(
        "solve.csv",
        &[
            "sites",
            "solver",
            "iterations",
            "residual[1]",
            "residual_full[1]",
        ],
    );
    t.rows.push(vec![
        sol.positions.len().to_string(),
        format!("{:?}", sol.solver).to_lowercase(),
        sol.iterations.to_string(),
        fmt_f64(sol.residual),
        fmt_f64(sol.residual_full),
    ]);
    t
}

fn fieldmap(config: &Config, s: &Series) -> Result<Vec<Product>> {
    let fin = config.finite.as_ref().expect("validated");
    let arr = fin.array()?;
    let sol = solve_sites(&s.scenario, &arr, &fin.options)?;
    let mut out = vec![Product::Table(solve_table(&sol))];
    for g in &config.fieldmap.as_ref().expect("validated").grids {
        out.push(Product::Field {
            stem: format!("field_{}", g.name),
            map: sol.evaluate(&g.grid)?,
        });
    }
    Ok(out)
}

fn fwhm(config: &Config, s: &Series, row_errors: &mut usize) -> Result<Vec<Product>> {
    let f = config.fwhm.clone().unwrap_or_default();
    let opts = config
        .finite
        .as_ref()
        .map(|f| f.options)
        .unwrap_or_default();
    let mut widths = Table::new("fwhm.csv", &["n", "x[d]", "z_fwhm[d]", "z_smoothed[d]"]);
    let mut rates = Table::new(
        "fwhm_rates.csv",
        &[
            "n",
            "spread_rate[1]",
            "spread_rate_raw[1]",
            "fit_residual[d]",
            "spearman[1]",
            "error",
        ],
    );
    let (mut ns, mut rs) = (Vec::new(), Vec::new());
    for &n in &f.sizes {
        let run = || -> transducer_core::Result<_> {
            let arr = EmitterArray::square(n)?;
            let map = evaluate_field(&s.scenario, &arr, &opts, &f.grid(n)?)?;
            fwhm_lobe(&map, arr.half_extent_x())
        };
        match run() {
            Ok(r) => {
                for k in 0..r.x.len() {
                    widths.rows.push(vec![
                        n.to_string(),
                        fmt_f64(r.x[k]),
                        fmt_f64(r.z_fwhm[k]),
                        fmt_f64(r.z_smoothed[k]),
                    ]);
                }
                rates.rows.push(vec![
                    n.to_string(),
                    fmt_f64(r.spread_rate),
                    fmt_f64(r.spread_rate_raw),
                    fmt_f64(r.fit_residual),
                    fmt_f64(r.spearman),
                    String::new(),
                ]);
                ns.push(n as f64);
                rs.push(r.spread_rate);
            }
            Err(e @ (Error::NonConvergence(_) | Error::SingularSystem { .. })) => {
                *row_errors += 1;
                let nan = fmt_f64(f64::NAN);
                rates.rows.push(vec![
                    n.to_string(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    nan,
                    clean(&e.to_string()),
                ]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut fit = Table::new(
        "fwhm_fit.csv",
        &["exponent[1]", "prefactor[1]", "sizes_used"],
    );
    let (p, c) = power_law_fit(&ns, &rs).unwrap_or((f64::NAN, f64::NAN));
    fit.rows
        .push(vec![fmt_f64(p), fmt_f64(c), ns.len().to_string()]);
    Ok(vec![
        Product::Table(widths),
        Product::Table(rates),
        Product::Table(fit),
    ])
}

fn spectrum(config: &Config, s: &Series) -> Result<Vec<Product>> {
    let fin = config.finite.as_ref().expect("validated");
    let sp = config.spectrum.as_ref().expect("validated");
    let sol = solve_sites(&s.scenario, &fin.array()?, &fin.options)?;
    let mut out = vec![Product::Table(solve_table(&sol))];
    for l in &sp.lines {
        let map = sol.evaluate(&l.grid)?;
        let spec = spectrum_linecut(&map, sp.component, sp.part, sp.window)?;
        let mut t = Table::new(
            &format!("spectrum_{}.csv", l.name),
            &["q[2pi/d]", "magnitude[arb]"],
        );
        for (q, m) in spec.q.iter().zip(&spec.magnitude) {
            t.rows.push(vec![fmt_f64(*q), fmt_f64(*m)]);
        }
        let mut p = Table::new(
            &format!("peaks_{}.csv", l.name),
            &["rank", "q[2pi/d]", "magnitude[arb]"],
        );
        for (k, pk) in find_peaks(&spec, sp.peak_factor).iter().enumerate() {
            p.rows.push(vec![
                (k + 1).to_string(),
                fmt_f64(pk.q),
                fmt_f64(pk.magnitude),
            ]);
        }
        out.push(Product::Table(t));
        out.push(Product::Table(p));
    }
    Ok(out)
}

fn sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn run(cmd: Command, opts: &Options) -> Result<Outcome> {
    let start = Instant::now();
    let (config, preset, assumed) = resolve(cmd, opts)?;
    config.validate_for(cmd)?;
    let series = config.scenarios()?;
    match cmd {
        Command::Fieldmap => check_off_sites(
            &config.finite.as_ref().expect("validated").array()?,
            &config.fieldmap.as_ref().expect("validated").grids,
        )?,
        Command::Spectrum => check_off_sites(
            &config.finite.as_ref().expect("validated").array()?,
            &config.spectrum.as_ref().expect("validated").lines,
        )?,
        _ => {}
    }
    if let Some(n) = opts.threads
        && let Err(e) = transducer_core::par::set_threads(n)
    {
        log::warn!("could not set {n} threads: {e}");
    }
    if let Some(dir) = &opts.cache_dir {
        match SelfEnergyCache::global().load(dir) {
            Ok(n) => log::info!("loaded {n} cached lattice sums from {}", dir.display()),
            Err(e) => log::warn!("ignoring self-energy cache in {}: {e}", dir.display()),
        }
    }

    let mut row_errors = 0;
    let products = match cmd {
        Command::EfficiencySweep => sweep(&config, &series, &mut row_errors)?,
        Command::Modeweights => modeweights(&config, &series)?,
        Command::Criticality => criticality(&config, &series)?,
        Command::Fieldmap => fieldmap(&config, &single_scenario(cmd, &series, &config)?)?,
        Command::Fwhm => fwhm(
            &config,
            &single_scenario(cmd, &series, &config)?,
            &mut row_errors,
        )?,
        Command::Spectrum => spectrum(&config, &single_scenario(cmd, &series, &config)?)?,
    };

    let dir = &opts.output;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if dir.join(MANIFEST_FILE).exists() {
        std::fs::remove_file(dir.join(MANIFEST_FILE))?;
    }
    let mut files = Vec::new();
    for p in products {
        match p {
            Product::Table(t) => {
                let mut w = CsvOut::create(&dir.join(&t.name), &t.header)?;
                for r in &t.rows {
                    w.row(r)?;
                }
                w.finish()?;
                files.push(t.name);
            }
            Product::Field { stem, map } => {
                files.extend(io::write_field_map(dir, &stem, &map, MANIFEST_FILE)?)
            }
        }
    }
    let outputs = files
        .iter()
        .map(|f| {
            Ok(OutputFile {
                path: f.clone(),
                sha256: sha256(&dir.join(f))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd,
        preset,
        config,
        scenarios: series,
        assumed,
        threads: opts.threads,
        backend: transducer_core::par::MODE.into(),
        seed: opts.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        row_errors,
        outputs,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    if let Some(cache) = &opts.cache_dir
        && let Err(e) = SelfEnergyCache::global().save(cache)
    {
        log::warn!(
            "could not write self-energy cache to {}: {e}",
            cache.display()
        );
    }
    Ok(Outcome { row_errors })
}
