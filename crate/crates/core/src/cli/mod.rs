//! Command implementations behind the `garch-scope` binary.
//!
//! Each command reads one JSON config (`--config`), writes its outputs to
//! `--out`, and optionally overrides the config's root `seed` (`--seed`).
//! `scope-region` additionally writes a JSON sidecar next to the CSV, with
//! the extension replaced by `.json`.

pub mod config;
pub mod data;
pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{asymptotic_region, residual_bootstrap, BootstrapRegion};
use crate::error::{Error, Result};
use crate::garch::{simulate, standardize, InitialConditions, Initializer, ModelOrders, ParamVector, SeriesSample};
use crate::harness::{
    empirical_coverage, generate_noise, relative_area, CoverageReport, CoverageSpec, LrRegion, Method, Region,
    ScopeRegion,
};
use crate::qml::{asymptotic_covariance, qmle_fit, QmlConfig, QmlFit};
use crate::rng::{derive, stream};
use crate::scope::{rank, rank_field, ScopeConfig};
use crate::VERSION;

use config::{read_config, resolve_path, DataSource, GridSpec, MarketConfig, ScopeRegionConfig, SynthPricesConfig};
use data::{compound_returns, PriceSeries};
use output::{format_rank_csv, rank_rows, write_json, Envelope, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "garch-scope", version, about = "Exact score-permutation confidence regions for GARCH models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank a parameter grid; writes a rank-field CSV and a JSON sidecar.
    ScopeRegion(RunArgs),
    /// Monte Carlo coverage and relative area of one method.
    Coverage(RunArgs),
    /// Relative areas of all four regions on a price file.
    Market(RunArgs),
    /// Write a synthetic `date,close` file with GARCH returns.
    SynthPrices(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Replaces the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    fn base_dir(&self) -> PathBuf {
        self.config.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Runs one command and returns a one-line summary.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::ScopeRegion(args) => scope_region(args),
        Command::Coverage(args) => coverage(args),
        Command::Market(args) => market(args),
        Command::SynthPrices(args) => synth_prices(args),
    }
}

fn load_sample(data: &DataSource, seed: u64, base: &Path) -> Result<SeriesSample> {
    match data {
        DataSource::Simulate {
            theta_star,
            noise,
            n,
            burn_in,
        } => {
            let eps = generate_noise(noise, n + burn_in, derive(seed, stream::NOISE))?;
            let init = Initializer::Unconditional
                .conditions(theta_star)
                .expect("parameter-only initializer");
            simulate(theta_star, &eps, &init, *burn_in)
        }
        DataSource::Prices {
            path,
            orders,
            standardize: scale,
        } => {
            let prices = PriceSeries::load(&resolve_path(base, path), None)?;
            returns_sample(&prices, *orders, *scale)
        }
    }
}

/// Compound returns as a sample; initial conditions are set to the mean
/// squared return (only used by the `fixed` initializer).
fn returns_sample(prices: &PriceSeries, orders: ModelOrders, scale: bool) -> Result<SeriesSample> {
    let returns = compound_returns(prices)?;
    let x = if scale { standardize(&returns)? } else { returns };
    let level = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if !(level > 0.0) {
        return Err(Error::DegenerateSample("all returns are zero".into()));
    }
    SeriesSample::new(x, InitialConditions::constant(orders, level)?)
}

fn fit_sample(sample: &SeriesSample, orders: ModelOrders, qml: &QmlConfig, initializer: Initializer) -> Result<(QmlFit, QmlConfig)> {
    let qml = QmlConfig { initializer, ..*qml };
    Ok((qmle_fit(sample, orders, &qml)?, qml))
}

fn cell_center(index: usize, resolution: usize, span: f64) -> f64 {
    (index as f64 + 0.5) / resolution as f64 * span
}

fn cell_index(value: f64, resolution: usize, span: f64) -> usize {
    ((value / span * resolution as f64).floor().max(0.0) as usize).min(resolution - 1)
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution == 0 {
        return Err(Error::config("grid.resolution", "must be at least 1"));
    }
    Ok(())
}

fn grid_points(grid: &GridSpec, theta_hat: &ParamVector) -> Result<Vec<ParamVector>> {
    match grid {
        GridSpec::UnitVariance { resolution } => {
            check_resolution(*resolution)?;
            let mut points = Vec::new();
            for i in 0..*resolution {
                for j in 0..*resolution {
                    // Integer test: the float sum can land on either side of 1.
                    if i + j + 1 < *resolution {
                        let (a, b) = (cell_center(i, *resolution, 1.0), cell_center(j, *resolution, 1.0));
                        points.push(ParamVector::garch11(1.0 - a - b, a, b)?);
                    }
                }
            }
            Ok(points)
        }
        GridSpec::FixAlpha { resolution, omega_max } => {
            check_resolution(*resolution)?;
            let alpha = theta_hat.alphas()[0];
            let omega_max = omega_max.unwrap_or(2.0 * theta_hat.omega());
            if !(omega_max.is_finite() && omega_max > 0.0) {
                return Err(Error::config("grid.omega_max", "must be finite and > 0"));
            }
            let mut points = Vec::new();
            for j in 0..*resolution {
                let b = cell_center(j, *resolution, 1.0);
                if alpha + b >= 1.0 {
                    continue;
                }
                for k in 0..*resolution {
                    points.push(ParamVector::garch11(cell_center(k, *resolution, omega_max), alpha, b)?);
                }
            }
            Ok(points)
        }
        GridSpec::Estimate => Ok(vec![theta_hat.clone()]),
        GridSpec::Points { points } => {
            if points.is_empty() {
                return Err(Error::config("grid.points", "need at least one point"));
            }
            Ok(points.clone())
        }
    }
}

/// The grid cell that contains the estimate, where the grid is a cell grid.
fn estimate_cell(grid: &GridSpec, theta_hat: &ParamVector) -> Option<ParamVector> {
    let (a, b) = (theta_hat.alphas()[0], theta_hat.betas()[0]);
    match grid {
        GridSpec::UnitVariance { resolution } => {
            let (i, j) = (cell_index(a, *resolution, 1.0), cell_index(b, *resolution, 1.0));
            let (a, b) = (cell_center(i, *resolution, 1.0), cell_center(j, *resolution, 1.0));
            (i + j + 1 < *resolution)
                .then(|| ParamVector::garch11(1.0 - a - b, a, b).ok())
                .flatten()
        }
        GridSpec::FixAlpha { resolution, omega_max } => {
            let span = omega_max.unwrap_or(2.0 * theta_hat.omega());
            let b = cell_center(cell_index(b, *resolution, 1.0), *resolution, 1.0);
            let w = cell_center(cell_index(theta_hat.omega(), *resolution, span), *resolution, span);
            (a + b < 1.0).then(|| ParamVector::garch11(w, a, b).ok()).flatten()
        }
        GridSpec::Estimate | GridSpec::Points { .. } => None,
    }
}

#[derive(Debug, Serialize)]
struct PointRank {
    theta: ParamVector,
    rank: usize,
    in_region: bool,
}

#[derive(Debug, Serialize)]
struct ScopeRegionBody {
    seed: u64,
    n: usize,
    m: usize,
    r: usize,
    coverage: f64,
    fit: QmlFit,
    estimate: PointRank,
    estimate_cell: Option<PointRank>,
    points: usize,
    region_size: usize,
    csv: String,
}

fn scope_region(args: &RunArgs) -> Result<String> {
    let mut cfg: ScopeRegionConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let orders = cfg.data.orders();
    if (orders.p(), orders.q()) != (1, 1) {
        return Err(Error::config("data", "rank-field grids are GARCH(1,1) only"));
    }
    let scope = ScopeConfig::new(cfg.m, cfg.r, derive(cfg.seed, stream::PERMUTATIONS))
        .map_err(|e| Error::config("m", e.to_string()))?
        .with_initializer(cfg.initializer)
        .with_standardized_residuals(cfg.standardize_residuals);

    let sample = load_sample(&cfg.data, cfg.seed, &args.base_dir())?;
    let (fit, _) = fit_sample(&sample, orders, &cfg.qml, cfg.initializer)?;
    let grid = grid_points(&cfg.grid, &fit.theta_hat)?;
    let perms = scope.permutations(sample.len())?;
    let field = rank_field(&sample, &grid, &perms, &scope)?;
    let rows = rank_rows(&field)?;

    let threshold = cfg.m - cfg.r;
    let point_rank = |theta: ParamVector| -> Result<PointRank> {
        let rank = rank(&theta, &sample, &perms, &scope)?;
        Ok(PointRank {
            theta,
            rank,
            in_region: rank <= threshold,
        })
    };
    let estimate = point_rank(fit.theta_hat.clone())?;
    let estimate_cell = estimate_cell(&cfg.grid, &fit.theta_hat).map(point_rank).transpose()?;

    std::fs::write(&args.out, format_rank_csv(&rows))?;
    let sidecar = args.out.with_extension("json");
    let body = ScopeRegionBody {
        seed: cfg.seed,
        n: sample.len(),
        m: cfg.m,
        r: cfg.r,
        coverage: scope.coverage(),
        fit,
        estimate,
        estimate_cell,
        points: rows.len(),
        region_size: field.region_size(),
        csv: args.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    write_json(
        &sidecar,
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "scope-region",
            version: VERSION,
            config: &cfg,
            body,
        },
    )?;
    Ok(format!(
        "ranked {} points, {} in region; wrote {} and {}",
        rows.len(),
        field.region_size(),
        args.out.display(),
        sidecar.display()
    ))
}

#[derive(Debug, Serialize)]
struct CoverageBody {
    report: CoverageReport,
    standard_error: f64,
    infinite_variance: bool,
}

fn coverage(args: &RunArgs) -> Result<String> {
    let mut spec: CoverageSpec = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let report = empirical_coverage(&spec)?;
    let summary = format!(
        "{}: {} of {} trials covered ({} failed), coverage {}",
        report.method.name(),
        report.hits,
        report.trials,
        report.failed,
        report.empirical_coverage
    );
    let body = CoverageBody {
        standard_error: report.standard_error(),
        infinite_variance: spec.noise.infinite_variance(),
        report,
    };
    write_json(
        &args.out,
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "coverage",
            version: VERSION,
            config: &spec,
            body,
        },
    )?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct MethodArea {
    nominal: f64,
    area_samples: usize,
    relative_area: Option<f64>,
    /// Why the region could not be built, if it could not.
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct MarketBody {
    symbol: String,
    first_date: String,
    last_date: String,
    returns: usize,
    fit: QmlFit,
    methods: BTreeMap<&'static str, MethodArea>,
}

fn market(args: &RunArgs) -> Result<String> {
    let mut cfg: MarketConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::config("level", "must lie in (0, 1)"));
    }
    let scope = ScopeConfig::new(cfg.m, cfg.r, derive(cfg.seed, stream::PERMUTATIONS))
        .map_err(|e| Error::config("m", e.to_string()))?
        .with_initializer(cfg.initializer)
        .with_standardized_residuals(cfg.standardize_residuals);
    cfg.area_domain.validate()?;

    let prices = PriceSeries::load(&resolve_path(&args.base_dir(), &cfg.prices), cfg.symbol.as_deref())?;
    let sample = returns_sample(&prices, cfg.orders, true)?;
    let (fit, qml) = fit_sample(&sample, cfg.orders, &cfg.qml, cfg.initializer)?;
    let area_seed = derive(cfg.seed, stream::AREA);
    let boot_seed = derive(cfg.seed, stream::BOOTSTRAP);
    let area = |region: &dyn Region, samples: usize| relative_area(region, cfg.orders, &cfg.area_domain, samples, area_seed);

    let mut methods = BTreeMap::new();
    let mut record = |method: Method, nominal: f64, samples: usize, outcome: Result<f64>| {
        let (relative_area, error) = match outcome {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        };
        methods.insert(
            method.name(),
            MethodArea {
                nominal,
                area_samples: samples,
                relative_area,
                error,
            },
        );
    };

    let perms = scope.permutations(sample.len())?;
    let region = ScopeRegion {
        sample: &sample,
        perms: &perms,
        config: &scope,
    };
    record(Method::Scope, scope.coverage(), cfg.area_samples, area(&region, cfg.area_samples));

    let asym = (|| {
        let resolved = qml.initializer.apply(&fit.theta_hat, &sample);
        let cov = asymptotic_covariance(&fit.theta_hat, &resolved)?;
        let region = asymptotic_region(&fit, &cov, cfg.level, sample.len())?;
        area(&region, cfg.area_samples)
    })();
    record(Method::AsymEllipsoid, cfg.level, cfg.area_samples, asym);

    let boot_config = cfg.bootstrap.config(derive(boot_seed, 0), qml);
    let res = (|| {
        let boots = residual_bootstrap(&sample, &fit, &boot_config)?;
        let region = BootstrapRegion::new(&boots, cfg.level)?;
        area(&region, cfg.area_samples)
    })();
    record(Method::ResBootstrap, cfg.level, cfg.area_samples, res);

    let lr_config = cfg.bootstrap.config(derive(boot_seed, 1), qml);
    let region = LrRegion {
        sample: &sample,
        fit: &fit,
        config: &lr_config,
        level: cfg.level,
    };
    record(Method::LrBootstrap, cfg.level, cfg.lr_area_samples, area(&region, cfg.lr_area_samples));

    let summary = methods
        .iter()
        .map(|(k, v)| match v.relative_area {
            Some(a) => format!("{k}={a}"),
            None => format!("{k}=failed"),
        })
        .collect::<Vec<_>>()
        .join(" ");
    let body = MarketBody {
        symbol: prices.symbol.clone(),
        first_date: prices.dates[0].to_string(),
        last_date: prices.dates[prices.len() - 1].to_string(),
        returns: sample.len(),
        fit,
        methods,
    };
    write_json(
        &args.out,
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "market",
            version: VERSION,
            config: &cfg,
            body,
        },
    )?;
    Ok(format!("{}: relative areas {summary}", prices.symbol))
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut next = d.succ_opt().expect("date in range");
    while matches!(next.weekday(), Weekday::Sat | Weekday::Sun) {
        next = next.succ_opt().expect("date in range");
    }
    next
}

#[derive(Debug, Serialize)]
struct SynthBody {
    rows: usize,
    csv: String,
}

fn synth_prices(args: &RunArgs) -> Result<String> {
    let mut cfg: SynthPricesConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let start = NaiveDate::parse_from_str(&cfg.start_date, "%Y-%m-%d")
        .map_err(|e| Error::config("start_date", e.to_string()))?;
    if !(cfg.initial_price.is_finite() && cfg.initial_price > 0.0) {
        return Err(Error::config("initial_price", "must be finite and > 0"));
    }
    if !(cfg.return_scale.is_finite() && cfg.return_scale > 0.0) {
        return Err(Error::config("return_scale", "must be finite and > 0"));
    }
    let data = DataSource::Simulate {
        theta_star: cfg.theta_star.clone(),
        noise: cfg.noise,
        n: cfg.n,
        burn_in: cfg.burn_in,
    };
    let sample = load_sample(&data, cfg.seed, Path::new(""))?;

    let mut dates = vec![start];
    let mut closes = vec![cfg.initial_price];
    for x in sample.observations() {
        dates.push(next_business_day(*dates.last().unwrap()));
        closes.push(closes.last().unwrap() * (cfg.return_scale * x).exp());
    }
    let symbol = args.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let series = PriceSeries::new(symbol, dates, closes)?;
    series.write(&args.out)?;
    write_json(
        &args.out.with_extension("json"),
        &Envelope {
            schema_version: SCHEMA_VERSION,
            command: "synth-prices",
            version: VERSION,
            config: &cfg,
            body: SynthBody {
                rows: series.len(),
                csv: args.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            },
        },
    )?;
    Ok(format!("wrote {} prices to {}", series.len(), args.out.display()))
}
