use std::path::Path;

use extreme_bma::bma::{compare_pipelines, relative_improvement, run_pipeline, Pipeline, PipelineReport};
use extreme_bma::data::{load_dataset, normalize_coords, read_sites, write_sites, write_values, Dataset, Site};
use extreme_bma::gev::{fit_lmoments, return_level};
use extreme_bma::msp::{
    extremal_coefficient_empirical, extremal_coefficient_model, msp_return_level, site_distance, MspModel, TermSet,
};
use extreme_bma::optimize::{fit_msp, FitReport};
use extreme_bma::sim::{default_sites, groupwise_maxima_qq, synthetic_ensemble};
use serde::{Deserialize, Serialize};

use crate::config::{require, PipelineChoice, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{num, opt, stem, OutputDir};

fn load(cfg: &RunConfig, values: &Path) -> CliResult<Dataset> {
    let sites = require(&cfg.data.sites, "sites")?;
    load_dataset(sites, values, &stem(values)).map_err(CliError::core(format!("loading {}", values.display())))
}

fn single_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let path = match &cfg.data.dataset {
        Some(p) => p.as_path(),
        None => require(&cfg.data.reanalysis, "dataset")?,
    };
    load(cfg, path)
}

/// Fitted MSP model as stored by `fit` and read by `diagnose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredFit {
    pub dataset: String,
    pub term_set: String,
    pub model: MspModel,
    pub nll: f64,
    pub tic: Option<f64>,
    pub converged: bool,
}

pub fn cmd_fit(cfg: &RunConfig) -> CliResult<Vec<std::path::PathBuf>> {
    let data = single_dataset(cfg)?;
    let label = data.label().to_string();
    let mut out = OutputDir::create(cfg, "fit")?;

    let mut gev_rows = Vec::new();
    let mut level_rows = Vec::new();
    for (s, site) in data.sites().iter().enumerate() {
        let p = fit_lmoments(&data.column(s)).map_err(CliError::core(format!("{label}: GEV fit at site {}", site.id)))?;
        gev_rows.push(vec![site.id.clone(), num(p.mu), num(p.sigma), num(p.xi)]);
        for &t in &cfg.periods {
            let level = return_level(t, &p).map_err(CliError::core(format!("{label}: site {}", site.id)))?;
            level_rows.push(vec![site.id.clone(), "gev".into(), num(t), num(level)]);
        }
    }
    out.table("gev_fit.csv", &["site", "mu", "sigma", "xi"], &gev_rows)?;

    let term_sets = match cfg.term_mode {
        extreme_bma::bma::TermSetMode::Fixed => vec![TermSet::default_surface()],
        extreme_bma::bma::TermSetMode::Catalog => TermSet::catalog(),
    };
    let settings = cfg.msp_settings();
    let report: FitReport = fit_msp(&data, settings.kind, &term_sets, &settings.optimizer)
        .map_err(CliError::core(format!("{label}: MSP fit")))?;
    for site in data.sites() {
        for &t in &cfg.periods {
            let level = msp_return_level(t, site, &report.model).map_err(CliError::core(format!("{label}: site {}", site.id)))?;
            level_rows.push(vec![site.id.clone(), "msp".into(), num(t), num(level)]);
        }
    }
    out.table("return_levels.csv", &["site", "method", "period", "level"], &level_rows)?;
    let tic_rows: Vec<Vec<String>> = report
        .tic_table
        .iter()
        .map(|r| vec![r.term_set.clone(), opt(r.nll), opt(r.penalty), opt(r.tic), r.error.clone().unwrap_or_default()])
        .collect();
    out.table("tic_table.csv", &["term_set", "nll", "penalty", "tic", "error"], &tic_rows)?;
    let stored = StoredFit {
        dataset: label,
        term_set: report.term_set.clone(),
        model: report.model.clone(),
        nll: report.nll,
        tic: report.tic,
        converged: report.converged,
    };
    out.json("msp_fit.json", &stored)?;
    write_diagnostics(cfg, &data, &report.model, &mut out)?;
    Ok(out.written)
}

pub fn cmd_diagnose(cfg: &RunConfig, model_path: Option<&Path>) -> CliResult<Vec<std::path::PathBuf>> {
    let data = single_dataset(cfg)?;
    let default_path = cfg.output.join("msp_fit.json");
    let path = model_path.unwrap_or(&default_path);
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    #[derive(Deserialize)]
    struct Doc {
        result: StoredFit,
    }
    let doc: Doc = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = OutputDir::create(cfg, "diagnose")?;
    write_diagnostics(cfg, &data, &doc.result.model, &mut out)?;
    Ok(out.written)
}

const CURVE_POINTS: usize = 50;

fn write_diagnostics(cfg: &RunConfig, data: &Dataset, model: &MspModel, out: &mut OutputDir) -> CliResult<()> {
    let label = data.label().to_string();
    let sites = data.sites();
    let mut rows = Vec::new();
    let mut max_h: f64 = 0.0;
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            let h = site_distance(&sites[i], &sites[j], cfg.distance).map_err(CliError::core(&label))?;
            let e = extremal_coefficient_empirical(data, (i, j)).map_err(CliError::core(format!("{label}: pair {i},{j}")))?;
            max_h = max_h.max(h);
            rows.push(vec![num(h), num(e.theta), String::new(), String::new(), format!("empirical:{}-{}", sites[i].id, sites[j].id)]);
        }
    }
    for k in 0..=CURVE_POINTS {
        let h = max_h * k as f64 / CURVE_POINTS as f64;
        let theta = extremal_coefficient_model(h, &model.dep).map_err(CliError::core(&label))?;
        rows.push(vec![num(h), num(theta), String::new(), String::new(), "model".into()]);
    }
    out.table("extremal_coefficient.csv", &["x", "y", "band_lo", "band_hi", "series"], &rows)?;

    let qq = groupwise_maxima_qq(data, model, cfg.qq_simulations, cfg.seed)
        .map_err(CliError::core(format!("{label}: QQ diagnostic")))?;
    let rows: Vec<Vec<String>> = (0..qq.empirical.len())
        .map(|r| vec![num(qq.theoretical[r]), num(qq.empirical[r]), num(qq.band_lo[r]), num(qq.band_hi[r]), "groupwise-maxima".into()])
        .collect();
    out.table("qq.csv", &["x", "y", "band_lo", "band_hi", "series"], &rows)?;
    out.table("qq_summary.csv", &["dataset", "inside_fraction"], &[vec![label, num(qq.inside_fraction)]])
}

pub fn cmd_bma(cfg: &RunConfig) -> CliResult<Vec<std::path::PathBuf>> {
    let reanalysis = load(cfg, require(&cfg.data.reanalysis, "reanalysis")?)?;
    if cfg.data.historical.is_empty() || cfg.data.historical.len() != cfg.data.future.len() {
        return Err(CliError::Config(format!(
            "data.historical and data.future must be nonempty and equal in length ({} vs {})",
            cfg.data.historical.len(),
            cfg.data.future.len()
        )));
    }
    let historical = cfg.data.historical.iter().map(|p| load(cfg, p)).collect::<CliResult<Vec<_>>>()?;
    let future = cfg.data.future.iter().map(|p| load(cfg, p)).collect::<CliResult<Vec<_>>>()?;
    let bma_cfg = cfg.bma_config();
    bma_cfg.validate(historical.len()).map_err(CliError::core("bma config"))?;

    let pipelines: &[Pipeline] = match cfg.pipeline {
        PipelineChoice::GevBma => &[Pipeline::Gev],
        PipelineChoice::MspBma => &[Pipeline::Msp],
        PipelineChoice::Both => &[Pipeline::Gev, Pipeline::Msp],
    };
    let mut out = OutputDir::create(cfg, "bma")?;
    let mut reports = Vec::new();
    for &p in pipelines {
        let report = run_pipeline(&reanalysis, &historical, &future, &bma_cfg, p).map_err(CliError::core(p.label()))?;
        write_report(&mut out, &report)?;
        reports.push(report);
    }
    if let [gev, msp] = &reports[..] {
        write_comparison(&mut out, gev, msp)?;
    }
    Ok(out.written)
}

fn write_report(out: &mut OutputDir, report: &PipelineReport) -> CliResult<()> {
    let tag = report.pipeline.label();
    let mut weights = Vec::new();
    let mut summary = Vec::new();
    for period in &report.periods {
        for site in &period.sites {
            for m in &site.models {
                weights.push(vec![
                    num(period.period),
                    site.site.clone(),
                    m.label.clone(),
                    num(m.weight),
                    num(m.log_likelihood),
                    num(m.historical_point),
                    num(m.historical_variance),
                    num(m.future_point),
                    num(m.future_variance),
                ]);
            }
            let (h, f) = (&site.historical, &site.future);
            summary.push(vec![
                num(period.period),
                site.site.clone(),
                num(h.mean),
                num(h.between),
                num(h.within),
                num(h.total),
                num(f.mean),
                num(f.between),
                num(f.within),
                num(f.total),
                num(site.truth),
                num(site.bias),
            ]);
        }
    }
    out.table(
        &format!("weights_{tag}.csv"),
        &[
            "period",
            "site",
            "model",
            "weight",
            "log_likelihood",
            "historical_point",
            "historical_variance",
            "future_point",
            "future_variance",
        ],
        &weights,
    )?;
    out.table(
        &format!("bma_{tag}.csv"),
        &[
            "period",
            "site",
            "historical_mean",
            "historical_between",
            "historical_within",
            "historical_total",
            "future_mean",
            "future_between",
            "future_within",
            "future_total",
            "truth",
            "bias",
        ],
        &summary,
    )?;
    out.json(&format!("report_{tag}.json"), report)
}

fn write_comparison(out: &mut OutputDir, gev: &PipelineReport, msp: &PipelineReport) -> CliResult<()> {
    let rows = compare_pipelines(gev, msp).map_err(CliError::core("comparison"))?;
    let mut variance = Vec::new();
    let mut bias = Vec::new();
    for &t in &gev.periods.iter().map(|p| p.period).collect::<Vec<_>>() {
        let period_rows: Vec<_> = rows.iter().filter(|r| r.period == t).collect();
        for r in &period_rows {
            variance.push(vec![num(t), r.site.clone(), num(r.variance_gev), num(r.variance_msp), opt(r.relative_improvement)]);
            bias.push(vec![num(t), r.site.clone(), num(r.bias_gev), num(r.bias_msp)]);
        }
        let n = period_rows.len() as f64;
        let mean_gev = period_rows.iter().map(|r| r.variance_gev).sum::<f64>() / n;
        let mean_msp = period_rows.iter().map(|r| r.variance_msp).sum::<f64>() / n;
        // the average row applies the improvement formula to the mean variances
        let ri = relative_improvement(mean_gev, mean_msp).ok();
        variance.push(vec![num(t), "average".into(), num(mean_gev), num(mean_msp), opt(ri)]);
    }
    out.table("variance_comparison.csv", &["period", "site", "variance_gev", "variance_msp", "relative_improvement"], &variance)?;
    out.table("bias_comparison.csv", &["period", "site", "bias_gev", "bias_msp"], &bias)
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<Vec<std::path::PathBuf>> {
    let sites: Vec<Site> = match &cfg.data.sites {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(CliError::io(p))?;
            let raw = read_sites(f).map_err(CliError::core(format!("loading {}", p.display())))?;
            normalize_coords(&raw).map_err(CliError::core("site coordinates"))?.0
        }
        None => default_sites(),
    };
    let ens = synthetic_ensemble(&sites, &cfg.simulate, cfg.seed).map_err(CliError::core("simulate"))?;
    let mut out = OutputDir::create(cfg, "simulate")?;
    let mut buf = Vec::new();
    write_sites(&mut buf, &sites).map_err(CliError::core("writing sites"))?;
    out.text("sites.csv", &String::from_utf8(buf).expect("utf-8 output"))?;
    for d in std::iter::once(&ens.reanalysis).chain(&ens.historical).chain(&ens.future) {
        let mut buf = Vec::new();
        write_values(&mut buf, d).map_err(CliError::core("writing values"))?;
        out.text(&format!("{}.csv", d.label()), &String::from_utf8(buf).expect("utf-8 output"))?;
    }
    out.json("truth.json", &(&ens.truth, &ens.models, &ens.site_offsets))?;

    // a ready-to-run config for `bma` over the written files
    let mut next = cfg.clone();
    next.output = "bma".into();
    next.data.sites = Some("sites.csv".into());
    next.data.reanalysis = Some(format!("{}.csv", ens.reanalysis.label()).into());
    next.data.dataset = None;
    next.data.historical = ens.historical.iter().map(|d| format!("{}.csv", d.label()).into()).collect();
    next.data.future = ens.future.iter().map(|d| format!("{}.csv", d.label()).into()).collect();
    out.text("ensemble.toml", &toml::to_string(&next).expect("config serializes"))?;
    Ok(out.written)
}
