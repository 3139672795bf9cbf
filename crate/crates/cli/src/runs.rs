//! Mode runners: call the library and write CSV outputs.

use std::fmt::Display;
use std::path::Path;

use ndarray::Array2;
use sparse_ppf::confidence::{two_sided_z, ConfidenceConfig, ConfidenceTracker, IntervalRecord};
use sparse_ppf::crossval::{cross_validate_gamma, CvResult};
use sparse_ppf::gof::{acf_test, burn_in_bins, ks_test, time_rescale, AcfResult, KsResult, Rescaling};
use sparse_ppf::io::{read_spikes, read_stimulus};
use sparse_ppf::model::{fill_design, logistic};
use sparse_ppf::simulation::{
    realization_rng, study1, study2, to_db, FilterKind, L1Settings, Study1Config, Study2Config,
};
use sparse_ppf::strf::{planted_strf, PlantedStrfConfig};
use sparse_ppf::{Error, PointProcessFilter, Ppf1};

use crate::config::{self, CustomConfig, ExperimentConfig, Mode, Overrides};
use crate::output::{to_toml, Files};
use crate::CliError;

pub struct RunOutput {
    pub seed: u64,
    pub resolved: String,
    pub files: Vec<String>,
    pub summary: Vec<String>,
}

pub fn run(mode: Mode, file: &ExperimentConfig, o: &Overrides, out: &Path, gnuplot: bool) -> Result<RunOutput, CliError> {
    match mode {
        Mode::Study1 => {
            let mut cfg = file.study1.clone().unwrap_or_default();
            config::apply_study1(&mut cfg, o);
            cfg.validate()?;
            run_study1(&cfg, out, gnuplot)
        }
        Mode::Study2 => {
            let mut cfg = file.study2.clone().unwrap_or_default();
            config::apply_study2(&mut cfg, o);
            cfg.scenario()?;
            run_study2(&cfg, out, gnuplot)
        }
        Mode::Strf => {
            let mut cfg = file.strf.clone().unwrap_or_default();
            config::apply_strf(&mut cfg, o);
            run_strf(&cfg, out, gnuplot)
        }
        Mode::Custom => {
            let mut cfg = file
                .custom
                .clone()
                .ok_or_else(|| CliError::Config("mode custom needs a [custom] section in the config".into()))?;
            config::apply_custom(&mut cfg, o)?;
            run_custom(&cfg, o.seed.unwrap_or(1), out, gnuplot)
        }
    }
}

fn line(values: &[&dyn Display]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn filter_columns<'a>(lead: &[&'a str], filters: &[FilterKind]) -> Vec<&'a str> {
    lead.iter().copied().chain(filters.iter().map(|f| f.label())).collect()
}

fn write_cv(files: &mut Files, out: &Path, name: &str, cv: &[(FilterKind, CvResult)]) -> Result<(), CliError> {
    if cv.is_empty() {
        return Ok(());
    }
    let mut w = files.csv(out, name, "cv", &["filter", "gamma", "score", "selected"])?;
    for (kind, r) in cv {
        for (g, s) in r.grid.iter().zip(&r.scores) {
            w.raw(&line(&[&kind.label(), g, s, &(*g == r.best)]))?;
        }
    }
    w.finish()?;
    Ok(())
}

fn write_ks(files: &mut Files, out: &Path, name: &str, ks: &KsResult) -> Result<(), CliError> {
    let mut w = files.csv(out, name, "ks", &["model_quantile", "empirical_quantile", "lower", "upper"])?;
    for &(m, e) in &ks.points {
        w.row(&[m, e, m - ks.band, m + ks.band])?;
    }
    w.finish()?;
    Ok(())
}

fn write_acf(files: &mut Files, out: &Path, name: &str, acf: &AcfResult) -> Result<(), CliError> {
    let mut w = files.csv(out, name, "acf", &["lag", "acf", "band"])?;
    for (i, v) in acf.values.iter().enumerate() {
        w.raw(&line(&[&(i + 1), v, &acf.band]))?;
    }
    w.finish()?;
    Ok(())
}

fn acf_max(acf: &AcfResult) -> f64 {
    acf.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn gamma_of(suite: &sparse_ppf::simulation::FilterSuite, kind: FilterKind) -> String {
    match kind {
        FilterKind::Ppf1 => suite.ppf1.gamma.to_string(),
        FilterKind::Ppf0 => suite.ppf0.gamma.to_string(),
        _ => String::new(),
    }
}

fn run_study1(cfg: &Study1Config, out: &Path, gnuplot: bool) -> Result<RunOutput, CliError> {
    let res = study1(cfg)?;
    let mut files = Files::default();
    let bin = cfg.delta * cfg.window_len as f64;
    let curves: Vec<_> = res.filters.iter().map(|f| (res.curves[f].mse(), res.curves[f].spm())).collect();

    let cols = ["window", "time", "series", "value"];
    let mut mse = files.csv(out, "study1_mse.csv", "study1_mse_db", &cols)?;
    let mut spm = files.csv(out, "study1_spm.csv", "study1_spm", &cols)?;
    for (f, (m, s)) in res.filters.iter().zip(&curves) {
        for (i, &k) in res.windows.iter().enumerate() {
            let time = k as f64 * bin;
            mse.raw(&line(&[&k, &time, &f.label(), &to_db(m[i])]))?;
            spm.raw(&line(&[&k, &time, &f.label(), &s[i]]))?;
        }
    }
    mse.finish()?;
    spm.finish()?;

    let all: Vec<usize> = (0..cfg.realizations).collect();
    let mut summary = Vec::new();
    let mut w = files.csv(out, "study1_summary.csv", "study1_summary", &["filter", "gamma", "steady_mse_db", "steady_spm"])?;
    for &f in &res.filters {
        let (m, s) = (res.steady_mse_db(f, &all), res.steady_spm(f, &all));
        w.raw(&line(&[&f.label(), &gamma_of(&res.suite, f), &m, &s]))?;
        summary.push(format!("{:<8} steady MSE {m:.2} dB  SPM {s:.4}", f.label()));
    }
    w.finish()?;
    write_cv(&mut files, out, "study1_cv.csv", &res.cv)?;
    summary.push(format!("mean spiking probability per bin {:.4}", res.mean_rate));

    if gnuplot {
        let mut script = String::from("set datafile separator ','\nset xlabel 'time (s)'\nset multiplot layout 2,1\n");
        for (file, label) in [("study1_mse.csv", "MSE (dB)"), ("study1_spm.csv", "SPM")] {
            let series: Vec<String> = res
                .filters
                .iter()
                .map(|f| format!("'{file}' using 2:(strcol(3) eq '{0}' ? $4 : 1/0) with lines title '{0}'", f.label()))
                .collect();
            script.push_str(&format!("set ylabel '{label}'\nplot {}\n", series.join(", ")));
        }
        script.push_str("unset multiplot\n");
        files.text(out, "plots.gp", &script)?;
    }
    Ok(RunOutput {
        seed: cfg.seed,
        resolved: to_toml(&Study1Resolved { study1: cfg })?,
        files: files.names,
        summary,
    })
}

#[derive(serde::Serialize)]
struct Study1Resolved<'a> {
    study1: &'a Study1Config,
}

#[derive(serde::Serialize)]
struct Study2Resolved<'a> {
    study2: &'a Study2Config,
}

#[derive(serde::Serialize)]
struct StrfResolved<'a> {
    strf: &'a PlantedStrfConfig,
}

#[derive(serde::Serialize)]
struct CustomResolved<'a> {
    custom: &'a CustomConfig,
}

fn run_study2(cfg: &Study2Config, out: &Path, gnuplot: bool) -> Result<RunOutput, CliError> {
    let res = study2(cfg)?;
    let mut files = Files::default();
    let bin = cfg.delta * cfg.window_len as f64;
    let kinds: Vec<FilterKind> = res.filters.iter().map(|t| t.kind).collect();

    let mut w = files.csv(out, "study2_trajectory.csv", "study2_trajectory", &["window", "time", "series", "coord", "value"])?;
    for &c in &cfg.support {
        for (i, &k) in res.trace_windows.iter().enumerate() {
            w.raw(&line(&[&k, &(k as f64 * bin), &"truth", &c, &res.truth[i][c]]))?;
        }
        for t in &res.filters {
            for (i, &k) in res.trace_windows.iter().enumerate() {
                w.raw(&line(&[&k, &(k as f64 * bin), &t.kind.label(), &c, &t.estimates[i][c]]))?;
            }
        }
    }
    w.finish()?;

    let mut cols = filter_columns(&["coord", "truth"], &kinds);
    cols.push("nrc");
    let mut w = files.csv(out, "study2_final.csv", "study2_final", &cols)?;
    let truth = res.scenario.truth(res.scenario.windows);
    for c in 0..cfg.dim {
        let est: Vec<String> = res.filters.iter().map(|t| t.estimates.last().map_or(0.0, |e| e[c]).to_string()).collect();
        w.raw(&format!("{c},{},{},{}", truth[c], est.join(","), res.nrc.as_array()[c]))?;
    }
    w.finish()?;

    if !res.intervals.is_empty() {
        let header = format!("{},time,truth", IntervalRecord::CSV_HEADER);
        let cols: Vec<&str> = header.split(',').collect();
        let mut w = files.csv(out, "study2_ci.csv", "study2_ci", &cols)?;
        for r in &res.intervals {
            let t = res.scenario.truth(r.window)[r.coord];
            w.raw(&format!("{},{},{t}", r.csv_row(), r.window as f64 * bin))?;
        }
        w.finish()?;
    }

    let mut summary = Vec::new();
    let mut gof = files.csv(
        out,
        "study2_gof.csv",
        "study2_gof",
        &["filter", "gamma", "ks_statistic", "ks_band", "ks_pass", "acf_max_abs", "acf_band", "acf_pass", "final_mse_db"],
    )?;
    for t in &res.filters {
        if !t.bands.is_empty() {
            let mut w = files.csv(out, "study2_ssppf_band.csv", "study2_band", &["window", "time", "coord", "lo", "hi", "truth"])?;
            for &(k, c, lo, hi) in &t.bands {
                w.raw(&line(&[&k, &(k as f64 * bin), &c, &lo, &hi, &res.scenario.truth(k)[c]]))?;
            }
            w.finish()?;
        }
        if let Some(ks) = &t.ks {
            write_ks(&mut files, out, &format!("study2_ks_{}.csv", t.kind.label()), ks)?;
        }
        if let Some(acf) = &t.acf {
            write_acf(&mut files, out, &format!("study2_acf_{}.csv", t.kind.label()), acf)?;
        }
        let na = || "".to_string();
        let ks_cells = t.ks.as_ref().map_or([na(), na(), na()], |k| [k.statistic.to_string(), k.band.to_string(), k.pass.to_string()]);
        let acf_cells = t.acf.as_ref().map_or([na(), na(), na()], |a| [acf_max(a).to_string(), a.band.to_string(), a.pass.to_string()]);
        let mse_db = to_db(t.final_mse);
        gof.raw(&format!(
            "{},{},{},{},{mse_db}",
            t.kind.label(),
            gamma_of(&res.suite, t.kind),
            ks_cells.join(","),
            acf_cells.join(",")
        ))?;
        summary.push(format!(
            "{:<8} final MSE {mse_db:.2} dB  KS {}  ACF {}",
            t.kind.label(),
            t.ks.as_ref().map_or("n/a".into(), |k| format!("{:.4}/{:.4} {}", k.statistic, k.band, if k.pass { "pass" } else { "fail" })),
            t.acf.as_ref().map_or("n/a", |a| if a.pass { "pass" } else { "fail" }),
        ));
    }
    gof.finish()?;

    let mut w = files.csv(out, "study2_rate.csv", "study2_rate_hz", &["bin", "time", "series", "value"])?;
    let from = (cfg.rate_window.0 / cfg.delta).round() as usize;
    let to = ((cfg.rate_window.1 / cfg.delta).round() as usize).min(res.true_lam.len());
    let mut series: Vec<(&str, Vec<f64>)> = vec![
        ("spike", res.spikes.bins().iter().map(|&b| f64::from(b)).collect()),
        ("truth", res.true_lam.iter().map(|p| p / cfg.delta).collect()),
    ];
    for t in &res.filters {
        series.push((t.kind.label(), t.lam_hat.iter().map(|p| p / cfg.delta).collect()));
    }
    series.push(("nrc", res.nrc_lam.iter().map(|p| p / cfg.delta).collect()));
    for (name, values) in &series {
        for t in from..to {
            w.raw(&line(&[&t, &(t as f64 * cfg.delta), name, &values[t]]))?;
        }
    }
    w.finish()?;
    write_cv(&mut files, out, "study2_cv.csv", &res.cv)?;
    let settle = cfg.settle_windows();
    for &c in &cfg.support {
        if res.intervals.iter().any(|r| r.coord == c && !res.is_transient(r.window, settle)) {
            summary.push(format!("coord {c}: post-transient interval coverage {:.3}", res.post_transient_coverage(c, settle)));
        }
    }

    if gnuplot {
        let mut names = vec!["truth"];
        names.extend(kinds.iter().map(|k| k.label()));
        let mut script = String::from("set datafile separator ','\nset xlabel 'time (s)'\n");
        for &c in &cfg.support {
            let plots: Vec<String> = names
                .iter()
                .map(|n| format!("'study2_trajectory.csv' using 2:(strcol(3) eq '{n}' && $4 == {c} ? $5 : 1/0) with lines title '{n}'"))
                .collect();
            script.push_str(&format!("set title 'coordinate {c}'\nplot {}\npause -1\n", plots.join(", ")));
        }
        let mut rate_names = names.clone();
        rate_names.push("nrc");
        let plots: Vec<String> = rate_names
            .iter()
            .map(|n| format!("'study2_rate.csv' using 2:(strcol(3) eq '{n}' ? $4 : 1/0) with lines title '{n}'"))
            .collect();
        script.push_str(&format!("set title 'rate (Hz)'\nplot {}\npause -1\n", plots.join(", ")));
        for t in &res.filters {
            if t.ks.is_some() {
                script.push_str(&format!(
                    "set title 'KS {0}'\nset xlabel 'model quantile'\nplot 'study2_ks_{0}.csv' using 1:2 with lines title 'empirical', '' using 1:3 with lines dt 2 notitle, '' using 1:4 with lines dt 2 notitle\npause -1\n",
                    t.kind.label()
                ));
            }
        }
        files.text(out, "plots.gp", &script)?;
    }
    Ok(RunOutput {
        seed: cfg.seed,
        resolved: to_toml(&Study2Resolved { study2: cfg })?,
        files: files.names,
        summary,
    })
}

fn run_strf(cfg: &PlantedStrfConfig, out: &Path, gnuplot: bool) -> Result<RunOutput, CliError> {
    let res = planted_strf(cfg)?;
    let mut files = Files::default();
    let dict = &res.dictionary;
    let freqs = {
        let (lo, hi, j) = (cfg.torc.f_lo, cfg.torc.f_hi, cfg.torc.bands);
        (0..j)
            .map(|b| if j == 1 { lo } else { lo * (hi / lo).powf(b as f64 / (j - 1) as f64) })
            .collect::<Vec<f64>>()
    };
    let lag_ms = |i: usize| i as f64 * cfg.delta * 1000.0;

    let mut w = files.csv(out, "strf_planted.csv", "strf_image", &["lag", "lag_ms", "band", "frequency", "value"])?;
    for ((i, j), v) in res.planted.indexed_iter() {
        w.raw(&line(&[&i, &lag_ms(i), &j, &freqs[j], v]))?;
    }
    w.finish()?;

    let mut w = files.csv(out, "strf_snapshots.csv", "strf_snapshots", &["time", "lag", "lag_ms", "band", "frequency", "value"])?;
    for (t, img) in &res.snapshots {
        for ((i, j), v) in img.indexed_iter() {
            w.raw(&line(&[t, &i, &lag_ms(i), &j, &freqs[j], v]))?;
        }
    }
    w.finish()?;

    if !cfg.trace_points.is_empty() {
        let names: Vec<String> = cfg.trace_points.iter().map(|(i, j)| format!("lag{i}_band{j}")).collect();
        let mut cols = vec!["time"];
        cols.extend(names.iter().map(String::as_str));
        let mut w = files.csv(out, "strf_traces.csv", "strf_traces", &cols)?;
        for (t, vals) in &res.traces {
            let v: Vec<String> = vals.iter().map(|x| x.to_string()).collect();
            w.raw(&format!("{t},{}", v.join(",")))?;
        }
        w.finish()?;
    }

    let mut rank = vec![0; dict.atoms()];
    for (r, &p) in res.ranking.iter().enumerate() {
        rank[p] = r + 1;
    }
    let mut w = files.csv(out, "strf_coefficients.csv", "strf_coefficients", &["atom", "row", "col", "xi_true", "xi_hat", "rank"])?;
    for p in 0..dict.atoms() {
        let (r, c) = dict.position(p);
        w.raw(&line(&[&p, &r, &c, &res.xi_true[p], &res.xi_hat[p], &rank[p]]))?;
    }
    w.finish()?;

    let mut w = files.csv(
        out,
        "strf_summary.csv",
        "strf_summary",
        &["spikes", "step_size", "sigma_bar_sq", "mu_hat", "correlation", "top1", "top2"],
    )?;
    let top = |i: usize| res.ranking.get(i).copied().unwrap_or(0);
    w.raw(&line(&[&res.spike_count, &res.step_size, &res.sigma_bar_sq, &res.mu_hat, &res.correlation, &top(0), &top(1)]))?;
    w.finish()?;

    if gnuplot {
        let mut script = String::from("set datafile separator ','\nset view map\nset xlabel 'lag (ms)'\nset ylabel 'frequency (Hz)'\nset logscale y\n");
        script.push_str("set title 'planted'\nsplot 'strf_planted.csv' using 2:4:5 with points pointtype 5 palette\npause -1\n");
        for (t, _) in &res.snapshots {
            script.push_str(&format!(
                "set title 't = {t} s'\nsplot 'strf_snapshots.csv' using ($1=={t}?$3:1/0):5:6 with points pointtype 5 palette\npause -1\n"
            ));
        }
        files.text(out, "plots.gp", &script)?;
    }
    let summary = vec![
        format!("spikes {}  step size {:.4e}", res.spike_count, res.step_size),
        format!("top atoms {} {}  planted {:?}", top(0), top(1), cfg.atoms.iter().map(|a| a.0).collect::<Vec<_>>()),
        format!("correlation with planted STRF {:.4}", res.correlation),
    ];
    Ok(RunOutput {
        seed: cfg.seed,
        resolved: to_toml(&StrfResolved { strf: cfg })?,
        files: files.names,
        summary,
    })
}

fn run_custom(cfg: &CustomConfig, seed: u64, out: &Path, gnuplot: bool) -> Result<RunOutput, CliError> {
    let spikes = read_spikes(&cfg.spikes)?;
    let stim = read_stimulus(&cfg.stimulus)?;
    let (m, w_len) = (cfg.dim, cfg.window_len);
    if m == 0 || w_len == 0 || cfg.trace_every == 0 || cfg.ci_stride == 0 {
        return Err(CliError::Config("dim, window_len, trace_every and ci_stride must be positive".into()));
    }
    if spikes.len() % w_len != 0 {
        return Err(CliError::Config(format!(
            "{} spike bins do not divide into windows of {w_len}",
            spikes.len()
        )));
    }
    if stim.len() < spikes.len() {
        return Err(CliError::Config(format!(
            "stimulus has {} samples but the spike train has {} bins",
            stim.len(),
            spikes.len()
        )));
    }
    let is_l1 = matches!(cfg.filter, FilterKind::Ppf1 | FilterKind::Ppf0);
    if !cfg.cv_grid.is_empty() && !is_l1 {
        return Err(CliError::Config("cross-validation applies to the l1 filters only".into()));
    }
    if !cfg.ci_coords.is_empty() && cfg.filter != FilterKind::Ppf1 {
        return Err(CliError::Config("confidence intervals need filter l1_ppf1".into()));
    }
    if cfg.ci_coords.iter().any(|&c| c >= m) {
        return Err(CliError::Config("confidence coordinates must lie below dim".into()));
    }
    let sigma_sq = cfg.stimulus_var.unwrap_or_else(|| stim.variance());
    let mut suite = cfg.suite;
    let mut files = Files::default();
    let mut cv = Vec::new();
    if !cfg.cv_grid.is_empty() {
        let kind = cfg.filter;
        let base = if kind == FilterKind::Ppf1 { suite.ppf1 } else { suite.ppf0 };
        let r = cross_validate_gamma(&stim, &spikes, w_len, &cfg.cv_grid, |gamma| {
            let mut s = suite;
            let l1 = L1Settings { gamma, ..base };
            match kind {
                FilterKind::Ppf1 => s.ppf1 = l1,
                _ => s.ppf0 = l1,
            }
            s.build(kind, m, w_len, sigma_sq)
        })?;
        match kind {
            FilterKind::Ppf1 => suite.ppf1.gamma = r.best,
            _ => suite.ppf0.gamma = r.best,
        }
        cv.push((kind, r));
    }

    enum Runner {
        Tracked(Ppf1, Option<ConfidenceTracker>),
        Plain(Box<dyn PointProcessFilter>),
    }
    let mut runner = if cfg.filter == FilterKind::Ppf1 {
        let p = Ppf1::new(suite.ppf1.config(m, w_len, sigma_sq)?)?;
        let tracker = if cfg.ci_coords.is_empty() {
            None
        } else {
            let mut c = ConfidenceConfig::new(cfg.ci_coords.clone(), p.config().hyper.gamma);
            c.stride = cfg.ci_stride;
            c.level = cfg.ci_level;
            c.intercept_penalized = p.config().hyper.penalize_intercept;
            Some(ConfidenceTracker::new(m, p.config().beta, c)?)
        };
        Runner::Tracked(p, tracker)
    } else {
        Runner::Plain(suite.build(cfg.filter, m, w_len, sigma_sq)?)
    };
    two_sided_z(cfg.ci_level)?;

    let windows = spikes.num_windows(w_len);
    let bin = spikes.delta() * w_len as f64;
    let mut cols = vec!["window".to_string(), "time".to_string()];
    cols.extend((0..m).map(|c| format!("w{c}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut est_out = files.csv(out, "custom_estimates.csv", "custom_estimates", &cols)?;
    let mut intervals = Vec::new();
    let mut lam_hat = Vec::with_capacity(spikes.len());
    let mut x = Array2::zeros((w_len, m));
    for k in 1..=windows {
        fill_design(&stim, m, k, x.view_mut())?;
        let n = spikes.window(w_len, k)?;
        let est = match &runner {
            Runner::Tracked(p, _) => p.estimate(),
            Runner::Plain(f) => f.estimate(),
        };
        lam_hat.extend(x.dot(est).iter().map(|&e| logistic(e)));
        let est = match &mut runner {
            Runner::Tracked(p, tracker) => {
                p.update(n.view(), x.view())?;
                if let Some(t) = tracker.as_mut() {
                    if let Some(rs) = t.observe(x.view(), n.view(), p.estimate(), &p.gradient(), p.information())? {
                        intervals.extend(rs);
                    }
                }
                p.estimate()
            }
            Runner::Plain(f) => {
                f.update(n.view(), x.view())?;
                f.estimate()
            }
        };
        if k % cfg.trace_every == 0 || k == windows {
            let vals: Vec<String> = est.iter().map(|v| v.to_string()).collect();
            est_out.raw(&format!("{k},{},{}", k as f64 * bin, vals.join(",")))?;
        }
    }
    est_out.finish()?;

    if !intervals.is_empty() {
        let header = format!("{},time", IntervalRecord::CSV_HEADER);
        let cols: Vec<&str> = header.split(',').collect();
        let mut w = files.csv(out, "custom_ci.csv", "custom_ci", &cols)?;
        for r in &intervals {
            w.raw(&format!("{},{}", r.csv_row(), r.window as f64 * bin))?;
        }
        w.finish()?;
    }

    let mut w = files.csv(out, "custom_rate.csv", "custom_rate_hz", &["bin", "time", "spike", "rate"])?;
    for (t, (&s, &p)) in spikes.bins().iter().zip(&lam_hat).enumerate() {
        w.raw(&line(&[&t, &(t as f64 * spikes.delta()), &s, &(p / spikes.delta())]))?;
    }
    w.finish()?;

    let clipped: Vec<f64> = lam_hat.iter().map(|p| p.clamp(1e-12, 1.0 - 1e-12)).collect();
    let burn = burn_in_bins(clipped.len(), cfg.gof_burn_in);
    let mut rng = realization_rng(seed, 0);
    let mut summary = Vec::new();
    match time_rescale(spikes.bins(), &clipped, Rescaling::Jittered, burn, &mut rng) {
        Ok(t) => {
            let ks = ks_test(&t);
            let acf = acf_test(&t, cfg.gof_max_lag);
            if let Ok(ks) = &ks {
                write_ks(&mut files, out, "custom_ks.csv", ks)?;
                summary.push(format!("KS {:.4} band {:.4} {}", ks.statistic, ks.band, if ks.pass { "pass" } else { "fail" }));
            }
            if let Ok(acf) = &acf {
                write_acf(&mut files, out, "custom_acf.csv", acf)?;
                summary.push(format!("ACF max {:.4} band {:.4} {}", acf_max(acf), acf.band, if acf.pass { "pass" } else { "fail" }));
            }
        }
        Err(e @ Error::InsufficientData(_)) => summary.push(format!("goodness of fit skipped: {e}")),
        Err(e) => return Err(e.into()),
    }
    write_cv(&mut files, out, "custom_cv.csv", &cv)?;
    if let Some((_, r)) = cv.first() {
        summary.push(format!("cross-validated gamma {}", r.best));
    }
    if gnuplot {
        let script = "set datafile separator ','\nset key autotitle columnhead\nplot 'custom_rate.csv' using 2:4 with lines\npause -1\n\
                      plot 'custom_ks.csv' using 1:2 with lines, '' using 1:3 with lines dt 2, '' using 1:4 with lines dt 2\npause -1\n";
        files.text(out, "plots.gp", script)?;
    }
    let mut resolved = cfg.clone();
    resolved.suite = suite;
    Ok(RunOutput {
        seed,
        resolved: to_toml(&CustomResolved { custom: &resolved })?,
        files: files.names,
        summary,
    })
}
