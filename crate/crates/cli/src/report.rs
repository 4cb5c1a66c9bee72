//! Report envelopes, digests and text renderings.

use std::fmt::Write as _;

use cape_core::Panel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{DiagnosisBody, FrontierReport, IsoclineSummary, OdeFitReport, PredictReport, WhatIfReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Md,
    Csv,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// SHA-256 over the canonical CSV serialisation of the base, frontier and loss tables.
pub fn panel_digest(panel: &Panel) -> String {
    let mut text = panel.records_to_csv();
    text.push('\x1e');
    text.push_str(&panel.frontier_to_csv());
    text.push('\x1e');
    text.push_str(&panel.losses_to_csv());
    format!("sha256:{}", sha256_hex(text.as_bytes()))
}

/// A diagnosis plus the wall-clock time it was produced. The timestamp sits
/// outside `body`, so two runs with the same inputs and seed differ only there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub generated_at: String,
    pub body_digest: String,
    pub body: DiagnosisBody,
}

impl DiagnosisReport {
    pub fn new(body: DiagnosisBody) -> Self {
        Self {
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            body_digest: body_digest(&body),
            body,
        }
    }
}

pub fn body_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

pub fn body_digest(body: &DiagnosisBody) -> String {
    format!("sha256:{}", sha256_hex(body_json(body).as_bytes()))
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

/// Markdown and CSV views; JSON is plain serde.
pub trait Render: Serialize + Sized {
    fn markdown(&self) -> String;
    fn csv(&self) -> String;

    fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => body_json(self) + "\n",
            OutputFormat::Md => self.markdown(),
            OutputFormat::Csv => self.csv(),
        }
    }
}

impl Render for DiagnosisReport {
    fn markdown(&self) -> String {
        let b = &self.body;
        let mut s = String::new();
        let _ = writeln!(s, "# Coupling diagnosis\n");
        let _ = writeln!(s, "- pair: {} / {}", b.pair.0, b.pair.1);
        let _ = writeln!(s, "- seed: {}, resamples: {}", b.seed, b.resamples);
        let _ = writeln!(s, "- panel: `{}`", b.panel_digest);
        let _ = writeln!(s, "- toolkit: {}, generated {}\n", b.toolkit_version, self.generated_at);
        let _ = writeln!(s, "| family | models | r | phases | N_c (B) | 95% CI | r (width-norm) |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for f in &b.families {
            let phases: Vec<String> = f.phase_sequence.iter().map(|p| p.to_string()).collect();
            let ci = f.bootstrap.as_ref().map_or("-".to_string(), |c| format!("{:.2}..{:.2}", c.low, c.high));
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                f.family,
                f.models.len(),
                opt(f.pearson_r, 3),
                phases.join(" "),
                opt(f.running_fit.as_ref().map(|r| r.n_c), 3),
                ci,
                opt(f.width_normalized.as_ref().and_then(|w| w.normalized_r), 3),
            );
        }
        let _ = writeln!(s, "\n## Phase cohorts\n");
        let _ = writeln!(s, "| phase | models | families | r | p | d_eff |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for p in &b.population.phases {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                p.phase,
                p.n_models,
                p.n_families,
                opt(p.coupling.as_ref().map(|c| c.r), 3),
                p.coupling.as_ref().map_or("-".into(), |c| format!("{:.2e}", c.permutation.p_value)),
                opt(p.participation_ratio, 3),
            );
        }
        let _ = writeln!(s, "\nfrontier d_eff: {}", opt(b.population.frontier_participation_ratio, 3));
        if let Some(d) = &b.population.bonus_demeaned {
            let _ = writeln!(s, "bonus r pooled {:.3}, de-meaned {:.3}", d.pooled_r, d.demeaned_r);
        }
        let flags: Vec<String> = b
            .families
            .iter()
            .flat_map(|f| f.flags.iter().map(move |x| format!("{}: {x}", f.family)))
            .chain(b.population.flags.iter().cloned())
            .collect();
        if !flags.is_empty() {
            let _ = writeln!(s, "\n## Flags\n");
            for f in flags {
                let _ = writeln!(s, "- {f}");
            }
        }
        s
    }

    fn csv(&self) -> String {
        let mut s = String::from("family,left,right,n_mid_b,gamma,defined,phase\n");
        for f in &self.body.families {
            for p in &f.points {
                let _ = writeln!(s, "{},{},{},{},{},{},{}", f.family, p.interval.0, p.interval.1, p.n_mid, p.gamma, p.defined, p.phase);
            }
        }
        s
    }
}

impl Render for OdeFitReport {
    fn markdown(&self) -> String {
        let mut s = format!("# ODE fit ({})\n\n{} samples, threshold {}\n\n", self.families.join(", "), self.n_samples, self.model.threshold_used);
        for e in &self.equations {
            let _ = writeln!(s, "- `{e}`");
        }
        let _ = writeln!(s, "\nstable across the threshold scan: {}", self.stability.stable);
        for w in &self.warnings {
            let _ = writeln!(s, "- warning: {w}");
        }
        s
    }

    fn csv(&self) -> String {
        let mut s = String::from("equation,term,coefficient\n");
        for (i, row) in self.model.coefficients.iter().enumerate() {
            for (k, c) in row.iter().enumerate().filter(|(_, c)| **c != 0.0) {
                let _ = writeln!(s, "{},{},{c}", self.model.benchmarks[i], self.model.library.term_name(k, &self.model.benchmarks));
            }
        }
        s
    }
}

impl Render for PredictReport {
    fn markdown(&self) -> String {
        let mut s = format!("# Cross-prediction on {}\n\nMAE {:.2}%", self.holdout, self.cross.mae_percent);
        if let Some(b) = &self.baseline {
            let _ = write!(s, " (degree-{} baseline {:.2}%)", b.degree, b.mae_percent);
        }
        let _ = writeln!(s, "\n\n| benchmark | MAE % |\n|---|---|");
        for (b, v) in &self.cross.per_benchmark {
            let _ = writeln!(s, "| {b} | {v:.2} |");
        }
        s
    }

    fn csv(&self) -> String {
        let mut s = String::from("series,x,y\n");
        for p in &self.plots {
            for pt in &p.points {
                let _ = writeln!(s, "{},{},{}", p.id, pt.x, pt.y);
            }
        }
        s
    }
}

impl Render for IsoclineSummary {
    fn markdown(&self) -> String {
        let c = &self.calibration;
        let mut s = format!(
            "# Isocline\n\nboundary {} on {} / {}: a/b = {:.5}, above predicts {}\n\n| family | hits | counted |\n|---|---|---|\n",
            c.boundary_model,
            c.pair.0,
            c.pair.1,
            c.a_over_b,
            if c.above_is_positive { "positive" } else { "negative" }
        );
        for r in &self.reports {
            let _ = writeln!(s, "| {} | {} | {} |", r.family, r.hits, r.counted);
        }
        let _ = writeln!(s, "\ntotal {}/{}", self.hits, self.counted);
        s
    }

    fn csv(&self) -> String {
        let mut s = String::from("family,left,right,gamma,phase,predicted,hit\n");
        for r in &self.reports {
            for i in &r.intervals {
                let hit = i.hit.map_or("".to_string(), |h| h.to_string());
                let pred = serde_json::to_string(&i.predicted).expect("enum").replace('"', "");
                let _ = writeln!(s, "{},{},{},{},{},{pred},{hit}", r.family, i.interval.0, i.interval.1, i.gamma, i.phase);
            }
        }
        s
    }
}

impl Render for FrontierReport {
    fn markdown(&self) -> String {
        let mut s = format!(
            "# Frontier\n\n{} models, {} labs; GPQA = {} + {} x SWE\n",
            self.n,
            self.n_labs,
            opt(self.beta0, 4),
            opt(self.beta1, 4)
        );
        if let Some(r) = &self.regression {
            let _ = writeln!(s, "\nr = {:.4}, p (permutation) = {:.2e}, p (parametric) = {:.2e}", r.r, r.p_permutation, r.p_parametric);
        }
        if let Some(l) = &self.loo {
            let _ = writeln!(s, "\nleave-one-lab-out MAE {:.2} pp (sd {:.2}) over {} labs", l.mean_mae_pp, l.std_mae_pp, l.folds.len());
        }
        if let Some(h) = &self.h_field {
            let _ = writeln!(s, "\n| lab | models | mean h |\n|---|---|---|");
            for (lab, m) in &h.per_group_mean {
                let _ = writeln!(s, "| {lab} | {} | {m:+.4} |", h.per_group_count[lab]);
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "- warning: {w}");
        }
        s
    }

    fn csv(&self) -> String {
        let mut s = String::from("lab,models,mean_h\n");
        if let Some(h) = &self.h_field {
            for (lab, m) in &h.per_group_mean {
                let _ = writeln!(s, "{lab},{},{m}", h.per_group_count[lab]);
            }
        }
        s
    }
}

impl Render for WhatIfReport {
    fn markdown(&self) -> String {
        format!(
            "# What-if on {}\n\nh_offset {}, width x{}\n\nlast interval: {} (gamma {:.3}): {}\n",
            self.family, self.params.h_offset, self.params.width_mult, self.verdict.phase, self.verdict.gamma, self.verdict.recommendation
        )
    }

    fn csv(&self) -> String {
        let mut s = String::from("left,right,n_mid_b,gamma,phase\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{},{}", p.interval.0, p.interval.1, p.n_mid, p.gamma, p.phase);
        }
        s
    }
}
