//! Side-by-side short runs of the three pairing options and the two-view
//! baselines.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{ObjectiveKind, RunConfig};
use super::train::{run_in_memory, TrainData};
use crate::error::Result;
use crate::evaluation::{GroupReport, ReportSummary};
use crate::objective::{anchor_information_curve, info_ratios, InfoCurvePoint, InfoRatios, InfoVolumeModel, PairingOption};
use crate::views::ViewScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    pub objective: ObjectiveKind,
    pub option: Option<PairingOption>,
    pub views: ViewScheme,
    pub info: Option<InfoRatios>,
    pub seeds: Vec<u64>,
    pub reports: Vec<GroupReport>,
    pub summary: ReportSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionCurve {
    pub option: PairingOption,
    pub points: Vec<InfoCurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionAnalysis {
    pub variants: Vec<VariantResult>,
    pub curves: Vec<OptionCurve>,
}

/// The compared variants: options 1 to 3 with normalized+augmented views,
/// then the NT-Xent baseline with augmented+augmented and
/// normalized+augmented views.
pub fn variant_configs(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut out = Vec::new();
    for option in PairingOption::ALL {
        let mut c = base.clone();
        c.objective.kind = ObjectiveKind::Mttv;
        c.objective.option = option;
        c.objective.views = ViewScheme::NormalizedAugmented;
        out.push((format!("mttv-{option}"), c));
    }
    out.push(("nt-xent-aa".into(), base.as_nt_xent(ViewScheme::AugmentedAugmented)));
    out.push(("nt-xent-na".into(), base.as_nt_xent(ViewScheme::NormalizedAugmented)));
    out
}

/// Seeds used for `count` repeats of a base seed.
pub fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Train every config to completion and return its final KNN report, in
/// input order. Jobs run on up to `threads` workers; each job owns its RNG,
/// so results do not depend on the thread count.
pub fn run_jobs(configs: &[RunConfig], threads: usize) -> Result<Vec<GroupReport>> {
    let job = |cfg: &RunConfig| -> Result<GroupReport> {
        let data = TrainData::prepare(cfg)?;
        let (trainer, _) = run_in_memory(cfg, &data)?;
        trainer.knn_report()
    };
    let threads = threads.clamp(1, configs.len().max(1));
    if threads == 1 {
        return configs.iter().map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<GroupReport>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let r = job(&configs[i]);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn default_threads(deterministic: bool) -> usize {
    if deterministic {
        1
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

pub fn analyze_options(base: &RunConfig, seeds: usize) -> Result<OptionAnalysis> {
    base.validate()?;
    let seeds = seed_list(base.seed, seeds);
    let variants = variant_configs(base);
    let mut jobs = Vec::new();
    for (_, cfg) in &variants {
        for &seed in &seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            jobs.push(c);
        }
    }
    let mut reports = run_jobs(&jobs, default_threads(base.deterministic))?.into_iter();
    let model = InfoVolumeModel::default();
    let mut out = Vec::new();
    for (name, cfg) in variants {
        let reports: Vec<GroupReport> = reports.by_ref().take(seeds.len()).collect();
        let option = (cfg.objective.kind == ObjectiveKind::Mttv).then_some(cfg.objective.option);
        out.push(VariantResult {
            name,
            objective: cfg.objective.kind,
            option,
            views: cfg.objective.views,
            info: option.map(|o| info_ratios(o, &model)).transpose()?,
            seeds: seeds.clone(),
            summary: ReportSummary::of(&reports),
            reports,
        });
    }
    Ok(OptionAnalysis {
        variants: out,
        curves: PairingOption::ALL
            .into_iter()
            .map(|option| OptionCurve {
                option,
                points: anchor_information_curve(option, 20),
            })
            .collect(),
    })
}

impl OptionAnalysis {
    /// Write `options.json`, the `options.csv` comparison table and
    /// `info_curves.csv`.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(out.join("options.json"), json)?;

        let mut table = csv::Writer::from_path(out.join("options.csv")).map_err(csv_err)?;
        table
            .write_record([
                "variant",
                "left_ratio",
                "right_ratio",
                "knn_acc_mean",
                "knn_acc_std",
                "rare_acc_mean",
                "group_std_mean",
            ])
            .map_err(csv_err)?;
        for v in &self.variants {
            let ratio = |f: fn(&InfoRatios) -> f64| v.info.as_ref().map_or(String::new(), |i| f(i).to_string());
            table
                .write_record([
                    v.name.clone(),
                    ratio(|i| i.left),
                    ratio(|i| i.right),
                    v.summary.overall_acc.mean.to_string(),
                    v.summary.overall_acc.std.to_string(),
                    v.summary.rare_acc.mean.to_string(),
                    v.summary.std.mean.to_string(),
                ])
                .map_err(csv_err)?;
        }
        table.flush()?;

        let mut curves = csv::Writer::from_path(out.join("info_curves.csv")).map_err(csv_err)?;
        curves
            .write_record(["option", "information_loss", "left", "right", "shared"])
            .map_err(csv_err)?;
        for c in &self.curves {
            for p in &c.points {
                curves
                    .write_record([
                        u8::from(c.option).to_string(),
                        p.information_loss.to_string(),
                        p.left.to_string(),
                        p.right.to_string(),
                        p.shared.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
        }
        curves.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::Error::Malformed(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Malformed(format!("{other:?}")),
    }
}
