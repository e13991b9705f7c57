//! Scoring, comparison tables, and plot-data emission for sparse-vs-dense
//! experiments.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use crate::tracker::{PoseMotion, TrackRecord, TrackStatus};
use crate::{fmt_f64, Error, Result};

/// Success thresholds: strict inequalities, translation as a fraction of
/// scene diameter.
pub const SUCCESS_ROT_DEG: f64 = 1.0;
pub const SUCCESS_TRANS_FRAC: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SequenceSummary {
    pub scene: String,
    pub sequence: String,
    pub n_streams: usize,
    pub tracked: usize,
    pub skipped: usize,
    pub failed: usize,
    pub rot_mean: f64,
    pub rot_median: f64,
    pub rot_max: f64,
    pub trans_mean: f64,
    pub trans_median: f64,
    pub trans_max: f64,
    /// max/median of the rotation errors (drift indicator).
    pub drift_ratio: f64,
    /// Every stream under the success criterion.
    pub success: bool,
    /// Mean pixels evaluated per update.
    pub pixels_per_update: f64,
    pub millis_total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BenchmarkReport {
    pub scene_diameter: f64,
    pub entries: Vec<SequenceSummary>,
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Whether one record satisfies the success criterion (strict inequalities).
pub fn record_success(rot_deg: f64, trans: f64, diameter: f64) -> bool {
    rot_deg < SUCCESS_ROT_DEG && trans < SUCCESS_TRANS_FRAC * diameter
}

/// Score one tracked sequence against per-stream ground truth.
pub fn score_sequence(
    scene: &str,
    sequence: &str,
    records: &mut [TrackRecord],
    truth: &[PoseMotion],
    diameter: f64,
) -> Result<SequenceSummary> {
    if records.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} records vs {} ground-truth streams",
            records.len(),
            truth.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::Data("empty sequence".into()));
    }
    let mut rot = Vec::with_capacity(records.len());
    let mut trans = Vec::with_capacity(records.len());
    let mut success = true;
    let mut tracked = 0;
    let mut skipped = 0;
    let mut failed = 0;
    let mut px_total = 0.0;
    let mut millis_total = 0.0;
    for (rec, gt) in records.iter_mut().zip(truth) {
        rec.score_against(gt);
        let r = rec.rot_err_deg.unwrap();
        let t = rec.trans_err.unwrap();
        success &= record_success(r, t, diameter);
        rot.push(r);
        trans.push(t);
        match rec.status {
            TrackStatus::Tracked => tracked += 1,
            TrackStatus::Skipped => skipped += 1,
            TrackStatus::Failed => failed += 1,
        }
        px_total += rec.events_per_update as f64;
        millis_total += rec.millis;
    }
    let mut rot_sorted = rot.clone();
    rot_sorted.sort_by(f64::total_cmp);
    let mut trans_sorted = trans.clone();
    trans_sorted.sort_by(f64::total_cmp);
    let rot_median = median(&rot_sorted);
    let rot_max = *rot_sorted.last().unwrap();
    Ok(SequenceSummary {
        scene: scene.into(),
        sequence: sequence.into(),
        n_streams: records.len(),
        tracked,
        skipped,
        failed,
        rot_mean: rot.iter().sum::<f64>() / rot.len() as f64,
        rot_median,
        rot_max,
        trans_mean: trans.iter().sum::<f64>() / trans.len() as f64,
        trans_median: median(&trans_sorted),
        trans_max: *trans_sorted.last().unwrap(),
        drift_ratio: if rot_median > 0.0 {
            rot_max / rot_median
        } else {
            f64::INFINITY
        },
        success,
        pixels_per_update: px_total / records.len() as f64,
        millis_total,
    })
}

const TABLE_COLUMNS: &[&str] = &[
    "rot_mean",
    "rot_median",
    "rot_max",
    "trans_mean",
    "trans_median",
    "trans_max",
    "pixels_per_update",
    "success",
];

fn summary_fields(s: &SequenceSummary) -> Vec<String> {
    vec![
        fmt_f64(s.rot_mean),
        fmt_f64(s.rot_median),
        fmt_f64(s.rot_max),
        fmt_f64(s.trans_mean),
        fmt_f64(s.trans_median),
        fmt_f64(s.trans_max),
        fmt_f64(s.pixels_per_update),
        format!("{}", s.success),
    ]
}

/// Aligned sparse-vs-dense table: CSV plus a human-readable rendering.
/// Keys present on only one side get absent markers; the pixel-ratio column
/// is sparse events-per-update over dense pixels-per-update.
#[derive(Clone, Debug)]
pub struct TableArtifact {
    pub csv: String,
    pub text: String,
}

pub fn compare_table(sparse: &BenchmarkReport, dense: &BenchmarkReport) -> TableArtifact {
    let keys: BTreeSet<(String, String)> = sparse
        .entries
        .iter()
        .chain(dense.entries.iter())
        .map(|e| (e.scene.clone(), e.sequence.clone()))
        .collect();
    let lookup = |report: &BenchmarkReport, key: &(String, String)| -> Option<SequenceSummary> {
        report
            .entries
            .iter()
            .find(|e| e.scene == key.0 && e.sequence == key.1)
            .cloned()
    };

    let mut csv = String::from("scene,sequence,side,");
    csv.push_str(&TABLE_COLUMNS.join(","));
    csv.push_str(",pixel_ratio\n");
    let mut text = format!(
        "{:<14} {:<10} {:>7} {:>11} {:>11} {:>11} {:>11} {:>9} {:>8}\n",
        "scene", "sequence", "side", "rot_mean", "rot_max", "trans_mean", "trans_max", "px/upd", "success"
    );
    for key in &keys {
        let s = lookup(sparse, key);
        let d = lookup(dense, key);
        let ratio = match (&s, &d) {
            (Some(s), Some(d)) if d.pixels_per_update > 0.0 => {
                Some(s.pixels_per_update / d.pixels_per_update)
            }
            _ => None,
        };
        for (side, entry) in [("sparse", &s), ("dense", &d)] {
            match entry {
                Some(e) => {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        key.0,
                        key.1,
                        side,
                        summary_fields(e).join(","),
                        ratio
                            .filter(|_| side == "sparse")
                            .map(fmt_f64)
                            .unwrap_or_default(),
                    ));
                    text.push_str(&format!(
                        "{:<14} {:<10} {:>7} {:>11.4} {:>11.4} {:>11.6} {:>11.6} {:>9.0} {:>8}\n",
                        key.0,
                        key.1,
                        side,
                        e.rot_mean,
                        e.rot_max,
                        e.trans_mean,
                        e.trans_max,
                        e.pixels_per_update,
                        e.success
                    ));
                }
                None => {
                    let absent: Vec<&str> = TABLE_COLUMNS.iter().map(|_| "-").collect();
                    csv.push_str(&format!(
                        "{},{},{},{},\n",
                        key.0,
                        key.1,
                        side,
                        absent.join(",")
                    ));
                    text.push_str(&format!(
                        "{:<14} {:<10} {:>7} {:>11} {:>11} {:>11} {:>11} {:>9} {:>8}\n",
                        key.0, key.1, side, "-", "-", "-", "-", "-", "-"
                    ));
                }
            }
        }
        if let Some(r) = ratio {
            text.push_str(&format!("{:<14} {:<10} pixel-ratio sparse/dense = {:.4}\n", key.0, key.1, r));
        }
    }
    TableArtifact { csv, text }
}

/// Write report.csv, report.txt and per-sequence plot CSVs
/// (plots/loss_<scene>_<seq>.csv, plots/error_<scene>_<seq>.csv).
pub fn write_report(
    out_dir: &Path,
    table: &TableArtifact,
    sequences: &[(String, String, Vec<TrackRecord>)],
) -> Result<()> {
    std::fs::create_dir_all(out_dir.join("plots")).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("report.csv");
    std::fs::File::create(&csv_path)
        .and_then(|mut f| f.write_all(table.csv.as_bytes()))
        .map_err(|e| Error::io(&csv_path, e))?;
    let txt_path = out_dir.join("report.txt");
    std::fs::File::create(&txt_path)
        .and_then(|mut f| f.write_all(table.text.as_bytes()))
        .map_err(|e| Error::io(&txt_path, e))?;
    for (scene, seq, records) in sequences {
        let mut loss_csv = String::from("stream,iter,loss\n");
        let mut err_csv = String::from("stream,rot_err_deg,trans_err\n");
        for r in records {
            for (i, l) in r.loss_trajectory.iter().enumerate() {
                loss_csv.push_str(&format!("{},{},{}\n", r.stream_index, i, fmt_f64(*l)));
            }
            err_csv.push_str(&format!(
                "{},{},{}\n",
                r.stream_index,
                r.rot_err_deg.map(fmt_f64).unwrap_or_default(),
                r.trans_err.map(fmt_f64).unwrap_or_default()
            ));
        }
        for (name, body) in [("loss", loss_csv), ("error", err_csv)] {
            let p = out_dir.join(format!("plots/{name}_{scene}_{seq}.csv"));
            std::fs::File::create(&p)
                .and_then(|mut f| f.write_all(body.as_bytes()))
                .map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}
