//! CSV and Markdown writers for metric reports, benchmark tables and training logs.

use std::fmt::Write as _;
use std::path::Path;

use crate::bench::BenchRow;
use crate::error::{IdfError, Result};
use crate::metrics::MetricReport;
use crate::train::TrainLogEntry;

fn csv_error(path: &Path, e: csv::Error) -> IdfError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IdfError::io(path, io),
        other => IdfError::Config(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| IdfError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| IdfError::io(path, e))
}

/// `name,psnr_db,ssim` per image followed by a `mean` row.
pub fn write_metric_csv(report: &MetricReport, path: &Path) -> Result<()> {
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                format!("{:.4}", r.psnr_db),
                format!("{:.6}", r.ssim),
            ]
        })
        .collect();
    rows.push(vec![
        "mean".into(),
        format!("{:.4}", report.psnr_db),
        format!("{:.6}", report.ssim),
    ]);
    write_csv(path, &["name", "psnr_db", "ssim"], rows)
}

pub fn metric_markdown(report: &MetricReport) -> String {
    let mut s = String::from("| image | PSNR (dB) | SSIM |\n|---|---:|---:|\n");
    for r in &report.rows {
        let _ = writeln!(s, "| {} | {:.2} | {:.4} |", r.name, r.psnr_db, r.ssim);
    }
    let _ = writeln!(
        s,
        "| **mean** | {:.2} | {:.4} |",
        report.psnr_db, report.ssim
    );
    s
}

const BENCH_HEADER: [&str; 10] = [
    "noise",
    "dataset",
    "images",
    "noisy_psnr",
    "noisy_ssim",
    "psnr",
    "ssim",
    "iter_mean",
    "iter_min",
    "iter_max",
];

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.noise.clone(),
                r.dataset.clone(),
                r.images.to_string(),
                format!("{:.4}", r.noisy.psnr_db),
                format!("{:.6}", r.noisy.ssim),
                format!("{:.4}", r.denoised.psnr_db),
                format!("{:.6}", r.denoised.ssim),
                format!("{:.3}", r.iterations.mean),
                r.iterations.min.to_string(),
                r.iterations.max.to_string(),
            ]
        })
        .collect();
    write_csv(path, &BENCH_HEADER, body)
}

/// Noise type × dataset rows with `PSNR/SSIM` cells.
pub fn bench_markdown(rows: &[BenchRow]) -> String {
    let mut s = String::from(
        "| Noise | Dataset | Noisy | Denoised | # Iterations |\n|---|---|---:|---:|---:|\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {:.2}/{:.4} | {:.2}/{:.4} | {:.2} |",
            r.noise,
            r.dataset,
            r.noisy.psnr_db,
            r.noisy.ssim,
            r.denoised.psnr_db,
            r.denoised.ssim,
            r.iterations.mean
        );
    }
    s
}

/// `step,loss,wall_ms`.
pub fn write_train_log(log: &[TrainLogEntry], path: &Path) -> Result<()> {
    let rows = log
        .iter()
        .map(|e| {
            vec![
                e.step.to_string(),
                format!("{:?}", e.loss),
                e.wall_ms.to_string(),
            ]
        })
        .collect();
    write_csv(path, &["step", "loss", "wall_ms"], rows)
}
