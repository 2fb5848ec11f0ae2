use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use plotters::coord::types::RangedCoordf64;
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::Serialize;

use super::{EvalError, PrdCurve, UniquenessRow};

pub const PRD_CSV: &str = "prd.csv";
pub const UNIQUENESS_CSV: &str = "uniqueness.csv";
pub const PRD_PLOT: &str = "prd.png";
pub const UNIQUENESS_PLOT: &str = "uniqueness.png";

const PLOT_SIZE: (u32, u32) = (640, 640);
const LINE_COLORS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];
const GRID: RGBColor = RGBColor(225, 225, 225);

#[derive(Serialize)]
struct PrdRow<'a> {
    curve_id: &'a str,
    theta: f64,
    lambda: f64,
    alpha: f64,
    beta: f64,
}

/// One CSV row per curve point, curves in the given order.
pub fn write_prd_csv<W: Write>(writer: W, curves: &[(String, PrdCurve)]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    for (id, curve) in curves {
        for p in &curve.points {
            w.serialize(PrdRow {
                curve_id: id,
                theta: p.theta,
                lambda: p.lambda,
                alpha: p.alpha,
                beta: p.beta,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_uniqueness_csv<W: Write>(writer: W, table: &[UniquenessRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    if table.is_empty() {
        w.write_record(["samples", "real_unique", "gen_unique", "gen_match", "gen_match_dedup"])?;
    }
    for row in table {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn plot_error<E: std::fmt::Debug>(e: E) -> EvalError {
    EvalError::Plot(format!("{e:?}"))
}

/// Unit-square chart with a light 0.1 grid; plots carry no text so that
/// no font is needed.
fn unit_chart<'a, 'b>(
    root: &'a DrawingArea<BitMapBackend<'b>, Shift>,
    x_max: f64,
) -> Result<ChartContext<'a, BitMapBackend<'b>, Cartesian2d<RangedCoordf64, RangedCoordf64>>, EvalError> {
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(root)
        .margin(24)
        .build_cartesian_2d(0.0..x_max, 0.0..1.0)
        .map_err(plot_error)?;
    for i in 0..=10 {
        let f = i as f64 / 10.0;
        let color = if i == 0 || i == 10 { BLACK } else { GRID };
        chart
            .draw_series(LineSeries::new([(f * x_max, 0.0), (f * x_max, 1.0)], color))
            .map_err(plot_error)?;
        chart
            .draw_series(LineSeries::new([(0.0, f), (x_max, f)], color))
            .map_err(plot_error)?;
    }
    Ok(chart)
}

/// PRD curves as recall (x) against precision (y).
pub fn plot_prd(path: &Path, curves: &[(String, PrdCurve)]) -> Result<(), EvalError> {
    let root = BitMapBackend::new(path, PLOT_SIZE).into_drawing_area();
    let mut chart = unit_chart(&root, 1.0)?;
    for (i, (_, curve)) in curves.iter().enumerate() {
        let color = LINE_COLORS[i % LINE_COLORS.len()];
        chart
            .draw_series(LineSeries::new(
                curve.points.iter().map(|p| (p.beta, p.alpha)),
                color.stroke_width(2),
            ))
            .map_err(plot_error)?;
    }
    root.present().map_err(plot_error)?;
    Ok(())
}

/// Fractions gen_unique/n, real_unique/n and gen_match/n against n, in
/// that color order.
pub fn plot_uniqueness(path: &Path, table: &[UniquenessRow]) -> Result<(), EvalError> {
    let root = BitMapBackend::new(path, PLOT_SIZE).into_drawing_area();
    let x_max = table.iter().map(|r| r.samples).max().unwrap_or(1) as f64;
    let mut chart = unit_chart(&root, x_max)?;
    let series: [fn(&UniquenessRow) -> usize; 3] = [|r| r.gen_unique, |r| r.real_unique, |r| r.gen_match];
    for (i, value) in series.iter().enumerate() {
        let points = table
            .iter()
            .map(|r| (r.samples as f64, value(r) as f64 / r.samples.max(1) as f64));
        chart
            .draw_series(LineSeries::new(points, LINE_COLORS[i].stroke_width(2)))
            .map_err(plot_error)?;
    }
    root.present().map_err(plot_error)?;
    Ok(())
}

/// Writes prd.csv, uniqueness.csv, prd.png and uniqueness.png into
/// `out_dir`, returning their paths.
pub fn emit_report(
    curves: &[(String, PrdCurve)],
    table: &[UniquenessRow],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    if curves.is_empty() || curves.iter().any(|(_, c)| c.points.is_empty()) {
        return Err(EvalError::EmptyInput("no PRD curve to report".into()));
    }
    fs::create_dir_all(out_dir)?;
    let paths: Vec<PathBuf> = [PRD_CSV, UNIQUENESS_CSV, PRD_PLOT, UNIQUENESS_PLOT]
        .iter()
        .map(|f| out_dir.join(f))
        .collect();
    write_prd_csv(fs::File::create(&paths[0])?, curves)?;
    write_uniqueness_csv(fs::File::create(&paths[1])?, table)?;
    plot_prd(&paths[2], curves)?;
    if table.is_empty() {
        return Ok(paths[..3].to_vec());
    }
    plot_uniqueness(&paths[3], table)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::prd_from_histograms;

    #[test]
    fn three_point_curve_gives_three_rows() {
        let curve = prd_from_histograms(&[0.5, 0.5], &[0.25, 0.75], 3).unwrap();
        let mut buf = Vec::new();
        write_prd_csv(&mut buf, &[("g".into(), curve)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "curve_id,theta,lambda,alpha,beta");
        assert!(lines[2].starts_with("g,0.785398"));
    }

    #[test]
    fn uniqueness_layout() {
        let row = UniquenessRow {
            samples: 500,
            real_unique: 406,
            gen_unique: 295,
            gen_match: 247,
            gen_match_dedup: 120,
        };
        let mut buf = Vec::new();
        write_uniqueness_csv(&mut buf, &[row]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "samples,real_unique,gen_unique,gen_match,gen_match_dedup\n500,406,295,247,120\n"
        );
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], &[], dir.path()).is_err());
        let curve = prd_from_histograms(&[0.5, 0.5], &[0.25, 0.75], 101).unwrap();
        let table = [UniquenessRow {
            samples: 10,
            real_unique: 4,
            gen_unique: 3,
            gen_match: 2,
            gen_match_dedup: 1,
        }];
        let paths = emit_report(&[("a".into(), curve)], &table, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        for p in paths {
            assert!(fs::metadata(&p).unwrap().len() > 0, "{}", p.display());
        }
        let png = fs::read(dir.path().join(PRD_PLOT)).unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }
}
