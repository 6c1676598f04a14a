//! Standard monocular depth metrics over the valid pixels of a prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorgrid::Grid1;

pub const DELTA_BASE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixel_count: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "abs_rel,sq_rel,rmse,rmse_log,log10,d1,d2,d3,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.log10,
            self.delta1,
            self.delta2,
            self.delta3,
            self.pixel_count
        )
    }

    /// Unweighted mean of per-image reports; `pixel_count` is summed.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            abs_rel: avg(|r| r.abs_rel),
            sq_rel: avg(|r| r.sq_rel),
            rmse: avg(|r| r.rmse),
            rmse_log: avg(|r| r.rmse_log),
            log10: avg(|r| r.log10),
            delta1: avg(|r| r.delta1),
            delta2: avg(|r| r.delta2),
            delta3: avg(|r| r.delta3),
            pixel_count: reports.iter().map(|r| r.pixel_count).sum(),
        })
    }
}

/// Evaluates pixels where `gt` is valid and positive and `pred` is valid and
/// positive. Threshold accuracies use a strict `< 1.25^j`.
pub fn compute_metrics(pred: &Grid1, gt: &Grid1) -> Result<MetricReport> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and ground truth {:?} differ",
            pred.shape(),
            gt.shape()
        )));
    }
    let thresholds = [
        DELTA_BASE,
        DELTA_BASE * DELTA_BASE,
        DELTA_BASE * DELTA_BASE * DELTA_BASE,
    ];
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log, mut log10) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    let mut n = 0usize;
    for p in 0..gt.len() {
        let (d, g) = (pred.values()[p], gt.values()[p]);
        if !(gt.valid()[p] && pred.valid()[p] && g > 0.0 && d > 0.0) {
            continue;
        }
        n += 1;
        let err = (d - g).abs();
        abs_rel += err / g;
        sq_rel += err * err / g;
        sq += err * err;
        let dl = d.ln() - g.ln();
        sq_log += dl * dl;
        log10 += (d.log10() - g.log10()).abs();
        let ratio = (d / g).max(g / d);
        for (hit, thr) in hits.iter_mut().zip(thresholds) {
            if ratio < thr {
                *hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let nf = n as f64;
    Ok(MetricReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        log10: log10 / nf,
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
        pixel_count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorgrid::SeedRng;
    use proptest::prelude::*;

    fn map(v: Vec<f64>) -> Grid1 {
        let n = v.len();
        Grid1::dense(1, n, v).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = map(vec![0.5, 2.0, 7.5]);
        let r = compute_metrics(&gt, &gt).unwrap();
        assert_eq!(
            (r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.log10),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
        assert_eq!(r.pixel_count, 3);
    }

    #[test]
    fn single_pixel_double() {
        let r = compute_metrics(&map(vec![2.0]), &map(vec![1.0])).unwrap();
        assert_eq!(r.abs_rel, 1.0);
        assert_eq!(r.sq_rel, 1.0);
        assert_eq!(r.rmse, 1.0);
        assert!((r.rmse_log - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((r.log10 - std::f64::consts::LOG10_2).abs() < 1e-12);
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn delta_threshold_is_strict() {
        let gt = map(vec![1.0, 2.0, 4.0]);
        let pred = map(vec![1.25, 2.5, 5.0]);
        let r = compute_metrics(&pred, &gt).unwrap();
        assert_eq!(r.delta1, 0.0);
        assert_eq!(r.delta2, 1.0);
    }

    #[test]
    fn excluded_pixels_and_empty() {
        let gt = Grid1::new(1, 3, vec![1.0, 0.0, 2.0], vec![true, true, false]).unwrap();
        let pred = map(vec![1.0, 1.0, 1.0]);
        assert_eq!(compute_metrics(&pred, &gt).unwrap().pixel_count, 1);
        let holes = Grid1::new(1, 3, vec![0.0; 3], vec![false; 3]).unwrap();
        assert!(matches!(
            compute_metrics(&pred, &holes),
            Err(Error::EmptyEvaluation)
        ));
        let nonpositive = map(vec![0.0, 0.0, 0.0]);
        assert!(matches!(
            compute_metrics(&nonpositive, &map(vec![1.0; 3])),
            Err(Error::EmptyEvaluation)
        ));
        assert!(matches!(
            compute_metrics(&map(vec![1.0]), &gt),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn csv_row_format() {
        let r = compute_metrics(&map(vec![2.0]), &map(vec![1.0])).unwrap();
        let row = r.csv_row();
        assert_eq!(
            row.split(',').count(),
            MetricReport::CSV_HEADER.split(',').count()
        );
        assert!(row.starts_with("1,1,1,"));
        assert!(row.ends_with(",0,0,0,1"));
    }

    fn random_pair(seed: u64) -> (Grid1, Grid1) {
        let mut rng = SeedRng::new(seed);
        let gt: Vec<f64> = (0..36).map(|_| rng.uniform(0.5, 10.0)).collect();
        let pred = gt.iter().map(|g| g * rng.uniform(0.6, 1.6)).collect();
        (
            Grid1::dense(6, 6, pred).unwrap(),
            Grid1::dense(6, 6, gt).unwrap(),
        )
    }

    proptest! {
        #[test]
        fn report_invariants(seed in any::<u64>()) {
            let (pred, gt) = random_pair(seed);
            let r = compute_metrics(&pred, &gt).unwrap();
            prop_assert!(r.abs_rel >= 0.0 && r.sq_rel >= 0.0 && r.rmse >= 0.0);
            prop_assert!(r.rmse_log >= 0.0 && r.log10 >= 0.0);
            prop_assert!(0.0 <= r.delta1 && r.delta1 <= r.delta2 && r.delta2 <= r.delta3 && r.delta3 <= 1.0);
        }

        #[test]
        fn common_scale(seed in any::<u64>(), s in 0.1f64..20.0) {
            let (pred, gt) = random_pair(seed);
            let scale = |m: &Grid1| Grid1::dense(6, 6, m.values().iter().map(|v| v * s).collect()).unwrap();
            let a = compute_metrics(&pred, &gt).unwrap();
            let b = compute_metrics(&scale(&pred), &scale(&gt)).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
            prop_assert!(close(a.abs_rel, b.abs_rel));
            prop_assert!(close(a.rmse_log, b.rmse_log));
            prop_assert!(close(a.log10, b.log10));
            prop_assert!(close(a.rmse * s, b.rmse));
            prop_assert!(close(a.sq_rel * s, b.sq_rel));
            prop_assert_eq!((a.delta1, a.delta2, a.delta3), (b.delta1, b.delta2, b.delta3));
        }
    }
}
