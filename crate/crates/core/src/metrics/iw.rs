use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwRow {
    /// Position in the source dataset.
    pub index: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl IwRow {
    pub fn spread(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwReport {
    pub runs: usize,
    /// Ranked by decreasing mean weight; ties keep source order.
    pub rows: Vec<IwRow>,
}

impl IwReport {
    /// CSV with header `rank,index,mean,median,min,max`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,index,mean,median,min,max\n");
        for (rank, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rank + 1,
                r.index,
                r.mean,
                r.median,
                r.min,
                r.max
            ));
        }
        out
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Spread of estimated weights across runs for the `top_k` source examples
/// with the largest mean weight. `runs[r][i]` is run `r`'s weight for example `i`.
pub fn iw_distribution_report(runs: &[Vec<f64>], top_k: usize) -> Result<IwReport> {
    if runs.len() < 2 {
        return Err(Error::invalid(format!(
            "weight spread needs at least two runs, got {}",
            runs.len()
        )));
    }
    let n = runs[0].len();
    if n == 0 {
        return Err(Error::invalid("runs hold no examples"));
    }
    if let Some(run) = runs.iter().find(|r| r.len() != n) {
        return Err(Error::Shape {
            context: "weight run",
            expected: n,
            got: run.len(),
        });
    }
    if runs.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::invalid("weights must be finite"));
    }
    let mut rows: Vec<IwRow> = (0..n)
        .map(|i| {
            let mut vals: Vec<f64> = runs.iter().map(|r| r[i]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.sort_by(f64::total_cmp);
            IwRow {
                index: i,
                mean,
                median: median(&vals),
                min: vals[0],
                max: vals[vals.len() - 1],
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.index.cmp(&b.index)));
    rows.truncate(top_k);
    Ok(IwReport {
        runs: runs.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_runs_have_no_spread() {
        let run = vec![0.5, 2.0, 1.0];
        let report = iw_distribution_report(&[run.clone(), run.clone(), run], 15).unwrap();
        assert_eq!(report.rows.len(), 3);
        for r in &report.rows {
            assert_eq!(r.min, r.median);
            assert_eq!(r.median, r.max);
        }
    }

    #[test]
    fn order_statistics_of_two_runs() {
        let report = iw_distribution_report(&[vec![1.0], vec![3.0]], 15).unwrap();
        let r = &report.rows[0];
        assert_eq!((r.median, r.min, r.max), (2.0, 1.0, 3.0));
    }

    #[test]
    fn ranking_by_mean_truncated() {
        let a = vec![0.1, 5.0, 2.0, 2.0, 9.0];
        let b = vec![0.3, 1.0, 2.0, 2.0, 0.0];
        let report = iw_distribution_report(&[a, b], 3).unwrap();
        let idx: Vec<usize> = report.rows.iter().map(|r| r.index).collect();
        assert_eq!(idx, vec![4, 1, 2]);
    }

    #[test]
    fn too_few_runs_rejected() {
        assert!(iw_distribution_report(&[], 15).is_err());
        assert!(iw_distribution_report(&[vec![1.0]], 15).is_err());
        assert!(iw_distribution_report(&[vec![1.0], vec![1.0, 2.0]], 15).is_err());
    }

    #[test]
    fn csv_layout() {
        let report = iw_distribution_report(&[vec![1.0, 2.0], vec![1.0, 4.0]], 15).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().next(), Some("rank,index,mean,median,min,max"));
        assert_eq!(csv.lines().nth(1), Some("1,1,3,3,2,4"));
    }
}
