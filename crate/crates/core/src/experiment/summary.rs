use serde::{Deserialize, Serialize};

use super::{RunRecord, Strategy};

/// Columns aggregated in the summary table.
pub const METRICS: [&str; 8] = [
    "i_channel_bits",
    "i_coarse_bits",
    "m_coarse_bits",
    "n_coarse_bits",
    "delta_i_bits",
    "delta_m_bits",
    "delta_n_bits",
    "lambda_max",
];

impl RunRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "i_channel_bits" => self.i_channel_bits,
            "i_coarse_bits" => self.i_coarse_bits,
            "m_coarse_bits" => self.m_coarse_bits,
            "n_coarse_bits" => self.n_coarse_bits,
            "delta_i_bits" => self.delta_i_bits,
            "delta_m_bits" => self.delta_m_bits,
            "delta_n_bits" => self.delta_n_bits,
            "lambda_max" => self.lambda_max,
            _ => None,
        }
    }
}

/// One (dt, strategy, metric) cell of the post-processed table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dt: f64,
    pub strategy: Strategy,
    pub metric: String,
    /// Finite values entering the mean.
    pub count: usize,
    pub mean: Option<f64>,
    /// `2 s / √count` with `s` the sample standard deviation.
    pub band: Option<f64>,
    pub smooth_mean: Option<f64>,
    pub smooth_band: Option<f64>,
}

/// Mean and 2σ standard-error half-width; the band is zero for one value.
pub fn mean_band(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, 2.0 * (var / n as f64).sqrt()))
}

/// Centered moving average; the window shrinks symmetrically at the ends of
/// the series and skips missing points.
pub fn moving_average(series: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let half = window / 2;
    (0..series.len())
        .map(|k| {
            let r = half.min(k).min(series.len() - 1 - k);
            let vals: Vec<f64> = series[k - r..=k + r].iter().flatten().copied().collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

/// Per (dt, strategy, metric) statistics over the ensemble, with smoothing
/// along the dt grid. Rows come out sorted by strategy, metric, then dt.
pub fn summarize(records: &[RunRecord], dt_grid: &[f64], strategies: &[Strategy], window: usize) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &strategy in strategies {
        for metric in METRICS {
            let stats: Vec<(usize, Option<(f64, f64)>)> = dt_grid
                .iter()
                .map(|&dt| {
                    let vals: Vec<f64> = records
                        .iter()
                        .filter(|r| r.strategy == strategy && r.dt == dt)
                        .filter_map(|r| r.metric(metric))
                        .collect();
                    (vals.len(), mean_band(&vals))
                })
                .collect();
            let means: Vec<Option<f64>> = stats.iter().map(|(_, s)| s.map(|x| x.0)).collect();
            let bands: Vec<Option<f64>> = stats.iter().map(|(_, s)| s.map(|x| x.1)).collect();
            let sm = moving_average(&means, window);
            let sb = moving_average(&bands, window);
            for (k, &dt) in dt_grid.iter().enumerate() {
                rows.push(SummaryRow {
                    dt,
                    strategy,
                    metric: metric.to_string(),
                    count: stats[k].0,
                    mean: means[k],
                    band: bands[k],
                    smooth_mean: sm[k],
                    smooth_band: sb[k],
                });
            }
        }
    }
    rows
}

/// Looks up one summary cell.
pub fn find<'a>(rows: &'a [SummaryRow], strategy: Strategy, metric: &str, dt: f64) -> Option<&'a SummaryRow> {
    rows.iter().find(|r| r.strategy == strategy && r.metric == metric && r.dt == dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_band_matches_hand_computation() {
        // s² = ((1-2.5)² + (2-2.5)² + (3-2.5)² + (4-2.5)²)/3 = 5/3
        let (m, b) = mean_band(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((b - 2.0 * (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_band(&[7.0]), Some((7.0, 0.0)));
        assert_eq!(mean_band(&[]), None);
    }

    #[test]
    fn moving_average_shrinks_at_edges() {
        let s = [Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0), Some(9.0)];
        let m = moving_average(&s, 5);
        assert_eq!(m[0], Some(1.0));
        assert_eq!(m[1], Some(2.0));
        assert_eq!(m[2], Some(3.0));
        assert_eq!(m[3], Some(23.0 / 5.0));
        assert_eq!(m[4], Some(6.0));
        assert_eq!(m[5], Some(9.0));
        assert_eq!(moving_average(&[Some(1.0), None, Some(3.0)], 3)[1], Some(2.0));
        assert_eq!(moving_average(&s, 1), s.to_vec());
    }
}
