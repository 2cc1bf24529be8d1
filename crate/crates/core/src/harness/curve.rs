//! Learning curves: pointwise mean and population variance across runs, and
//! their CSV forms.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};

pub const RAW_HEADER: [&str; 3] = ["run", "episodes", "metric"];
pub const CURVE_HEADER: [&str; 4] = ["episodes", "mean", "variance", "n_runs"];

/// Decimal (never exponent) notation with at least 17 significant digits,
/// enough to read back the identical f64.
pub fn format_decimal(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (16 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct RawRecord {
    pub run: usize,
    pub episodes: usize,
    pub metric: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct CurvePoint {
    pub episodes: usize,
    pub mean: f64,
    pub variance: f64,
    pub n_runs: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Aggregates runs evaluated on the same episode grid.
    pub fn aggregate(series: &[&[(usize, f64)]]) -> Result<Self> {
        let first = series.first().ok_or_else(|| Error::config("no runs to aggregate"))?;
        let n = series.len();
        let mut points = Vec::with_capacity(first.len());
        for (i, &(episodes, _)) in first.iter().enumerate() {
            let mut values = Vec::with_capacity(n);
            for s in series {
                match s.get(i) {
                    Some(&(e, v)) if e == episodes => values.push(v),
                    _ => return Err(Error::config(format!("runs disagree on evaluation point {i}"))),
                }
            }
            if points.last().is_some_and(|p: &CurvePoint| p.episodes >= episodes) {
                return Err(Error::config("evaluation points must increase"));
            }
            let mean = values.iter().sum::<f64>() / n as f64;
            let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            points.push(CurvePoint {
                episodes,
                mean,
                variance,
                n_runs: n,
            });
        }
        if series.iter().any(|s| s.len() != first.len()) {
            return Err(Error::config("runs have different numbers of evaluation points"));
        }
        Ok(LearningCurve { points })
    }

    /// Groups records by `(source, run)` and aggregates.
    pub fn from_records<'a>(sources: impl IntoIterator<Item = &'a [RawRecord]>) -> Result<Self> {
        let mut runs: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for (src, records) in sources.into_iter().enumerate() {
            for r in records {
                runs.entry((src, r.run)).or_default().push((r.episodes, r.metric));
            }
        }
        for s in runs.values_mut() {
            s.sort_by_key(|&(e, _)| e);
        }
        let series: Vec<&[(usize, f64)]> = runs.values().map(Vec::as_slice).collect();
        Self::aggregate(&series)
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    /// Trapezoidal area under the mean curve divided by the episode span.
    pub fn normalized_auc(&self) -> f64 {
        match self.points.as_slice() {
            [] => 0.0,
            [p] => p.mean,
            pts => {
                let area: f64 = pts
                    .windows(2)
                    .map(|w| 0.5 * (w[0].mean + w[1].mean) * (w[1].episodes - w[0].episodes) as f64)
                    .sum();
                area / (pts[pts.len() - 1].episodes - pts[0].episodes) as f64
            }
        }
    }

    /// Mean of the mean curve over the last `fraction` of its points.
    pub fn asymptote(&self, fraction: f64) -> f64 {
        let tail = tail(&self.points, fraction);
        tail.iter().map(|p| p.mean).sum::<f64>() / tail.len().max(1) as f64
    }

    /// Mean across-run variance over the last `fraction` of the points.
    pub fn tail_variance(&self, fraction: f64) -> f64 {
        let tail = tail(&self.points, fraction);
        tail.iter().map(|p| p.variance).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CURVE_HEADER)?;
        for p in &self.points {
            out.write_record([
                p.episodes.to_string(),
                format_decimal(p.mean),
                format_decimal(p.variance),
                p.n_runs.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        check_header(rd.headers()?, &CURVE_HEADER)?;
        let points = rd.deserialize().collect::<std::result::Result<Vec<CurvePoint>, _>>()?;
        Ok(LearningCurve { points })
    }
}

fn tail<T>(xs: &[T], fraction: f64) -> &[T] {
    let k = ((xs.len() as f64 * fraction).ceil() as usize).clamp(1.min(xs.len()), xs.len());
    &xs[xs.len() - k..]
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "unexpected CSV header `{}` (expected `{}`)",
            found.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        )))
    }
}

pub fn write_raw_csv<'a, W: Write>(w: W, runs: impl IntoIterator<Item = (usize, &'a [(usize, f64)])>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RAW_HEADER)?;
    for (run, series) in runs {
        for &(episodes, metric) in series {
            out.write_record([run.to_string(), episodes.to_string(), format_decimal(metric)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_raw_csv<R: Read>(r: R) -> Result<Vec<RawRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    check_header(rd.headers()?, &RAW_HEADER)?;
    Ok(rd.deserialize().collect::<std::result::Result<Vec<RawRecord>, _>>()?)
}

/// First evaluation point at which `series` reaches `threshold`.
pub fn episodes_to_reach(series: &[(usize, f64)], threshold: f64) -> Option<usize> {
    series.iter().find(|&&(_, m)| m >= threshold).map(|&(e, _)| e)
}

/// Median with `None` ordered after every number (a run that never got there).
pub fn median_episodes(values: &[Option<usize>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<Option<usize>> = values.to_vec();
    v.sort_by_key(|x| x.unwrap_or(usize::MAX));
    let n = v.len();
    let pick = |i: usize| v[i];
    if n % 2 == 1 {
        pick(n / 2).map(|x| x as f64)
    } else {
        match (pick(n / 2 - 1), pick(n / 2)) {
            (Some(a), Some(b)) => Some((a + b) as f64 / 2.0),
            _ => None,
        }
    }
}
