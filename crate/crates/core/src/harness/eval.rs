use std::collections::BTreeMap;
use std::ops::Range;

use crate::features::{EncodedLake, Task};
use crate::model::{Batch, Predictor};
use crate::{Error, Result};

/// Root mean squared error over the points that have an observation.
pub fn rmse(pred: &[f64], obs: &[Option<f64>]) -> Result<f64> {
    if pred.len() != obs.len() {
        return Err(Error::Internal(format!("rmse: {} predictions for {} labels", pred.len(), obs.len())));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, o) in pred.iter().zip(obs) {
        if let Some(y) = o {
            sum += (p - y).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Data("rmse: no observed points".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Batches that tile day ranges of several lakes with scored segments, each
/// preceded by up to `burn_in` context days.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub batches: Vec<Batch>,
    /// Per batch, per row: `(lake, day)` of scored rows, `None` for context.
    pub rows: Vec<Vec<Option<(usize, usize)>>>,
}

impl EvalSet {
    /// `ranges[i]` is the day range of `lakes[i]` to score; empty ranges are
    /// skipped.
    pub fn build(
        lakes: &[&EncodedLake],
        ranges: &[Range<usize>],
        segment: usize,
        burn_in: usize,
        max_batch: usize,
        task: Task,
    ) -> Result<EvalSet> {
        if segment == 0 || max_batch == 0 {
            return Err(Error::Config("evaluation segment and batch must be positive".into()));
        }
        // (steps, burn) -> spans
        let mut groups: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (li, range) in ranges.iter().enumerate() {
            if range.end > lakes[li].len() {
                return Err(Error::Internal(format!("range {range:?} exceeds lake '{}'", lakes[li].lake_id)));
            }
            let mut s = range.start;
            while s < range.end {
                let end = (s + segment).min(range.end);
                let burn = burn_in.min(s);
                groups.entry((end - s + burn, burn)).or_default().push((li, s - burn));
                s = end;
            }
        }
        let mut set = EvalSet {
            batches: Vec::new(),
            rows: Vec::new(),
        };
        for ((steps, burn), spans) in groups {
            for chunk in spans.chunks(max_batch) {
                let batch = Batch::build(lakes, chunk, steps, burn, task)?;
                let mut rows = vec![None; batch.rows()];
                for t in burn..steps {
                    for (b, &(li, start)) in chunk.iter().enumerate() {
                        rows[t * chunk.len() + b] = Some((li, start + t));
                    }
                }
                set.batches.push(batch);
                set.rows.push(rows);
            }
        }
        Ok(set)
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// `(lake, day, prediction)` for every scored row, sorted by lake and
    /// day.
    pub fn predict(&self, model: &Predictor) -> Result<Vec<(usize, usize, f64)>> {
        let mut out = Vec::new();
        for (batch, rows) in self.batches.iter().zip(&self.rows) {
            let pred = model.predict(batch)?;
            for (r, slot) in rows.iter().enumerate() {
                if let Some((li, day)) = slot {
                    out.push((*li, *day, pred[r]));
                }
            }
        }
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        Ok(out)
    }
}
