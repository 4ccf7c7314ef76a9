//! Balanced k-means typing of lakes by log surface area and log volume.

use std::fmt;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Size class, ordered by centroid volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LakeType {
    S,
    M,
    L,
    XL,
}

impl LakeType {
    pub const ALL: [LakeType; 4] = [LakeType::S, LakeType::M, LakeType::L, LakeType::XL];

    pub fn as_str(self) -> &'static str {
        match self {
            LakeType::S => "S",
            LakeType::M => "M",
            LakeType::L => "L",
            LakeType::XL => "xL",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Result<LakeType> {
        match s {
            "S" => Ok(LakeType::S),
            "M" => Ok(LakeType::M),
            "L" => Ok(LakeType::L),
            "xL" | "XL" => Ok(LakeType::XL),
            other => Err(Error::Data(format!("unknown lake type '{other}'"))),
        }
    }
}

impl fmt::Display for LakeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LakePoint {
    pub lake_id: String,
    pub log_area: f64,
    pub log_volume: f64,
}

impl LakePoint {
    pub fn new(lake_id: &str, area_m2: f64, volume_m3: f64) -> Result<Self> {
        if !(area_m2 > 0.0 && volume_m3 > 0.0 && area_m2.is_finite() && volume_m3.is_finite()) {
            return Err(Error::Data(format!(
                "lake '{lake_id}': area {area_m2} and volume {volume_m3} must be positive"
            )));
        }
        Ok(LakePoint {
            lake_id: lake_id.to_string(),
            log_area: area_m2.log10(),
            log_volume: volume_m3.log10(),
        })
    }

    fn coords(&self) -> [f64; 2] {
        [self.log_area, self.log_volume]
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Equal-size clustering result; labels are ranked by ascending centroid
/// volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// `[log_area, log_volume]` per cluster.
    pub centroids: Vec<[f64; 2]>,
    pub iterations: usize,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.centroids.len()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Capacity-constrained assignment: pairs are taken by ascending distance,
/// each cluster holds `⌊N/k⌋` points and exactly `N mod k` clusters hold one
/// more.
fn balanced_assign(points: &[[f64; 2]], centroids: &[[f64; 2]]) -> Vec<usize> {
    let (n, k) = (points.len(), centroids.len());
    let floor = n / k;
    let extra = n % k;
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(n * k);
    for (p, pt) in points.iter().enumerate() {
        for (c, ct) in centroids.iter().enumerate() {
            cand.push((dist2(*pt, *ct), p, c));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut labels = vec![usize::MAX; n];
    let mut counts = vec![0usize; k];
    let mut oversized = 0;
    let mut left = n;
    for (_, p, c) in cand {
        if left == 0 {
            break;
        }
        if labels[p] != usize::MAX {
            continue;
        }
        let open = counts[c] < floor || (counts[c] == floor && oversized < extra);
        if open {
            labels[p] = c;
            counts[c] += 1;
            if counts[c] == floor + 1 {
                oversized += 1;
            }
            left -= 1;
        }
    }
    labels
}

fn seed_centroids<R: Rng + ?Sized>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| dist2(*p, *c)).fold(f64::INFINITY, f64::min))
            .collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            // every point coincides with a centroid
            Err(_) => rng.random_range(0..points.len()),
        };
        centroids.push(points[next]);
    }
    centroids
}

/// Balanced k-means with k-means++ seeding.
pub fn balanced_kmeans<R: Rng + ?Sized>(
    points: &[LakePoint],
    k: usize,
    rng: &mut R,
    max_iters: usize,
) -> Result<Clustering> {
    if k == 0 || points.len() < k {
        return Err(Error::Data(format!("cannot form {k} clusters from {} lakes", points.len())));
    }
    let xy: Vec<[f64; 2]> = points.iter().map(LakePoint::coords).collect();
    if xy.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("lake coordinates must be finite".into()));
    }
    let mut centroids = seed_centroids(&xy, k, rng);
    let mut labels = balanced_assign(&xy, &centroids);
    let mut iterations = 1;
    while iterations < max_iters.max(1) {
        for (c, ct) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64; 2]> = xy.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            let n = members.len() as f64;
            *ct = [
                members.iter().map(|p| p[0]).sum::<f64>() / n,
                members.iter().map(|p| p[1]).sum::<f64>() / n,
            ];
        }
        let next = balanced_assign(&xy, &centroids);
        iterations += 1;
        if next == labels {
            break;
        }
        labels = next;
    }
    // rank clusters by centroid volume (ties by area, then index)
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        centroids[a][1]
            .total_cmp(&centroids[b][1])
            .then(centroids[a][0].total_cmp(&centroids[b][0]))
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    Ok(Clustering {
        labels: labels.iter().map(|&l| rank[l]).collect(),
        centroids: order.iter().map(|&c| centroids[c]).collect(),
        iterations,
    })
}

/// Lake → type mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// In input order.
    pub types: Vec<(String, LakeType)>,
    pub centroids: [[f64; 2]; 4],
}

impl ClusterAssignment {
    pub fn type_of(&self, lake_id: &str) -> Option<LakeType> {
        self.types.iter().find(|(id, _)| id == lake_id).map(|(_, t)| *t)
    }

    pub fn lakes_of(&self, t: LakeType) -> Vec<&str> {
        self.types.iter().filter(|(_, x)| *x == t).map(|(id, _)| id.as_str()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(["lake_id", "type"]).map_err(io)?;
        for (id, t) in &self.types {
            w.write_record([id.as_str(), t.as_str()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads `lake_id,type` rows; centroids are not stored and come back as
    /// zeros.
    pub fn read_csv(path: &Path) -> Result<ClusterAssignment> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut types = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if rec.len() != 2 {
                return Err(Error::Data(format!("{}: expected lake_id,type", path.display())));
            }
            types.push((rec[0].to_string(), LakeType::parse(&rec[1])?));
        }
        Ok(ClusterAssignment {
            types,
            centroids: [[0.0; 2]; 4],
        })
    }
}

/// Four-way typing into S/M/L/xL.
pub fn assign_types<R: Rng + ?Sized>(points: &[LakePoint], rng: &mut R, max_iters: usize) -> Result<ClusterAssignment> {
    let c = balanced_kmeans(points, 4, rng, max_iters)?;
    let mut centroids = [[0.0; 2]; 4];
    centroids.copy_from_slice(&c.centroids);
    Ok(ClusterAssignment {
        types: points
            .iter()
            .zip(&c.labels)
            .map(|(p, &l)| (p.lake_id.clone(), LakeType::ALL[l]))
            .collect(),
        centroids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(id: usize, la: f64, lv: f64) -> LakePoint {
        LakePoint {
            lake_id: format!("l{id}"),
            log_area: la,
            log_volume: lv,
        }
    }

    fn within(points: &[LakePoint], labels: &[usize], k: usize) -> f64 {
        (0..k)
            .map(|c| {
                let m: Vec<[f64; 2]> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p.coords()).collect();
                let n = m.len() as f64;
                let cx = [m.iter().map(|p| p[0]).sum::<f64>() / n, m.iter().map(|p| p[1]).sum::<f64>() / n];
                m.iter().map(|p| dist2(*p, cx).sqrt()).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn separated_pairs_form_clusters() {
        let centers = [(4.0, 4.5), (5.0, 6.0), (6.0, 7.5), (7.0, 9.0)];
        let mut pts = Vec::new();
        for (g, (a, v)) in centers.iter().enumerate() {
            pts.push(pt(2 * g, *a, *v));
            pts.push(pt(2 * g + 1, a + 0.01, v - 0.01));
        }
        for seed in 0..10 {
            let c = balanced_kmeans(&pts, 4, &mut ChaCha8Rng::seed_from_u64(seed), 50).unwrap();
            assert_eq!(c.sizes(), vec![2, 2, 2, 2]);
            for g in 0..4 {
                assert_eq!(c.labels[2 * g], g);
                assert_eq!(c.labels[2 * g + 1], g);
            }
        }
    }

    #[test]
    fn four_points_are_singletons() {
        let pts: Vec<LakePoint> = (0..4).map(|i| pt(i, i as f64, 2.0 * i as f64)).collect();
        let c = balanced_kmeans(&pts, 4, &mut ChaCha8Rng::seed_from_u64(1), 10).unwrap();
        assert_eq!(c.sizes(), vec![1; 4]);
        assert_eq!(c.labels, vec![0, 1, 2, 3]);
        assert!(balanced_kmeans(&pts[..3], 4, &mut ChaCha8Rng::seed_from_u64(1), 10).is_err());
    }

    #[test]
    fn beats_random_balanced_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let pts: Vec<LakePoint> = (0..20).map(|i| pt(i, rng.random_range(4.0..8.0), rng.random_range(5.0..10.0))).collect();
        let c = balanced_kmeans(&pts, 4, &mut rng, 100).unwrap();
        let ours = within(&pts, &c.labels, 4);
        let mut labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
        for _ in 0..1000 {
            labels.shuffle(&mut rng);
            assert!(ours <= within(&pts, &labels, 4) + 1e-12);
        }
    }

    #[test]
    fn assignment_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<LakePoint> = (0..9).map(|i| pt(i, rng.random_range(4.0..8.0), rng.random_range(5.0..10.0))).collect();
        let a = assign_types(&pts, &mut rng, 50).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("types.csv");
        a.write_csv(&path).unwrap();
        let back = ClusterAssignment::read_csv(&path).unwrap();
        assert_eq!(back.types, a.types);
        assert_eq!(a.lakes_of(LakeType::S).len() + a.lakes_of(LakeType::XL).len(), 4);
    }

    #[test]
    fn rejects_nonpositive_morphometry() {
        assert!(LakePoint::new("x", 0.0, 10.0).is_err());
        assert!(LakePoint::new("x", 10.0, f64::NAN).is_err());
        let p = LakePoint::new("x", 1e4, 1e6).unwrap();
        assert_eq!((p.log_area, p.log_volume), (4.0, 6.0));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<LakePoint> = (0..30).map(|i| pt(i, rng.random_range(4.0..8.0), rng.random_range(5.0..10.0))).collect();
        let a = balanced_kmeans(&pts, 4, &mut ChaCha8Rng::seed_from_u64(9), 100).unwrap();
        let b = balanced_kmeans(&pts, 4, &mut ChaCha8Rng::seed_from_u64(9), 100).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn sizes_balanced_and_labels_ordered(seed in any::<u64>(), n in 4usize..60, k in 1usize..6) {
            prop_assume!(n >= k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<LakePoint> = (0..n).map(|i| pt(i, rng.random_range(4.0..8.0), rng.random_range(5.0..10.0))).collect();
            let c = balanced_kmeans(&pts, k, &mut rng, 100).unwrap();
            let sizes = c.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!(c.centroids.windows(2).all(|w| w[0][1] <= w[1][1]));
        }
    }
}
