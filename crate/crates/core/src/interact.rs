//! The interaction genome: operation codes per feature pair, relevance gates,
//! model input assembly, pruning and gene maps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, GrdaParams, GrdaState, Tensor, Var};
use crate::{Error, Result};

/// Initial (and mutation-reset) value of every relevance gate.
pub const RELEVANCE_INIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum OpCode {
    /// `f_i + f_j`
    Sum = 0,
    /// `f_i ∘ f_j`
    Prod = 1,
    /// `P·[f_i; f_j]`
    Catp = 2,
    /// `(W·f_i) ∘ f_j`
    Kerp = 3,
}

impl OpCode {
    pub const ALL: [OpCode; 4] = [OpCode::Sum, OpCode::Prod, OpCode::Catp, OpCode::Kerp];

    pub fn code(self) -> i8 {
        self as i8
    }

    pub fn from_code(code: i64) -> Result<OpCode> {
        match code {
            0 => Ok(OpCode::Sum),
            1 => Ok(OpCode::Prod),
            2 => Ok(OpCode::Catp),
            3 => Ok(OpCode::Kerp),
            other => Err(Error::Data(format!("invalid operation code {other}"))),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> OpCode {
        OpCode::ALL[rng.random_range(0..4)]
    }

    /// Uniform draw among the three codes different from `self`.
    pub fn random_other<R: Rng + ?Sized>(self, rng: &mut R) -> OpCode {
        let k = rng.random_range(0..3);
        let others: Vec<OpCode> = OpCode::ALL.into_iter().filter(|&o| o != self).collect();
        others[k]
    }
}

pub fn pair_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Position of pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_index(i: usize, j: usize, m: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * m - i * (i + 1) / 2 + (j - i - 1)
}

pub fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
}

/// Shared parameters of the two projected operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpProjections {
    /// `[d, 2d]`
    pub catp: Tensor,
    /// `[d, d]`
    pub kerp: Tensor,
}

impl OpProjections {
    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        OpProjections {
            catp: Tensor::uniform(vec![d, 2 * d], 1.0 / (2.0 * d as f64).sqrt(), rng),
            kerp: Tensor::uniform(vec![d, d], 1.0 / (d as f64).sqrt(), rng),
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut catp = Tensor::zeros(vec![d, 2 * d]);
        let mut kerp = Tensor::zeros(vec![d, d]);
        for r in 0..d {
            catp.data_mut()[r * 2 * d + r] = 1.0;
            catp.data_mut()[r * 2 * d + d + r] = 1.0;
            kerp.data_mut()[r * d + r] = 1.0;
        }
        OpProjections { catp, kerp }
    }

    pub fn dim(&self) -> usize {
        self.kerp.rows()
    }
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let c = w.cols();
    (0..w.rows())
        .map(|r| w.data()[r * c..(r + 1) * c].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Interaction vector of one feature pair.
pub fn apply_op(code: OpCode, fi: &[f64], fj: &[f64], proj: &OpProjections) -> Result<Vec<f64>> {
    let d = proj.dim();
    if fi.len() != d || fj.len() != d {
        return Err(Error::Config(format!(
            "apply_op: feature lengths {} and {} for dimension {d}",
            fi.len(),
            fj.len()
        )));
    }
    Ok(match code {
        OpCode::Sum => fi.iter().zip(fj).map(|(a, b)| a + b).collect(),
        OpCode::Prod => fi.iter().zip(fj).map(|(a, b)| a * b).collect(),
        OpCode::Catp => {
            let cat: Vec<f64> = fi.iter().chain(fj).copied().collect();
            matvec(&proj.catp, &cat)
        }
        OpCode::Kerp => matvec(&proj.kerp, fi).iter().zip(fj).map(|(a, b)| a * b).collect(),
    })
}

/// Operation per pair plus the α (feature) and β (pair) relevance gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    m: usize,
    ops: Vec<OpCode>,
    pub alpha: GrdaState,
    pub beta: GrdaState,
}

impl Genome {
    pub fn new(m: usize, ops: Vec<OpCode>, alpha: GrdaState, beta: GrdaState) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("a genome needs at least 2 features, got {m}")));
        }
        if ops.len() != pair_count(m) || beta.len() != pair_count(m) || alpha.len() != m {
            return Err(Error::Config(format!(
                "genome for m={m}: {} ops, {} α, {} β",
                ops.len(),
                alpha.len(),
                beta.len()
            )));
        }
        Ok(Genome { m, ops, alpha, beta })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_pairs(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[OpCode] {
        &self.ops
    }

    pub fn op_at(&self, k: usize) -> OpCode {
        self.ops[k]
    }

    /// Symmetric accessor; `None` on the diagonal.
    pub fn op(&self, i: usize, j: usize) -> Option<OpCode> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => Some(self.ops[pair_index(i, j, self.m)]),
            std::cmp::Ordering::Greater => Some(self.ops[pair_index(j, i, self.m)]),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn set_op(&mut self, k: usize, op: OpCode) {
        self.ops[k] = op;
    }

    pub fn alphas(&self) -> &[f64] {
        self.alpha.weights()
    }

    pub fn betas(&self) -> &[f64] {
        self.beta.weights()
    }

    /// Full `m × m` code matrix; the diagonal holds −1.
    pub fn op_matrix(&self) -> Vec<Vec<i8>> {
        (0..self.m)
            .map(|i| {
                (0..self.m)
                    .map(|j| self.op(i, j).map_or(-1, OpCode::code))
                    .collect()
            })
            .collect()
    }

    /// Features and pairs whose relevance is nonzero.
    pub fn prune(&self) -> ActiveSet {
        let features: Vec<usize> = (0..self.m).filter(|&i| self.alpha.weight(i) != 0.0).collect();
        let pairs: Vec<usize> = (0..self.n_pairs()).filter(|&k| self.beta.weight(k) != 0.0).collect();
        if features.is_empty() && pairs.is_empty() {
            log::warn!("every relevance gate is zero: the model reduces to its bias");
        }
        ActiveSet {
            features,
            pairs,
            m: self.m,
        }
    }

    /// Fraction of pairs with β exactly zero.
    pub fn pair_sparsity(&self) -> f64 {
        let zero = self.betas().iter().filter(|&&b| b == 0.0).count();
        zero as f64 / self.n_pairs() as f64
    }
}

/// Random operations with every gate at `init`.
pub fn init_genome<R: Rng + ?Sized>(
    m: usize,
    rng: &mut R,
    init: f64,
    alpha_hp: GrdaParams,
    beta_hp: GrdaParams,
) -> Result<Genome> {
    if m < 2 {
        return Err(Error::Config(format!("a genome needs at least 2 features, got {m}")));
    }
    let ops = (0..pair_count(m)).map(|_| OpCode::random(rng)).collect();
    let alpha = GrdaState::new(vec![init; m], alpha_hp)?;
    let beta = GrdaState::new(vec![init; pair_count(m)], beta_hp)?;
    Genome::new(m, ops, alpha, beta)
}

/// Indices of surviving features and pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub features: Vec<usize>,
    pub pairs: Vec<usize>,
    m: usize,
}

impl ActiveSet {
    pub fn all(m: usize) -> Self {
        ActiveSet {
            features: (0..m).collect(),
            pairs: (0..pair_count(m)).collect(),
            m,
        }
    }

    pub fn has_feature(&self, i: usize) -> bool {
        self.features.binary_search(&i).is_ok()
    }

    pub fn has_pair(&self, k: usize) -> bool {
        self.pairs.binary_search(&k).is_ok()
    }
}

/// Length of the assembled input vector.
pub fn input_width(m: usize, d: usize) -> usize {
    (m + pair_count(m)) * d
}

/// `[α_1 f_1, …, α_m f_m, β_12 g(f_1, f_2), …]` for one time step. Slots
/// outside `active` are zero.
pub fn build_input(
    features: &[&[f64]],
    genome: &Genome,
    proj: &OpProjections,
    active: Option<&ActiveSet>,
) -> Result<Vec<f64>> {
    let (m, d) = (genome.m(), proj.dim());
    if features.len() != m {
        return Err(Error::Config(format!("{} feature vectors for a genome over {m}", features.len())));
    }
    let mut out = vec![0.0; input_width(m, d)];
    for (i, f) in features.iter().enumerate() {
        if f.len() != d {
            return Err(Error::Config(format!("feature {i} has length {}, expected {d}", f.len())));
        }
        if active.is_none_or(|a| a.has_feature(i)) {
            let a = genome.alpha.weight(i);
            for (o, v) in out[i * d..(i + 1) * d].iter_mut().zip(*f) {
                *o = a * v;
            }
        }
    }
    for (k, (i, j)) in pairs(m).into_iter().enumerate() {
        if active.is_some_and(|a| !a.has_pair(k)) {
            continue;
        }
        let b = genome.beta.weight(k);
        let v = apply_op(genome.op_at(k), features[i], features[j], proj)?;
        let at = (m + k) * d;
        for (o, x) in out[at..at + d].iter_mut().zip(v) {
            *o = b * x;
        }
    }
    Ok(out)
}

/// Graph leaves for the parameters of one input assembly.
#[derive(Debug, Clone, Copy)]
pub struct InputVars {
    pub alpha: Var,
    pub beta: Var,
    pub catp: Var,
    pub kerp: Var,
}

/// Graph form of [`build_input`] over `n` rows at once: `feats[i]` is
/// `[n, d]`, the result is `[n, (m + pairs)·d]`.
pub fn record_input(
    g: &mut Graph,
    feats: &[Var],
    genome: &Genome,
    vars: &InputVars,
    active: Option<&ActiveSet>,
) -> Result<Var> {
    let m = genome.m();
    if feats.len() != m {
        return Err(Error::Config(format!("{} feature blocks for a genome over {m}", feats.len())));
    }
    let (n, d) = (g.value(feats[0]).rows(), g.value(feats[0]).cols());
    let mut zero = None;
    let mut zeros = |g: &mut Graph| *zero.get_or_insert_with(|| g.constant(Tensor::zeros(vec![n, d])));
    let mut blocks = Vec::with_capacity(m + genome.n_pairs());
    for (i, &f) in feats.iter().enumerate() {
        blocks.push(if active.is_none_or(|a| a.has_feature(i)) {
            g.scale_by(f, vars.alpha, i)?
        } else {
            zeros(g)
        });
    }
    for (k, (i, j)) in pairs(m).into_iter().enumerate() {
        if active.is_some_and(|a| !a.has_pair(k)) {
            blocks.push(zeros(g));
            continue;
        }
        let (fi, fj) = (feats[i], feats[j]);
        let v = match genome.op_at(k) {
            OpCode::Sum => g.add(fi, fj)?,
            OpCode::Prod => g.mul(fi, fj)?,
            OpCode::Catp => {
                let cat = g.concat_cols(&[fi, fj])?;
                g.matmul_t(cat, vars.catp)?
            }
            OpCode::Kerp => {
                let wf = g.matmul_t(fi, vars.kerp)?;
                g.mul(wf, fj)?
            }
        };
        blocks.push(g.scale_by(v, vars.beta, k)?);
    }
    g.concat_cols(&blocks)
}

/// Exportable view of a genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneMap {
    pub names: Vec<String>,
    /// −1 on the diagonal and for pruned pairs.
    pub codes: Vec<Vec<i8>>,
    /// `|β|/max|β|` off the diagonal, `|α|/max|α|` on it.
    pub intensity: Vec<Vec<f64>>,
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    values
        .iter()
        .map(|v| if max > 0.0 { v.abs() / max } else { 0.0 })
        .collect()
}

pub fn gene_map(genome: &Genome, names: &[String]) -> Result<GeneMap> {
    let m = genome.m();
    if names.len() != m {
        return Err(Error::Config(format!("{} names for a genome over {m} features", names.len())));
    }
    let a = normalized(genome.alphas());
    let b = normalized(genome.betas());
    let mut codes = vec![vec![-1i8; m]; m];
    let mut intensity = vec![vec![0.0; m]; m];
    for i in 0..m {
        intensity[i][i] = a[i];
    }
    for (k, (i, j)) in pairs(m).into_iter().enumerate() {
        if genome.beta.weight(k) != 0.0 {
            let c = genome.op_at(k).code();
            codes[i][j] = c;
            codes[j][i] = c;
            intensity[i][j] = b[k];
            intensity[j][i] = b[k];
        }
    }
    Ok(GeneMap {
        names: names.to_vec(),
        codes,
        intensity,
    })
}

/// Cell colours: red, green, yellow, blue for codes 0–3.
const PALETTE: [[u8; 3]; 4] = [[220, 30, 30], [30, 170, 40], [235, 200, 20], [30, 60, 210]];

impl GeneMap {
    pub fn m(&self) -> usize {
        self.names.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for row in &self.codes {
            let cells: Vec<String> = row.iter().map(i8::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out.push('\n');
        for row in &self.intensity {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<GeneMap> {
        let mut lines = text.lines();
        let names: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Data("gene map: empty file".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let m = names.len();
        let mut codes = Vec::with_capacity(m);
        for r in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Data(format!("gene map: missing code row {r}")))?;
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<i8>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("gene map: code row {r}: {e}")))?;
            if row.len() != m || row.iter().any(|&c| !(-1..=3).contains(&c)) {
                return Err(Error::Data(format!("gene map: malformed code row {r}")));
            }
            codes.push(row);
        }
        if lines.next().is_some_and(|l| !l.trim().is_empty()) {
            return Err(Error::Data("gene map: expected a blank line after the codes".into()));
        }
        let mut intensity = Vec::with_capacity(m);
        for r in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Data(format!("gene map: missing intensity row {r}")))?;
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("gene map: intensity row {r}: {e}")))?;
            if row.len() != m {
                return Err(Error::Data(format!("gene map: malformed intensity row {r}")));
            }
            intensity.push(row);
        }
        Ok(GeneMap {
            names,
            codes,
            intensity,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<GeneMap> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GeneMap::parse_csv(&text)
    }

    /// RGB of cell `(i, j)`: palette colour blended with white by intensity,
    /// white when pruned, gray (darker with higher |α|) on the diagonal.
    pub fn cell_color(&self, i: usize, j: usize) -> [u8; 3] {
        let v = self.intensity[i][j].clamp(0.0, 1.0);
        if i == j {
            let g = (230.0 - 150.0 * v).round() as u8;
            return [g, g, g];
        }
        match self.codes[i][j] {
            c @ 0..=3 => {
                let w = 0.25 + 0.75 * v;
                let base = PALETTE[c as usize];
                let mut px = [0u8; 3];
                for (p, b) in px.iter_mut().zip(base) {
                    *p = (255.0 * (1.0 - w) + b as f64 * w).round() as u8;
                }
                px
            }
            _ => [255, 255, 255],
        }
    }

    /// Binary PPM (P6) with `cell × cell` pixel blocks.
    pub fn to_ppm(&self, cell: usize) -> Vec<u8> {
        let m = self.m();
        let side = m * cell;
        let mut out = Vec::new();
        let mut header = String::new();
        let _ = write!(header, "P6\n{side} {side}\n255\n");
        out.extend_from_slice(header.as_bytes());
        for y in 0..side {
            for x in 0..side {
                out.extend_from_slice(&self.cell_color(y / cell, x / cell));
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path, cell: usize) -> Result<()> {
        fs::write(path, self.to_ppm(cell.max(1))).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn genome_with(m: usize, ops: Vec<OpCode>, alpha: Vec<f64>, beta: Vec<f64>) -> Genome {
        let hp = GrdaParams::default();
        Genome::new(
            m,
            ops,
            GrdaState::new(alpha, hp).unwrap(),
            GrdaState::new(beta, hp).unwrap(),
        )
        .unwrap()
    }

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn elementwise_ops() {
        let p = OpProjections::identity(2);
        assert_eq!(apply_op(OpCode::Sum, &[1.0, 2.0], &[3.0, 4.0], &p).unwrap(), vec![4.0, 6.0]);
        assert_eq!(apply_op(OpCode::Prod, &[1.0, 2.0], &[3.0, 4.0], &p).unwrap(), vec![3.0, 8.0]);
        assert!(apply_op(OpCode::Sum, &[1.0], &[3.0, 4.0], &p).is_err());
    }

    #[test]
    fn identity_kernel_equals_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = OpProjections::identity(5);
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(
            apply_op(OpCode::Kerp, &a, &b, &p).unwrap(),
            apply_op(OpCode::Prod, &a, &b, &p).unwrap()
        );
        // [I I]·[a; b] = a + b
        let catp = apply_op(OpCode::Catp, &a, &b, &p).unwrap();
        let sum = apply_op(OpCode::Sum, &a, &b, &p).unwrap();
        for (x, y) in catp.iter().zip(sum) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn pair_indexing_is_lexicographic() {
        let m = 5;
        for (k, (i, j)) in pairs(m).into_iter().enumerate() {
            assert_eq!(pair_index(i, j, m), k);
        }
        assert_eq!(pairs(m).len(), pair_count(m));
    }

    #[test]
    fn input_layout_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = init_genome(2, &mut rng, 0.5, GrdaParams::default(), GrdaParams::default()).unwrap();
        let p = OpProjections::init(3, &mut rng);
        let f = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let x = build_input(&[&f[0], &f[1]], &g, &p, None).unwrap();
        assert_eq!(x.len(), 3 * 3);
    }

    #[test]
    fn zero_beta_blanks_interactions() {
        let g = genome_with(3, vec![OpCode::Prod; 3], vec![1.0; 3], vec![0.0; 3]);
        let p = OpProjections::identity(2);
        let f = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let x = build_input(&[&f[0], &f[1], &f[2]], &g, &p, None).unwrap();
        assert_eq!(&x[..6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(x[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaled_product_block() {
        let g = genome_with(2, vec![OpCode::Prod], vec![2.0, 0.0], vec![0.5]);
        let p = OpProjections::identity(2);
        let x = build_input(&[&[1.0, -2.0], &[3.0, 4.0]], &g, &p, None).unwrap();
        // α block: 2·(1,−2), 0·(3,4); pair block: 0.5·(1·3, −2·4)
        assert_eq!(x, vec![2.0, -4.0, 0.0, 0.0, 1.5, -4.0]);
    }

    #[test]
    fn init_genome_counts_and_determinism() {
        let hp = GrdaParams::default();
        let a = init_genome(3, &mut ChaCha8Rng::seed_from_u64(9), 0.5, hp, hp).unwrap();
        let b = init_genome(3, &mut ChaCha8Rng::seed_from_u64(9), 0.5, hp, hp).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.alphas().len(), a.betas().len(), a.ops().len()), (3, 3, 3));
        assert!(a.alphas().iter().chain(a.betas()).all(|&v| v == 0.5));
        assert!(init_genome(1, &mut ChaCha8Rng::seed_from_u64(9), 0.5, hp, hp).is_err());
    }

    #[test]
    fn op_histogram_is_uniform() {
        let hp = GrdaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0f64; 4];
        let mut total = 0;
        while total < 10_000 {
            let g = init_genome(5, &mut rng, 0.5, hp, hp).unwrap();
            for op in g.ops() {
                counts[*op as usize] += 1.0;
                total += 1;
            }
        }
        let expected = total as f64 / 4.0;
        let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi2 {stat} p {p}");
    }

    #[test]
    fn prune_filters_exact_zeros() {
        let g = genome_with(3, vec![OpCode::Sum; 3], vec![1.0, 0.0, -0.2], vec![0.3, 0.0, -1e-9]);
        let a = g.prune();
        assert_eq!(a.features, vec![0, 2]);
        assert_eq!(a.pairs, vec![0, 2]);
        let all = genome_with(3, vec![OpCode::Sum; 3], vec![1.0; 3], vec![1.0; 3]).prune();
        assert_eq!(all, ActiveSet::all(3));
        // pair (1,2) has index 2
        let g = genome_with(3, vec![OpCode::Sum; 3], vec![1.0; 3], vec![1.0, 1.0, 0.0]);
        assert!(!g.prune().has_pair(pair_index(1, 2, 3)));
    }

    #[test]
    fn single_pruned_pair_map() {
        let g = genome_with(2, vec![OpCode::Prod], vec![0.5, 0.25], vec![0.0]);
        let map = gene_map(&g, &names(2)).unwrap();
        assert_eq!(map.codes[0][1], -1);
        assert_eq!(map.intensity[0][1], 0.0);
        assert_eq!(map.intensity[0][0], 1.0);
        assert_eq!(map.intensity[1][1], 0.5);
    }

    #[test]
    fn four_feature_map_matches_hand_construction() {
        use OpCode::*;
        // pairs: (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)
        let g = genome_with(
            4,
            vec![Sum, Prod, Catp, Kerp, Sum, Prod],
            vec![0.2, -0.4, 0.0, 0.1],
            vec![0.8, 0.0, -0.4, 0.2, 0.0, 0.6],
        );
        let map = gene_map(&g, &names(4)).unwrap();
        let codes = vec![
            vec![-1, 0, -1, 2],
            vec![0, -1, 3, -1],
            vec![-1, 3, -1, 1],
            vec![2, -1, 1, -1],
        ];
        let inten = vec![
            vec![0.5, 1.0, 0.0, 0.5],
            vec![1.0, 1.0, 0.25, 0.0],
            vec![0.0, 0.25, 0.0, 0.75],
            vec![0.5, 0.0, 0.75, 0.25],
        ];
        assert_eq!(map.codes, codes);
        for i in 0..4 {
            for j in 0..4 {
                assert!((map.intensity[i][j] - inten[i][j]).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn gene_map_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hp = GrdaParams::default();
        let mut g = init_genome(5, &mut rng, 0.5, hp, hp).unwrap();
        for k in 0..g.n_pairs() {
            g.beta.set_fixed(k, if k % 3 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) });
        }
        let map = gene_map(&g, &names(5)).unwrap();
        let back = GeneMap::parse_csv(&map.to_csv()).unwrap();
        assert_eq!(back.codes, map.codes);
        assert_eq!(back.names, map.names);
        for (r, s) in back.intensity.iter().flatten().zip(map.intensity.iter().flatten()) {
            assert!((r - s).abs() <= 5e-7);
        }
    }

    #[test]
    fn palette_and_pruned_cells() {
        let g = genome_with(3, vec![OpCode::Prod, OpCode::Sum, OpCode::Kerp], vec![1.0; 3], vec![1.0, 0.0, 0.5]);
        let map = gene_map(&g, &names(3)).unwrap();
        let [r, gr, b] = map.cell_color(0, 1);
        assert!(gr > r && gr > b);
        assert_eq!(map.cell_color(0, 2), [255, 255, 255]);
        let [r, gr, b] = map.cell_color(1, 2);
        assert!(b > r && b > gr);
        let ppm = map.to_ppm(4);
        let header = b"P6\n12 12\n255\n";
        assert_eq!(&ppm[..header.len()], header);
        assert_eq!(ppm.len(), header.len() + 12 * 12 * 3);
    }

    proptest! {
        #[test]
        fn gene_map_is_symmetric(seed in any::<u64>(), m in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hp = GrdaParams::default();
            let mut g = init_genome(m, &mut rng, 0.5, hp, hp).unwrap();
            for k in 0..g.n_pairs() {
                let v = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-2.0..2.0) };
                g.beta.set_fixed(k, v);
            }
            let map = gene_map(&g, &names(m)).unwrap();
            for i in 0..m {
                for j in 0..m {
                    prop_assert_eq!(map.codes[i][j], map.codes[j][i]);
                    prop_assert_eq!(map.intensity[i][j].to_bits(), map.intensity[j][i].to_bits());
                    if i != j {
                        prop_assert_eq!(map.intensity[i][j] == 0.0, map.codes[i][j] == -1);
                    }
                }
            }
        }

        #[test]
        fn sentinel_lands_in_its_pair_slot(seed in any::<u64>(), m in 2usize..7, pick in any::<prop::sample::Index>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hp = GrdaParams::default();
            let d = 3;
            let mut g = init_genome(m, &mut rng, 0.5, hp, hp).unwrap();
            let k = pick.index(pair_count(m));
            for q in 0..g.n_pairs() {
                g.beta.set_fixed(q, 0.0);
                g.set_op(q, OpCode::random(&mut rng));
            }
            for i in 0..m {
                g.alpha.set_fixed(i, 0.0);
            }
            g.beta.set_fixed(k, 1.0);
            g.set_op(k, OpCode::Sum);
            let feats: Vec<Vec<f64>> = (0..m).map(|_| vec![1e3; d]).collect();
            let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
            let x = build_input(&refs, &g, &OpProjections::init(d, &mut rng), None).unwrap();
            let hits: Vec<usize> = x.iter().enumerate().filter(|(_, v)| **v == 2e3).map(|(p, _)| p).collect();
            let at = (m + k) * d;
            prop_assert_eq!(hits, (at..at + d).collect::<Vec<_>>());
        }

        #[test]
        fn pruned_slots_are_zero(seed in any::<u64>(), m in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hp = GrdaParams::default();
            let d = 2;
            let mut g = init_genome(m, &mut rng, 0.5, hp, hp).unwrap();
            for q in 0..g.n_pairs() {
                g.beta.set_fixed(q, if rng.random_bool(0.5) { 0.0 } else { 0.7 });
            }
            let active = g.prune();
            let feats: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(0.5..1.5)).collect()).collect();
            let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
            let x = build_input(&refs, &g, &OpProjections::init(d, &mut rng), Some(&active)).unwrap();
            for k in 0..g.n_pairs() {
                if !active.has_pair(k) {
                    let at = (m + k) * d;
                    prop_assert!(x[at..at + d].iter().all(|v| v.to_bits() == 0.0f64.to_bits()));
                }
            }
        }

        #[test]
        fn sum_and_prod_commute(a in proptest::collection::vec(-5.0f64..5.0, 4), b in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let p = OpProjections::identity(4);
            for op in [OpCode::Sum, OpCode::Prod] {
                prop_assert_eq!(apply_op(op, &a, &b, &p).unwrap(), apply_op(op, &b, &a, &p).unwrap());
            }
        }

        #[test]
        fn graph_input_matches_value_input(seed in any::<u64>(), m in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hp = GrdaParams::default();
            let d = 3;
            let mut g = init_genome(m, &mut rng, 0.5, hp, hp).unwrap();
            for q in 0..g.n_pairs() {
                g.beta.set_fixed(q, rng.random_range(-1.0..1.0));
            }
            let proj = OpProjections::init(d, &mut rng);
            let n = 2;
            let feats: Vec<Tensor> = (0..m).map(|_| Tensor::uniform(vec![n, d], 1.0, &mut rng)).collect();
            let mut gr = Graph::new();
            let fv: Vec<Var> = feats.iter().map(|t| gr.param(t.clone())).collect();
            let vars = InputVars {
                alpha: gr.param(Tensor::vector(g.alphas().to_vec())),
                beta: gr.param(Tensor::vector(g.betas().to_vec())),
                catp: gr.param(proj.catp.clone()),
                kerp: gr.param(proj.kerp.clone()),
            };
            let out = record_input(&mut gr, &fv, &g, &vars, None).unwrap();
            for r in 0..n {
                let refs: Vec<&[f64]> = feats.iter().map(|t| t.row(r)).collect();
                let expect = build_input(&refs, &g, &proj, None).unwrap();
                for (a, b) in gr.value(out).row(r).iter().zip(&expect) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
