use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::repr::ReprMatrix;
use crate::augmentation::SampleRng;
use crate::error::{Error, Result};
use crate::numerics::{center_and_normalize, compress_rows, svd_nuclear_norm, write_atomic, Tensor};
use crate::parallel;

pub const DEFAULT_RESAMPLES: usize = 100;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const MIN_BOOTSTRAP_EXAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Cka,
    Opd,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Cka => "cka",
            Measure::Opd => "opd",
        }
    }

    pub fn eval(self, a: &ReprMatrix, b: &ReprMatrix) -> Result<f64> {
        match self {
            Measure::Cka => cka_dissimilarity(a, b),
            Measure::Opd => opd_dissimilarity(a, b),
        }
    }
}

fn same_examples(a: &ReprMatrix, b: &ReprMatrix) -> Result<()> {
    if a.examples() != b.examples() {
        return Err(Error::Shape(format!("{} vs {} examples", a.examples(), b.examples())));
    }
    Ok(())
}

/// Frobenius norm of `x · yᵀ` for two `· × N` matrices.
fn cross_norm(x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(x.matmul(&y.transpose()?)?.frobenius_norm())
}

/// `1 − ‖ABᵀ‖²_F / (‖AAᵀ‖_F ‖BBᵀ‖_F)` after centering and unit-normalizing both inputs.
pub fn cka_dissimilarity(a: &ReprMatrix, b: &ReprMatrix) -> Result<f64> {
    same_examples(a, b)?;
    let a = compress_rows(&center_and_normalize(a.matrix())?)?;
    let b = compress_rows(&center_and_normalize(b.matrix())?)?;
    let ab = cross_norm(&a, &b)?;
    let aa = cross_norm(&a, &a)?;
    let bb = cross_norm(&b, &b)?;
    Ok((1.0 - ab * ab / (aa * bb)).clamp(0.0, 1.0))
}

/// Orthogonal Procrustes residual `min_R ‖B − RA‖²_F` over `RᵀR = I`, on centered,
/// unit-normalized inputs; the narrower matrix is implicitly padded with zero rows.
pub fn opd_dissimilarity(a: &ReprMatrix, b: &ReprMatrix) -> Result<f64> {
    same_examples(a, b)?;
    let a = compress_rows(&center_and_normalize(a.matrix())?)?;
    let b = compress_rows(&center_and_normalize(b.matrix())?)?;
    let nuclear = svd_nuclear_norm(&b.matmul(&a.transpose()?)?)?;
    Ok((2.0 - 2.0 * nuclear).max(0.0))
}

/// Linear-interpolation percentile of sorted data (`q` in [0, 1]).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityReport {
    pub measure: Measure,
    /// Mean over the bootstrap resamples.
    pub mean: f64,
    pub ci: [f64; 2],
    pub n: usize,
    pub level: f64,
    /// Value on the full, unresampled data.
    pub point: f64,
    /// What was resampled.
    pub resampling: String,
}

impl DissimilarityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Percentile bootstrap over example columns: each resample draws `N` columns with
/// replacement from its own seed `(seed, r)` and recomputes `measure`.
pub fn bootstrap_ci(
    a: &ReprMatrix,
    b: &ReprMatrix,
    measure: Measure,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<DissimilarityReport> {
    same_examples(a, b)?;
    let n = a.examples();
    if n < MIN_BOOTSTRAP_EXAMPLES {
        return Err(Error::InsufficientData(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_EXAMPLES} examples, got {n}"
        )));
    }
    if n_resamples < 2 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "bootstrap with {n_resamples} resamples at level {level}"
        )));
    }
    let point = measure.eval(a, b)?;
    let mut values: Vec<f64> = parallel::install(|| {
        (0..n_resamples)
            .into_par_iter()
            .map(|r| {
                let mut rng = SampleRng::from_parts(&[seed, r as u64]);
                let cols: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
                measure.eval(&a.select(&cols)?, &b.select(&cols)?)
            })
            .collect::<Result<_>>()
    })?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(DissimilarityReport {
        measure,
        mean,
        ci: [percentile(&values, tail), percentile(&values, 1.0 - tail)],
        n: n_resamples,
        level,
        point,
        resampling: "example columns with replacement".into(),
    })
}

/// One row of the pairwise comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub pair: String,
    pub cka_mean: f64,
    pub cka_lo: f64,
    pub cka_hi: f64,
    pub opd_mean: f64,
    pub opd_lo: f64,
    pub opd_hi: f64,
}

impl ComparisonRow {
    pub fn new(pair: impl Into<String>, cka: &DissimilarityReport, opd: &DissimilarityReport) -> Self {
        ComparisonRow {
            pair: pair.into(),
            cka_mean: cka.mean,
            cka_lo: cka.ci[0],
            cka_hi: cka.ci[1],
            opd_mean: opd.mean,
            opd_lo: opd.ci[0],
            opd_hi: opd.ci[1],
        }
    }
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rm(rows: usize, cols: usize, v: Vec<f64>) -> ReprMatrix {
        ReprMatrix::anonymous(Tensor::matrix(rows, cols, v).unwrap()).unwrap()
    }

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ReprMatrix {
        rm(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
        )
    }

    fn rotate(m: &ReprMatrix, r: &Tensor) -> ReprMatrix {
        ReprMatrix::anonymous(r.matmul(m.matrix()).unwrap()).unwrap()
    }

    fn rotation2(theta: f64, reflect: bool) -> Tensor {
        let (s, c) = theta.sin_cos();
        let f = if reflect { -1.0 } else { 1.0 };
        Tensor::matrix(2, 2, vec![c, -s * f, s, c * f]).unwrap()
    }

    #[test]
    fn wide_inputs_match_the_padded_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (a, b) = (gaussian(60, 12, &mut rng), gaussian(45, 12, &mut rng));
        let ca = center_and_normalize(a.matrix()).unwrap();
        let mut cb = center_and_normalize(b.matrix()).unwrap().into_data();
        cb.resize(60 * 12, 0.0);
        let cb = Tensor::matrix(60, 12, cb).unwrap();
        let cross = cb.matmul(&ca.transpose().unwrap()).unwrap();
        let opd = 2.0 - 2.0 * svd_nuclear_norm(&cross).unwrap();
        assert!((opd_dissimilarity(&a, &b).unwrap() - opd).abs() < 1e-10);
        let fro = |x: &Tensor, y: &Tensor| x.matmul(&y.transpose().unwrap()).unwrap().frobenius_norm();
        let cka = 1.0 - fro(&ca, &cb).powi(2) / (fro(&ca, &ca) * fro(&cb, &cb));
        assert!((cka_dissimilarity(&a, &b).unwrap() - cka).abs() < 1e-10);
    }

    #[test]
    fn cka_examples() {
        let a = rm(1, 2, vec![1.0, -1.0]);
        assert!(cka_dissimilarity(&a, &a).unwrap().abs() < 1e-12);
        let b = rm(1, 2, vec![2.0, -2.0]);
        assert!(cka_dissimilarity(&a, &b).unwrap().abs() < 1e-12);
        let a3 = rm(1, 3, vec![1.0, -1.0, 0.0]);
        let b3 = rm(1, 3, vec![1.0, 1.0, -2.0]);
        assert!((cka_dissimilarity(&a3, &b3).unwrap() - 1.0).abs() < 1e-12);
        let flat = rm(2, 3, vec![1.0; 6]);
        assert!(matches!(cka_dissimilarity(&flat, &a3), Err(Error::Degenerate(_))));
    }

    #[test]
    fn opd_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian(3, 12, &mut rng);
        assert!(opd_dissimilarity(&a, &a).unwrap() < 1e-10);
        let a1 = rm(1, 4, vec![1.0, 2.0, -0.5, 3.0]);
        let neg = rm(1, 4, vec![-1.0, -2.0, 0.5, -3.0]);
        assert!(opd_dissimilarity(&a1, &neg).unwrap() < 1e-12);
        // p ≠ q is padded
        let b = gaussian(5, 12, &mut rng);
        let d = opd_dissimilarity(&a, &b).unwrap();
        assert!(d > 0.0 && d <= 2.0);
    }

    /// Direct minimization over all 2-D rotations and reflections.
    fn brute_force_opd(a: &ReprMatrix, b: &ReprMatrix) -> f64 {
        let an = center_and_normalize(a.matrix()).unwrap();
        let bn = center_and_normalize(b.matrix()).unwrap();
        let mut best = f64::INFINITY;
        let steps = (2.0 * std::f64::consts::PI / 1e-4) as usize;
        for reflect in [false, true] {
            for i in 0..=steps {
                let r = rotation2(i as f64 * 1e-4, reflect);
                let ra = r.matmul(&an).unwrap();
                let res: f64 = ra.data().iter().zip(bn.data()).map(|(x, y)| (y - x).powi(2)).sum();
                best = best.min(res);
            }
        }
        best
    }

    #[test]
    fn opd_matches_rotation_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = gaussian(2, 9, &mut rng);
            let b = gaussian(2, 9, &mut rng);
            let closed = opd_dissimilarity(&a, &b).unwrap();
            assert!((closed - brute_force_opd(&a, &b)).abs() < 1e-6);
        }
    }

    #[test]
    fn bootstrap_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gaussian(4, 30, &mut rng);
        let r = bootstrap_ci(&a, &a, Measure::Cka, DEFAULT_RESAMPLES, DEFAULT_LEVEL, 1).unwrap();
        assert_eq!(r.ci[0], r.ci[1]);
        assert!(r.mean.abs() < 1e-10);
        assert_eq!((r.n, r.level), (100, 0.95));
        let b = gaussian(4, 30, &mut rng);
        let r = bootstrap_ci(&a, &b, Measure::Opd, 50, 0.9, 3).unwrap();
        assert!(r.ci[0] <= r.mean && r.mean <= r.ci[1]);
        assert_eq!(r, bootstrap_ci(&a, &b, Measure::Opd, 50, 0.9, 3).unwrap());
        let small = gaussian(2, 9, &mut rng);
        assert!(matches!(
            bootstrap_ci(&small, &small, Measure::Cka, 100, 0.95, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert!((percentile(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    fn random_orthogonal(p: usize, rng: &mut ChaCha8Rng) -> Tensor {
        // Gram-Schmidt on a Gaussian matrix
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < p {
            let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            for u in &q {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                q.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        Tensor::from_rows(&q).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn cka_range_symmetry_invariance(seed in any::<u64>(), p in 1usize..5, q in 1usize..5, n in 3usize..20, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(p, n, &mut rng);
            let b = gaussian(q, n, &mut rng);
            let d = cka_dissimilarity(&a, &b).unwrap();
            prop_assert!((-1e-10..=1.0 + 1e-10).contains(&d));
            prop_assert!((d - cka_dissimilarity(&b, &a).unwrap()).abs() < 1e-12);
            let r = random_orthogonal(p, &mut rng);
            let ra = rotate(&a, &r.map(|v| v * scale).unwrap());
            prop_assert!((cka_dissimilarity(&ra, &b).unwrap() - d).abs() < 1e-8);
        }

        #[test]
        fn opd_zero_under_rotation(seed in any::<u64>(), p in 1usize..6, n in 3usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(p, n, &mut rng);
            let r = random_orthogonal(p, &mut rng);
            prop_assert!(opd_dissimilarity(&a, &rotate(&a, &r)).unwrap() < 1e-8);
        }
    }
}
