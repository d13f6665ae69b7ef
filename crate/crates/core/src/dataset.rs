//! Phase-tagged quadrature data: synthetic generation, CSV persistence,
//! histograms, empirical characteristic functions and symmetry diagnostics.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::models::{Tomogram, TomogramModel};
use crate::quadrature::{circular_distance, UniformGrid};
use crate::stats;

pub const GENERATOR_VERSION: &str = concat!("spacs-core/", env!("CARGO_PKG_VERSION"), "/inverse-cdf-chacha8");

/// Inverse-CDF sampling grid.
pub const SAMPLING_GRID: UniformGrid = UniformGrid::new(-8.0, 8.0, 1e-3);

/// Default tolerance when matching `θ` with `θ + π`.
pub const PAIRING_TOLERANCE: f64 = 0.02;

/// Provenance recorded next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub true_params: Option<TomogramModel>,
    pub n_per_phase: Option<usize>,
    pub phases: Vec<f64>,
    pub generator_version: Option<String>,
}

/// Quadrature samples grouped by local-oscillator phase.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    phases: Vec<f64>,
    samples: Vec<Vec<f64>>,
    meta: Option<DatasetMeta>,
}

impl QuadratureDataset {
    pub fn new(phases: Vec<f64>, samples: Vec<Vec<f64>>, meta: Option<DatasetMeta>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::NoSamples);
        }
        if phases.len() != samples.len() {
            return Err(Error::DimensionMismatch(phases.len(), samples.len()));
        }
        for (i, &t) in phases.iter().enumerate() {
            if !(0.0..2.0 * PI).contains(&t) {
                return Err(Error::InvalidInput(format!("phase {t} outside [0, 2π)")));
            }
            if i > 0 && t <= phases[i - 1] {
                return Err(Error::InvalidInput("phases must be strictly increasing".into()));
            }
        }
        for (t, s) in phases.iter().zip(&samples) {
            if s.is_empty() {
                return Err(Error::InvalidInput(format!("no samples at phase {t}")));
            }
            if let Some(x) = s.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite sample {x} at phase {t}")));
            }
        }
        Ok(QuadratureDataset { phases, samples, meta })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn samples(&self, phase_index: usize) -> &[f64] {
        &self.samples[phase_index]
    }

    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn total_samples(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    pub fn meta(&self) -> Option<&DatasetMeta> {
        self.meta.as_ref()
    }

    fn check_index(&self, phase_index: usize) -> Result<()> {
        if phase_index >= self.phases.len() {
            return Err(Error::InvalidInput(format!(
                "phase index {phase_index} out of range (dataset has {} phases)",
                self.phases.len()
            )));
        }
        Ok(())
    }

    /// CSV text with header `theta,x`, one sample per row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(40 * self.total_samples() + 8);
        out.push_str("theta,x\n");
        for (t, s) in self.phases.iter().zip(&self.samples) {
            let theta = format!("{t:.16e}");
            for x in s {
                out.push_str(&theta);
                out.push(',');
                out.push_str(&x.to_string());
                out.push('\n');
            }
        }
        out
    }

    /// SHA-256 of the CSV serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }

    /// Every phase moved by `delta` (mod 2π), re-sorted.
    pub fn with_shifted_phases(&self, delta: f64) -> Result<Self> {
        let mut pairs: Vec<(f64, Vec<f64>)> = self
            .phases
            .iter()
            .map(|t| crate::quadrature::wrap_angle(t + delta, 2.0 * PI))
            .zip(self.samples.iter().cloned())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (phases, samples) = pairs.into_iter().unzip();
        QuadratureDataset::new(phases, samples, None)
    }

    /// Every sample negated, `X → −X`.
    pub fn negated(&self) -> Self {
        QuadratureDataset {
            phases: self.phases.clone(),
            samples: self.samples.iter().map(|s| s.iter().map(|x| -x).collect()).collect(),
            meta: None,
        }
    }

    /// Data at each paired phase replaced by the negated data of its partner,
    /// which is what a fair tomogram would look like under `w(X, θ+π) = w(−X, θ)`.
    pub fn mirrored(&self, tolerance: f64) -> Self {
        let mut samples = self.samples.clone();
        for (lo, hi) in find_phase_pairs(&self.phases, tolerance) {
            samples[lo] = self.samples[hi].iter().map(|x| -x).collect();
            samples[hi] = self.samples[lo].iter().map(|x| -x).collect();
        }
        QuadratureDataset {
            phases: self.phases.clone(),
            samples,
            meta: None,
        }
    }

    /// Resampling with replacement within each phase.
    pub fn resampled<R: Rng>(&self, rng: &mut R) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| (0..s.len()).map(|_| s[rng.random_range(0..s.len())]).collect())
            .collect();
        QuadratureDataset {
            phases: self.phases.clone(),
            samples,
            meta: None,
        }
    }

    /// Replace the samples of one phase; used to build perturbed datasets.
    pub fn with_phase_samples(&self, phase_index: usize, samples: Vec<f64>) -> Result<Self> {
        self.check_index(phase_index)?;
        let mut all = self.samples.clone();
        all[phase_index] = samples;
        QuadratureDataset::new(self.phases.clone(), all, None)
    }
}

/// Phase pairs `(i, j)` with `θ_i ∈ [0, π)` and `θ_j ≈ θ_i + π` within `tolerance`.
pub fn find_phase_pairs(phases: &[f64], tolerance: f64) -> Vec<(usize, usize)> {
    phases
        .iter()
        .enumerate()
        .filter(|(_, &t)| t < PI)
        .filter_map(|(i, &t)| {
            phases
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &u)| (j, circular_distance(u, t + PI)))
                .filter(|&(_, d)| d <= tolerance)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, _)| (i, j))
        })
        // a phase at (or rounded just below) π pairs back onto one already seen
        .filter(|&(i, j)| i < j)
        .collect()
}

/// Default synthetic phase grid.
///
/// An even count is spread uniformly over `[0, 2π)`. An odd count `n` uses the
/// uniform grid of `n + 1` points with its last point dropped, so that all but
/// one phase have a partner at `θ + π`.
pub fn default_phase_grid(count: usize) -> Vec<f64> {
    let slots = if count % 2 == 0 { count } else { count + 1 };
    (0..count).map(|j| 2.0 * PI * j as f64 / slots as f64).collect()
}

/// Inverse-CDF sampler for one phase of a tomogram, tabulated on [`SAMPLING_GRID`].
pub struct InverseCdfSampler {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdfSampler {
    pub fn new<T: Tomogram + ?Sized>(tomogram: &T, theta: f64) -> Result<Self> {
        let xs = SAMPLING_GRID.points();
        let pdf: Vec<f64> = xs.iter().map(|&x| tomogram.density(x, theta).max(0.0)).collect();
        let mut cdf = Vec::with_capacity(xs.len());
        cdf.push(0.0);
        for k in 1..xs.len() {
            cdf.push(cdf[k - 1] + 0.5 * SAMPLING_GRID.step * (pdf[k - 1] + pdf[k]));
        }
        let total = cdf[cdf.len() - 1];
        if !total.is_finite() || (total - 1.0).abs() > 1e-4 {
            return Err(Error::NotNormalizable(total));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(InverseCdfSampler { xs, cdf })
    }

    /// Maps a uniform variate in `[0, 1)` to a quadrature value.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c <= u);
        if k == 0 {
            return self.xs[0];
        }
        if k >= self.cdf.len() {
            return self.xs[self.xs.len() - 1];
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.xs[k - 1] + t * (self.xs[k] - self.xs[k - 1])
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Per-phase generator seed, drawn from stream `phase_index` of the dataset
/// seed so that nearby seeds share no phase streams.
pub fn phase_seed(seed: u64, phase_index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase_index as u64);
    rng.next_u64()
}

/// i.i.d. samples of `tomogram` at `theta`.
pub fn sample_phase<T: Tomogram + ?Sized>(tomogram: &T, theta: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = InverseCdfSampler::new(tomogram, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Synthetic dataset drawn from `model`.
pub fn sample_dataset(model: &TomogramModel, phases: &[f64], n_per_phase: usize, seed: u64) -> Result<QuadratureDataset> {
    if n_per_phase == 0 {
        return Err(Error::InvalidInput("n_per_phase must be at least 1".into()));
    }
    let model = model.validated()?;
    let samples = phases
        .iter()
        .enumerate()
        .map(|(j, &theta)| sample_phase(&model, theta, n_per_phase, phase_seed(seed, j)))
        .collect::<Result<Vec<_>>>()?;
    let meta = DatasetMeta {
        seed: Some(seed),
        true_params: Some(model),
        n_per_phase: Some(n_per_phase),
        phases: phases.to_vec(),
        generator_version: Some(GENERATOR_VERSION.to_string()),
    };
    QuadratureDataset::new(phases.to_vec(), samples, Some(meta))
}

/// `<name>.meta.json` next to `<name>.csv`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn save_dataset(dataset: &QuadratureDataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset.to_csv_string()).map_err(|e| Error::io(path, e))?;
    if let Some(meta) = &dataset.meta {
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(meta)?;
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<QuadratureDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dataset = parse_csv(&text)?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta_text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        dataset.meta = Some(serde_json::from_str(&meta_text)?);
    }
    Ok(dataset)
}

/// Parses `theta,x` CSV text, grouping samples by distinct `θ`.
pub fn parse_csv(text: &str) -> Result<QuadratureDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() != 2 || &headers[0] != "theta" || &headers[1] != "x" {
        if headers.is_empty() || text.trim().is_empty() {
            return Err(Error::NoSamples);
        }
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header \"theta,x\", found {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize, name: &str| -> Result<f64> {
            let v: f64 = record[k].parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {name} value {:?}", &record[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite {name} value {v}"),
                });
            }
            Ok(v)
        };
        let theta = field(0, "theta")?;
        let x = field(1, "x")?;
        if !(0.0..2.0 * PI).contains(&theta) {
            return Err(Error::Parse {
                line,
                message: format!("phase {theta} outside [0, 2π)"),
            });
        }
        match groups.iter_mut().find(|(t, _)| *t == theta) {
            Some((_, xs)) => xs.push(x),
            None => groups.push((theta, vec![x])),
        }
    }
    if groups.is_empty() {
        return Err(Error::NoSamples);
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (phases, samples) = groups.into_iter().unzip();
    QuadratureDataset::new(phases, samples, None)
}

/// Bin-width rule for [`histogram`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BinRule {
    /// `2 · IQR · n^{−1/3}`.
    FreedmanDiaconis,
    FixedWidth(f64),
}

/// Normalized histogram of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub phase: f64,
}

impl Histogram {
    pub fn width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `Σ density · width`.
    pub fn total(&self) -> f64 {
        self.bin_edges
            .windows(2)
            .zip(&self.densities)
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum()
    }
}

impl Tomogram for Histogram {
    fn density(&self, x: f64, _theta: f64) -> f64 {
        let n = self.densities.len();
        let (lo, hi) = (self.bin_edges[0], self.bin_edges[n]);
        if x < lo || x > hi {
            return 0.0;
        }
        let k = (((x - lo) / self.width()) as usize).min(n - 1);
        self.densities[k]
    }
}

pub fn histogram(dataset: &QuadratureDataset, phase_index: usize, rule: BinRule) -> Result<Histogram> {
    dataset.check_index(phase_index)?;
    let xs = dataset.samples(phase_index);
    if xs.len() < 2 {
        return Err(Error::Degenerate("a histogram needs at least 2 samples".into()));
    }
    let width = match rule {
        BinRule::FreedmanDiaconis => {
            let iqr = stats::iqr(xs);
            if iqr <= 0.0 {
                return Err(Error::Degenerate("zero interquartile range".into()));
            }
            2.0 * iqr * (xs.len() as f64).powf(-1.0 / 3.0)
        }
        BinRule::FixedWidth(w) if w > 0.0 && w.is_finite() => w,
        BinRule::FixedWidth(w) => return Err(Error::InvalidInput(format!("bin width {w} must be positive"))),
    };
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let nbins = (((hi - lo) / width).ceil() as usize).max(1);
    let mut counts = vec![0usize; nbins];
    for &x in xs {
        let k = (((x - lo) / width) as usize).min(nbins - 1);
        counts[k] += 1;
    }
    let n = xs.len() as f64;
    Ok(Histogram {
        bin_edges: (0..=nbins).map(|k| lo + k as f64 * width).collect(),
        densities: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        phase: dataset.phases[phase_index],
    })
}

/// `(1/n) Σ_j e^{i r X_j}` at one phase.
pub fn empirical_cf(dataset: &QuadratureDataset, phase_index: usize, r: f64) -> Result<Complex64> {
    dataset.check_index(phase_index)?;
    let xs = dataset.samples(phase_index);
    let sum: Complex64 = xs.iter().map(|&x| Complex64::from_polar(1.0, r * x)).sum();
    Ok(sum / xs.len() as f64)
}

/// Symmetry diagnostic for one `(θ, θ+π)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAsymmetry {
    pub lower_index: usize,
    pub upper_index: usize,
    pub lower_phase: f64,
    pub upper_phase: f64,
    /// KS distance between samples at `θ+π` and negated samples at `θ`.
    pub ks_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub pairs: Vec<PairAsymmetry>,
    pub unpaired: Vec<usize>,
    pub tolerance: f64,
}

pub fn asymmetry_report(dataset: &QuadratureDataset, tolerance: f64) -> Result<AsymmetryReport> {
    let pairs = find_phase_pairs(&dataset.phases, tolerance);
    if pairs.is_empty() {
        return Err(Error::MissingPairs { tolerance });
    }
    let paired: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    let unpaired = (0..dataset.n_phases()).filter(|k| !paired.contains(k)).collect();
    let pairs = pairs
        .into_iter()
        .map(|(i, j)| {
            let negated: Vec<f64> = dataset.samples(i).iter().map(|x| -x).collect();
            PairAsymmetry {
                lower_index: i,
                upper_index: j,
                lower_phase: dataset.phases[i],
                upper_phase: dataset.phases[j],
                ks_statistic: stats::ks_two_sample(dataset.samples(j), &negated),
            }
        })
        .collect();
    Ok(AsymmetryReport {
        pairs,
        unpaired,
        tolerance,
    })
}
