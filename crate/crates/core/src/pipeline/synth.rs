//! Synthetic protein families with planted active sites.
//!
//! Every family has a center and one base vector per template position in
//! the content dimensions, drawn from a pool shared by all families; a
//! protein of the family follows the template, so its chain key lands near
//! the family center. Active positions are template
//! positions too and are shared within the family. The last column carries
//! the site's activity, `+a` for active and `-a` for inactive, plus Gaussian
//! noise whose scale is the difficulty.
//! Text tokens are noisy projections of the family's active-site content plus
//! one summary token of the family center.

use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::embfile::save_embedding;
use super::manifest::{format_labels, Manifest, ManifestEntry, Split};
use crate::error::{MeraError, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub proteins: usize,
    pub length: usize,
    pub dim: usize,
    pub text_dim: usize,
    /// 0 means one family per five proteins.
    pub families: usize,
    pub positive_rate: f64,
    /// Scale of the per-residue noise; 0 makes labels a function of the
    /// noiseless prototype.
    pub difficulty: f64,
    pub seed: u64,
    /// Replace text tokens with unrelated random vectors.
    pub noise_text: bool,
    /// Attach cluster ids (the family) to every protein.
    pub clusters: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            proteins: 250,
            length: 50,
            dim: 32,
            text_dim: 16,
            families: 0,
            positive_rate: 0.1,
            difficulty: 0.5,
            seed: 0,
            noise_text: false,
            clusters: true,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<SynthConfig> {
        toml::from_str(text)
            .map_err(|e| MeraError::Config(format!("synth config: {}", e.message())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MeraError::Config(m.to_string()));
        if self.dim < 2 || self.text_dim < 1 {
            return bad("dim must be at least 2 and text_dim at least 1");
        }
        if self.proteins < 10 {
            return bad("at least 10 proteins are needed");
        }
        if self.length < 1 {
            return bad("length must be at least 1");
        }
        if !(self.positive_rate > 0.0 && self.positive_rate <= 1.0) {
            return bad("positive_rate must lie in (0, 1]");
        }
        if !(self.difficulty >= 0.0 && self.difficulty.is_finite()) {
            return bad("difficulty must be >= 0");
        }
        Ok(())
    }

    pub fn family_count(&self) -> usize {
        if self.families > 0 {
            self.families
        } else {
            (self.proteins / 5).max(2)
        }
    }
}

/// The activity signature lives in the last column.
pub const SIGNATURE_DIMS: usize = 1;

/// Amplitude of the activity signature.
const SIGNATURE: f64 = 0.5;

struct Family {
    center: Vec<f64>,
    sites: Vec<Vec<f64>>,
    active: Vec<bool>,
}

/// A generated protein before it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthProtein {
    pub id: String,
    pub family: usize,
    pub split: Split,
    pub seq: Matrix,
    pub text: Matrix,
    pub labels: Vec<u8>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    if sd == 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, sd).expect("finite sd");
    (0..n).map(|_| d.sample(rng)).collect()
}

/// `floor(x)` or `ceil(x)` with probability given by the fractional part.
fn stochastic_round(x: f64, rng: &mut ChaCha8Rng) -> usize {
    let f = x.floor();
    f as usize + usize::from(rng.gen::<f64>() < x - f)
}

/// Draws the dataset in memory.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthProtein>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = SIGNATURE_DIMS;
    let dc = cfg.dim - s;
    let l = cfg.length;

    // Site bases come from one shared pool, so a base that is active in one
    // family is usually inactive in others.
    let pool: Vec<Vec<f64>> = (0..2 * l)
        .map(|_| gaussian(&mut rng, dc, (1.0 / dc as f64).sqrt()))
        .collect();
    let families: Vec<Family> = (0..cfg.family_count())
        .map(|_| {
            let center = gaussian(&mut rng, dc, (0.5 / dc as f64).sqrt());
            let sites = sample_indices(&mut rng, pool.len(), l)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect();
            let n_act = stochastic_round(cfg.positive_rate * l as f64, &mut rng).clamp(1, l);
            let mut active = vec![false; l];
            for i in sample_indices(&mut rng, l, n_act) {
                active[i] = true;
            }
            Family {
                center,
                sites,
                active,
            }
        })
        .collect();
    let projection = gaussian(&mut rng, cfg.text_dim * dc, (1.0 / dc as f64).sqrt());
    let project = |v: &[f64]| -> Vec<f64> {
        (0..cfg.text_dim)
            .map(|t| (0..dc).map(|j| projection[t * dc + j] * v[j]).sum())
            .collect()
    };

    let n_train = cfg.proteins * 8 / 10;
    let n_valid = (cfg.proteins - n_train) / 2;
    let mut order: Vec<usize> = (0..cfg.proteins).collect();
    order.shuffle(&mut rng);
    let mut split_of = vec![Split::Test; cfg.proteins];
    for (rank, &p) in order.iter().enumerate() {
        split_of[p] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }

    let sig_unit = SIGNATURE / (s as f64).sqrt();
    let content_noise = 0.2 * cfg.difficulty / (dc as f64).sqrt();
    let mut out = Vec::with_capacity(cfg.proteins);
    for (p, &split) in split_of.iter().enumerate() {
        let f = p % families.len();
        let fam = &families[f];
        let mut data = Vec::with_capacity(l * cfg.dim);
        let mut labels = Vec::with_capacity(l);
        for i in 0..l {
            let noise_c = gaussian(&mut rng, dc, content_noise);
            data.extend((0..dc).map(|j| fam.center[j] + fam.sites[i][j] + noise_c[j]));
            let sign = if fam.active[i] { 1.0 } else { -1.0 };
            let noise_s = gaussian(&mut rng, s, cfg.difficulty);
            data.extend(noise_s.iter().map(|n| sign * sig_unit + n));
            labels.push(u8::from(fam.active[i]));
        }
        let seq = Matrix::new(l, cfg.dim, data)?;

        let mut tokens = Vec::new();
        let token_noise = 0.1 * cfg.difficulty;
        for i in (0..l).filter(|&i| fam.active[i]) {
            let site: Vec<f64> = (0..dc).map(|j| fam.center[j] + fam.sites[i][j]).collect();
            tokens.push(project(&site));
        }
        tokens.push(project(&fam.center));
        let n_tok = tokens.len();
        let text_data: Vec<f64> = if cfg.noise_text {
            gaussian(
                &mut rng,
                n_tok * cfg.text_dim,
                (1.0 / cfg.text_dim as f64).sqrt() * 1.2,
            )
        } else {
            let noise = gaussian(&mut rng, n_tok * cfg.text_dim, token_noise);
            tokens
                .concat()
                .iter()
                .zip(noise)
                .map(|(v, n)| v + n)
                .collect()
        };
        out.push(SynthProtein {
            id: format!("p{p:05}"),
            family: f,
            split,
            seq,
            text: Matrix::new(n_tok, cfg.text_dim, text_data)?,
            labels,
        });
    }
    Ok(out)
}

/// Writes `manifest.toml` and `emb/*.emb` under `dir`.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<(PathBuf, Vec<SynthProtein>)> {
    let proteins = generate(cfg)?;
    let emb = dir.join("emb");
    std::fs::create_dir_all(&emb).map_err(|e| MeraError::io(&emb, e))?;
    let mut entries = Vec::with_capacity(proteins.len());
    for p in &proteins {
        let seq = PathBuf::from("emb").join(format!("{}.seq.emb", p.id));
        let text = PathBuf::from("emb").join(format!("{}.text.emb", p.id));
        save_embedding(&p.seq, &dir.join(&seq))?;
        save_embedding(&p.text, &dir.join(&text))?;
        entries.push(ManifestEntry {
            id: p.id.clone(),
            seq,
            text: Some(text),
            labels: Some(format_labels(&p.labels)),
            labels_file: None,
            split: p.split,
            cluster: cfg.clusters.then(|| format!("fam{:03}", p.family)),
            extra: Default::default(),
        });
    }
    let manifest = Manifest {
        base_dir: dir.to_path_buf(),
        entries,
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()).map_err(|e| MeraError::io(&path, e))?;
    Ok((path, proteins))
}
