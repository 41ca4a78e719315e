//! Randomized comparisons against the oracles. Each returns a short summary
//! on success and the first disagreement on failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use mera_core::metrics::{auprc, auroc, fmax, hits_at_k, mcc, EvalRecord, FmaxMode, HitsMode};
use mera_core::model::{Model, Prepared, Sample};
use mera_core::numcore::{finite_diff_check, GradCheckReport, Matrix, Tape};
use mera_core::rmf::{credibility, evidence_mass, fusion_weights, reliability};
use mera_core::store::{build_store, ProteinRecord};
use mera_core::training::Config;

use super::oracle;

pub type Outcome = std::result::Result<String, String>;

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::new(
        r,
        c,
        (0..r * c).map(|_| rng.sample(StandardNormal)).collect(),
    )
    .unwrap()
}

/// Top-K ids against a full-scan sort on random stores of up to 200 records
/// and 32 dimensions. Some stores carry clusters, some hold exact duplicates.
pub fn retrieval(trials: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = 0;
    for trial in 0..trials {
        let m = rng.gen_range(1..=200);
        let d = rng.gen_range(1..=32);
        let clustered = rng.gen_bool(0.3);
        let mut plain = Vec::with_capacity(m);
        let mut records = Vec::with_capacity(m);
        for i in 0..m {
            let seq = if i > 0 && rng.gen_bool(0.05) {
                records
                    .get(rng.gen_range(0..i))
                    .map(|r: &ProteinRecord| r.seq_emb().clone())
                    .unwrap()
            } else {
                let rows = rng.gen_range(1..=4);
                normal_matrix(&mut rng, rows, d)
            };
            let id = format!("r{:03}", rng.gen_range(0..1000) * 1000 + i);
            let cluster = clustered.then(|| format!("c{}", rng.gen_range(0..4)));
            let rec = ProteinRecord::new(id.clone(), seq, vec![0], cluster.clone()).unwrap();
            plain.push((id, rec.chain_key().data().to_vec(), cluster));
            records.push(rec);
        }
        let store = build_store(records).unwrap();
        for _ in 0..3 {
            let q = normal_matrix(&mut rng, 1, d);
            let k = rng.gen_range(1..=10);
            let exclude = rng
                .gen_bool(0.5)
                .then(|| plain[rng.gen_range(0..m)].0.clone());
            let cluster = (rng.gen_bool(0.5)).then(|| format!("c{}", rng.gen_range(0..4)));
            let want =
                oracle::retrieve(&plain, q.data(), k, exclude.as_deref(), cluster.as_deref());
            let got = store.retrieve(&q, k, exclude.as_deref(), cluster.as_deref());
            match got {
                Ok(n) => {
                    let ids: Vec<String> = n.entries.iter().map(|e| e.id.clone()).collect();
                    if ids != want {
                        return Err(format!("trial {trial}: got {ids:?}, oracle {want:?}"));
                    }
                }
                Err(e) if want.is_empty() => {
                    if !matches!(e, mera_core::MeraError::Retrieval(_)) {
                        return Err(format!("trial {trial}: wrong error {e}"));
                    }
                }
                Err(e) => return Err(format!("trial {trial}: {e}, oracle {want:?}")),
            }
            queries += 1;
        }
    }
    Ok(format!("{trials} stores, {queries} queries"))
}

fn random_records(rng: &mut ChaCha8Rng) -> Vec<EvalRecord> {
    let proteins = rng.gen_range(1..=8);
    let budget = rng.gen_range(proteins..=200);
    let grid = rng.gen_bool(0.5);
    let rate = rng.gen_range(0.05..0.6);
    let mut records = Vec::new();
    let mut left = budget;
    for p in 0..proteins {
        let n = if p + 1 == proteins {
            left
        } else {
            rng.gen_range(1..=left - (proteins - p - 1))
        };
        left -= n;
        let scores = (0..n)
            .map(|_| {
                if grid {
                    f64::from(rng.gen_range(1..10u8)) / 10.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        let labels = (0..n).map(|_| u8::from(rng.gen_bool(rate))).collect();
        records.push(EvalRecord::new(format!("p{p}"), scores, labels).unwrap());
    }
    if !records.iter().any(|r| r.labels.contains(&1)) {
        records[0].labels[0] = 1;
    }
    records
}

/// Every metric against its exhaustive or quadratic oracle, bit for bit.
pub fn metrics(trials: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let records = random_records(&mut rng);
        let s: Vec<f64> = records.iter().flat_map(|r| r.scores.clone()).collect();
        let y: Vec<u8> = records.iter().flat_map(|r| r.labels.clone()).collect();
        let fail = |what: &str, got: f64, want: f64| {
            Err(format!("trial {trial}: {what} got {got}, oracle {want}"))
        };

        let (ap, ap_o) = (auprc(&records).unwrap(), oracle::average_precision(&s, &y));
        if ap != ap_o {
            return fail("auprc", ap, ap_o);
        }
        if y.contains(&0) {
            let (a, a_o) = (auroc(&records).unwrap(), oracle::auroc(&s, &y));
            if a != a_o {
                return fail("auroc", a, a_o);
            }
        }
        let (f, t) = fmax(&records, FmaxMode::Micro).unwrap();
        let (f_o, t_o) = oracle::fmax(&s, &y);
        if f != f_o || t != t_o {
            return Err(format!(
                "trial {trial}: fmax got ({f}, {t}), oracle ({f_o}, {t_o})"
            ));
        }
        for threshold in [t, rng.gen_range(0.0..1.0)] {
            let (tp, fp, tn, fn_) = oracle::counts(&s, &y, threshold);
            let (m, m_o) = (mcc(&records, threshold), oracle::mcc(tp, fp, tn, fn_));
            if m != m_o {
                return fail("mcc", m, m_o);
            }
        }
        let proteins: Vec<(Vec<f64>, Vec<u8>)> = records
            .iter()
            .map(|r| (r.scores.clone(), r.labels.clone()))
            .collect();
        for k in [1, 5, 10] {
            let (h, h_o) = (
                hits_at_k(&records, k, HitsMode::Any).unwrap().value,
                oracle::hits(&proteins, k),
            );
            if h != h_o {
                return fail(&format!("hits@{k}"), h, h_o);
            }
        }
    }
    Ok(format!("{trials} instances"))
}

/// Simplex and ordering invariants of the fusion formulas.
pub fn evidential(points: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_sum = 0.0f64;
    let mut worst_sym = 0.0f64;
    for i in 0..points {
        let s = rng.gen_range(2..=4);
        // Uniform point on the simplex.
        let e: Vec<f64> = (0..s).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = e.iter().sum();
        let simplex: Vec<f64> = e.iter().map(|v| v / total).collect();
        let c = credibility(&simplex);
        if let Some(bad) = c.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(format!("point {i}: credibility {bad} outside [0, 1]"));
        }

        let bounded: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = evidence_mass(&bounded).unwrap();
        worst_sum = worst_sum.max((m.iter().sum::<f64>() - 1.0).abs());

        let x: f64 = rng.gen_range(0.0..=1.0);
        worst_sym = worst_sym.max((reliability(x) - reliability(1.0 - x)).abs());

        let u: Vec<f64> = credibility(&m).iter().map(|&c| reliability(c)).collect();
        let w = fusion_weights(&u).unwrap();
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        for a in 0..s {
            for b in 0..s {
                // Gaps of a few ulps in u collapse under exp, so strictness
                // is only demanded above roundoff.
                let reversed = u[a] < u[b] && w[a] < w[b];
                let merged = u[b] - u[a] > 1e-12 && w[a] <= w[b];
                if reversed || merged {
                    return Err(format!("point {i}: u {u:?} but weights {w:?}"));
                }
            }
        }
    }
    if worst_sum > 1e-9 {
        return Err(format!("simplex sum off by {worst_sum:e}"));
    }
    if worst_sym > 1e-12 {
        return Err(format!("u(c) - u(1-c) reached {worst_sym:e}"));
    }
    Ok(format!(
        "{points} points, worst sum error {worst_sum:.1e}, worst symmetry error {worst_sym:.1e}"
    ))
}

/// Two proteins of width 8 with all three modalities and experts, plus the
/// store they retrieve from.
pub fn toy_batch(seed: u64) -> (Model, Vec<Prepared>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let text_dim = 5;
    let mk = |rng: &mut ChaCha8Rng, id: &str, n: usize| {
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 1)).collect();
        Sample::new(id, normal_matrix(rng, n, dim), labels)
            .unwrap()
            .with_text(normal_matrix(rng, 3, text_dim))
    };
    let db: Vec<Sample> = (0..5)
        .map(|i| mk(&mut rng, &format!("db{i}"), 4 + i))
        .collect();
    let store = build_store(db.iter().map(|s| s.to_record().unwrap()).collect()).unwrap();
    let config = Config {
        seed,
        dim,
        text_dim,
        head_hidden: 6,
        gate_hidden: 7,
        attn_dim: 4,
        k: 2,
        ..Config::default()
    };
    let model = Model::init(config).unwrap();
    let batch = [mk(&mut rng, "q0", 4), mk(&mut rng, "q1", 3)]
        .iter()
        .map(|s| model.prepare(s, Some(&store)).unwrap())
        .collect();
    (model, batch)
}

/// Central differences of the summed batch loss against reverse mode.
pub fn gradient(seed: u64) -> mera_core::Result<GradCheckReport> {
    let (model, batch) = toy_batch(seed);
    finite_diff_check(&model.params, 1e-4, |tape: &mut Tape, params| {
        let m = Model {
            config: model.config.clone(),
            params: params.clone(),
        };
        let mut total = None;
        for p in &batch {
            let (_, loss) = m.loss_on_tape(tape, p)?;
            total = Some(match total {
                None => loss.total,
                Some(t) => tape.add(t, loss.total)?,
            });
        }
        Ok(total.expect("non-empty batch"))
    })
}
