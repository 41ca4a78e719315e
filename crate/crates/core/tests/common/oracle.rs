//! Straight-line reference implementations. Nothing here calls into the
//! library's numeric code beyond reading plain data out of its types.

use mera_core::numcore::Matrix;

pub fn matmul(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b.cols()]; a.rows()];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            for p in 0..a.cols() {
                *cell += a.get(i, p) * b.get(p, j);
            }
        }
    }
    out
}

pub fn softmax(v: &[f64], t: f64) -> Vec<f64> {
    let e: Vec<f64> = v.iter().map(|x| (x / t).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `relu(x W1 + b1) W2 + b2`, one row at a time.
pub fn mlp2(x: &[f64], w1: &Matrix, b1: &Matrix, w2: &Matrix, b2: &Matrix) -> Vec<f64> {
    let hidden: Vec<f64> = (0..w1.cols())
        .map(|h| {
            let mut s = b1.get(0, h);
            for i in 0..x.len() {
                s += x[i] * w1.get(i, h);
            }
            s.max(0.0)
        })
        .collect();
    (0..w2.cols())
        .map(|o| {
            let mut s = b2.get(0, o);
            for h in 0..hidden.len() {
                s += hidden[h] * w2.get(h, o);
            }
            s
        })
        .collect()
}

pub fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Full scan, sorted by similarity descending then id ascending.
pub fn retrieve(
    records: &[(String, Vec<f64>, Option<String>)],
    query: &[f64],
    k: usize,
    exclude: Option<&str>,
    cluster: Option<&str>,
) -> Vec<String> {
    let clustered = records.iter().any(|r| r.2.is_some());
    let mut scored: Vec<(f64, &str)> = records
        .iter()
        .filter(|r| Some(r.0.as_str()) != exclude)
        .filter(|r| !clustered || cluster.is_none() || r.2.as_deref() == cluster)
        .map(|r| (cosine(query, &r.1), r.0.as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    scored
        .into_iter()
        .take(k)
        .map(|(_, id)| id.to_string())
        .collect()
}

/// Intra-neighbor aggregation.
pub fn intra(query: &[f64], block: &[Vec<f64>], tau: f64) -> Vec<f64> {
    let beta = softmax(
        &block.iter().map(|r| dot(query, r)).collect::<Vec<_>>(),
        tau,
    );
    let mut out = vec![0.0; query.len()];
    for (r, b) in block.iter().zip(&beta) {
        for j in 0..out.len() {
            out[j] += b * r[j];
        }
    }
    out
}

/// Inter-neighbor fusion with the query at position 0.
pub fn inter(query: &[f64], summaries: &[Vec<f64>]) -> Vec<f64> {
    let mut cands = vec![query.to_vec()];
    cands.extend(summaries.iter().cloned());
    let gamma = softmax(
        &cands.iter().map(|c| dot(query, c)).collect::<Vec<_>>(),
        1.0,
    );
    let mut out = vec![0.0; query.len()];
    for (c, g) in cands.iter().zip(&gamma) {
        for j in 0..out.len() {
            out[j] += g * c[j];
        }
    }
    out
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

/// Per-residue fusion of raw head scores, one inner vec per residue.
pub struct Fused {
    pub mass: Vec<f64>,
    pub credibility: Vec<f64>,
    pub u: Vec<f64>,
    pub weight: Vec<f64>,
    pub y: f64,
}

pub fn fuse(z: &[f64]) -> Fused {
    let s = z.len();
    if s == 1 {
        return Fused {
            mass: vec![1.0],
            credibility: vec![1.0],
            u: vec![0.0],
            weight: vec![1.0],
            y: sigmoid(z[0]),
        };
    }
    let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
    let mass = softmax(&p, 1.0);
    let credibility: Vec<f64> = (0..s)
        .map(|i| {
            let mut other = f64::MIN;
            for j in 0..s {
                if j != i && mass[j] > other {
                    other = mass[j];
                }
            }
            (mass[i] + 1.0 - other) / 2.0
        })
        .collect();
    let u: Vec<f64> = credibility.iter().map(|&c| entropy(c)).collect();
    let weight = softmax(&u.iter().map(|v| -v).collect::<Vec<_>>(), 1.0);
    let mut logit = 0.0;
    for i in 0..s {
        logit += weight[i] * z[i];
    }
    Fused {
        mass,
        credibility,
        u,
        weight,
        y: sigmoid(logit),
    }
}

/// Normalized binary entropy, clamped like the fusion layer.
pub fn entropy(c: f64) -> f64 {
    let c = c.clamp(1e-12, 1.0 - 1e-12);
    -(c * c.ln() + (1.0 - c) * (1.0 - c).ln()) / 2f64.ln()
}

/// Mean binary cross-entropy.
pub fn bce(y_hat: &[f64], y: &[u8]) -> f64 {
    let mut s = 0.0;
    for (p, &l) in y_hat.iter().zip(y) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        s -= if l == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    s / y.len() as f64
}

// Metric oracles over pooled (score, label) pairs.

pub fn average_precision(s: &[f64], y: &[u8]) -> f64 {
    let pos = y.iter().filter(|&&l| l == 1).count();
    let mut total = 0.0;
    for j in 0..s.len() {
        if y[j] != 1 {
            continue;
        }
        let at_or_above = (0..s.len()).filter(|&i| s[i] >= s[j]).count();
        let tp = (0..s.len()).filter(|&i| s[i] >= s[j] && y[i] == 1).count();
        total += tp as f64 / at_or_above as f64;
    }
    total / pos as f64
}

pub fn auroc(s: &[f64], y: &[u8]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1;
                if s[i] > s[j] {
                    twice += 2;
                } else if s[i] == s[j] {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

pub fn counts(s: &[f64], y: &[u8], t: f64) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&v, &l) in s.iter().zip(y) {
        match (v >= t, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, tn, fn_)
}

pub fn mcc(tp: u64, fp: u64, tn: u64, fn_: u64) -> f64 {
    let f = |x: u64| x as f64;
    let d = (f(tp) + f(fp)) * (f(tp) + f(fn_)) * (f(tn) + f(fp)) * (f(tn) + f(fn_));
    if d == 0.0 {
        0.0
    } else {
        (f(tp) * f(tn) - f(fp) * f(fn_)) / d.sqrt()
    }
}

/// Exhaustive sweep; the smallest threshold wins ties.
pub fn fmax(s: &[f64], y: &[u8]) -> (f64, f64) {
    let mut ts = s.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let mut best = (-1.0, f64::NAN);
    for &t in &ts {
        let (tp, fp, _, fn_) = counts(s, y, t);
        let f = (2 * tp) as f64 / (2 * tp + fp + fn_) as f64;
        if f > best.0 {
            best = (f, t);
        }
    }
    best
}

/// Any-hit top-k averaged over proteins with a positive.
pub fn hits(proteins: &[(Vec<f64>, Vec<u8>)], k: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (s, y) in proteins {
        if !y.contains(&1) {
            continue;
        }
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        if idx.iter().take(k).any(|&i| y[i] == 1) {
            total += 1.0;
        }
        n += 1;
    }
    total / n as f64
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let below = v.iter().filter(|&&w| w < v[i]).count() as f64;
                let equal = v.iter().filter(|&&w| w == v[i]).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Bias-corrected Adam on flat vectors; returns the parameter trajectory.
pub fn adam(w0: &[f64], grad: impl Fn(&[f64]) -> Vec<f64>, lr: f64, steps: usize) -> Vec<Vec<f64>> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut w = w0.to_vec();
    let mut m = vec![0.0; w.len()];
    let mut v = vec![0.0; w.len()];
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = grad(&w);
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t as i32));
            let vh = v[i] / (1.0 - b2.powi(t as i32));
            w[i] -= lr * mh / (vh.sqrt() + eps);
        }
        out.push(w.clone());
    }
    out
}
