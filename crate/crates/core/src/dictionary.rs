//! Unit-norm overcomplete dictionaries: generation, coherence analysis and
//! persistence.
//!
//! Atoms are stored column-major in one flat buffer (`n` reals per atom), the
//! same layout as the on-disk format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, CompensatedSum};
use crate::rng::{self, tag};

/// Largest atom count any generator will build.
pub const MAX_ATOMS: usize = 1 << 20;

const MAGIC: &[u8; 4] = b"GCDX";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictKind {
    Spherical,
    /// Spiked block model: every atom in block `b` leans on a hidden unit
    /// direction `c_b` with weight `sqrt(lambda)`.
    Structured {
        num_blocks: usize,
        atoms_per_block: usize,
        mu_local: f64,
        lambda: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    n: usize,
    m: usize,
    atoms: Vec<f64>,
    kind: DictKind,
    seed: u64,
    partition: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    kind: DictKind,
    seed: u64,
    partition: Option<Vec<usize>>,
}

impl Dictionary {
    /// Wraps explicit atoms (column-major, `n * m` values). Columns are
    /// normalized; a zero column is rejected.
    pub fn from_columns(n: usize, m: usize, mut atoms: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return invalid("n", "dictionary needs n >= 1 and m >= 1");
        }
        if atoms.len() != n * m {
            return invalid("atoms", format!("expected {} values, got {}", n * m, atoms.len()));
        }
        for (i, col) in atoms.chunks_mut(n).enumerate() {
            let nrm = norm(col);
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(Error::InvalidArgument {
                    name: "atoms",
                    reason: format!("column {i} has norm {nrm}"),
                });
            }
            col.iter_mut().for_each(|x| *x /= nrm);
        }
        Ok(Dictionary {
            n,
            m,
            atoms,
            kind: DictKind::Spherical,
            seed: 0,
            partition: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Overcompleteness `m / n`.
    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn kind(&self) -> &DictKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Block label of each atom, for structured dictionaries.
    pub fn partition(&self) -> Option<&[usize]> {
        self.partition.as_deref()
    }

    #[inline]
    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.atoms
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.m, &self.atoms)
    }

    /// `D^T x`, all `m` inner products.
    pub fn correlate(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.atoms.chunks_exact(self.n).map(|a| dot(a, x)).collect()
    }

    /// Sub-dictionary `D_S` as an `n x |S|` matrix.
    pub fn submatrix(&self, support: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, support.len(), |r, c| self.atom(support[c])[r])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let dim = |name: &'static str, v: usize| {
            u32::try_from(v).map_err(|_| Error::InvalidArgument {
                name,
                reason: format!("{v} does not fit the u32 header field"),
            })
        };
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&dim("n", self.n)?.to_le_bytes())?;
        w.write_all(&dim("m", self.m)?.to_le_bytes())?;
        for x in &self.atoms {
            w.write_all(&x.to_le_bytes())?;
        }
        let trailer = Trailer {
            kind: self.kind.clone(),
            seed: self.seed,
            partition: self.partition.clone(),
        };
        serde_json::to_writer(&mut w, &trailer)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("file shorter than the 16-byte header".into()))?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("bad magic, expected GCDX".into()));
        }
        let field = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = field(4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let (n, m) = (field(8) as usize, field(12) as usize);
        if n == 0 || m == 0 || n.saturating_mul(m) > MAX_ATOMS.saturating_mul(1 << 14) {
            return Err(Error::Format(format!("implausible shape {n} x {m}")));
        }
        let mut raw = vec![0u8; n * m * 8];
        r.read_exact(&mut raw)
            .map_err(|_| Error::Format("truncated atom block".into()))?;
        let atoms: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let trailer: Trailer = serde_json::from_slice(&rest)
            .map_err(|e| Error::Format(format!("metadata trailer: {e}")))?;
        if let Some(p) = &trailer.partition {
            if p.len() != m {
                return Err(Error::Format(format!("partition has {} labels for {m} atoms", p.len())));
            }
        }
        Ok(Dictionary {
            n,
            m,
            atoms,
            kind: trailer.kind,
            seed: trailer.seed,
            partition: trailer.partition,
        })
    }
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n < 2 {
        return invalid("n", format!("the sphere S^(n-1) needs n >= 2, got {n}"));
    }
    if m < 1 {
        return invalid("m", "need at least one atom");
    }
    if m > MAX_ATOMS {
        return invalid("m", format!("{m} atoms exceeds the limit of {MAX_ATOMS}"));
    }
    Ok(())
}

fn push_unit_gaussian<R: Rng>(n: usize, rng: &mut R, out: &mut Vec<f64>) {
    let start = out.len();
    out.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let col = &mut out[start..];
    let nrm = norm(col);
    col.iter_mut().for_each(|x| *x /= nrm);
}

/// `m` atoms drawn i.i.d. uniformly on the unit sphere of R^n by normalizing
/// standard Gaussian vectors.
pub fn gen_spherical(n: usize, m: usize, seed: u64) -> Result<Dictionary> {
    check_shape(n, m)?;
    let mut rng = rng::stream(seed, &[tag::DICTIONARY]);
    let mut atoms = Vec::with_capacity(n * m);
    for _ in 0..m {
        push_unit_gaussian(n, &mut rng, &mut atoms);
    }
    Ok(Dictionary {
        n,
        m,
        atoms,
        kind: DictKind::Spherical,
        seed,
        partition: None,
    })
}

/// Block-correlated dictionary. Block `b` has a hidden unit direction `c_b`;
/// each of its atoms is `normalize(sqrt(lambda) c_b + sqrt(1 - lambda) g)`
/// with `g ~ N(0, I/n)`. `lambda` is calibrated so the mean absolute
/// within-block inner product equals `mu_local`.
pub fn gen_structured(
    n: usize,
    num_blocks: usize,
    atoms_per_block: usize,
    mu_local: f64,
    seed: u64,
) -> Result<Dictionary> {
    if num_blocks == 0 || atoms_per_block == 0 {
        return invalid("num_blocks", "need at least one block with one atom");
    }
    let m = num_blocks
        .checked_mul(atoms_per_block)
        .ok_or_else(|| Error::InvalidArgument {
            name: "atoms_per_block",
            reason: "atom count overflows".into(),
        })?;
    check_shape(n, m)?;
    if !(mu_local > 0.0 && mu_local < 1.0) {
        return invalid("mu_local", format!("target coherence must lie in (0, 1), got {mu_local}"));
    }
    let lambda = structure_lambda(n, mu_local)?;
    let (w_dir, w_noise) = (lambda.sqrt(), (1.0 - lambda).sqrt() / (n as f64).sqrt());

    let mut rng = rng::stream(seed, &[tag::DICTIONARY]);
    let mut centers = Vec::with_capacity(n * num_blocks);
    for _ in 0..num_blocks {
        push_unit_gaussian(n, &mut rng, &mut centers);
    }
    let mut atoms = Vec::with_capacity(n * m);
    let mut partition = Vec::with_capacity(m);
    for b in 0..num_blocks {
        let c = &centers[b * n..(b + 1) * n];
        for _ in 0..atoms_per_block {
            let start = atoms.len();
            atoms.extend(
                c.iter()
                    .map(|&ci| w_dir * ci + w_noise * rng.sample::<f64, _>(StandardNormal)),
            );
            let col = &mut atoms[start..];
            let nrm = norm(col);
            col.iter_mut().for_each(|x| *x /= nrm);
            partition.push(b);
        }
    }
    Ok(Dictionary {
        n,
        m,
        atoms,
        kind: DictKind::Structured {
            num_blocks,
            atoms_per_block,
            mu_local,
            lambda,
        },
        seed,
        partition: Some(partition),
    })
}

const LAMBDA_PAIRS: usize = 4000;

/// Spike weight `lambda` for which two atoms of the same block have mean
/// absolute inner product `mu_local` in dimension `n`.
///
/// Solved by bisection on a Monte Carlo estimate built from a fixed sample of
/// (direction, noise, noise) triples, so the estimate is a smooth monotone
/// function of `lambda`. Results are cached per `(n, mu_local)`.
pub fn structure_lambda(n: usize, mu_local: f64) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, mu_local.to_bits());
    if let Some(&l) = cache.lock().unwrap().get(&key) {
        return Ok(l);
    }

    // Per pair: <c,g1>, <c,g2>, <g1,g2>, |g1|^2, |g2|^2 with g ~ N(0, I/n).
    let mut rng = rng::stream(n as u64, &[tag::STRUCTURE]);
    let scale = 1.0 / (n as f64).sqrt();
    let stats: Vec<[f64; 5]> = (0..LAMBDA_PAIRS)
        .map(|_| {
            let mut c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let cn = norm(&c);
            c.iter_mut().for_each(|x| *x /= cn);
            let g1: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let g2: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            [dot(&c, &g1), dot(&c, &g2), dot(&g1, &g2), dot(&g1, &g1), dot(&g2, &g2)]
        })
        .collect();
    let mean_abs = |lambda: f64| -> f64 {
        let (a, b) = (lambda.sqrt(), (1.0 - lambda).sqrt());
        let s: CompensatedSum = stats
            .iter()
            .map(|&[cg1, cg2, g12, n1, n2]| {
                let ip = a * a + a * b * (cg1 + cg2) + b * b * g12;
                let l1 = a * a + 2.0 * a * b * cg1 + b * b * n1;
                let l2 = a * a + 2.0 * a * b * cg2 + b * b * n2;
                (ip / (l1 * l2).sqrt()).abs()
            })
            .collect();
        s.value() / stats.len() as f64
    };

    let lambda = if mu_local <= mean_abs(0.0) {
        0.0
    } else {
        let top = 1.0 - 1e-12;
        if mu_local >= mean_abs(top) {
            return invalid(
                "mu_local",
                format!("target {mu_local} is not reachable in dimension {n}"),
            );
        }
        let (mut lo, mut hi) = (0.0, top);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mean_abs(mid) < mu_local {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    cache.lock().unwrap().insert(key, lambda);
    Ok(lambda)
}

/// `max_{i != j} |<d_i, d_j>|`.
pub fn mutual_coherence(d: &Dictionary) -> Result<f64> {
    if d.m < 2 {
        return invalid("m", "coherence needs at least two atoms");
    }
    Ok((0..d.m)
        .into_par_iter()
        .map(|i| {
            let ai = d.atom(i);
            ((i + 1)..d.m)
                .map(|j| dot(ai, d.atom(j)).abs())
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// Counts of `|G_ij|` (i < j) in equal-width bins over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSummary {
    pub mu_global: f64,
    pub mean_abs_offdiag: f64,
    /// Mean `|G_ij|` over pairs in the same block (only with a partition).
    pub mu_within: Option<f64>,
    /// Mean `|G_ij|` over pairs in different blocks (only with a partition).
    pub mu_across: Option<f64>,
    pub offdiag_histogram: Histogram,
}

pub const HISTOGRAM_BINS: usize = 50;

/// Off-diagonal Gram statistics, optionally split by block labels.
pub fn gram_summary(d: &Dictionary, partition: Option<&[usize]>) -> Result<GramSummary> {
    if d.m < 2 {
        return invalid("m", "Gram summary needs at least two atoms");
    }
    if let Some(p) = partition {
        if p.len() != d.m {
            return invalid(
                "partition",
                format!("{} labels given for {} atoms", p.len(), d.m),
            );
        }
    }
    struct Acc {
        max: f64,
        all: CompensatedSum,
        within: CompensatedSum,
        within_n: u64,
        across: CompensatedSum,
        across_n: u64,
        bins: Vec<u64>,
    }
    let empty = || Acc {
        max: 0.0,
        all: CompensatedSum::new(),
        within: CompensatedSum::new(),
        within_n: 0,
        across: CompensatedSum::new(),
        across_n: 0,
        bins: vec![0; HISTOGRAM_BINS],
    };
    // Rows are reduced in order so the sums do not depend on scheduling.
    let rows: Vec<Acc> = (0..d.m)
        .into_par_iter()
        .map(|i| {
            let mut acc = empty();
            let ai = d.atom(i);
            for j in (i + 1)..d.m {
                let g = dot(ai, d.atom(j)).abs();
                acc.max = acc.max.max(g);
                acc.all.add(g);
                let bin = ((g * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
                acc.bins[bin] += 1;
                if let Some(p) = partition {
                    if p[i] == p[j] {
                        acc.within.add(g);
                        acc.within_n += 1;
                    } else {
                        acc.across.add(g);
                        acc.across_n += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut tot = empty();
    for r in rows {
        tot.max = tot.max.max(r.max);
        tot.all.add(r.all.value());
        tot.within.add(r.within.value());
        tot.within_n += r.within_n;
        tot.across.add(r.across.value());
        tot.across_n += r.across_n;
        for (t, c) in tot.bins.iter_mut().zip(r.bins) {
            *t += c;
        }
    }
    let pairs = (d.m * (d.m - 1) / 2) as f64;
    let mean_or_none = |s: CompensatedSum, k: u64| (k > 0).then(|| s.value() / k as f64);
    Ok(GramSummary {
        mu_global: tot.max,
        mean_abs_offdiag: tot.all.value() / pairs,
        mu_within: partition.and_then(|_| mean_or_none(tot.within, tot.within_n)),
        mu_across: partition.and_then(|_| mean_or_none(tot.across, tot.across_n)),
        offdiag_histogram: Histogram {
            edges: (0..=HISTOGRAM_BINS)
                .map(|b| b as f64 / HISTOGRAM_BINS as f64)
                .collect(),
            counts: tot.bins,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    /// `alpha_A^T (D_A^T D_B) alpha_B`
    pub rho_bil: f64,
    /// `||D_A^T D_B||_op`
    pub rho_op: f64,
}

pub(crate) fn validate_support(d: &Dictionary, name: &'static str, s: &[usize]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(s.len());
    for &i in s {
        if i >= d.m {
            return invalid(name, format!("index {i} out of range for {} atoms", d.m));
        }
        if !seen.insert(i) {
            return invalid(name, format!("index {i} repeated"));
        }
    }
    Ok(())
}

pub(crate) fn check_disjoint(s_a: &[usize], s_b: &[usize]) -> Result<()> {
    let a: std::collections::HashSet<_> = s_a.iter().collect();
    if let Some(i) = s_b.iter().find(|i| a.contains(i)) {
        return invalid("support_b", format!("index {i} appears in both supports"));
    }
    Ok(())
}

/// Bilinear and operator-norm cross-correlation of two disjoint sub-dictionaries.
pub fn cross_correlation(
    d: &Dictionary,
    s_a: &[usize],
    s_b: &[usize],
    alpha_a: &[f64],
    alpha_b: &[f64],
) -> Result<CrossCorrelation> {
    validate_support(d, "support_a", s_a)?;
    validate_support(d, "support_b", s_b)?;
    check_disjoint(s_a, s_b)?;
    if alpha_a.len() != s_a.len() {
        return invalid("alpha_a", "length does not match support_a");
    }
    if alpha_b.len() != s_b.len() {
        return invalid("alpha_b", "length does not match support_b");
    }
    if s_a.is_empty() || s_b.is_empty() {
        return Ok(CrossCorrelation { rho_bil: 0.0, rho_op: 0.0 });
    }
    let (ka, kb) = (s_a.len(), s_b.len());
    let cross = DMatrix::from_fn(ka, kb, |i, j| dot(d.atom(s_a[i]), d.atom(s_b[j])));
    let rho_bil: f64 = (0..ka)
        .flat_map(|i| (0..kb).map(move |j| (i, j)))
        .map(|(i, j)| alpha_a[i] * cross[(i, j)] * alpha_b[j])
        .collect::<CompensatedSum>()
        .value();
    let rho_op = operator_norm(&cross)?;
    Ok(CrossCorrelation { rho_bil, rho_op })
}

/// Largest singular value by power iteration on `M M^T`, stopped once the
/// eigen-residual `|M M^T v - lambda v|` drops to 1e-10 `lambda`.
pub fn operator_norm(mat: &DMatrix<f64>) -> Result<f64> {
    let gram = mat * mat.transpose();
    let k = gram.nrows();
    if gram.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    // Deterministic start with every eigen-direction represented almost surely.
    let mut r = rng::stream(k as u64, &[tag::SPECTRA]);
    let mut v = nalgebra::DVector::from_fn(k, |_, _| 1.0 + 0.5 * r.random::<f64>());
    v /= v.norm();
    let mut resid = f64::INFINITY;
    const MAX_ITER: usize = 100_000;
    for _ in 0..MAX_ITER {
        let w = &gram * &v;
        let lambda = v.dot(&w);
        resid = (&w - &v * lambda).norm();
        if resid <= 1e-10 * lambda.abs() {
            return Ok(lambda.max(0.0).sqrt());
        }
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w / wn;
    }
    Err(Error::NoConvergence {
        what: "operator-norm power iteration",
        iterations: MAX_ITER,
        residual: resid,
    })
}
