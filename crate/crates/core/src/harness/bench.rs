//! Protect and aggregate timings across schemes, dimensions, cohort sizes
//! and security profiles.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::ids::NodeId;
use crate::joye_libert::{jl_keys_for, JlParams};
use crate::lom::dealer_pairwise_secrets;
use crate::modmath::SecurityProfile;
use crate::protocol::{
    node_online_step, server_aggregate, JlMode, NodeKeys, ProtocolError, RoundContext, Scheme,
    ServerKeys,
};
use crate::quantizer::QuantConfig;

pub const CSV_HEADER: &str = "scheme,d,n,profile,op,median_s,p90_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BenchScheme {
    JlPacked,
    JlNaive,
    Lom,
}

impl BenchScheme {
    pub fn name(self) -> &'static str {
        match self {
            BenchScheme::JlPacked => "jl",
            BenchScheme::JlNaive => "jl-naive",
            BenchScheme::Lom => "lom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jl" | "jl-packed" => Some(BenchScheme::JlPacked),
            "jl-naive" => Some(BenchScheme::JlNaive),
            "lom" => Some(BenchScheme::Lom),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BenchOp {
    Protect,
    Aggregate,
}

impl BenchOp {
    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Protect => "protect",
            BenchOp::Aggregate => "aggregate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchCell {
    pub scheme: BenchScheme,
    pub d: usize,
    pub n: usize,
    pub profile: SecurityProfile,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub reps: usize,
    pub warmup: usize,
    pub ops: Vec<BenchOp>,
    pub input_bits: u32,
    pub weight_bits: u32,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            reps: 5,
            warmup: 1,
            ops: vec![BenchOp::Protect, BenchOp::Aggregate],
            input_bits: 22,
            weight_bits: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub scheme: BenchScheme,
    pub d: usize,
    pub n: usize,
    pub profile: SecurityProfile,
    pub op: BenchOp,
    pub median_s: f64,
    pub p90_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtectRatio {
    pub d: usize,
    pub n: usize,
    pub profile: SecurityProfile,
    /// JL protect median over LOM protect median.
    pub jl_over_lom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub scheme: BenchScheme,
    pub n: usize,
    pub profile: SecurityProfile,
    pub op: BenchOp,
    /// Least-squares slope of ln(median) against ln(d).
    pub slope: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub ratios: Vec<ProtectRatio>,
    pub fits: Vec<ScalingFit>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.9},{:.9}",
                r.scheme.name(),
                r.d,
                r.n,
                r.profile.name(),
                r.op.name(),
                r.median_s,
                r.p90_s
            );
        }
        out
    }

    pub fn median(
        &self,
        scheme: BenchScheme,
        d: usize,
        n: usize,
        profile: SecurityProfile,
        op: BenchOp,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.scheme == scheme && r.d == d && r.n == n && r.profile == profile && r.op == op
            })
            .map(|r| r.median_s)
    }

    pub fn fit(
        &self,
        scheme: BenchScheme,
        n: usize,
        profile: SecurityProfile,
        op: BenchOp,
    ) -> Option<&ScalingFit> {
        self.fits
            .iter()
            .find(|f| f.scheme == scheme && f.n == n && f.profile == profile && f.op == op)
    }
}

/// Median and nearest-rank 90th percentile.
pub fn summarize(samples: &[f64]) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    let median = if k % 2 == 1 {
        s[k / 2]
    } else {
        (s[k / 2 - 1] + s[k / 2]) / 2.0
    };
    let rank = ((0.9 * k as f64).ceil() as usize).clamp(1, k);
    (median, s[rank - 1])
}

/// Least-squares line through `(x, y)`: `(slope, r_squared)`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, r2)
}

struct Fixture {
    ctx: RoundContext,
    nodes: BTreeMap<NodeId, NodeKeys>,
    server: ServerKeys,
    inputs: Vec<(Vec<f64>, u64)>,
}

type GroupKey = (BenchScheme, usize, SecurityProfile, BenchOp);

fn fixture(
    cell: &BenchCell,
    jl_params: &mut BTreeMap<SecurityProfile, JlParams>,
    opts: &BenchOptions,
    rng: &mut ChaCha20Rng,
) -> Result<Fixture, ProtocolError> {
    let quant = QuantConfig::new(opts.input_bits, opts.weight_bits, cell.n, -1.0, 1.0)?;
    let cohort = NodeId::range(cell.n);
    let (scheme, nodes, server) = match cell.scheme {
        BenchScheme::JlPacked | BenchScheme::JlNaive => {
            let params = match jl_params.entry(cell.profile) {
                Entry::Occupied(e) => e.get().clone(),
                Entry::Vacant(e) => e
                    .insert(JlParams::generate(cell.profile.modulus_bits(), rng)?)
                    .clone(),
            };
            let (users, key) = jl_keys_for(&params, cell.n, rng)?;
            let nodes = cohort
                .iter()
                .zip(users)
                .map(|(&u, key)| {
                    (
                        u,
                        NodeKeys::Jl {
                            params: params.clone(),
                            key,
                        },
                    )
                })
                .collect();
            (Scheme::Jl, nodes, ServerKeys::Jl { params, key })
        }
        BenchScheme::Lom => {
            let nodes = dealer_pairwise_secrets(&cohort, rng)
                .into_iter()
                .map(|(u, secrets)| (u, NodeKeys::Lom { secrets }))
                .collect();
            (Scheme::Lom, nodes, ServerKeys::Lom)
        }
    };
    let mode = if cell.scheme == BenchScheme::JlNaive {
        JlMode::Naive
    } else {
        JlMode::Packed
    };
    let ctx = RoundContext::new(1, cohort.clone(), scheme, quant, &cohort)?.with_jl_mode(mode);
    let w_max = 1u64 << opts.weight_bits;
    let inputs = cohort
        .iter()
        .map(|_| {
            let theta = (0..cell.d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            (theta, rng.gen_range(1..w_max))
        })
        .collect();
    Ok(Fixture {
        ctx,
        nodes,
        server,
        inputs,
    })
}

fn time<F: FnMut() -> Result<(), ProtocolError>>(
    opts: &BenchOptions,
    mut f: F,
) -> Result<(f64, f64), ProtocolError> {
    for _ in 0..opts.warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(opts.reps);
    for _ in 0..opts.reps.max(1) {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(summarize(&samples))
}

/// Times each cell; protect is one node's full pipeline, aggregate is the
/// server's unmasking of the whole cohort.
pub fn run_benchmark(
    cells: &[BenchCell],
    opts: &BenchOptions,
) -> Result<BenchReport, ProtocolError> {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut jl_params = BTreeMap::new();
    let mut rows = Vec::new();
    for cell in cells {
        let fx = fixture(cell, &mut jl_params, opts, &mut rng)?;
        let first = fx.ctx.cohort()[0];
        let (theta, w) = &fx.inputs[0];
        let mut push = |op, (median_s, p90_s)| {
            rows.push(BenchRow {
                scheme: cell.scheme,
                d: cell.d,
                n: cell.n,
                profile: cell.profile,
                op,
                median_s,
                p90_s,
            })
        };
        if opts.ops.contains(&BenchOp::Protect) {
            let stats = time(opts, || {
                node_online_step(&fx.ctx, first, theta, *w, &fx.nodes[&first]).map(|_| ())
            })?;
            push(BenchOp::Protect, stats);
        }
        if opts.ops.contains(&BenchOp::Aggregate) {
            let updates = fx
                .ctx
                .cohort()
                .iter()
                .zip(&fx.inputs)
                .map(|(&u, (theta, w))| {
                    Ok((u, node_online_step(&fx.ctx, u, theta, *w, &fx.nodes[&u])?))
                })
                .collect::<Result<BTreeMap<_, _>, ProtocolError>>()?;
            let stats = time(opts, || {
                server_aggregate(&fx.ctx, &updates, &fx.server).map(|_| ())
            })?;
            push(BenchOp::Aggregate, stats);
        }
    }

    let mut ratios = Vec::new();
    for r in rows
        .iter()
        .filter(|r| r.scheme == BenchScheme::Lom && r.op == BenchOp::Protect)
    {
        if let Some(jl) = rows.iter().find(|j| {
            j.scheme == BenchScheme::JlPacked
                && j.op == BenchOp::Protect
                && (j.d, j.n, j.profile) == (r.d, r.n, r.profile)
        }) {
            ratios.push(ProtectRatio {
                d: r.d,
                n: r.n,
                profile: r.profile,
                jl_over_lom: jl.median_s / r.median_s,
            });
        }
    }

    let mut groups: BTreeMap<GroupKey, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.scheme, r.n, r.profile, r.op))
            .or_default()
            .push(((r.d as f64).ln(), r.median_s.max(f64::MIN_POSITIVE).ln()));
    }
    let fits = groups
        .into_iter()
        .filter(|(_, pts)| {
            let mut ds: Vec<u64> = pts.iter().map(|p| p.0.to_bits()).collect();
            ds.sort_unstable();
            ds.dedup();
            ds.len() >= 2
        })
        .map(|((scheme, n, profile, op), pts)| {
            let (slope, r_squared) = fit_line(&pts);
            ScalingFit {
                scheme,
                n,
                profile,
                op,
                slope,
                r_squared,
                points: pts.len(),
            }
        })
        .collect();

    Ok(BenchReport { rows, ratios, fits })
}
