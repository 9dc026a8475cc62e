//! Acceptance criteria, run in sequence on one thread so timings are not
//! disturbed by other tests. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secagg_core::harness::{
    run_benchmark, run_experiment, BenchCell, BenchOp, BenchOptions, BenchScheme, ExperimentConfig,
    ExperimentScheme, SimTransport, TaskSpec, Transcript,
};
use secagg_core::ids::NodeId;
use secagg_core::joye_libert::{
    jl_aggregate, jl_aggregate_packed, jl_keys_for, jl_protect, jl_protect_packed,
    key_sum_is_cancelled, pack, JlParams, JlServerKey, JlUserKey,
};
use secagg_core::keyagreement::ka_param;
use secagg_core::lom::{
    dealer_pairwise_secrets, lom_aggregate, lom_protect, mask_sign, mask_stream, LomParams,
};
use secagg_core::modmath::SecurityProfile;
use secagg_core::protocol::{
    jl_setup_phase, jl_share_field, lom_setup_phase, run_online_round, select_cohort, MessageKind,
    NodeKeys, Party, ProtocolError, Round, RoundContext, Scheme, ServerKeys,
};
use secagg_core::quantizer::{
    apply_weight, clip, dequantize_aggregate, quantize, QuantConfig, QuantizedVector,
};
use secagg_core::shamir::{ss_add, ss_recon, ss_share, Share};

use common::plain_sum;

type Verdict = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_rows(rng: &mut impl Rng, n: usize, d: usize, bits: u32) -> Vec<Vec<u64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0..1u64 << bits)).collect())
        .collect()
}

fn qv(row: &[u64], bits: u32) -> QuantizedVector {
    QuantizedVector::new(row.to_vec(), bits).expect("row fits")
}

fn roles(nodes: &[NodeId]) -> Vec<Party> {
    std::iter::once(Party::Server)
        .chain(nodes.iter().map(|&u| Party::Node(u)))
        .collect()
}

const GRID_N: [usize; 4] = [2, 3, 5, 8];
const GRID_D: [usize; 3] = [1, 16, 200];
/// Slot width for the JL grids; inputs leave 3 bits of headroom for 8 nodes.
const JL_M: u32 = 24;

/// Packed JL round over fresh random inputs; returns whether the decrypted
/// aggregate matches the plaintext sum.
fn jl_trial(
    params: &JlParams,
    users: &[JlUserKey],
    server: &JlServerKey,
    d: usize,
    rng: &mut ChaCha20Rng,
) -> Result<bool, String> {
    let n = users.len();
    let rows = random_rows(rng, n, d, JL_M - 3);
    let tau = rng.gen();
    let cts = users
        .iter()
        .zip(&rows)
        .map(|(k, r)| jl_protect_packed(params, k, tau, &qv(r, JL_M - 3), JL_M))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let agg = jl_aggregate_packed(params, server, tau, &cts, n).map_err(|e| e.to_string())?;
    Ok(agg.values() == plain_sum(&rows))
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = rng(1);
    let mut trials = 0;
    for n in GRID_N {
        let params = JlParams::generate(512, &mut rng).map_err(|e| e.to_string())?;
        for d in GRID_D {
            for trial in 0..100 {
                let (users, server) =
                    jl_keys_for(&params, n, &mut rng).map_err(|e| e.to_string())?;
                ensure(jl_trial(&params, &users, &server, d, &mut rng)?, || {
                    format!("n={n} d={d} trial {trial}: aggregate differs from plaintext sum")
                })?;
                trials += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || {
        format!("{trials} trials exact but took {secs:.1}s (target < 60s)")
    })?;
    Ok(format!("{trials} trials exact, 512-bit N, {secs:.1}s"))
}

fn lom_trial(
    secrets: &BTreeMap<NodeId, BTreeMap<NodeId, secagg_core::keyagreement::PairwiseSecret>>,
    cohort: &[NodeId],
    d: usize,
    tau: u64,
    rng: &mut ChaCha20Rng,
) -> Result<bool, String> {
    let params = LomParams::new(40).map_err(|e| e.to_string())?;
    let rows = random_rows(rng, cohort.len(), d, 34);
    let masked = cohort
        .iter()
        .zip(&rows)
        .map(|(&u, r)| lom_protect(&params, &secrets[&u], u, cohort, tau, &qv(r, 34)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let agg = lom_aggregate(&params, &masked, cohort.len()).map_err(|e| e.to_string())?;
    Ok(agg.values() == plain_sum(&rows))
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = rng(2);
    let group = ka_param(SecurityProfile::Test, &mut rng).map_err(|e| e.to_string())?;
    let mut trials = 0;
    for n in GRID_N {
        let nodes = NodeId::range(n);
        let mut transport = SimTransport::new(n as u64, roles(&nodes));
        let secrets =
            lom_setup_phase(&nodes, &group, &mut transport, &mut rng).map_err(|e| e.to_string())?;
        for d in GRID_D {
            for trial in 0..100 {
                let tau = rng.gen();
                ensure(lom_trial(&secrets, &nodes, d, tau, &mut rng)?, || {
                    format!("n={n} d={d} trial {trial}: wrong sum")
                })?;
                trials += 1;
            }
        }
    }
    let all = NodeId::range(180);
    let secrets = dealer_pairwise_secrets(&all, &mut rng);
    for tau in 0..50 {
        let cohort = select_cohort(&all, 18, tau, 2).map_err(|e| e.to_string())?;
        ensure(lom_trial(&secrets, &cohort, 256, tau, &mut rng)?, || {
            format!("selection case tau={tau}: wrong sum")
        })?;
        trials += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || {
        format!("{trials} trials exact but took {secs:.1}s (target < 10s)")
    })?;
    Ok(format!(
        "{trials} trials exact incl. 50 of 18-of-180 selection, {secs:.1}s"
    ))
}

fn criterion_3() -> Verdict {
    let mut rng = rng(3);
    let params = JlParams::generate(512, &mut rng).map_err(|e| e.to_string())?;
    let (d, m, n) = (200, 24, 3);
    for instance in 0..50 {
        let (users, server) = jl_keys_for(&params, n, &mut rng).map_err(|e| e.to_string())?;
        let rows = random_rows(&mut rng, n, d, m - 2);
        let tau = rng.gen();
        let naive = users
            .iter()
            .zip(&rows)
            .map(|(k, r)| jl_protect(&params, k, tau, &qv(r, m - 2), m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let packed = users
            .iter()
            .zip(&rows)
            .map(|(k, r)| jl_protect_packed(&params, k, tau, &qv(r, m - 2), m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let a = jl_aggregate(&params, &server, tau, &naive, n).map_err(|e| e.to_string())?;
        let b =
            jl_aggregate_packed(&params, &server, tau, &packed, n).map_err(|e| e.to_string())?;
        ensure(a.values() == b.values(), || {
            format!("instance {instance}: modes differ")
        })?;
        ensure(a.values() == plain_sum(&rows), || {
            format!("instance {instance}: wrong sum")
        })?;
    }
    Ok("50 instances identical across modes, d=200, M=24".into())
}

fn subsets(n: usize, t: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == t)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

fn criterion_4() -> Verdict {
    let mut rng = rng(4);
    let params = JlParams::generate(512, &mut rng).map_err(|e| e.to_string())?;
    let spec = jl_share_field(&params, 6).map_err(|e| e.to_string())?;
    let p = spec.modulus().clone();
    let mut recons = 0;
    for n in 1..=6usize {
        let members: Vec<u64> = (1..=n as u64).collect();
        for t in 1..=n {
            for _ in 0..10 {
                let secrets: Vec<BigUint> = (0..3).map(|_| rng.gen_biguint_below(&p)).collect();
                let sharings = secrets
                    .iter()
                    .map(|s| ss_share(s, t, &members, &spec, &mut rng))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())?;
                let mut sum = sharings[0].clone();
                for s in &sharings[1..] {
                    sum = ss_add(&sum, s, &spec).map_err(|e| e.to_string())?;
                }
                let total = secrets
                    .iter()
                    .fold(BigUint::from(0u32), |a, s| (a + s) % &p);
                for subset in subsets(n, t) {
                    for (sharing, secret) in sharings.iter().zip(&secrets) {
                        let pick: Vec<Share> = subset.iter().map(|&i| sharing[i].clone()).collect();
                        let got = ss_recon(&pick, t, &spec).map_err(|e| e.to_string())?;
                        ensure(&got == secret, || format!("t={t} n={n} subset {subset:?}"))?;
                        recons += 1;
                    }
                    let pick: Vec<Share> = subset.iter().map(|&i| sum[i].clone()).collect();
                    let got = ss_recon(&pick, t, &spec).map_err(|e| e.to_string())?;
                    ensure(got == total, || {
                        format!("t={t} n={n} sum subset {subset:?}")
                    })?;
                    recons += 1;
                }
            }
        }
    }
    Ok(format!(
        "{recons} reconstructions over all 1 <= t <= n <= 6"
    ))
}

fn criterion_5() -> Verdict {
    let mut rng = rng(5);
    let mut exact = 0;
    for n in GRID_N {
        let nodes = NodeId::range(n);
        let t = (2 * n).div_ceil(3);
        let params = JlParams::generate(512, &mut rng).map_err(|e| e.to_string())?;
        let field = jl_share_field(&params, n).map_err(|e| e.to_string())?;
        let mut transport = SimTransport::new(n as u64, roles(&nodes));
        let out = jl_setup_phase(&nodes, t, &params, &field, &mut transport, &mut rng)
            .map_err(|e| e.to_string())?;
        let users: Vec<JlUserKey> = out.node_keys.values().cloned().collect();
        ensure(key_sum_is_cancelled(&users, &out.server_key), || {
            format!("n={n}: k0 + sum sk_u != 0")
        })?;
        for d in GRID_D {
            for trial in 0..10 {
                ensure(
                    jl_trial(&params, &users, &out.server_key, d, &mut rng)?,
                    || format!("n={n} d={d} trial {trial}: wrong sum under distributed keys"),
                )?;
                exact += 1;
            }
        }

        // n - t + 1 nodes withhold their server-key shares: t - 1 remain
        let mut lossy = SimTransport::new(100 + n as u64, roles(&nodes));
        for &u in &nodes[..n - t + 1] {
            lossy.drop_messages(secagg_core::harness::DropRule {
                sender: Party::Node(u),
                kind: Some(MessageKind::ServerKeyShare),
            });
        }
        match jl_setup_phase(&nodes, t, &params, &field, &mut lossy, &mut rng) {
            Err(ProtocolError::SetupAborted {
                collected,
                threshold,
            }) if collected == t - 1 && threshold == t => {}
            other => return Err(format!("n={n} t={t}: expected SetupAborted, got {other:?}")),
        }
        ensure(lossy.transcript().count(MessageKind::Abort) == n, || {
            format!("n={n}: abort not broadcast")
        })?;
    }
    Ok(format!(
        "keys cancel for n in {GRID_N:?}; {exact} exact rounds; below-threshold aborts"
    ))
}

fn criterion_6() -> Verdict {
    let mut rng = rng(6);
    let (mut elements, mut within_float) = (0u64, 0u64);
    for config in 0..20 {
        let lo = rng.gen_range(-100.0..100.0);
        let hi = lo + rng.gen_range(1e-3..200.0);
        let l = rng.gen_range(1..=52u32);
        let wb = rng.gen_range(1..=(62 - l).min(16));
        let cfg = QuantConfig::new(l, wb, 2, lo, hi).map_err(|e| e.to_string())?;
        let w = rng.gen_range(1..1u64 << wb);
        let mut theta: Vec<f64> = (0..100_000)
            .map(|_| rng.gen_range(lo - (hi - lo)..hi + (hi - lo)))
            .collect();
        theta[0] = lo;
        theta[1] = hi;
        theta[2] = f64::NAN;
        let q = quantize(&theta, &cfg).map_err(|e| e.to_string())?;
        let x = apply_weight(&q, w, &cfg).map_err(|e| e.to_string())?;
        let back = dequantize_aggregate(&x, w, &cfg).map_err(|e| e.to_string())?;
        let step = cfg.step();
        // rounding of the f64 evaluation itself, a few ulps of the range ends
        let float_slack = 8.0 * f64::EPSILON * lo.abs().max(hi.abs());
        for (t, b) in theta.iter().zip(&back) {
            let c = clip(*t, lo, hi).map_err(|e| e.to_string())?;
            let err = (b - c).abs();
            ensure(err <= step + float_slack, || {
                format!("config {config}: |{b} - {c}| = {err} > step {step}")
            })?;
            if err > step {
                // only the clamped top value sits a full step away
                ensure(c == hi, || {
                    format!("config {config}: {t} off by {err} > step {step}")
                })?;
                within_float += 1;
            }
            elements += 1;
        }
    }
    Ok(format!(
        "{elements} elements over 20 configs within one step ({within_float} clamped to the top exceed it by under 8 ulp of the range)"
    ))
}

fn accuracy_config(scheme: ExperimentScheme) -> ExperimentConfig {
    ExperimentConfig {
        scheme,
        n_tot: 4,
        n: 4,
        rounds: 20,
        e: 5,
        b: 16,
        eta: 0.05,
        input_bits: 22,
        weight_bits: 8,
        clip_range: [-3.0, 3.0],
        t: None,
        profile: SecurityProfile::Test,
        seed: 2024,
        d: 10,
        task: TaskSpec::default(),
        output: None,
        jl_mode: Default::default(),
    }
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let plain =
        run_experiment(&accuracy_config(ExperimentScheme::Plain)).map_err(|e| e.to_string())?;
    let plain_mse = plain.reports.last().ok_or("no rounds")?.metric;
    let mut notes = Vec::new();
    for scheme in [ExperimentScheme::Lom, ExperimentScheme::Jl] {
        let cfg = accuracy_config(scheme);
        let step = cfg.quant().map_err(|e| e.to_string())?.step();
        let run = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let mse = run.reports.last().ok_or("no rounds")?.metric;
        let gap = (mse - plain_mse).abs() / plain_mse;
        ensure(gap <= 0.02, || {
            format!("{scheme:?}: relative MSE gap {gap:.4} > 2%")
        })?;
        let worst = run
            .reports
            .iter()
            .map(|r| r.fedavg_deviation)
            .fold(0.0, f64::max);
        ensure(worst <= step, || {
            format!("{scheme:?}: aggregate deviates {worst:e} from FedAvg, bound {step:e}")
        })?;
        notes.push(format!("{scheme:?} gap {:.2e}, max dev {worst:.2e}", gap));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s (target < 30s)"))?;
    Ok(format!(
        "PLAIN MSE {plain_mse:.5}; {}; step {:.2e}; {secs:.1}s",
        notes.join("; "),
        6.0 / f64::from(1u32 << 22)
    ))
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let prod = SecurityProfile::Prod;
    let mut cells: Vec<BenchCell> = [100, 1_000, 10_000]
        .into_iter()
        .map(|d| BenchCell {
            scheme: BenchScheme::JlPacked,
            d,
            n: 3,
            profile: prod,
        })
        .collect();
    for n in [2, 3, 10, 50] {
        cells.push(BenchCell {
            scheme: BenchScheme::Lom,
            d: 10_000,
            n,
            profile: prod,
        });
    }
    let opts = BenchOptions {
        ops: vec![BenchOp::Protect],
        seed: 8,
        ..BenchOptions::default()
    };
    let report = run_benchmark(&cells, &opts).map_err(|e| e.to_string())?;

    let jl = report
        .median(BenchScheme::JlPacked, 10_000, 3, prod, BenchOp::Protect)
        .ok_or("missing JL cell")?;
    let lom = report
        .median(BenchScheme::Lom, 10_000, 3, prod, BenchOp::Protect)
        .ok_or("missing LOM cell")?;
    let ratio = jl / lom;
    ensure(ratio >= 10.0, || {
        format!("LOM only {ratio:.1}x faster than JL at d=1e4")
    })?;

    let fit = report
        .fit(BenchScheme::JlPacked, 3, prod, BenchOp::Protect)
        .ok_or("no JL fit")?;
    ensure((fit.slope - 1.0).abs() <= 0.15, || {
        format!("JL log-log slope {:.3} outside 1.0 +- 0.15", fit.slope)
    })?;
    ensure(fit.r_squared > 0.95, || {
        format!("JL fit R^2 {:.3} <= 0.95", fit.r_squared)
    })?;

    let by_n = [2, 10, 50].map(|n| {
        report
            .median(BenchScheme::Lom, 10_000, n, prod, BenchOp::Protect)
            .unwrap_or(f64::NAN)
    });
    ensure(by_n[0] < by_n[1] && by_n[1] < by_n[2], || {
        format!("LOM protect not increasing in n: {by_n:?}")
    })?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.1}s (target < 300s)"))?;
    Ok(format!(
        "JL/LOM {ratio:.0}x at d=1e4; JL slope {:.3} (R^2 {:.3}); LOM n=2,10,50: {:.2e}s {:.2e}s {:.2e}s; {secs:.1}s",
        fit.slope, fit.r_squared, by_n[0], by_n[1], by_n[2]
    ))
}

fn criterion_9() -> Verdict {
    let mut rng = rng(9);
    let pool = NodeId::range(30);
    let secrets = dealer_pairwise_secrets(&pool, &mut rng);
    let mut pairs = 0;
    for draw in 0..1000 {
        let n = rng.gen_range(1..=10);
        let mut cohort: Vec<NodeId> = rand::seq::index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        cohort.sort_unstable();
        let tau = rng.gen();
        let m = rng.gen_range(1..=63u32);
        let d = rng.gen_range(1..=64);
        let params = LomParams::new(m).map_err(|e| e.to_string())?;
        let modulus = 1u128 << m;
        let zeros = qv(&vec![0; d], m);
        let mut total = vec![0u128; d];
        for &u in &cohort {
            let mask = lom_protect(&params, &secrets[&u], u, &cohort, tau, &zeros)
                .map_err(|e| e.to_string())?;
            // the mask recomputed directly from the pair streams
            let mut expect = vec![0u128; d];
            for &v in cohort.iter().filter(|&&v| v != u) {
                let s = mask_stream(&secrets[&u][&v], tau, d, &params);
                for (e, k) in expect.iter_mut().zip(s) {
                    *e = if u < v {
                        (*e + k as u128) % modulus
                    } else {
                        (*e + modulus - k as u128) % modulus
                    };
                }
                ensure(mask_sign(u, v) == -mask_sign(v, u), || {
                    format!("sign({u},{v}) not antisymmetric")
                })?;
                pairs += 1;
            }
            ensure(
                mask.values
                    .iter()
                    .map(|&v| v as u128)
                    .eq(expect.iter().copied()),
                || format!("draw {draw}: mask of {u} differs from the pairwise streams"),
            )?;
            for (t, v) in total.iter_mut().zip(&mask.values) {
                *t = (*t + *v as u128) % modulus;
            }
        }
        ensure(total.iter().all(|&t| t == 0), || {
            format!("draw {draw}: masks sum to {total:?}")
        })?;
    }
    Ok(format!(
        "1000 draws cancel mod D; {pairs} ordered pairs antisymmetric"
    ))
}

fn encodings(x: &QuantizedVector, sum_bits: u32, modulus_bits: u64) -> Vec<Vec<u8>> {
    let width = sum_bits.div_ceil(8) as usize;
    let mut out = vec![
        x.values()
            .iter()
            .flat_map(|v| v.to_be_bytes())
            .collect::<Vec<u8>>(),
        x.values().iter().flat_map(|v| v.to_le_bytes()).collect(),
        x.values()
            .iter()
            .flat_map(|v| v.to_be_bytes()[8 - width..].to_vec())
            .collect(),
    ];
    if let Ok(plain) = pack(x, modulus_bits, sum_bits) {
        out.extend(
            plain
                .iter()
                .map(|p| p.to_bytes_be())
                .filter(|b| b.len() >= 8),
        );
    }
    out
}

fn hygiene(scheme: Scheme, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let nodes = NodeId::range(4);
    let mut transport = SimTransport::new(seed, roles(&nodes));
    let (keys, server, modulus_bits): (BTreeMap<NodeId, NodeKeys>, ServerKeys, u64) = match scheme {
        Scheme::Jl => {
            let params = JlParams::generate(512, &mut rng).map_err(|e| e.to_string())?;
            let field = jl_share_field(&params, 4).map_err(|e| e.to_string())?;
            let out = jl_setup_phase(&nodes, 3, &params, &field, &mut transport, &mut rng)
                .map_err(|e| e.to_string())?;
            let keys = out
                .node_keys
                .into_iter()
                .map(|(u, key)| {
                    (
                        u,
                        NodeKeys::Jl {
                            params: params.clone(),
                            key,
                        },
                    )
                })
                .collect();
            (
                keys,
                ServerKeys::Jl {
                    params,
                    key: out.server_key,
                },
                512,
            )
        }
        Scheme::Lom => {
            let group = ka_param(SecurityProfile::Test, &mut rng).map_err(|e| e.to_string())?;
            let keys = lom_setup_phase(&nodes, &group, &mut transport, &mut rng)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|(u, secrets)| (u, NodeKeys::Lom { secrets }))
                .collect();
            (keys, ServerKeys::Lom, 512)
        }
    };
    let quant = QuantConfig::new(22, 8, 4, -1.0, 1.0).map_err(|e| e.to_string())?;
    let mut needles = Vec::new();
    let mut global = vec![0.0; 12];
    for tau in 0..3 {
        let ctx = RoundContext::new(tau, nodes.clone(), scheme, quant, &nodes)
            .map_err(|e| e.to_string())?;
        let mut locals = BTreeMap::new();
        let outcome =
            run_online_round(&ctx, &mut transport, &keys, &server, &global, |u, model| {
                let theta: Vec<f64> = model
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m + ((u.get() as usize * 13 + i) as f64).sin() * 0.5)
                    .collect();
                let w = 10 + u.get() * 17;
                locals.insert(u, (theta.clone(), w));
                Ok((theta, w))
            })
            .map_err(|e| e.to_string())?;
        for (theta, w) in locals.values() {
            let q = quantize(theta, &quant).map_err(|e| e.to_string())?;
            let x = apply_weight(&q, *w, &quant).map_err(|e| e.to_string())?;
            needles.extend(encodings(&q, quant.input_bits(), modulus_bits));
            needles.extend(encodings(&x, quant.sum_bits(), modulus_bits));
        }
        global = outcome.model;
    }
    let transcript: &Transcript = transport.transcript();
    ensure(needles.iter().all(|n| n.len() >= 8), || {
        "needle too short to be meaningful".into()
    })?;
    if let Some(i) = needles.iter().position(|n| transcript.contains_bytes(n)) {
        return Err(format!(
            "{scheme:?}: plaintext encoding #{i} found in transcript"
        ));
    }
    // positive control: the scanner does see bytes that were sent
    let sent = &transcript.entries().last().ok_or("empty transcript")?.frame;
    ensure(transcript.contains_bytes(&sent[sent.len() - 16..]), || {
        "scanner control failed".into()
    })?;

    for tau in 0..3 {
        let rounds = transcript.communication_rounds(|e| {
            e.round == Round::Online(tau) && !e.sender.is_server() && e.recipient.is_server()
        });
        ensure(rounds == 1, || {
            format!("{scheme:?} round {tau}: {rounds} node-to-server rounds")
        })?;
        let updates = transcript
            .entries()
            .iter()
            .filter(|e| e.round == Round::Online(tau) && e.kind == MessageKind::ProtectedUpdate)
            .count();
        ensure(updates == 4, || {
            format!("{scheme:?} round {tau}: {updates} updates")
        })?;
    }
    let setup = |f: &dyn Fn(&Party, &Party) -> bool| {
        transcript.communication_rounds(|e| e.round == Round::Setup && f(&e.sender, &e.recipient))
    };
    let (n2n, n2s) = (
        setup(&|s, r| !s.is_server() && !r.is_server()),
        setup(&|s, r| !s.is_server() && r.is_server()),
    );
    let expected = if scheme == Scheme::Jl { (1, 1) } else { (1, 0) };
    ensure((n2n, n2s) == expected, || {
        format!("{scheme:?} setup rounds {:?}", (n2n, n2s))
    })?;
    Ok(format!("{scheme:?}: {} needles absent", needles.len()))
}

fn criterion_10() -> Verdict {
    let jl = hygiene(Scheme::Jl, 10)?;
    let lom = hygiene(Scheme::Lom, 11)?;
    Ok(format!(
        "{jl}; {lom}; one node-to-server round per online phase"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "JL end-to-end exactness", criterion_1),
        (2, "LOM end-to-end exactness", criterion_2),
        (3, "packed/naive JL equivalence", criterion_3),
        (4, "Shamir sweep", criterion_4),
        (5, "distributed JL setup", criterion_5),
        (6, "quantization bound", criterion_6),
        (7, "accuracy gap", criterion_7),
        (8, "benchmark shape", criterion_8),
        (9, "mask cancellation", criterion_9),
        (10, "transcript hygiene", criterion_10),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.strip_prefix("criterion_").and_then(|n| n.parse().ok()))
        .collect();
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            ))
        });
        let took = Duration::as_secs_f64(&start.elapsed());
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let _ = writeln!(
            out,
            "criterion {id:>2} {tag} [{took:7.1}s] {name}: {detail}"
        );
        let _ = out.flush();
    }
    if failed > 0 {
        let _ = writeln!(out, "{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
