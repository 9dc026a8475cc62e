//! Quick invariant sweep behind `secagg selftest`.

use num_bigint::{BigUint, RandBigInt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::ids::NodeId;
use crate::joye_libert::{
    jl_aggregate, jl_aggregate_packed, jl_keys_for, jl_protect, jl_protect_packed,
    key_sum_is_cancelled, JlParams,
};
use crate::lom::{dealer_pairwise_secrets, lom_aggregate, lom_protect, mask_sign, LomParams};
use crate::modmath::next_prime;
use crate::protocol::{jl_setup_phase, jl_share_field, MessageKind, Party, ProtocolError};
use crate::quantizer::{clip, dequantize_aggregate, quantize, QuantConfig, QuantizedVector};
use crate::shamir::{ss_add, ss_recon, ss_share, FieldSpec};

use super::config::{ExperimentConfig, ExperimentScheme, TaskSpec};
use super::experiment::run_experiment;
use super::transport::{DropRule, SimTransport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_vector<R: Rng>(rng: &mut R, d: usize, bits: u32) -> QuantizedVector {
    let values = (0..d).map(|_| rng.gen_range(0..1u64 << bits)).collect();
    QuantizedVector::new(values, bits).expect("drawn below 2^bits")
}

fn plain_sum(xs: &[QuantizedVector]) -> Vec<u64> {
    let mut sum = vec![0u64; xs[0].len()];
    for x in xs {
        for (a, v) in sum.iter_mut().zip(x.values()) {
            *a += v;
        }
    }
    sum
}

type Outcome = Result<String, String>;
type CheckFn = Box<dyn FnOnce(&mut ChaCha20Rng) -> Outcome>;

fn jl_exact(rng: &mut ChaCha20Rng) -> Outcome {
    let params = JlParams::generate(512, rng).map_err(|e| e.to_string())?;
    for (n, d) in [(2, 1), (3, 16), (5, 40)] {
        let (users, server) = jl_keys_for(&params, n, rng).map_err(|e| e.to_string())?;
        let bits = 20;
        let xs: Vec<_> = (0..n).map(|_| random_vector(rng, d, bits)).collect();
        let m = bits + 3;
        let tau = rng.gen();
        let cts: Vec<_> = users
            .iter()
            .zip(&xs)
            .map(|(k, x)| jl_protect_packed(&params, k, tau, x, m))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let agg = jl_aggregate_packed(&params, &server, tau, &cts, n).map_err(|e| e.to_string())?;
        if agg.values() != plain_sum(&xs) {
            return Err(format!("wrong sum for n={n} d={d}"));
        }
    }
    Ok("3 packed instances exact".into())
}

fn jl_modes_agree(rng: &mut ChaCha20Rng) -> Outcome {
    let params = JlParams::generate(512, rng).map_err(|e| e.to_string())?;
    let (users, server) = jl_keys_for(&params, 3, rng).map_err(|e| e.to_string())?;
    let xs: Vec<_> = (0..3).map(|_| random_vector(rng, 30, 22)).collect();
    let e = |err: crate::joye_libert::JlError| err.to_string();
    let naive: Vec<_> = users
        .iter()
        .zip(&xs)
        .map(|(k, x)| jl_protect(&params, k, 9, x, 24))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let packed: Vec<_> = users
        .iter()
        .zip(&xs)
        .map(|(k, x)| jl_protect_packed(&params, k, 9, x, 24))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let a = jl_aggregate(&params, &server, 9, &naive, 3).map_err(e)?;
    let b = jl_aggregate_packed(&params, &server, 9, &packed, 3).map_err(e)?;
    if a != b {
        return Err("naive and packed aggregates differ".into());
    }
    Ok("d=30, M=24".into())
}

fn lom_exact(rng: &mut ChaCha20Rng) -> Outcome {
    let all = NodeId::range(40);
    let secrets = dealer_pairwise_secrets(&all, rng);
    let params = LomParams::new(32).map_err(|e| e.to_string())?;
    for trial in 0..20 {
        let n = rng.gen_range(2..=10);
        let mut cohort: Vec<NodeId> = all.choose_multiple(rng, n).copied().collect();
        cohort.sort_unstable();
        let xs: Vec<_> = (0..n).map(|_| random_vector(rng, 17, 28)).collect();
        let masked: Vec<_> = cohort
            .iter()
            .zip(&xs)
            .map(|(&u, x)| lom_protect(&params, &secrets[&u], u, &cohort, trial, x))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let agg = lom_aggregate(&params, &masked, n).map_err(|e| e.to_string())?;
        if agg.values() != plain_sum(&xs) {
            return Err(format!("wrong sum in trial {trial}"));
        }
        let zeros = QuantizedVector::new(vec![0; 17], 28).expect("zero vector");
        let masks: Vec<_> = cohort
            .iter()
            .map(|&u| lom_protect(&params, &secrets[&u], u, &cohort, trial, &zeros))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        if lom_aggregate(&params, &masks, n)
            .map_err(|e| e.to_string())?
            .values()
            != [0; 17]
        {
            return Err(format!("masks do not cancel in trial {trial}"));
        }
        for &u in &cohort {
            for &v in cohort.iter().filter(|&&v| v != u) {
                if mask_sign(u, v) != -mask_sign(v, u) {
                    return Err(format!("sign not antisymmetric for {u}, {v}"));
                }
            }
        }
    }
    Ok("20 selected cohorts out of 40".into())
}

fn shamir_sweep(rng: &mut ChaCha20Rng) -> Outcome {
    let spec = FieldSpec::new(next_prime(&BigUint::from(1u64 << 61))).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for n in 1..=5usize {
        let members: Vec<u64> = (1..=n as u64).collect();
        for t in 1..=n {
            let a = rng.gen_biguint_below(spec.modulus());
            let b = rng.gen_biguint_below(spec.modulus());
            let sa = ss_share(&a, t, &members, &spec, rng).map_err(|e| e.to_string())?;
            let sb = ss_share(&b, t, &members, &spec, rng).map_err(|e| e.to_string())?;
            let sum = ss_add(&sa, &sb, &spec).map_err(|e| e.to_string())?;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let subset: Vec<_> = idx[..t].iter().map(|&i| sa[i].clone()).collect();
            if ss_recon(&subset, t, &spec).map_err(|e| e.to_string())? != a {
                return Err(format!("t={t} n={n} failed to reconstruct"));
            }
            if ss_recon(&sum, t, &spec).map_err(|e| e.to_string())? != (&a + &b) % spec.modulus() {
                return Err(format!("t={t} n={n} share sum failed"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (t, n) pairs"))
}

fn distributed_setup(rng: &mut ChaCha20Rng) -> Outcome {
    let params = JlParams::generate(128, rng).map_err(|e| e.to_string())?;
    let nodes = NodeId::range(4);
    let field = jl_share_field(&params, nodes.len()).map_err(|e| e.to_string())?;
    let roles = || std::iter::once(Party::Server).chain(nodes.iter().map(|&u| Party::Node(u)));
    let mut transport = SimTransport::new(1, roles());
    let out = jl_setup_phase(&nodes, 3, &params, &field, &mut transport, rng)
        .map_err(|e| e.to_string())?;
    let users: Vec<_> = out.node_keys.values().cloned().collect();
    if !key_sum_is_cancelled(&users, &out.server_key) {
        return Err("k0 + sum sk_u != 0".into());
    }
    let mut faulty = SimTransport::new(2, roles());
    for &u in &nodes[..2] {
        faulty.drop_messages(DropRule {
            sender: Party::Node(u),
            kind: Some(MessageKind::ServerKeyShare),
        });
    }
    match jl_setup_phase(&nodes, 3, &params, &field, &mut faulty, rng) {
        Err(ProtocolError::SetupAborted {
            collected: 2,
            threshold: 3,
        }) => Ok("keys cancel; 2 of 3 shares aborts".into()),
        other => Err(format!("expected abort, got {other:?}")),
    }
}

fn quantization_bound(rng: &mut ChaCha20Rng) -> Outcome {
    for _ in 0..10 {
        let lo = rng.gen_range(-100.0..100.0);
        let hi = lo + rng.gen_range(1e-3..100.0);
        let l = rng.gen_range(1..=30);
        let cfg = QuantConfig::new(l, 4, 2, lo, hi).map_err(|e| e.to_string())?;
        let theta: Vec<f64> = (0..1000)
            .map(|_| rng.gen_range(lo - 10.0..hi + 10.0))
            .collect();
        let q = quantize(&theta, &cfg).map_err(|e| e.to_string())?;
        let back = dequantize_aggregate(&q, 1, &cfg).map_err(|e| e.to_string())?;
        let slack = 8.0 * f64::EPSILON * lo.abs().max(hi.abs());
        for (t, b) in theta.iter().zip(&back) {
            let c = clip(*t, lo, hi).map_err(|e| e.to_string())?;
            if (b - c).abs() > cfg.step() + slack {
                return Err(format!("|{b} - {c}| exceeds step {}", cfg.step()));
            }
        }
    }
    Ok("10 configs x 1000 elements".into())
}

fn small_config(scheme: ExperimentScheme, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        scheme,
        n_tot: 4,
        n: if scheme == ExperimentScheme::Jl { 4 } else { 3 },
        rounds: 3,
        e: 3,
        b: 8,
        eta: 0.05,
        input_bits: 16,
        weight_bits: 8,
        clip_range: [-3.0, 3.0],
        t: None,
        profile: crate::modmath::SecurityProfile::Test,
        seed,
        d: 6,
        task: TaskSpec::default(),
        output: None,
        jl_mode: Default::default(),
    }
}

fn transcripts() -> Outcome {
    let mut notes = Vec::new();
    for scheme in [ExperimentScheme::Jl, ExperimentScheme::Lom] {
        let cfg = small_config(scheme, 5);
        let a = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let b = run_experiment(&cfg).map_err(|e| e.to_string())?;
        if a.transcript.digest() != b.transcript.digest() || a.reports.len() != b.reports.len() {
            return Err(format!("{scheme:?} replay differs"));
        }
        if a.reports
            .iter()
            .zip(&b.reports)
            .any(|(x, y)| x.checksum != y.checksum)
        {
            return Err(format!("{scheme:?} models differ on replay"));
        }
        let updates = a.transcript.count(MessageKind::ProtectedUpdate);
        if updates as u64 != cfg.rounds * cfg.n as u64 {
            return Err(format!("{scheme:?}: {updates} protected updates"));
        }
        let upstream = a.transcript.communication_rounds(|e| {
            e.phase == "online" && e.recipient == Party::Server && !e.sender.is_server()
        });
        if upstream != 1 {
            return Err(format!(
                "{scheme:?}: {upstream} node-to-server rounds online"
            ));
        }
        let bad = a
            .transcript
            .entries()
            .iter()
            .any(|e| matches!(e.kind, MessageKind::GlobalModel) && !e.sender.is_server());
        if bad {
            return Err(format!("{scheme:?}: a node sent model data in the clear"));
        }
        if a.reports
            .iter()
            .any(|r| r.total_s < r.train_s + r.protect_s)
        {
            return Err(format!("{scheme:?}: inconsistent timings"));
        }
        notes.push(format!("{scheme:?} ok"));
    }
    Ok(notes.join(", "))
}

/// Runs every check; a failing check does not stop the others.
pub fn selftest(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let checks: Vec<(&'static str, CheckFn)> = vec![
        ("jl-exact-sum", Box::new(jl_exact)),
        ("jl-packed-equals-naive", Box::new(jl_modes_agree)),
        ("lom-exact-sum-and-cancellation", Box::new(lom_exact)),
        ("shamir-reconstruction", Box::new(shamir_sweep)),
        ("jl-distributed-setup", Box::new(distributed_setup)),
        ("quantization-bound", Box::new(quantization_bound)),
        ("transcripts", Box::new(|_| transcripts())),
    ];
    checks
        .into_iter()
        .map(|(name, check)| {
            let (passed, detail) = match check(&mut rng) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            Check {
                name,
                passed,
                detail,
            }
        })
        .collect()
}
