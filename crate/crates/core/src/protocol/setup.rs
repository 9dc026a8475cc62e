use std::collections::BTreeMap;

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ids::NodeId;
use crate::joye_libert::{JlParams, JlServerKey, JlUserKey};
use crate::keyagreement::{ka_agree, ka_gen, KeyPair, PairwiseSecret};
use crate::modmath::{next_prime, DhGroup};
use crate::shamir::{ss_recon, ss_share, FieldSpec, Share};

use super::{Party, Payload, ProtocolError, ProtocolMessage, Round, Transport};

/// Field for sharing JL keys: the smallest prime above `n_tot * N^2`, so a
/// sum of `n_tot` keys never wraps.
pub fn jl_share_field(params: &JlParams, n_tot: usize) -> Result<FieldSpec, ProtocolError> {
    let bound = params.n_squared() * BigUint::from(n_tot.max(1));
    Ok(FieldSpec::new(next_prime(&bound))?)
}

#[derive(Debug, Clone)]
pub struct JlSetupOutput {
    pub node_keys: BTreeMap<NodeId, JlUserKey>,
    pub server_key: JlServerKey,
}

struct JlNode {
    id: NodeId,
    key: JlUserKey,
    received: BTreeMap<NodeId, BigUint>,
}

impl JlNode {
    fn on_message(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError> {
        match (msg.sender, msg.decode_payload()?) {
            (Party::Node(from), Payload::ShamirShare(value)) => {
                self.received.insert(from, value);
                Ok(())
            }
            (_, Payload::Abort(reason)) => Err(ProtocolError::Aborted(reason)),
            _ => Err(ProtocolError::UnexpectedMessage {
                kind: msg.kind,
                sender: msg.sender,
            }),
        }
    }

    /// `[sk_0]_u`, the sum of every share this node holds.
    fn key_share(&self, field: &FieldSpec) -> BigUint {
        self.received
            .values()
            .fold(BigUint::zero(), |acc, v| (acc + v) % field.modulus())
    }
}

/// Distributed JL key setup.
///
/// Every node samples `sk_u` in `[0, N^2)` and sends a `t`-of-`n` share to
/// each peer. After that round settles each node sends the sum of its shares
/// to the server, which interpolates `sum sk_u` from any `t` of them and
/// keeps `k0 = -sum sk_u`. Fewer than `t` server shares abort the setup.
pub fn jl_setup_phase<T, R>(
    nodes: &[NodeId],
    t: usize,
    params: &JlParams,
    field: &FieldSpec,
    transport: &mut T,
    rng: &mut R,
) -> Result<JlSetupOutput, ProtocolError>
where
    T: Transport + ?Sized,
    R: Rng + ?Sized,
{
    let members: Vec<u64> = nodes.iter().map(|u| u.get()).collect();
    let mut roles: BTreeMap<NodeId, JlNode> = BTreeMap::new();

    transport.begin_phase("jl-setup/shares");
    for &u in nodes {
        let mut node_rng = ChaCha20Rng::from_rng(&mut *rng).expect("chacha seeding is infallible");
        let key = JlUserKey {
            sk: node_rng.gen_biguint_below(params.n_squared()),
        };
        let shares = ss_share(&key.sk, t, &members, field, &mut node_rng)?;
        let mut role = JlNode {
            id: u,
            key,
            received: BTreeMap::new(),
        };
        for Share { index, value } in shares {
            let v = NodeId::new(index).expect("member ids are nonzero");
            if v == u {
                role.received.insert(u, value);
            } else {
                let msg = ProtocolMessage::new(
                    Party::Node(u),
                    Party::Node(v),
                    Round::Setup,
                    &Payload::ShamirShare(value),
                );
                transport.send(msg)?;
            }
        }
        roles.insert(u, role);
    }
    while let Some(msg) = transport.deliver() {
        match msg.recipient {
            Party::Node(v) => match roles.get_mut(&v) {
                Some(role) => role.on_message(&msg)?,
                None => return Err(ProtocolError::UndeliverableMessage(msg.recipient)),
            },
            Party::Server => {
                return Err(ProtocolError::UnexpectedMessage {
                    kind: msg.kind,
                    sender: msg.sender,
                })
            }
        }
    }

    transport.begin_phase("jl-setup/server-key");
    for role in roles.values() {
        let msg = ProtocolMessage::new(
            Party::Node(role.id),
            Party::Server,
            Round::Setup,
            &Payload::ServerKeyShare(role.key_share(field)),
        );
        transport.send(msg)?;
    }
    let mut collected: BTreeMap<u64, Share> = BTreeMap::new();
    while let Some(msg) = transport.deliver() {
        match (msg.recipient, msg.sender, msg.decode_payload()?) {
            (Party::Server, Party::Node(u), Payload::ServerKeyShare(value)) => {
                collected.insert(
                    u.get(),
                    Share {
                        index: u.get(),
                        value,
                    },
                );
            }
            _ => {
                return Err(ProtocolError::UnexpectedMessage {
                    kind: msg.kind,
                    sender: msg.sender,
                })
            }
        }
    }

    if collected.len() < t {
        let err = ProtocolError::SetupAborted {
            collected: collected.len(),
            threshold: t,
        };
        broadcast_abort(nodes, &err, transport)?;
        return Err(err);
    }
    let shares: Vec<Share> = collected.into_values().collect();
    let sum = ss_recon(&shares, t, field)?;
    Ok(JlSetupOutput {
        node_keys: roles.into_iter().map(|(u, r)| (u, r.key)).collect(),
        server_key: JlServerKey::from_key_sum(&sum),
    })
}

fn broadcast_abort<T: Transport + ?Sized>(
    nodes: &[NodeId],
    err: &ProtocolError,
    transport: &mut T,
) -> Result<(), ProtocolError> {
    transport.begin_phase("abort");
    let payload = Payload::Abort(err.to_string());
    for &u in nodes {
        transport.send(ProtocolMessage::new(
            Party::Server,
            Party::Node(u),
            Round::Setup,
            &payload,
        ))?;
    }
    while transport.deliver().is_some() {}
    Ok(())
}

struct LomNode {
    keypair: KeyPair,
    secrets: BTreeMap<NodeId, PairwiseSecret>,
}

/// Pairwise key agreement: one broadcast of public keys, after which every
/// node derives a symmetric secret with every other node.
pub fn lom_setup_phase<T, R>(
    nodes: &[NodeId],
    group: &DhGroup,
    transport: &mut T,
    rng: &mut R,
) -> Result<BTreeMap<NodeId, BTreeMap<NodeId, PairwiseSecret>>, ProtocolError>
where
    T: Transport + ?Sized,
    R: Rng + ?Sized,
{
    transport.begin_phase("lom-setup");
    let mut roles: BTreeMap<NodeId, LomNode> = BTreeMap::new();
    for &u in nodes {
        let keypair = ka_gen(group, rng);
        let payload = Payload::PublicKey(keypair.public.clone());
        for &v in nodes.iter().filter(|&&v| v != u) {
            transport.send(ProtocolMessage::new(
                Party::Node(u),
                Party::Node(v),
                Round::Setup,
                &payload,
            ))?;
        }
        roles.insert(
            u,
            LomNode {
                keypair,
                secrets: BTreeMap::new(),
            },
        );
    }
    while let Some(msg) = transport.deliver() {
        let role = match msg.recipient {
            Party::Node(v) => roles
                .get_mut(&v)
                .ok_or(ProtocolError::UndeliverableMessage(msg.recipient))?,
            Party::Server => {
                return Err(ProtocolError::UnexpectedMessage {
                    kind: msg.kind,
                    sender: msg.sender,
                })
            }
        };
        match (msg.sender, msg.decode_payload()?) {
            (Party::Node(from), Payload::PublicKey(public)) => {
                let secret = ka_agree(group, &role.keypair.secret, &public)?;
                role.secrets.insert(from, secret);
            }
            _ => {
                return Err(ProtocolError::UnexpectedMessage {
                    kind: msg.kind,
                    sender: msg.sender,
                })
            }
        }
    }

    for (&u, role) in &roles {
        if let Some(&from) = nodes
            .iter()
            .find(|&&v| v != u && !role.secrets.contains_key(&v))
        {
            return Err(ProtocolError::MissingPublicKey { node: u, from });
        }
    }
    Ok(roles.into_iter().map(|(u, r)| (u, r.secrets)).collect())
}
