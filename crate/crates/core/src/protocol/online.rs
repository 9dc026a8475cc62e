use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::ids::NodeId;
use crate::quantizer::{dequantize_aggregate, QuantizedVector};

use super::{
    node_online_step, server_aggregate, NodeKeys, Party, Payload, ProtocolError, ProtocolMessage,
    Round, RoundContext, ServerKeys, Transport,
};

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    /// Next global model.
    pub model: Vec<f64>,
    /// Exact integer aggregate before dequantization.
    pub aggregate: QuantizedVector,
    pub weight_sum: u64,
    /// Wall time each node spent in quantize, weight and protect.
    pub protect_times: BTreeMap<NodeId, Duration>,
    pub aggregate_time: Duration,
}

/// One online round.
///
/// The server sends the global model to every cohort member. On receipt a
/// node runs `local(node, model)` to obtain its local model and weight,
/// protects it and sends the update back. Once every update has arrived the
/// server aggregates; any error aborts the round without a result.
pub fn run_online_round<T, F>(
    ctx: &RoundContext,
    transport: &mut T,
    node_keys: &BTreeMap<NodeId, NodeKeys>,
    server_keys: &ServerKeys,
    global: &[f64],
    mut local: F,
) -> Result<RoundOutcome, ProtocolError>
where
    T: Transport + ?Sized,
    F: FnMut(NodeId, &[f64]) -> Result<(Vec<f64>, u64), ProtocolError>,
{
    let round = Round::Online(ctx.tau());
    transport.begin_phase("online");
    let broadcast = Payload::GlobalModel(global.to_vec());
    for &u in ctx.cohort() {
        transport.send(ProtocolMessage::new(
            Party::Server,
            Party::Node(u),
            round,
            &broadcast,
        ))?;
    }

    let mut updates = BTreeMap::new();
    let mut protect_times = BTreeMap::new();
    while let Some(msg) = transport.deliver() {
        if msg.round != round {
            return Err(ProtocolError::UnexpectedMessage {
                kind: msg.kind,
                sender: msg.sender,
            });
        }
        match (msg.recipient, msg.sender, msg.decode_payload()?) {
            (Party::Node(u), Party::Server, Payload::GlobalModel(model)) => {
                let keys = node_keys
                    .get(&u)
                    .ok_or(ProtocolError::UndeliverableMessage(msg.recipient))?;
                let (theta, weight) = local(u, &model)?;
                let start = Instant::now();
                let update = node_online_step(ctx, u, &theta, weight, keys)?;
                protect_times.insert(u, start.elapsed());
                transport.send(ProtocolMessage::new(
                    Party::Node(u),
                    Party::Server,
                    round,
                    &Payload::ProtectedUpdate(update),
                ))?;
            }
            (Party::Server, Party::Node(u), Payload::ProtectedUpdate(update)) => {
                if updates.insert(u, update).is_some() {
                    return Err(ProtocolError::UnexpectedMessage {
                        kind: msg.kind,
                        sender: msg.sender,
                    });
                }
            }
            _ => {
                return Err(ProtocolError::UnexpectedMessage {
                    kind: msg.kind,
                    sender: msg.sender,
                })
            }
        }
    }

    let start = Instant::now();
    let (aggregate, weight_sum) = server_aggregate(ctx, &updates, server_keys)?;
    let model = dequantize_aggregate(&aggregate, weight_sum, ctx.quant())?;
    Ok(RoundOutcome {
        model,
        aggregate,
        weight_sum,
        protect_times,
        aggregate_time: start.elapsed(),
    })
}
