//! Bidirectional TCP netflow assembly with partial-flow splitting at time
//! window boundaries.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use crate::model::{HostId, Netflow, PacketEvent, Protocol};

/// 5-tuple key of an active flow, oriented initiator → responder. The
/// initiator is whichever endpoint sent the first observed packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct FlowKey {
    initiator: (Ipv4Addr, u16),
    responder: (Ipv4Addr, u16),
}

impl FlowKey {
    fn reversed(&self) -> FlowKey {
        FlowKey { initiator: self.responder, responder: self.initiator }
    }
}

#[derive(Debug)]
struct FlowAccum {
    /// Identifier of the piece currently accumulating; assigned on its first
    /// packet.
    flow_id: u64,
    start_ts: u64,
    last_ts: u64,
    sent_pkts: u64,
    recv_pkts: u64,
    sent_bytes: u64,
    recv_bytes: u64,
    sent_payload: Vec<u8>,
    recv_payload: Vec<u8>,
    terminated: bool,
    /// True when this accumulation continues a flow already emitted for an
    /// earlier window.
    continuation: bool,
}

impl FlowAccum {
    fn has_activity(&self) -> bool {
        self.sent_pkts + self.recv_pkts > 0
    }
}

/// Accumulates packets into per-5-tuple flows. `observe` must be fed events
/// in non-decreasing timestamp order; `close_window` must be called once per
/// window, in increasing window order, after all of that window's events.
#[derive(Debug)]
pub struct FlowTable {
    active: HashMap<FlowKey, FlowAccum>,
    epoch: u64,
    tw_size_us: u64,
    idle_timeout_us: u64,
    payload_cap: usize,
    next_flow_id: u64,
}

impl FlowTable {
    pub fn new(epoch: u64, tw_size_us: u64, idle_timeout_us: u64, payload_cap: usize) -> Self {
        FlowTable {
            active: HashMap::new(),
            epoch,
            tw_size_us,
            idle_timeout_us,
            payload_cap,
            next_flow_id: 0,
        }
    }

    pub fn active_flows(&self) -> usize {
        self.active.len()
    }

    /// Folds one TCP packet into its flow, creating the flow (with this
    /// packet's sender as initiator) when no entry exists for the 5-tuple in
    /// either orientation.
    pub fn observe(&mut self, event: &PacketEvent) {
        debug_assert_eq!(event.protocol, Protocol::Tcp);
        let fwd = FlowKey {
            initiator: (event.src_ip, event.src_port),
            responder: (event.dst_ip, event.dst_port),
        };
        let (key, from_initiator) = if self.active.contains_key(&fwd) {
            (fwd, true)
        } else if self.active.contains_key(&fwd.reversed()) {
            (fwd.reversed(), false)
        } else {
            self.active.insert(
                fwd,
                FlowAccum {
                    flow_id: 0,
                    start_ts: 0,
                    last_ts: 0,
                    sent_pkts: 0,
                    recv_pkts: 0,
                    sent_bytes: 0,
                    recv_bytes: 0,
                    sent_payload: Vec::new(),
                    recv_payload: Vec::new(),
                    terminated: false,
                    continuation: false,
                },
            );
            (fwd, true)
        };
        let cap = self.payload_cap;
        let accum = self.active.get_mut(&key).expect("entry just ensured");
        if !accum.has_activity() {
            accum.flow_id = self.next_flow_id;
            self.next_flow_id += 1;
            accum.start_ts = event.ts;
        }
        accum.last_ts = event.ts;
        let (pkts, bytes, payload) = if from_initiator {
            (&mut accum.sent_pkts, &mut accum.sent_bytes, &mut accum.sent_payload)
        } else {
            (&mut accum.recv_pkts, &mut accum.recv_bytes, &mut accum.recv_payload)
        };
        *pkts += 1;
        *bytes += event.payload.len() as u64;
        let room = cap.saturating_sub(payload.len());
        payload.extend_from_slice(&event.payload[..event.payload.len().min(room)]);
        if event.tcp_flags.is_some_and(|f| f.terminates()) {
            accum.terminated = true;
        }
    }

    /// Emits one netflow per flow with activity in the closing window.
    /// Unterminated flows that are still within the idle timeout carry over
    /// as fresh accumulators whose counters restart at zero; both the
    /// emitted piece and its continuation are marked partial.
    pub fn close_window(&mut self, window: u64) -> Vec<Netflow> {
        let window_end = self.epoch + (window + 1) * self.tw_size_us;
        let mut emitted = Vec::new();
        self.active.retain(|key, accum| {
            let idle_us = window_end.saturating_sub(accum.last_ts);
            if !accum.has_activity() {
                // Carried accumulator with nothing this window: keep it only
                // while the flow is still live.
                return !accum.terminated && idle_us < self.idle_timeout_us;
            }
            let continues = !accum.terminated && idle_us < self.idle_timeout_us;
            emitted.push(Netflow {
                flow_id: accum.flow_id,
                window,
                start_ts: accum.start_ts,
                end_ts: accum.last_ts,
                src: HostId(key.initiator.0),
                src_port: key.initiator.1,
                dst_ip: key.responder.0,
                dst_port: key.responder.1,
                sent_pkts: accum.sent_pkts,
                recv_pkts: accum.recv_pkts,
                sent_bytes: accum.sent_bytes,
                recv_bytes: accum.recv_bytes,
                sent_payload: std::mem::take(&mut accum.sent_payload),
                recv_payload: std::mem::take(&mut accum.recv_payload),
                partial: accum.continuation || continues,
            });
            if continues {
                accum.sent_pkts = 0;
                accum.recv_pkts = 0;
                accum.sent_bytes = 0;
                accum.recv_bytes = 0;
                accum.start_ts = 0;
                accum.continuation = true;
                true
            } else {
                false
            }
        });
        emitted.sort_unstable_by_key(|f| f.flow_id);
        emitted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TcpFlags, MICROS_PER_SEC};
    use proptest::prelude::*;
    use std::collections::HashMap;

    const TW: u64 = 1200 * MICROS_PER_SEC;
    const IDLE: u64 = 300 * MICROS_PER_SEC;

    fn pkt(ts: u64, src: &str, sp: u16, dst: &str, dp: u16, len: usize, flags: &str) -> PacketEvent {
        PacketEvent {
            ts,
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            src_port: sp,
            dst_port: dp,
            protocol: Protocol::Tcp,
            payload: vec![0xab; len],
            tcp_flags: Some(flags.parse::<TcpFlags>().unwrap()),
            dns: None,
        }
    }

    fn table() -> FlowTable {
        FlowTable::new(0, TW, IDLE, 2048)
    }

    #[test]
    fn syn_plus_data_tallies_sent_side() {
        let mut t = table();
        t.observe(&pkt(0, "10.0.0.1", 1024, "1.2.3.4", 80, 0, "S"));
        for i in 0..3 {
            t.observe(&pkt(1000 * (i + 1), "10.0.0.1", 1024, "1.2.3.4", 80, 100, "A"));
        }
        let flows = t.close_window(0);
        assert_eq!(flows.len(), 1);
        let f = &flows[0];
        assert_eq!((f.sent_pkts, f.sent_bytes, f.recv_pkts, f.recv_bytes), (4, 300, 0, 0));
        assert_eq!(f.src, HostId("10.0.0.1".parse().unwrap()));
        assert_eq!(f.sent_payload.len(), 300);
    }

    #[test]
    fn single_empty_packet_opens_a_flow() {
        let mut t = table();
        t.observe(&pkt(5, "10.0.0.1", 1024, "1.2.3.4", 80, 0, "S"));
        let flows = t.close_window(0);
        assert_eq!(flows.len(), 1);
        assert_eq!((flows[0].sent_pkts, flows[0].sent_bytes), (1, 0));
    }

    #[test]
    fn interleaved_flows_on_distinct_ports_stay_separate() {
        let mut t = table();
        t.observe(&pkt(0, "10.0.0.1", 1024, "1.2.3.4", 80, 10, "S"));
        t.observe(&pkt(1, "10.0.0.1", 1025, "1.2.3.4", 80, 20, "S"));
        t.observe(&pkt(2, "10.0.0.1", 1024, "1.2.3.4", 80, 10, "A"));
        t.observe(&pkt(3, "10.0.0.1", 1025, "1.2.3.4", 80, 20, "A"));
        let mut flows = t.close_window(0);
        flows.sort_by_key(|f| f.src_port);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].sent_bytes, 20);
        assert_eq!(flows[1].sent_bytes, 40);
    }

    #[test]
    fn responder_packets_count_as_received() {
        let mut t = table();
        t.observe(&pkt(0, "10.0.0.1", 1024, "1.2.3.4", 80, 50, "S"));
        t.observe(&pkt(1, "1.2.3.4", 80, "10.0.0.1", 1024, 500, "A"));
        let flows = t.close_window(0);
        assert_eq!((flows[0].sent_bytes, flows[0].recv_bytes), (50, 500));
        // Initiator is still the first sender.
        assert_eq!(flows[0].src.addr().to_string(), "10.0.0.1");
    }

    #[test]
    fn mid_stream_first_packet_sets_initiator() {
        let mut t = table();
        // No SYN observed; the server-side endpoint speaks first.
        t.observe(&pkt(0, "1.2.3.4", 80, "10.0.0.1", 1024, 99, "A"));
        let flows = t.close_window(0);
        assert_eq!(flows[0].src.addr().to_string(), "1.2.3.4");
        assert_eq!(flows[0].sent_bytes, 99);
    }

    #[test]
    fn window_split_emits_two_partial_pieces_and_preserves_totals() {
        let mut t = table();
        // Ten packets in the final seconds of window 0, so the flow is
        // still live at the boundary.
        for i in 0..10u64 {
            let ts = TW - (20 - i) * MICROS_PER_SEC;
            t.observe(&pkt(ts, "10.0.0.1", 1024, "1.2.3.4", 80, 100, "A"));
        }
        let first = t.close_window(0);
        assert_eq!(first.len(), 1);
        assert!(first[0].partial);
        assert_eq!(first[0].sent_pkts, 10);

        // Continuation restarts counters in the next window.
        for i in 0..7u64 {
            t.observe(&pkt(TW + i * MICROS_PER_SEC, "10.0.0.1", 1024, "1.2.3.4", 80, 100, "A"));
        }
        let second = t.close_window(1);
        assert_eq!(second.len(), 1);
        assert!(second[0].partial);
        assert_eq!(second[0].sent_pkts, 7);
        assert_eq!(second[0].window, 1);
        assert!(second[0].start_ts >= TW);
        assert_ne!(first[0].flow_id, second[0].flow_id);
        assert_eq!(first[0].sent_bytes + second[0].sent_bytes, 1700);
    }

    #[test]
    fn fin_terminated_flow_inside_one_window_is_not_partial() {
        let mut t = table();
        t.observe(&pkt(0, "10.0.0.1", 1024, "1.2.3.4", 80, 10, "S"));
        t.observe(&pkt(1000, "10.0.0.1", 1024, "1.2.3.4", 80, 0, "F"));
        let flows = t.close_window(0);
        assert_eq!(flows.len(), 1);
        assert!(!flows[0].partial);
        assert_eq!(t.active_flows(), 0);
    }

    #[test]
    fn idle_window_emits_nothing_for_carried_flow() {
        let mut t = table();
        // Activity right at the end of window 0 so the flow is carried.
        t.observe(&pkt(TW - 1000, "10.0.0.1", 1024, "1.2.3.4", 80, 10, "A"));
        let w0 = t.close_window(0);
        assert_eq!(w0.len(), 1);
        assert!(w0[0].partial);
        // Nothing in window 1: no emission, and the flow idles out.
        let w1 = t.close_window(1);
        assert!(w1.is_empty());
        assert_eq!(t.active_flows(), 0);
    }

    #[test]
    fn flow_idle_past_timeout_at_close_is_complete() {
        let mut t = table();
        // Single burst early in a 20-minute window; idle > 5 min by close.
        t.observe(&pkt(1000, "10.0.0.1", 1024, "1.2.3.4", 80, 10, "A"));
        let flows = t.close_window(0);
        assert_eq!(flows.len(), 1);
        assert!(!flows[0].partial);
        assert_eq!(t.active_flows(), 0);
    }

    #[test]
    fn payload_retention_is_capped_per_direction() {
        let mut t = FlowTable::new(0, TW, IDLE, 64);
        t.observe(&pkt(0, "10.0.0.1", 1024, "1.2.3.4", 80, 50, "A"));
        t.observe(&pkt(1, "10.0.0.1", 1024, "1.2.3.4", 80, 50, "A"));
        t.observe(&pkt(2, "1.2.3.4", 80, "10.0.0.1", 1024, 100, "A"));
        let flows = t.close_window(0);
        let f = &flows[0];
        assert_eq!(f.sent_payload.len(), 64);
        assert_eq!(f.recv_payload.len(), 64);
        // Byte counters keep the true totals.
        assert_eq!((f.sent_bytes, f.recv_bytes), (100, 100));
    }

    #[test]
    fn permuting_packets_of_unrelated_flows_changes_nothing() {
        // Two unrelated 5-tuples with equal timestamps: stable sort after
        // extending in either order yields two different interleavings.
        let stream_a: Vec<PacketEvent> =
            (0..6).map(|i| pkt(10 + i, "10.0.0.1", 1024, "1.2.3.4", 80, 100, "A")).collect();
        let stream_b: Vec<PacketEvent> =
            (0..4).map(|i| pkt(10 + i, "10.0.0.2", 2048, "5.6.7.8", 443, 50, "A")).collect();

        let mut a_first = [stream_a.clone(), stream_b.clone()].concat();
        a_first.sort_by_key(|p| p.ts);
        let mut b_first = [stream_b, stream_a].concat();
        b_first.sort_by_key(|p| p.ts);
        assert_ne!(a_first, b_first);

        let collect = |events: &[PacketEvent]| -> Vec<(u64, u64, u64, u64)> {
            let mut t = table();
            for e in events {
                t.observe(e);
            }
            let mut flows = t.close_window(0);
            flows.sort_by_key(|f| f.src_port);
            flows.iter().map(|f| (f.sent_pkts, f.sent_bytes, f.recv_pkts, f.recv_bytes)).collect()
        };
        assert_eq!(collect(&a_first), collect(&b_first));
    }

    // ── Conservation property ────────────────────────────────────────────────

    #[derive(Debug, Clone)]
    struct MiniPkt {
        ts: u64,
        flow: u8,
        from_initiator: bool,
        len: u8,
    }

    fn mini_pkt_strategy() -> impl Strategy<Value = Vec<MiniPkt>> {
        proptest::collection::vec(
            (0u64..4 * TW, 0u8..6, any::<bool>(), 0u8..200).prop_map(|(ts, flow, fi, len)| {
                MiniPkt { ts, flow, from_initiator: fi, len }
            }),
            1..120,
        )
    }

    proptest! {
        /// Summing each counter over all emitted pieces of a 5-tuple must
        /// equal a direct per-packet tally, regardless of window splits.
        #[test]
        fn counters_are_conserved_across_window_splits(mut pkts in mini_pkt_strategy()) {
            pkts.sort_by_key(|p| p.ts);
            let mut t = FlowTable::new(0, TW, 10_000 * MICROS_PER_SEC, 2048);
            let mut oracle: HashMap<u8, (u64, u64)> = HashMap::new(); // flow -> (pkts, bytes)
            let mut emitted = Vec::new();
            let mut current_window = 0;
            for p in &pkts {
                while current_window < p.ts / TW {
                    emitted.extend(t.close_window(current_window));
                    current_window += 1;
                }
                let sp = 1000 + p.flow as u16;
                let ev = if p.from_initiator {
                    pkt(p.ts, "10.0.0.1", sp, "1.2.3.4", 80, p.len as usize, "A")
                } else {
                    pkt(p.ts, "1.2.3.4", 80, "10.0.0.1", sp, p.len as usize, "A")
                };
                t.observe(&ev);
                let e = oracle.entry(p.flow).or_default();
                e.0 += 1;
                e.1 += p.len as u64;
            }
            emitted.extend(t.close_window(current_window));
            let mut tallied: HashMap<u8, (u64, u64)> = HashMap::new();
            for f in &emitted {
                // Initiator may be either endpoint depending on who spoke first.
                let flow = (f.src_port.max(f.dst_port) - 1000) as u8;
                let e = tallied.entry(flow).or_default();
                e.0 += f.sent_pkts + f.recv_pkts;
                e.1 += f.sent_bytes + f.recv_bytes;
                prop_assert!(f.start_ts / TW == f.window && f.end_ts / TW == f.window);
                prop_assert!(f.start_ts <= f.end_ts);
            }
            prop_assert_eq!(oracle, tallied);
        }
    }
}
