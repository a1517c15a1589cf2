mod common;

use adsplice_core::mmtp::{
    depacketize, mux, packetize, Depacketizer, Fragment, MmtPacket, Mpu, Packetizer, PayloadType, HEADER_LEN,
    MAX_PAYLOAD, VERSION,
};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn payload(n: usize, salt: u8) -> Vec<u8> {
    (0..n).map(|i| (i as u32).wrapping_mul(2654435761).to_be_bytes()[0] ^ salt).collect()
}

fn round_trip(n: usize) {
    let mpu = Mpu::new(9, "video", payload(n, 0x5a), 123_456).unwrap();
    let packets = packetize(&mpu, 1, 77);
    assert_eq!(packets.len(), n.div_ceil(MAX_PAYLOAD), "size {n}");
    for (i, p) in packets.iter().enumerate() {
        assert_eq!(p.packet_sequence_number, 77 + i as u32);
        assert!(p.payload.len() <= MAX_PAYLOAD);
        let expect = match (packets.len(), i) {
            (1, _) => Fragment::Complete,
            (_, 0) => Fragment::First,
            (k, i) if i == k - 1 => Fragment::Last,
            _ => Fragment::Middle,
        };
        assert_eq!(p.fragmentation, expect);
    }
    let wire: Vec<Vec<u8>> = packets.iter().map(|p| p.encode().unwrap()).collect();
    let decoded: Vec<MmtPacket> = wire.iter().map(|b| MmtPacket::decode(b).unwrap()).collect();
    assert_eq!(decoded, packets);
    let (mpus, report) = depacketize(decoded);
    assert_eq!(mpus, vec![mpu], "size {n}");
    assert_eq!(report, Default::default());
}

#[test]
fn boundary_sizes_round_trip() {
    for n in [1, 1399, 1400, 1401, 4096, 1_000_000] {
        round_trip(n);
    }
}

#[test]
fn random_sizes_round_trip() {
    let mut r = rng(500);
    for _ in 0..500 {
        // log-uniform over [1, 1e7]
        let n = 10f64.powf(r.random_range(0.0..7.0)).round() as usize;
        round_trip(n.clamp(1, 10_000_000));
    }
}

#[test]
fn three_thousand_bytes_split_1400_1400_200() {
    let mpu = Mpu::new(0, "video", payload(3000, 1), 0).unwrap();
    let sizes: Vec<(usize, Fragment)> = packetize(&mpu, 1, 0).iter().map(|p| (p.payload.len(), p.fragmentation)).collect();
    assert_eq!(
        sizes,
        vec![(1400, Fragment::First), (1400, Fragment::Middle), (200, Fragment::Last)]
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn every_fragment_order_reassembles() {
    for frags in 1..=4usize {
        let mpu = Mpu::new(3, "audio", payload(MAX_PAYLOAD * (frags - 1) + 17, 9), 40).unwrap();
        let packets = packetize(&mpu, 2, 1000);
        assert_eq!(packets.len(), frags);
        let orders = permutations(frags);
        assert_eq!(orders.len(), (1..=frags).product::<usize>());
        for order in orders {
            let (mpus, report) = depacketize(order.iter().map(|&i| packets[i].clone()));
            assert_eq!(mpus, vec![mpu.clone()], "order {order:?}");
            assert_eq!(report.lost_packets + report.late_packets, 0);
        }
    }
}

#[test]
fn golden_header_bytes() {
    let p = MmtPacket {
        version: VERSION,
        payload_type: PayloadType::Mfu,
        packet_id: 0x0102,
        packet_sequence_number: 0x0304_0506,
        timestamp_ms: 0x0708_090a,
        mpu_sequence_number: 0x0b0c_0d0e,
        fragmentation: Fragment::Last,
        payload: vec![0xaa, 0xbb],
    };
    let bytes = [
        0x01, 0x01, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b, 0x0c, 0x0d, 0x0e, 0xc0, 0x00,
        0x02, 0xaa, 0xbb,
    ];
    assert_eq!(p.encode().unwrap(), bytes);
    assert_eq!(MmtPacket::decode(&bytes).unwrap(), p);
    assert_eq!(HEADER_LEN, 19);
}

#[test]
fn lost_middle_fragment_drops_only_that_mpu() {
    let mut pk = Packetizer::av();
    let mut all = Vec::new();
    for k in 0..5u32 {
        all.extend(pk.push(&Mpu::new(k, "video", payload(4000, k as u8), k as u64 * 100).unwrap()).unwrap());
    }
    // packet 7 is the middle fragment of MPU 2
    assert_eq!(all[7].fragmentation, Fragment::Middle);
    all.remove(7);
    let (mpus, report) = depacketize(all);
    let seqs: Vec<u32> = mpus.iter().map(|m| m.mpu_sequence_number).collect();
    assert_eq!(seqs, [0, 1, 3, 4]);
    assert_eq!(report.lost_packets, 1);
    assert!(report.dropped_mpus.contains(&(1, 2)));
}

#[test]
fn packetizer_sequences_have_no_gaps() {
    let mut r = rng(12);
    let mut pk = Packetizer::av();
    let mut all = Vec::new();
    for k in 0..6 {
        let n = r.random_range(1..40);
        let seg = random_segment(&mut r, n, 32, 24);
        let seg = adsplice_core::media::Segment::new("x", seg.fps(), seg.frames().to_vec(), seg.audio().clone(), k * 1000).unwrap();
        all.extend(pk.push_segment(&seg, k as u32).unwrap());
    }
    for id in [1u16, 2] {
        let seqs: Vec<u32> = all.iter().filter(|p| p.packet_id == id).map(|p| p.packet_sequence_number).collect();
        assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "packet id {id}");
        assert_eq!(seqs[0], 0);
    }
    let mut d = Depacketizer::new();
    let mut mpus: Vec<Mpu> = all.into_iter().flat_map(|p| d.push(p)).collect();
    mpus.extend(d.finish());
    assert_eq!(mpus.len(), 12);
    assert_eq!(d.report(), &Default::default());
}

fn packet(id: u16, seq: u32, ts: u32) -> MmtPacket {
    MmtPacket {
        version: VERSION,
        payload_type: PayloadType::Mfu,
        packet_id: id,
        packet_sequence_number: seq,
        timestamp_ms: ts,
        mpu_sequence_number: 0,
        fragmentation: Fragment::Complete,
        payload: vec![id as u8],
    }
}

fn ordered(id: u16) -> impl Strategy<Value = Vec<MmtPacket>> {
    prop::collection::vec(0u32..50, 0..40).prop_map(move |mut ts| {
        ts.sort();
        ts.iter().enumerate().map(|(i, &t)| packet(id, i as u32, t)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mux_matches_stable_sort(v in ordered(1), a in ordered(2)) {
        let mut oracle: Vec<MmtPacket> = v.iter().chain(&a).cloned().collect();
        oracle.sort_by_key(|p| (p.timestamp_ms, p.packet_id != 1));
        prop_assert_eq!(mux(v, a), oracle);
    }

    #[test]
    fn header_codec_identity(
        id in any::<u16>(), seq in any::<u32>(), ts in any::<u32>(), mpu in any::<u32>(),
        frag in 0u8..4, meta in any::<bool>(), len in 0usize..64,
    ) {
        let p = MmtPacket {
            version: VERSION,
            payload_type: if meta { PayloadType::MpuMetadata } else { PayloadType::Mfu },
            packet_id: id,
            packet_sequence_number: seq,
            timestamp_ms: ts,
            mpu_sequence_number: mpu,
            fragmentation: [Fragment::Complete, Fragment::First, Fragment::Middle, Fragment::Last][frag as usize],
            payload: payload(len, frag),
        };
        let bytes = p.encode().unwrap();
        prop_assert_eq!(bytes.len(), HEADER_LEN + len);
        prop_assert_eq!(MmtPacket::decode(&bytes).unwrap(), p);
    }

    #[test]
    fn shuffled_within_window_reassembles(seed in any::<u64>(), n in 1usize..20_000) {
        let mut r = rng(seed);
        let mpu = Mpu::new(1, "video", payload(n, 3), 0).unwrap();
        let mut packets = packetize(&mpu, 1, r.random());
        // local swaps keep every packet well inside the reorder window
        for i in 1..packets.len() {
            if r.random_bool(0.5) {
                packets.swap(i - 1, i);
            }
        }
        let (mpus, report) = depacketize(packets);
        prop_assert_eq!(mpus, vec![mpu]);
        prop_assert_eq!(report, Default::default());
    }
}

#[test]
fn sequence_wraparound_reassembles_in_any_order() {
    let mpu = Mpu::new(5, "video", payload(MAX_PAYLOAD * 3 + 5, 4), 0).unwrap();
    let packets = packetize(&mpu, 1, u32::MAX - 1);
    assert_eq!(packets[2].packet_sequence_number, 0);
    for order in permutations(4) {
        let (mpus, report) = depacketize(order.iter().map(|&i| packets[i].clone()));
        assert_eq!(mpus, vec![mpu.clone()], "order {order:?}");
        assert_eq!(report, Default::default());
    }
}
