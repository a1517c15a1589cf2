mod common;

use adsplice_core::lvs::{self, LvsError, HEADER_LEN};
use adsplice_core::media::{frame_abs_diff, AudioBlock, Fps, Frame, MediaError, Segment};
use common::*;
use proptest::prelude::*;

#[test]
fn lvs_layout_size_for_two_8x8_frames() {
    let frames = vec![Frame::filled(8, 8, 1).unwrap(), Frame::filled(8, 8, 2).unwrap()];
    let audio = AudioBlock::silence(16_000, 1067).unwrap();
    let seg = Segment::new("a", FPS30, frames, audio, 0).unwrap();
    // header, two 64-byte luma planes, 2/30 s of s16 audio (1066.67 rounded)
    assert_eq!(lvs::write_segment(&seg).len(), HEADER_LEN + 2 * 64 + 2 * 1067);
}

#[test]
fn lvs_rejects_truncation_and_zero_frames() {
    let mut r = rng(3);
    let seg = random_segment(&mut r, 3, 8, 8);
    let bytes = lvs::write_segment(&seg);
    assert!(matches!(
        lvs::read_segment("a", &bytes[..HEADER_LEN + 70]),
        Err(LvsError::TruncatedPayload { .. })
    ));
    let hdr = lvs::parse_header(&bytes).unwrap();
    assert_eq!(hdr.frame_count, 3);
    let mut zero = bytes.clone();
    zero[14..18].fill(0);
    assert!(matches!(
        lvs::read_segment("a", &zero),
        Err(LvsError::HeaderFieldOutOfRange { .. })
    ));
}

#[test]
fn abs_diff_examples() {
    let a = Frame::filled(8, 8, 0).unwrap();
    let b = Frame::filled(8, 8, 255).unwrap();
    let mut px = vec![0u8; 64];
    px[17] = 255;
    let c = Frame::new(8, 8, px).unwrap();
    assert_eq!(frame_abs_diff(&a, &a).unwrap(), 0.0);
    assert_eq!(frame_abs_diff(&a, &b).unwrap(), 255.0);
    assert!((frame_abs_diff(&a, &c).unwrap() - 3.984375).abs() < 1e-12);
}

#[test]
fn mismatched_audio_is_a_construction_error() {
    let frames = vec![Frame::filled(8, 8, 0).unwrap(); 30];
    let audio = AudioBlock::silence(16_000, 15_000).unwrap();
    assert!(matches!(
        Segment::new("x", FPS30, frames, audio, 0),
        Err(MediaError::AudioDurationMismatch { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lvs_round_trip(seed in any::<u64>(), n in 1usize..6, w in 8u16..24, h in 8u16..24, start in 0u64..10_000_000) {
        let mut r = rng(seed);
        let frames = (0..n).map(|_| noise_frame(&mut r, w, h)).collect();
        let seg = segment_from(frames, &mut r, start);
        let bytes = lvs::write_segment(&seg);
        prop_assert_eq!(bytes.len(), lvs::encoded_len(&seg));
        prop_assert_eq!(&lvs::write_segment(&seg), &bytes);
        let back = lvs::read_segment(seg.segment_id(), &bytes).unwrap();
        prop_assert_eq!(back, seg);
    }

    #[test]
    fn abs_diff_is_a_metric(seed in any::<u64>(), w in 8u16..20, h in 8u16..20) {
        let mut r = rng(seed);
        let (a, b, c) = (noise_frame(&mut r, w, h), noise_frame(&mut r, w, h), noise_frame(&mut r, w, h));
        let ab = frame_abs_diff(&a, &b).unwrap();
        prop_assert_eq!(ab, frame_abs_diff(&b, &a).unwrap());
        prop_assert_eq!(frame_abs_diff(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= frame_abs_diff(&a, &c).unwrap() + frame_abs_diff(&c, &b).unwrap() + 1e-9);
    }

    #[test]
    fn timecode_is_monotone(num in 1u16..120, den in 1u16..1002, i in 0u64..10_000_000, d in 0u64..1000) {
        let fps = Fps::new(num, den).unwrap();
        prop_assert!(fps.frame_to_ms(i) <= fps.frame_to_ms(i + d));
    }
}
