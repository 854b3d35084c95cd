use photocorr::store::{
    encoded_len, open_stack, read_stack, write_stack, write_stack_file, StackReader,
};
use photocorr::{Error, ErrorClass};
use photocorr_core::sim::{FrameStack, Pixel, Readout, StackMeta, StackMode};
use proptest::prelude::*;

fn binary_stack(frames: &[Vec<(u16, u16)>]) -> FrameStack {
    let mut s = FrameStack::new(StackMeta::bare(StackMode::Binary, 16, 8));
    for f in frames {
        let px: Vec<Pixel> = f.iter().map(|&(x, y)| Pixel::new(x, y)).collect();
        s.push_binary(&px).unwrap();
    }
    s
}

fn encode(stack: &FrameStack) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_stack(stack, &mut bytes).unwrap();
    bytes
}

fn meta_len(bytes: &[u8]) -> usize {
    u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize
}

#[test]
fn header_and_events_are_little_endian() {
    let bytes = encode(&binary_stack(&[vec![(3, 5)], vec![]]));
    assert_eq!(&bytes[0..4], b"PFS1");
    assert_eq!(&bytes[4..6], &[1, 0]);
    assert_eq!(&bytes[6..10], &[16, 0, 0, 0]);
    assert_eq!(&bytes[10..14], &[8, 0, 0, 0]);
    assert_eq!(&bytes[14..22], &[2, 0, 0, 0, 0, 0, 0, 0]);
    assert_eq!(&bytes[22..24], &[0, 0]);
    let body = &bytes[28 + meta_len(&bytes)..];
    assert_eq!(body, &[1, 0, 0, 0, 3, 0, 5, 0, 0, 0, 0, 0]);
    assert_eq!(
        bytes.len() as u64,
        encoded_len(meta_len(&bytes) as u32, StackMode::Binary, &[1, 0])
    );
}

#[test]
fn analog_events_carry_the_signal() {
    let mut s = FrameStack::new(StackMeta::bare(StackMode::Analog, 4, 4));
    s.meta_mut().camera.mode = StackMode::Analog;
    s.push_analog(&[Readout {
        pixel: Pixel::new(1, 2),
        signal: 712.5,
    }])
    .unwrap();
    let bytes = encode(&s);
    assert_eq!(&bytes[0..4], b"PFA1");
    assert_eq!(&bytes[22..24], &[1, 0]);
    let body = &bytes[28 + meta_len(&bytes)..];
    let mut want = vec![1, 0, 0, 0, 1, 0, 2, 0];
    want.extend_from_slice(&712.5f32.to_le_bytes());
    assert_eq!(body, want.as_slice());
    assert_eq!(read_stack(bytes.as_slice()).unwrap(), s);
}

#[test]
fn bad_magic_is_a_format_error() {
    let mut bytes = encode(&binary_stack(&[vec![(1, 1)]]));
    bytes[0..4].copy_from_slice(b"PNG\x89");
    let err = read_stack(bytes.as_slice()).unwrap_err();
    assert!(matches!(err, Error::Format(_)), "{err}");
    assert_eq!(err.class(), ErrorClass::Validation);
}

#[test]
fn unknown_version_and_flags_are_format_errors() {
    let good = encode(&binary_stack(&[vec![(1, 1)]]));
    let mut v = good.clone();
    v[4] = 2;
    assert!(matches!(read_stack(v.as_slice()), Err(Error::Format(_))));
    let mut f = good.clone();
    f[22] = 4;
    assert!(matches!(read_stack(f.as_slice()), Err(Error::Format(_))));
    let mut a = good;
    a[22] = 1;
    assert!(matches!(read_stack(a.as_slice()), Err(Error::Format(_))));
}

#[test]
fn truncation_names_the_frame() {
    let frames: Vec<Vec<(u16, u16)>> = (0..10).map(|i| vec![(i, 1), (i, 2)]).collect();
    let bytes = encode(&binary_stack(&frames));
    let start = 28 + meta_len(&bytes);
    // frame 7 starts after seven 12-byte frames; cut inside its events
    let cut = start + 7 * 12 + 6;
    let err = read_stack(&bytes[..cut]).unwrap_err();
    match err {
        Error::Corruption(m) => assert!(m.contains("frame 7"), "{m}"),
        other => panic!("expected corruption, got {other}"),
    }
}

#[test]
fn short_header_and_trailing_bytes_are_corruption() {
    let mut bytes = encode(&binary_stack(&[vec![(1, 1)]]));
    assert!(matches!(
        read_stack(&bytes[..10]),
        Err(Error::Corruption(_))
    ));
    bytes.push(0);
    assert!(matches!(
        read_stack(bytes.as_slice()),
        Err(Error::Corruption(_))
    ));
}

#[test]
fn duplicate_and_out_of_grid_events_are_invalid() {
    let bytes = encode(&binary_stack(&[vec![(1, 1), (2, 1)]]));
    let start = 28 + meta_len(&bytes);
    let mut dup = bytes.clone();
    dup[start + 8..start + 12].copy_from_slice(&[1, 0, 1, 0]);
    let err = read_stack(dup.as_slice()).unwrap_err();
    assert!(
        matches!(err, Error::Validation(ref m) if m.contains("duplicate")),
        "{err}"
    );
    let mut outside = bytes;
    outside[start + 4..start + 6].copy_from_slice(&[16, 0]);
    assert!(matches!(
        read_stack(outside.as_slice()),
        Err(Error::Validation(_))
    ));
}

#[test]
fn streaming_reader_matches_full_read() {
    let frames: Vec<Vec<(u16, u16)>> = (0..50).map(|i| vec![(i % 16, i % 8)]).collect();
    let stack = binary_stack(&frames);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.pfs");
    write_stack_file(&stack, &path).unwrap();
    let mut reader = open_stack(&path).unwrap();
    assert_eq!(reader.frame_count(), 50);
    let mut n = 0;
    while let Some((i, frame)) = reader.next_frame().unwrap() {
        assert_eq!(frame, stack.frame(i as usize));
        n += 1;
    }
    assert_eq!(n, 50);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(
        StackReader::new(bytes.as_slice())
            .unwrap()
            .read_all()
            .unwrap(),
        stack
    );
}

fn arb_stack() -> impl Strategy<Value = FrameStack> {
    (any::<bool>(), 1u32..=256, 1u32..=256, any::<u64>()).prop_flat_map(|(analog, w, h, seed)| {
        let event = (0..w as u16, 0..h as u16, 0.0f32..5000.0);
        prop::collection::vec(prop::collection::vec(event, 0..12), 0..40).prop_map(move |frames| {
            let mode = if analog {
                StackMode::Analog
            } else {
                StackMode::Binary
            };
            let mut meta = StackMeta::bare(mode, w, h);
            meta.camera.mode = mode;
            meta.seed = seed;
            let mut s = FrameStack::new(meta);
            for f in frames {
                let mut seen = std::collections::HashSet::new();
                let events: Vec<_> = f.into_iter().filter(|e| seen.insert((e.0, e.1))).collect();
                if analog {
                    let r: Vec<Readout> = events
                        .iter()
                        .map(|&(x, y, signal)| Readout {
                            pixel: Pixel::new(x, y),
                            signal,
                        })
                        .collect();
                    s.push_analog(&r).unwrap();
                } else {
                    let p: Vec<Pixel> = events.iter().map(|&(x, y, _)| Pixel::new(x, y)).collect();
                    s.push_binary(&p).unwrap();
                }
            }
            s
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn write_read_write_is_identity(stack in arb_stack()) {
        let bytes = encode(&stack);
        let back = read_stack(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &stack);
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn every_strict_prefix_is_rejected(stack in arb_stack(), frac in 0.0f64..1.0) {
        let bytes = encode(&stack);
        let cut = (bytes.len() as f64 * frac) as usize;
        prop_assert!(read_stack(&bytes[..cut]).is_err());
    }
}
