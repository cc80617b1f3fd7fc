use riposte_core::wire::{decode_frame, Message, Status, MAX_PAYLOAD};

fn pattern<const N: usize>(start: u8) -> [u8; N] {
    std::array::from_fn(|i| start.wrapping_add(i as u8))
}

fn vec_pattern(n: usize, start: u8) -> Vec<u8> {
    (0..n).map(|i| start.wrapping_add(i as u8)).collect()
}

fn golden(name: &str) -> Vec<u8> {
    let path = format!("{}/tests/golden/{name}.hex", env!("CARGO_MANIFEST_DIR"));
    hex::decode(std::fs::read_to_string(path).unwrap().trim()).unwrap()
}

fn cases() -> Vec<(&'static str, Message)> {
    let nonce = pattern::<16>(0x10);
    let h0 = pattern::<32>(0x40);
    let h1 = pattern::<32>(0x80);
    vec![
        ("write_share", Message::WriteShare { epoch: 7, server_index: 1, key: vec_pattern(45, 1), share_hashes: vec![h0, h1] }),
        ("write_ack", Message::WriteAck { epoch: 7, nonce, status: Status::Replay }),
        (
            "audit_req",
            Message::AuditReq { nonce, phase: b't', tags: vec![pattern(0xA0), pattern(0xB0), pattern(0xC0)] },
        ),
        ("audit_resp", Message::AuditResp { nonce, phase: b'u', accept: true }),
        ("coinflip_commit", Message::CoinflipCommit { nonce, commitment: h0, v_digest: h1 }),
        ("coinflip_reveal", Message::CoinflipReveal { nonce, contribution: pattern(0xE0) }),
        ("close", Message::Close { epoch: 9, count: 1024 }),
        ("close_ack", Message::CloseAck { epoch: 9, count: 1023, nonce_digest: h1, status: Status::Accepted }),
        ("share_xfer", Message::ShareXfer { epoch: 9, server_index: 2, share: vec_pattern(70, 5) }),
        (
            "zk_bundle",
            Message::ZkBundle {
                epoch: 11,
                server_index: 0,
                key: vec_pattern(20, 9),
                share_hashes: vec![h0, h1, pattern(0x20)],
                common: vec_pattern(33, 3),
                opening: vec_pattern(12, 200),
            },
        ),
    ]
}

#[test]
fn frames_match_reference_encoder() {
    for (name, msg) in cases() {
        assert_eq!(msg.to_frame(), golden(name), "{name}");
    }
}

#[test]
fn reference_frames_decode() {
    for (name, msg) in cases() {
        assert_eq!(decode_frame(&golden(name)).unwrap(), msg, "{name}");
    }
}

#[test]
fn every_message_type_covered() {
    let mut types: Vec<u8> = cases().iter().map(|(_, m)| m.msg_type()).collect();
    types.sort();
    assert_eq!(types, vec![0x01, 0x02, 0x10, 0x11, 0x20, 0x21, 0x30, 0x31, 0x40, 0x50]);
}

#[test]
fn truncated_and_corrupted_frames_fail() {
    for (name, _) in cases() {
        let f = golden(name);
        for cut in [1, 9, f.len() - 1] {
            assert!(decode_frame(&f[..cut]).is_err(), "{name} cut at {cut}");
        }
        let mut bad = f.clone();
        bad[0] = b'X';
        assert!(decode_frame(&bad).is_err());
        let mut bad = f.clone();
        bad[4] = 2;
        assert!(decode_frame(&bad).is_err());
        let mut bad = f.clone();
        bad[5] = 0x7f;
        assert!(decode_frame(&bad).is_err());
    }
    let mut huge = golden("close");
    huge[6..10].copy_from_slice(&((MAX_PAYLOAD as u32) + 1).to_be_bytes());
    assert!(decode_frame(&huge).is_err());
}
