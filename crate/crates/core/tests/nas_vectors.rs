//! Decoder behaviour over the frozen binary corpus in
//! `vectors/corpus/`.
//!
//! Every expectation below was worked out by hand from the wire layout
//! (header `kind | taskId | flags`, body fields in declared order,
//! explicit presence bytes), not by running the decoder, so the corpus
//! stays an independent check on the codec. The two well-formed PDUs
//! shared with `vectors/nas_golden.txt` cross-check the files against
//! each other.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use aiotsim_core::nas::{DecodeError, NasMessage};

fn vectors_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("vectors")
}

/// Corpus files keyed by stem, e.g. `00_empty`.
fn corpus() -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(vectors_dir().join("corpus")).expect("corpus directory") {
        let path = entry.expect("corpus entry").path();
        if path.extension().is_some_and(|e| e == "bin") {
            let stem = path.file_stem().expect("file stem").to_string_lossy().into_owned();
            files.insert(stem, fs::read(&path).expect("corpus file"));
        }
    }
    assert!(!files.is_empty(), "corpus directory must not be empty");
    files
}

/// Hand-derived outcome for one corpus file. `None` means the bytes
/// form a valid PDU.
fn expected(stem: &str) -> Option<DecodeError> {
    match stem {
        "00_empty" => Some(DecodeError::Truncated { at: 0 }),
        "01_kind_only" => Some(DecodeError::Truncated { at: 1 }),
        "02_inventory_request_min" => None,
        "03_unknown_kind" => Some(DecodeError::UnknownKind(0xff)),
        "04_truncated_header" => Some(DecodeError::Truncated { at: 5 }),
        "05_mask_bits_overflow" => Some(DecodeError::MaskPrefixBits(97)),
        "06_payload_len_overrun" => Some(DecodeError::Truncated { at: 25 }),
        "07_trailing_garbage" => Some(DecodeError::TrailingBytes { extra: 1 }),
        "08_command_response_max" => None,
        "09_oversize" => Some(DecodeError::TooLong(65)),
        "10_zero_idtype" => Some(DecodeError::IdType(0)),
        "11_flag_bits_unknown" => Some(DecodeError::UnknownFlags(0x7f)),
        "12_owner_filter" => None,
        other => panic!("corpus file {other}.bin has no recorded expectation; add one here"),
    }
}

#[test]
fn every_corpus_file_decodes_to_its_recorded_outcome() {
    for (stem, bytes) in corpus() {
        match (NasMessage::decode(&bytes), expected(&stem)) {
            (Ok(_), None) => {}
            (Err(got), Some(want)) => {
                assert_eq!(got, want, "{stem}.bin decoded to the wrong error");
            }
            (Ok(msg), Some(want)) => {
                panic!("{stem}.bin decoded to {msg:?}, expected error {want:?}");
            }
            (Err(got), None) => {
                panic!("{stem}.bin failed to decode: {got}");
            }
        }
    }
}

#[test]
fn well_formed_corpus_files_reencode_byte_identically() {
    for (stem, bytes) in corpus() {
        if expected(&stem).is_some() {
            continue;
        }
        let msg = NasMessage::decode(&bytes).expect("well-formed corpus file");
        assert!(msg.envelope_consistent(), "{stem}.bin decoded to an inconsistent envelope");
        let reencoded = msg.encode().expect("decoded messages re-encode");
        assert_eq!(reencoded, bytes, "{stem}.bin is not in canonical form");
    }
}

#[test]
fn corpus_and_golden_vectors_agree_on_shared_pdus() {
    let corpus = corpus();
    let golden: BTreeMap<String, Vec<u8>> =
        fs::read_to_string(vectors_dir().join("nas_golden.txt"))
            .expect("golden vector file")
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (name, hex) = l.split_once('|').expect("name | hex");
                let bytes = hex
                    .trim()
                    .as_bytes()
                    .chunks(2)
                    .map(|pair| {
                        u8::from_str_radix(std::str::from_utf8(pair).unwrap(), 16).unwrap()
                    })
                    .collect();
                (name.trim().to_string(), bytes)
            })
            .collect();

    for (corpus_stem, golden_name) in [
        ("02_inventory_request_min", "inventory_request_min"),
        ("08_command_response_max", "command_response_max"),
    ] {
        assert_eq!(
            corpus[corpus_stem], golden[golden_name],
            "{corpus_stem}.bin drifted from golden vector {golden_name}"
        );
    }
}

/// The decoder is total: no input up to well past the PDU bound makes
/// it panic. Exhaustive over all 1- and 2-byte inputs, plus every
/// corpus file truncated at every length and extended by garbage.
#[test]
fn decoder_never_panics_on_short_or_mangled_input() {
    assert!(NasMessage::decode(&[]).is_err());
    for a in 0..=u8::MAX {
        let _ = NasMessage::decode(&[a]);
        for b in [0x00, 0x01, 0x7f, 0x80, 0xff] {
            let _ = NasMessage::decode(&[a, b]);
        }
    }
    for bytes in corpus().values() {
        for cut in 0..bytes.len() {
            let _ = NasMessage::decode(&bytes[..cut]);
        }
        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0xde, 0xad]);
        let _ = NasMessage::decode(&extended);
    }
}
