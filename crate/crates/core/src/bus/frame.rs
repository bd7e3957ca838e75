//! Wire framing for the TCP bridge: a 4-byte big-endian body length followed
//! by a UTF-8 JSON object `{topic, seq, payload}`.

use std::io::{self, Read};

use thiserror::Error;

use super::BusMessage;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame truncated: need {needed} bytes, have {available}")]
    FrameTruncated { needed: usize, available: usize },
    #[error("malformed frame body: {0}")]
    FrameMalformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_frame(msg: &BusMessage) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("bus messages always serialize");
    encode_body(&body)
}

pub(crate) fn encode_body(body: &[u8]) -> Vec<u8> {
    let len = u32::try_from(body.len()).expect("frame body exceeds 4 GiB");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(body);
    out
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(BusMessage, usize), FrameError> {
    let body = split_body(bytes)?;
    let msg =
        serde_json::from_slice(body).map_err(|e| FrameError::FrameMalformed(e.to_string()))?;
    Ok((msg, 4 + body.len()))
}

fn split_body(bytes: &[u8]) -> Result<&[u8], FrameError> {
    if bytes.len() < 4 {
        return Err(FrameError::FrameTruncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let needed = 4 + len;
    if bytes.len() < needed {
        return Err(FrameError::FrameTruncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(&bytes[4..needed])
}

/// Reads one raw frame body from a stream. `Ok(None)` on clean EOF before
/// the length prefix.
pub(crate) fn read_body<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>, FrameError> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match reader.read(&mut prefix[got..])? {
            0 if got == 0 => return Ok(None),
            0 => {
                return Err(FrameError::FrameTruncated {
                    needed: 4,
                    available: got,
                })
            }
            n => got += n,
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    let mut body = vec![0u8; len];
    let mut filled = 0;
    while filled < len {
        match reader.read(&mut body[filled..])? {
            0 => {
                return Err(FrameError::FrameTruncated {
                    needed: 4 + len,
                    available: 4 + filled,
                })
            }
            n => filled += n,
        }
    }
    Ok(Some(body))
}

/// Reads and decodes one message frame from a stream.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<BusMessage>, FrameError> {
    match read_body(reader)? {
        None => Ok(None),
        Some(body) => serde_json::from_slice(&body)
            .map(Some)
            .map_err(|e| FrameError::FrameMalformed(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::TopicName;
    use proptest::prelude::*;
    use serde_json::{json, Value};

    #[test]
    fn layout_is_length_prefixed_json() {
        let msg = BusMessage {
            topic: TopicName::new("/base/cmd_vel").unwrap(),
            seq: 1,
            payload: json!({"v_x": 0.05, "omega": 0.0, "duration": 5.0}),
        };
        let bytes = encode_frame(&msg);
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 4);
        let body: Value = serde_json::from_slice(&bytes[4..]).unwrap();
        assert_eq!(body["topic"], "/base/cmd_vel");
        assert_eq!(body["seq"], 1);
        let (back, used) = decode_frame(&bytes).unwrap();
        assert_eq!(back, msg);
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn truncated_and_malformed() {
        let mut bytes = 10u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(b"{\"a\":");
        assert!(matches!(
            decode_frame(&bytes),
            Err(FrameError::FrameTruncated {
                needed: 14,
                available: 9
            })
        ));
        assert!(matches!(
            decode_frame(&[0, 0]),
            Err(FrameError::FrameTruncated { .. })
        ));
        let garbage = encode_body(b"not json!!");
        assert!(matches!(
            decode_frame(&garbage),
            Err(FrameError::FrameMalformed(_))
        ));
        let bad_topic = encode_body(br#"{"topic":"NOPE","seq":1,"payload":0}"#);
        assert!(matches!(
            decode_frame(&bad_topic),
            Err(FrameError::FrameMalformed(_))
        ));
    }

    #[test]
    fn stream_reader() {
        let msg = BusMessage {
            topic: TopicName::new("/t").unwrap(),
            seq: 3,
            payload: json!([1, 2]),
        };
        let mut bytes = encode_frame(&msg);
        bytes.extend(encode_frame(&msg));
        let mut cursor = std::io::Cursor::new(bytes);
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(msg.clone()));
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(msg));
        assert_eq!(read_frame(&mut cursor).unwrap(), None);
    }

    fn arb_payload() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            (-1.0e9f64..1.0e9).prop_map(|f| json!(f)),
            any::<i64>().prop_map(|i| json!(i)),
            "[a-z ]{0,12}".prop_map(Value::String),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
                prop::collection::btree_map("[a-z_]{1,8}", inner, 0..4)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    proptest! {
        #[test]
        fn codec_round_trip(
            segs in prop::collection::vec("[a-z0-9_]{1,6}", 1..4),
            seq in 1u64..u64::MAX,
            payload in arb_payload(),
        ) {
            let topic = TopicName::new(&format!("/{}", segs.join("/"))).unwrap();
            let msg = BusMessage { topic, seq, payload };
            let (back, _) = decode_frame(&encode_frame(&msg)).unwrap();
            prop_assert_eq!(back, msg);
        }
    }
}
