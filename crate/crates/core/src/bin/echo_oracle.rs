//! Minimal external map oracle used for protocol tests. Replies to every
//! prediction request with a fixed map, read from the JSON file given as the
//! first argument (a list of wire elements) or a single straight boundary.
//!
//! `--wire-version N` answers the handshake with another version and
//! `--garbage` replies with malformed JSON.

use std::io::{stdin, stdout};

use asymmap::geometry::{ClassTag, Vec2};
use asymmap::oracle::{
    read_message, write_message, WireElement, WireReply, WireRequest, WIRE_VERSION,
};

fn main() {
    let mut version = WIRE_VERSION;
    let mut garbage = false;
    let mut fixture = None;
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--wire-version" => version = args.next().and_then(|v| v.parse().ok()).unwrap_or(0),
            "--garbage" => garbage = true,
            path => fixture = Some(path.to_string()),
        }
    }
    let elements: Vec<WireElement> = match fixture {
        Some(p) => {
            let text =
                std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("cannot read {p}: {e}"));
            serde_json::from_str(&text).unwrap_or_else(|e| panic!("bad fixture {p}: {e}"))
        }
        None => vec![WireElement {
            class: ClassTag::Boundary,
            points: vec![Vec2::new(3.5, 0.0), Vec2::new(3.5, 30.0)],
            confidence: 1.0,
        }],
    };
    let (mut input, mut output) = (stdin().lock(), stdout().lock());
    loop {
        let Ok(req) = read_message::<WireRequest>(&mut input) else {
            return;
        };
        let reply = match req {
            WireRequest::Hello { .. } => WireReply::Hello {
                version,
                name: "echo".into(),
            },
            WireRequest::Predict { .. } if garbage => {
                let body = b"{\"type\":\"map\",\"elements\":[oops]}";
                let mut frame = (body.len() as u32).to_be_bytes().to_vec();
                frame.extend_from_slice(body);
                use std::io::Write;
                if output
                    .write_all(&frame)
                    .and_then(|_| output.flush())
                    .is_err()
                {
                    return;
                }
                continue;
            }
            WireRequest::Predict { .. } => WireReply::Map {
                elements: elements.clone(),
            },
            WireRequest::Shutdown => return,
        };
        if write_message(&mut output, &reply).is_err() {
            return;
        }
    }
}
